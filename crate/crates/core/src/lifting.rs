//! Boundary lifting: auxiliary problems that homogenize the data.
//!
//! The displacement lifting solves, for each separable data term, one
//! stationary elasticity problem
//!
//! ```text
//!   −div T̃ = f,   T̃ = D ε(ũ),   ũ = g on ∂Ω
//! ```
//!
//! for the spatial profile alone; the full lifting is the sum of unit
//! solutions times their analytic time factors, so ũ(t) and its rate ũ_t(t)
//! are exact in time (the rate problem is the same elliptic problem with
//! differentiated data, and differentiation hits only the time factor).
//!
//! The temperature lifting marches the linear heat problem
//!
//! ```text
//!   θ̃_t − Δθ̃ + c·div ũ_t = 0,   ∂θ̃/∂n = g_θ,   θ̃(0) = 0
//! ```
//!
//! by implicit Euler with a fixed step; `c` is the (constant) heat-coupling
//! coefficient of the active variant, so the homogeneous remainder solved by
//! the Galerkin system sees only its own coupling terms. Between grid points
//! θ̃ is interpolated linearly and its rate is the per-step difference
//! quotient, consistent with that interpolation.
//!
//! With no boundary/forcing data at all, every field here is identically
//! zero and evaluation short-circuits.

use crate::assembly::{FEAssembly, QPTensorField};
use crate::data::{ScalarData, TimeFactor, VectorData};
use crate::{Error, Result};
use nalgebra::DVector;

/// Spatial closure type for one lifting term.
pub type SpatialVectorFn = Box<dyn Fn([f64; 3]) -> [f64; 3]>;

/// One separable displacement data term: a time factor with either (or both)
/// a Dirichlet boundary profile and a volume-force profile.
pub struct DisplacementTermSpec {
    pub time: TimeFactor,
    pub boundary: Option<SpatialVectorFn>,
    pub force: Option<SpatialVectorFn>,
}

/// One solved unit lifting problem with cached quadrature data.
struct SolvedTerm {
    time: TimeFactor,
    /// Full nodal solution including boundary values.
    u_full: DVector<f64>,
    strain: QPTensorField,
    stress: QPTensorField,
    divergence: Vec<f64>,
    values: Vec<[f64; 3]>,
}

/// The lifted fields (ũ, T̃, θ̃) with exact-in-time displacement parts and a
/// time-marched temperature part.
pub struct LiftedFields {
    terms: Vec<SolvedTerm>,
    /// Nodal θ̃ at uniform grid times i·dt, empty when θ̃ ≡ 0.
    theta_grid: Vec<DVector<f64>>,
    /// ∫θ̃ dx at the grid times.
    theta_integral_grid: Vec<f64>,
    dt: f64,
    t_end: f64,
}

impl LiftedFields {
    /// Trivial lifting (all data zero).
    pub fn zero(t_end: f64) -> Self {
        Self {
            terms: vec![],
            theta_grid: vec![],
            theta_integral_grid: vec![],
            dt: 1.0,
            t_end,
        }
    }

    /// Solve all lifting problems for scenario-style data descriptors.
    pub fn build(
        assembly: &FEAssembly,
        g: &VectorData,
        f: &VectorData,
        g_theta: &ScalarData,
        heat_coefficient: f64,
        time_step: f64,
        t_end: f64,
    ) -> Result<Self> {
        let mut specs: Vec<DisplacementTermSpec> = Vec::new();
        for term in &g.terms {
            let profile = term.profile.clone();
            specs.push(DisplacementTermSpec {
                time: term.time.clone(),
                boundary: Some(Box::new(move |x| profile.value(x))),
                force: None,
            });
        }
        for term in &f.terms {
            let profile = term.profile.clone();
            specs.push(DisplacementTermSpec {
                time: term.time.clone(),
                boundary: None,
                force: Some(Box::new(move |x| profile.value(x))),
            });
        }
        Self::build_from_terms(
            assembly,
            specs,
            g_theta,
            heat_coefficient,
            time_step,
            t_end,
        )
    }

    /// Solve all lifting problems from explicit term specifications (used
    /// directly by manufactured-solution cases whose profiles are not
    /// descriptor-representable).
    pub fn build_from_terms(
        assembly: &FEAssembly,
        specs: Vec<DisplacementTermSpec>,
        g_theta: &ScalarData,
        heat_coefficient: f64,
        time_step: f64,
        t_end: f64,
    ) -> Result<Self> {
        if !(time_step > 0.0) {
            return Err(Error::InvalidScenario(
                "lifting time step must be positive".into(),
            ));
        }
        let mut terms = Vec::with_capacity(specs.len());
        let chol = if specs.is_empty() {
            None
        } else {
            Some(
                assembly
                    .vector_stiffness()
                    .clone()
                    .cholesky()
                    .ok_or_else(|| {
                        Error::Eigensolver("elastic stiffness is not positive definite".into())
                    })?,
            )
        };
        let mesh = assembly.mesh();
        for spec in specs {
            // Interpolate the boundary profile onto boundary nodes.
            let mut g_full = DVector::zeros(3 * mesh.node_count());
            if let Some(gfun) = &spec.boundary {
                for (n, x) in mesh.node_coords().iter().enumerate() {
                    if mesh.is_boundary_node(n) {
                        let v = gfun(*x);
                        for d in 0..3 {
                            g_full[3 * n + d] = v[d];
                        }
                    }
                }
            }
            let mut load = assembly.elastic_boundary_load(&g_full);
            if let Some(ffun) = &spec.force {
                let fvals: Vec<[f64; 3]> =
                    assembly.qp_coords().iter().map(|x| ffun(*x)).collect();
                load += assembly.vector_load_from_qp(&fvals);
            }
            let interior = chol
                .as_ref()
                .expect("factorization exists when terms do")
                .solve(&load);
            let resid = (assembly.vector_stiffness() * &interior - &load).norm();
            if resid > 1e-10 * load.norm().max(1.0) {
                return Err(Error::Integration(format!(
                    "displacement lifting solve residual {resid:.3e} exceeds tolerance"
                )));
            }
            let mut u_full = g_full;
            for (idx, &node) in mesh.interior_nodes().iter().enumerate() {
                for d in 0..3 {
                    u_full[3 * node + d] = interior[3 * idx + d];
                }
            }
            let strain = assembly.strain_of_full(&u_full);
            let stress = assembly.apply_d_qp(&strain);
            let divergence = assembly.divergence_of_full(&u_full);
            let values = assembly.vector_at_qp_full(&u_full);
            terms.push(SolvedTerm {
                time: spec.time,
                u_full,
                strain,
                stress,
                divergence,
                values,
            });
        }

        let mut lifted = Self {
            terms,
            theta_grid: vec![],
            theta_integral_grid: vec![],
            dt: time_step,
            t_end,
        };

        // θ̃ is nonzero only if a flux or a coupled displacement rate drives
        // it.
        let heat_driven = !g_theta.is_zero()
            || (heat_coefficient != 0.0 && !lifted.terms.is_empty());
        if heat_driven {
            lifted.march_temperature(assembly, g_theta, heat_coefficient, t_end)?;
        }
        Ok(lifted)
    }

    /// Implicit-Euler march of the temperature lifting.
    fn march_temperature(
        &mut self,
        assembly: &FEAssembly,
        g_theta: &ScalarData,
        heat_coefficient: f64,
        t_end: f64,
    ) -> Result<()> {
        let steps = (t_end / self.dt).ceil().max(1.0) as usize;
        let dt = t_end / steps as f64;
        self.dt = dt;
        let nn = assembly.scalar_dim();
        let system = assembly.scalar_mass() + assembly.scalar_stiffness() * dt;
        let chol = system
            .cholesky()
            .ok_or_else(|| Error::Eigensolver("heat lifting system not positive definite".into()))?;
        let ones = DVector::from_element(nn, 1.0);
        let mass_row = assembly.scalar_mass() * &ones;
        let mut theta = DVector::zeros(nn);
        let mut grid = Vec::with_capacity(steps + 1);
        let mut integrals = Vec::with_capacity(steps + 1);
        grid.push(theta.clone());
        integrals.push(0.0);
        let mut div_rate = vec![0.0; assembly.qp_count()];
        for i in 1..=steps {
            let t = i as f64 * dt;
            let mut rhs = assembly.scalar_mass() * &theta;
            if !g_theta.is_zero() {
                let flux = assembly.boundary_flux_load(&|x| g_theta.value(x, t));
                rhs += flux * dt;
            }
            if heat_coefficient != 0.0 && !self.terms.is_empty() {
                self.divergence_rate_into(t, &mut div_rate);
                let source = assembly.scalar_load_from_qp(&div_rate);
                rhs -= source * (dt * heat_coefficient);
            }
            theta = chol.solve(&rhs);
            integrals.push(mass_row.dot(&theta));
            grid.push(theta.clone());
        }
        self.theta_grid = grid;
        self.theta_integral_grid = integrals;
        Ok(())
    }

    pub fn has_displacement(&self) -> bool {
        !self.terms.is_empty()
    }

    pub fn has_temperature(&self) -> bool {
        !self.theta_grid.is_empty()
    }

    /// T̃ at quadrature points.
    pub fn stress_qp(&self, t: f64, nqp: usize) -> QPTensorField {
        let mut out = QPTensorField::zeros(nqp);
        for term in &self.terms {
            out.axpy(term.time.value(t), &term.stress);
        }
        out
    }

    /// ε(ũ) at quadrature points.
    pub fn strain_qp(&self, t: f64, nqp: usize) -> QPTensorField {
        let mut out = QPTensorField::zeros(nqp);
        for term in &self.terms {
            out.axpy(term.time.value(t), &term.strain);
        }
        out
    }

    /// ε(ũ_t) at quadrature points.
    pub fn strain_rate_qp(&self, t: f64, nqp: usize) -> QPTensorField {
        let mut out = QPTensorField::zeros(nqp);
        for term in &self.terms {
            out.axpy(term.time.derivative(t), &term.strain);
        }
        out
    }

    /// div ũ_t at quadrature points, written into `out`.
    pub fn divergence_rate_into(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        for term in &self.terms {
            let s = term.time.derivative(t);
            if s == 0.0 {
                continue;
            }
            for (o, d) in out.iter_mut().zip(&term.divergence) {
                *o += s * d;
            }
        }
    }

    /// ũ_t at quadrature points.
    pub fn rate_values_qp(&self, t: f64, nqp: usize) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; nqp];
        for term in &self.terms {
            let s = term.time.derivative(t);
            if s == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&term.values) {
                for d in 0..3 {
                    o[d] += s * v[d];
                }
            }
        }
        out
    }

    /// Full nodal ũ.
    pub fn u_full(&self, t: f64, node_count: usize) -> DVector<f64> {
        let mut out = DVector::zeros(3 * node_count);
        for term in &self.terms {
            out.axpy(term.time.value(t), &term.u_full, 1.0);
        }
        out
    }

    /// Full nodal ũ_t.
    pub fn u_rate_full(&self, t: f64, node_count: usize) -> DVector<f64> {
        let mut out = DVector::zeros(3 * node_count);
        for term in &self.terms {
            out.axpy(term.time.derivative(t), &term.u_full, 1.0);
        }
        out
    }

    fn grid_position(&self, t: f64) -> (usize, f64) {
        let n = self.theta_grid.len();
        debug_assert!(n >= 2);
        let s = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    }

    /// Nodal θ̃, linearly interpolated on the march grid.
    pub fn theta_nodal(&self, t: f64, node_count: usize) -> DVector<f64> {
        if self.theta_grid.is_empty() {
            return DVector::zeros(node_count);
        }
        let (i, frac) = self.grid_position(t);
        &self.theta_grid[i] * (1.0 - frac) + &self.theta_grid[i + 1] * frac
    }

    /// Nodal θ̃_t: the per-step difference quotient (piecewise constant).
    pub fn theta_rate_nodal(&self, t: f64, node_count: usize) -> DVector<f64> {
        if self.theta_grid.is_empty() {
            return DVector::zeros(node_count);
        }
        let (i, _) = self.grid_position(t);
        (&self.theta_grid[i + 1] - &self.theta_grid[i]) / self.dt
    }

    /// ∫θ̃ dx, linearly interpolated.
    pub fn theta_integral(&self, t: f64) -> f64 {
        if self.theta_integral_grid.is_empty() {
            return 0.0;
        }
        let (i, frac) = self.grid_position(t);
        self.theta_integral_grid[i] * (1.0 - frac) + self.theta_integral_grid[i + 1] * frac
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }
}
