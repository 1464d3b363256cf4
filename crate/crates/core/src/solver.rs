//! The coefficient ODE system of the two-level Galerkin approximation, its
//! time integration, and field reconstruction.
//!
//! After lifting, the unknowns are expansions in the spectral bases:
//!
//! ```text
//!   û   = Σ_n α^n w_n            (displacement remainder)
//!   θ̂   = Σ_m β^m v_m            (temperature remainder)
//!   ε^p = Σ_n γ^n ε(w_n) + Σ_m δ^m ζ_m
//! ```
//!
//! The integrated state is ξ = (β, γ, δ); α is recovered algebraically from
//! the stationary momentum balance at every evaluation:
//!
//! ```text
//!   α^n = γ^n + ∫ Θ_A div(w_n) dx,
//! ```
//!
//! where Θ_A is the variant's thermal-stress scalar. For the symmetric
//! variant Θ_A is the constant α, ∫div(w_n) dx = 0, and α^n = γ^n exactly;
//! the variants with pointwise thermal stress pick up a θ-dependent
//! integral, which makes the heat-coupling term implicit in β̇ (it involves
//! α̇, hence β̇ itself). That linear l×l system is solved exactly at every
//! evaluation — with a factorization precomputed once where its matrix is
//! constant.
//!
//! Three quadrature states ride along with ξ: the time integrals of the
//! dissipation ∫T^d:G dx, of the external power, and of ∫|div u_t| dx, so
//! energy bookkeeping uses the integrator's own time rule.

use crate::assembly::{FEAssembly, QPTensorField};
use crate::basis::BasisSet;
use crate::constitutive::{ConstitutiveLaw, FlowLaw, Truncation};
use crate::data::{PlasticInit, ScalarData, ThetaInit, TimeFactor, VectorData};
use crate::lifting::LiftedFields;
use crate::ode::{integrate_adaptive, integrate_rk4, AdaptiveSettings};
use crate::scenario::{IntegratorMethod, IntegratorSection, Scenario, VariantKind};
use crate::tensor::SymTensor;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Thermal-expansion coupling parameters; `alpha` is the product constant
/// (raw expansion coefficient × θ̄) and must be positive.
#[derive(Debug, Clone)]
pub struct CouplingVariant {
    pub kind: VariantKind,
    pub alpha: f64,
    pub theta_reference: f64,
    pub theta_bar: f64,
    /// Heat-coupling constant of the broken variant.
    pub gamma: f64,
}

impl CouplingVariant {
    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        let m = &s.material;
        if !(m.alpha > 0.0) {
            return Err(Error::InvalidScenario(
                "expansion constant alpha must be positive".into(),
            ));
        }
        Ok(Self {
            kind: s.variant.kind,
            alpha: m.alpha,
            theta_reference: m.theta_reference,
            theta_bar: m.theta_bar,
            gamma: s.variant.gamma.unwrap_or(0.0),
        })
    }

    /// Raw expansion coefficient before multiplication by θ̄.
    pub fn alpha_raw(&self) -> f64 {
        self.alpha / self.theta_bar
    }

    /// Thermal-stress scalar Θ_A at a point with full temperature θ.
    pub fn thermal_stress(&self, theta: f64) -> f64 {
        match self.kind {
            VariantKind::Symmetric => self.alpha,
            VariantKind::Broken | VariantKind::Nonlinear => {
                self.alpha_raw() * (theta - self.theta_reference)
            }
        }
    }

    /// Heat-equation coupling coefficient at a point.
    pub fn heat_coefficient(&self, theta: f64) -> f64 {
        match self.kind {
            VariantKind::Symmetric => self.alpha,
            VariantKind::Broken => self.gamma,
            VariantKind::Nonlinear => self.alpha_raw() * (theta - self.theta_reference),
        }
    }

    /// Constant coefficient handed to the temperature lifting; chosen so the
    /// homogeneous heat equation keeps only its own coupling terms.
    pub fn lifting_heat_coefficient(&self) -> f64 {
        match self.kind {
            VariantKind::Symmetric => self.alpha,
            VariantKind::Broken => self.gamma,
            VariantKind::Nonlinear => {
                self.alpha_raw() * (self.theta_bar - self.theta_reference)
            }
        }
    }

    /// The pointwise-coefficient variant has no existence theory behind it;
    /// reports flag its runs.
    pub fn has_existence_theory(&self) -> bool {
        self.kind != VariantKind::Nonlinear
    }
}

/// Auxiliary source terms for manufactured-solution verification. Both are
/// zero in every physics scenario; they exist so a prescribed smooth field
/// can be made an exact solution of the augmented system.
pub struct MmsSources {
    /// Added to the heat equation right-hand side (outside the truncation).
    pub heat: Box<dyn Fn([f64; 3], f64) -> f64>,
    /// Added to the flow rule.
    pub flow: Box<dyn Fn([f64; 3], f64) -> SymTensor>,
}

/// Coefficient state at one time, with the derived displacement block.
#[derive(Debug, Clone)]
pub struct GalerkinState {
    pub t: f64,
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub delta: DVector<f64>,
    pub alpha: DVector<f64>,
}

/// Full fields at one time, quadrature-point tensors and nodal vectors,
/// including the lifted parts.
pub struct ReconstructedFields {
    pub t: f64,
    /// Nodal displacement ũ + û (3 dofs per node).
    pub u_full: DVector<f64>,
    /// Nodal temperature θ̃ + θ̂.
    pub theta_nodal: DVector<f64>,
    pub eps_p: QPTensorField,
    /// T = D(ε(u) − ε^p), lifted part included.
    pub stress: QPTensorField,
    pub stress_dev: QPTensorField,
    /// σ = T − Θ_A I with the variant's thermal-stress scalar.
    pub sigma: QPTensorField,
}

/// One right-hand-side evaluation, exposing the pieces the monitors need.
pub struct Evaluation {
    pub dy: DVector<f64>,
    pub alpha: DVector<f64>,
    pub alpha_dot: DVector<f64>,
    pub beta_dot: DVector<f64>,
    pub gamma_dot: DVector<f64>,
    pub delta_dot: DVector<f64>,
    /// ∫ T^d : G dx (untruncated).
    pub dissipation: f64,
    /// ∫ f · u_t dx + ∫_{∂Ω} g_θ dS.
    pub power: f64,
    /// ∫ |div u_t| dx.
    pub div_rate_l1: f64,
    /// Full temperature at quadrature points.
    pub theta_qp: Vec<f64>,
    /// Full deviatoric stress T̃^d + T̂^d.
    pub t_full_dev: QPTensorField,
    /// Flow-rule value G(θ, T^d) (physics part, no manufactured source).
    pub g_phys: QPTensorField,
    /// G plus the manufactured flow source; what ε^p actually follows.
    pub g_flow: QPTensorField,
    /// Heat-source integrand T^d:G before truncation, per quadrature point.
    pub src_qp: Vec<f64>,
}

/// Integration output: raw states (including quadrature tails) at sample
/// times.
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

/// Deviation record of the integral-form plastic-strain recovery.
pub struct PlasticRecovery {
    pub times: Vec<f64>,
    /// Max quadrature-point deviation at each sample.
    pub deviation: Vec<f64>,
    pub max_deviation: f64,
}

/// The assembled coefficient ODE system.
pub struct System<'a> {
    pub assembly: &'a FEAssembly,
    pub basis: &'a BasisSet,
    pub lifted: &'a LiftedFields,
    pub law: ConstitutiveLaw,
    pub variant: CouplingVariant,
    pub truncation: Truncation,
    f_data: VectorData,
    /// Precomputed surface integrals of the flux terms: (∫_{∂Ω} profile dS,
    /// time factor).
    flux_terms: Vec<(f64, TimeFactor)>,
    /// D ε(w_n) at quadrature points.
    d_strain: Vec<QPTensorField>,
    /// D ζ_m at quadrature points.
    d_zeta: Vec<QPTensorField>,
    /// LU factors of I + γ·α_raw·DᵀD for the broken variant's implicit
    /// coupling solve.
    implicit_lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    mms: Option<MmsSources>,
    /// ∫ v dx row for the thermal-energy quadrature.
    mass_row: DVector<f64>,
}

impl<'a> System<'a> {
    pub fn new(
        assembly: &'a FEAssembly,
        basis: &'a BasisSet,
        lifted: &'a LiftedFields,
        law: ConstitutiveLaw,
        variant: CouplingVariant,
        truncation: Truncation,
        f_data: VectorData,
        g_theta: ScalarData,
    ) -> Result<Self> {
        let d_strain: Vec<QPTensorField> = basis
            .displacement
            .modes
            .iter()
            .map(|m| assembly.apply_d_qp(&m.strain))
            .collect();
        let d_zeta: Vec<QPTensorField> = basis
            .complement
            .fields
            .iter()
            .map(|z| assembly.apply_d_qp(z))
            .collect();
        let ones = DVector::from_element(assembly.scalar_dim(), 1.0);
        let flux_terms = g_theta
            .terms
            .iter()
            .map(|term| {
                let profile = term.profile.clone();
                let surf = assembly.boundary_integral(&|x| profile.value(x), &ones);
                (surf, term.time.clone())
            })
            .collect();
        let implicit_lu = if variant.kind == VariantKind::Broken {
            let c = variant.gamma * variant.alpha_raw();
            let d = &basis.div_coupling;
            let m = DMatrix::identity(basis.l_temperature(), basis.l_temperature())
                + d.transpose() * d * c;
            let lu = m.lu();
            if !lu.is_invertible() {
                return Err(Error::InvalidScenario(
                    "broken-variant coupling matrix is singular for this gamma".into(),
                ));
            }
            Some(lu)
        } else {
            None
        };
        let mass_row = assembly.scalar_mass() * &ones;
        Ok(Self {
            assembly,
            basis,
            lifted,
            law,
            variant,
            truncation,
            f_data,
            flux_terms,
            d_strain,
            d_zeta,
            implicit_lu,
            mms: None,
            mass_row,
        })
    }

    /// Attach manufactured sources (verification runs only).
    pub fn with_mms_sources(mut self, sources: MmsSources) -> Self {
        self.mms = Some(sources);
        self
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn l_temperature(&self) -> usize {
        self.basis.l_temperature()
    }

    pub fn l_complement(&self) -> usize {
        self.basis.l_complement()
    }

    /// State layout: [β | γ | δ | ∫dissipation, ∫power, ∫|div u_t|].
    pub fn dim(&self) -> usize {
        self.l_temperature() + self.k() + self.l_complement() + 3
    }

    fn split<'b>(
        &self,
        y: &'b DVector<f64>,
    ) -> (
        nalgebra::DVectorView<'b, f64>,
        nalgebra::DVectorView<'b, f64>,
        nalgebra::DVectorView<'b, f64>,
    ) {
        let (lt, k, lc) = (self.l_temperature(), self.k(), self.l_complement());
        (y.rows(0, lt), y.rows(lt, k), y.rows(lt + k, lc))
    }

    /// Index of the accumulated-dissipation entry.
    pub fn aux_dissipation_index(&self) -> usize {
        self.l_temperature() + self.k() + self.l_complement()
    }

    /// Full temperature θ̃ + θ̂ at quadrature points.
    fn theta_qp(&self, t: f64, beta: &nalgebra::DVectorView<f64>) -> Vec<f64> {
        let mut theta = if self.lifted.has_temperature() {
            let nodal = self.lifted.theta_nodal(t, self.assembly.scalar_dim());
            self.assembly.scalar_at_qp(&nodal)
        } else {
            vec![0.0; self.assembly.qp_count()]
        };
        for (m, mode) in self.basis.temperature.modes.iter().enumerate() {
            let b = beta[m];
            if b != 0.0 {
                for (th, v) in theta.iter_mut().zip(&mode.values) {
                    *th += b * v;
                }
            }
        }
        theta
    }

    /// Recover α from the stationary momentum balance.
    fn compute_alpha(
        &self,
        gamma: &nalgebra::DVectorView<f64>,
        theta_qp: &[f64],
    ) -> DVector<f64> {
        let k = self.k();
        let mut alpha = DVector::zeros(k);
        match self.variant.kind {
            VariantKind::Symmetric => {
                for n in 0..k {
                    alpha[n] = gamma[n];
                }
            }
            VariantKind::Broken | VariantKind::Nonlinear => {
                let w = self.assembly.qp_weight();
                for (n, mode) in self.basis.displacement.modes.iter().enumerate() {
                    let mut s = 0.0;
                    for (q, &div) in mode.divergence.iter().enumerate() {
                        s += self.variant.thermal_stress(theta_qp[q]) * div;
                    }
                    alpha[n] = gamma[n] + w * s;
                }
            }
        }
        alpha
    }

    /// One full right-hand-side evaluation at (t, y).
    pub fn evaluate(&self, t: f64, y: &DVector<f64>) -> Result<Evaluation> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state length {} but system dimension {}",
                y.len(),
                self.dim()
            )));
        }
        let nqp = self.assembly.qp_count();
        let w = self.assembly.qp_weight();
        let (lt, k, lc) = (self.l_temperature(), self.k(), self.l_complement());
        let (beta, gamma, delta) = self.split(y);

        let theta_qp = self.theta_qp(t, &beta);
        let alpha = self.compute_alpha(&gamma, &theta_qp);

        // Full deviatoric stress: T̂ = Σ(α−γ) Dε(w_n) − Σδ Dζ_m, plus the
        // lifted T̃.
        let mut t_full = if self.lifted.has_displacement() {
            self.lifted.stress_qp(t, nqp)
        } else {
            QPTensorField::zeros(nqp)
        };
        for n in 0..k {
            let c = alpha[n] - gamma[n];
            if c != 0.0 {
                t_full.axpy(c, &self.d_strain[n]);
            }
        }
        for m in 0..lc {
            let c = delta[m];
            if c != 0.0 {
                t_full.axpy(-c, &self.d_zeta[m]);
            }
        }
        let mut t_full_dev = t_full;
        for s in t_full_dev.data.iter_mut() {
            *s = s.deviatoric();
        }

        // Flow-rule values and the heat-source integrand.
        let mut g_phys = QPTensorField::zeros(nqp);
        let mut src_qp = vec![0.0; nqp];
        let mut dissipation = 0.0;
        for q in 0..nqp {
            let g = self.law.eval(theta_qp[q], &t_full_dev.data[q]);
            let s = t_full_dev.data[q].dot(&g);
            g_phys.data[q] = g;
            src_qp[q] = s;
            dissipation += s;
        }
        dissipation *= w;
        let g_flow = if let Some(mms) = &self.mms {
            let mut g = g_phys.clone();
            for (q, x) in self.assembly.qp_coords().iter().enumerate() {
                g.data[q] = g.data[q] + (mms.flow)(*x, t);
            }
            g
        } else {
            g_phys.clone()
        };

        // Plastic coefficient rates: D-orthonormal projections of G.
        let mut gamma_dot = DVector::zeros(k);
        for n in 0..k {
            let mut s = 0.0;
            for (gq, dq) in g_flow.data.iter().zip(&self.d_strain[n].data) {
                s += gq.dot(dq);
            }
            gamma_dot[n] = w * s;
        }
        let mut delta_dot = DVector::zeros(lc);
        for m in 0..lc {
            let mut s = 0.0;
            for (gq, dq) in g_flow.data.iter().zip(&self.d_zeta[m].data) {
                s += gq.dot(dq);
            }
            delta_dot[m] = w * s;
        }

        // Explicit part of the β equation: truncated source projection,
        // manufactured heat source, diffusion.
        let mut beta_dot = DVector::zeros(lt);
        for (m, mode) in self.basis.temperature.modes.iter().enumerate() {
            let mut s = 0.0;
            for (q, &v) in mode.values.iter().enumerate() {
                s += self.truncation.apply(src_qp[q]) * v;
            }
            beta_dot[m] = w * s - mode.eigenvalue * beta[m];
        }
        if let Some(mms) = &self.mms {
            let heat_src: Vec<f64> = self
                .assembly
                .qp_coords()
                .iter()
                .map(|x| (mms.heat)(*x, t))
                .collect();
            for (m, mode) in self.basis.temperature.modes.iter().enumerate() {
                let mut s = 0.0;
                for (q, &v) in mode.values.iter().enumerate() {
                    s += heat_src[q] * v;
                }
                beta_dot[m] += w * s;
            }
        }

        // Lifting rate data for the coupling terms.
        let mut div_lift_rate = vec![0.0; nqp];
        if self.lifted.has_displacement() {
            self.lifted.divergence_rate_into(t, &mut div_lift_rate);
        }
        // ė_n = ∫ θ̃_t div(w_n) dx, nonzero only with a marched lifting.
        let mut e_dot = DVector::zeros(k);
        if self.lifted.has_temperature()
            && self.variant.kind != VariantKind::Symmetric
        {
            let rate_nodal = self.lifted.theta_rate_nodal(t, self.assembly.scalar_dim());
            let rate_qp = self.assembly.scalar_at_qp(&rate_nodal);
            for (n, mode) in self.basis.displacement.modes.iter().enumerate() {
                let mut s = 0.0;
                for (q, &div) in mode.divergence.iter().enumerate() {
                    s += rate_qp[q] * div;
                }
                e_dot[n] = w * s;
            }
        }

        // Variant-specific heat coupling; α̇ comes out of it.
        let d = &self.basis.div_coupling;
        let alpha_dot: DVector<f64>;
        match self.variant.kind {
            VariantKind::Symmetric => {
                // Coupling term α Σ_n α̇^n d_{nm} with α̇ = γ̇ (explicit).
                for m in 0..lt {
                    let mut s = 0.0;
                    for n in 0..k {
                        s += gamma_dot[n] * d[(n, m)];
                    }
                    beta_dot[m] -= self.variant.alpha * s;
                }
                alpha_dot = gamma_dot.clone();
            }
            VariantKind::Broken => {
                // α̇_n = γ̇_n + α_raw(Σ_j d_{nj} β̇_j + ė_n) makes the γ_b
                // coupling implicit in β̇; the system matrix
                // I + γ_b·α_raw·DᵀD was factored at construction.
                let ar = self.variant.alpha_raw();
                let gb = self.variant.gamma;
                for m in 0..lt {
                    let mut s = 0.0;
                    for n in 0..k {
                        s += (gamma_dot[n] + ar * e_dot[n]) * d[(n, m)];
                    }
                    beta_dot[m] -= gb * s;
                }
                let lu = self.implicit_lu.as_ref().expect("factored at construction");
                beta_dot = lu.solve(&beta_dot).ok_or_else(|| {
                    Error::Integration("implicit coupling solve failed".into())
                })?;
                let mut adot = DVector::zeros(k);
                for n in 0..k {
                    let mut s = 0.0;
                    for j in 0..lt {
                        s += d[(n, j)] * beta_dot[j];
                    }
                    adot[n] = gamma_dot[n] + ar * (s + e_dot[n]);
                }
                alpha_dot = adot;
            }
            VariantKind::Nonlinear => {
                // Pointwise coefficient B(θ): coupling = ∫(B div u_t −
                // c div ũ_t) v_m dx with the lifting's constant c; both the
                // q_{nm} weights and the system matrix depend on θ, so the
                // l×l solve is rebuilt per evaluation.
                let ar = self.variant.alpha_raw();
                let c_lift = self.variant.lifting_heat_coefficient();
                let mut q_mat = DMatrix::zeros(k, lt);
                for (n, mode) in self.basis.displacement.modes.iter().enumerate() {
                    for (m, vmode) in self.basis.temperature.modes.iter().enumerate() {
                        let mut s = 0.0;
                        for q in 0..nqp {
                            s += self.variant.heat_coefficient(theta_qp[q])
                                * mode.divergence[q]
                                * vmode.values[q];
                        }
                        q_mat[(n, m)] = w * s;
                    }
                }
                for (m, vmode) in self.basis.temperature.modes.iter().enumerate() {
                    let mut s = 0.0;
                    for q in 0..nqp {
                        s += (self.variant.heat_coefficient(theta_qp[q]) - c_lift)
                            * div_lift_rate[q]
                            * vmode.values[q];
                    }
                    beta_dot[m] -= w * s;
                    let mut t2 = 0.0;
                    for n in 0..k {
                        t2 += (gamma_dot[n] + ar * e_dot[n]) * q_mat[(n, m)];
                    }
                    beta_dot[m] -= t2;
                }
                let system = DMatrix::identity(lt, lt) + q_mat.transpose() * d * ar;
                let lu = system.lu();
                beta_dot = lu.solve(&beta_dot).ok_or_else(|| {
                    Error::Integration(format!(
                        "pointwise-coupling solve singular at t = {t:.6e}"
                    ))
                })?;
                let mut adot = DVector::zeros(k);
                for n in 0..k {
                    let mut s = 0.0;
                    for j in 0..lt {
                        s += d[(n, j)] * beta_dot[j];
                    }
                    adot[n] = gamma_dot[n] + ar * (s + e_dot[n]);
                }
                alpha_dot = adot;
            }
        }

        // Quadrature tails: dissipation, external power, ∫|div u_t|.
        let mut power = 0.0;
        for (surf, factor) in &self.flux_terms {
            power += surf * factor.value(t);
        }
        if !self.f_data.is_zero() {
            let lift_rate = self.lifted.rate_values_qp(t, nqp);
            let mut s = 0.0;
            for (q, x) in self.assembly.qp_coords().iter().enumerate() {
                let fv = self.f_data.value(*x, t);
                let mut ut = lift_rate[q];
                for (n, mode) in self.basis.displacement.modes.iter().enumerate() {
                    for di in 0..3 {
                        ut[di] += alpha_dot[n] * mode.values[q][di];
                    }
                }
                s += fv[0] * ut[0] + fv[1] * ut[1] + fv[2] * ut[2];
            }
            power += w * s;
        }
        let mut div_l1 = 0.0;
        for q in 0..nqp {
            let mut dv = div_lift_rate[q];
            for (n, mode) in self.basis.displacement.modes.iter().enumerate() {
                dv += alpha_dot[n] * mode.divergence[q];
            }
            div_l1 += dv.abs();
        }
        div_l1 *= w;

        let mut dy = DVector::zeros(self.dim());
        dy.rows_mut(0, lt).copy_from(&beta_dot);
        dy.rows_mut(lt, k).copy_from(&gamma_dot);
        dy.rows_mut(lt + k, lc).copy_from(&delta_dot);
        let aux = self.aux_dissipation_index();
        dy[aux] = dissipation;
        dy[aux + 1] = power;
        dy[aux + 2] = div_l1;
        if dy.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!(
                "non-finite right-hand side at t = {t:.6e}"
            )));
        }

        Ok(Evaluation {
            dy,
            alpha,
            alpha_dot,
            beta_dot,
            gamma_dot,
            delta_dot,
            dissipation,
            power,
            div_rate_l1: div_l1,
            theta_qp,
            t_full_dev,
            g_phys,
            g_flow,
            src_qp,
        })
    }

    /// Project the initial data onto the bases: β from the L²-projection of
    /// the truncated θ₀, (γ, δ) from the D-projection of ε^p₀.
    pub fn initial_state(&self, theta0: &ThetaInit, epsp0: &PlasticInit) -> Result<DVector<f64>> {
        let theta_vals = theta0.at_qps(self.assembly.qp_coords(), &self.basis.temperature)?;
        let truncated: Vec<f64> = theta_vals
            .iter()
            .map(|&v| self.truncation.apply(v))
            .collect();
        let w = self.assembly.qp_weight();
        let mut y = DVector::zeros(self.dim());
        for (m, mode) in self.basis.temperature.modes.iter().enumerate() {
            let mut s = 0.0;
            for (q, &v) in mode.values.iter().enumerate() {
                s += truncated[q] * v;
            }
            y[m] = w * s;
        }
        let field = epsp0.at_qps(self.assembly.qp_count());
        let lt = self.l_temperature();
        for (n, dstrain) in self.d_strain.iter().enumerate() {
            let mut s = 0.0;
            for (fq, dq) in field.data.iter().zip(&dstrain.data) {
                s += fq.dot(dq);
            }
            y[lt + n] = w * s;
        }
        let k = self.k();
        for (m, dzeta) in self.d_zeta.iter().enumerate() {
            let mut s = 0.0;
            for (fq, dq) in field.data.iter().zip(&dzeta.data) {
                s += fq.dot(dq);
            }
            y[lt + k + m] = w * s;
        }
        Ok(y)
    }

    /// The projection of ε^p₀ onto the plastic-strain span (what the
    /// discrete evolution actually starts from).
    pub fn projected_initial_plastic(&self, epsp0: &PlasticInit) -> Result<QPTensorField> {
        let y = self.initial_state(&ThetaInit::Zero, epsp0)?;
        let (_, gamma, delta) = self.split(&y);
        Ok(self.plastic_field(&gamma, &delta))
    }

    fn plastic_field(
        &self,
        gamma: &nalgebra::DVectorView<f64>,
        delta: &nalgebra::DVectorView<f64>,
    ) -> QPTensorField {
        let mut f = QPTensorField::zeros(self.assembly.qp_count());
        for (n, mode) in self.basis.displacement.modes.iter().enumerate() {
            if gamma[n] != 0.0 {
                f.axpy(gamma[n], &mode.strain);
            }
        }
        for (m, zeta) in self.basis.complement.fields.iter().enumerate() {
            if delta[m] != 0.0 {
                f.axpy(delta[m], zeta);
            }
        }
        f
    }

    /// Integrate the coefficient system over the sample grid.
    pub fn integrate(
        &self,
        y0: &DVector<f64>,
        times: &[f64],
        config: &IntegratorSection,
    ) -> Result<Trajectory> {
        if y0.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial state length {} but system dimension {}",
                y0.len(),
                self.dim()
            )));
        }
        let rhs = |t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| -> Result<()> {
            let ev = self.evaluate(t, y)?;
            dy.copy_from(&ev.dy);
            Ok(())
        };
        let states = match config.method {
            IntegratorMethod::Adaptive => {
                let settings = AdaptiveSettings {
                    rel_tol: config.rel_tol,
                    abs_tol: config.abs_tol,
                    ..Default::default()
                };
                integrate_adaptive(rhs, y0, times, &settings)?
            }
            IntegratorMethod::Rk4 => integrate_rk4(rhs, y0, times, config.fixed_step)?,
        };
        Ok(Trajectory {
            times: times.to_vec(),
            states,
        })
    }

    /// Coefficient state (with derived α) at a trajectory sample.
    pub fn state_at(&self, trajectory: &Trajectory, index: usize) -> GalerkinState {
        let t = trajectory.times[index];
        let y = &trajectory.states[index];
        let (beta, gamma, delta) = self.split(y);
        let theta_qp = self.theta_qp(t, &beta);
        let alpha = self.compute_alpha(&gamma, &theta_qp);
        GalerkinState {
            t,
            beta: beta.clone_owned(),
            gamma: gamma.clone_owned(),
            delta: delta.clone_owned(),
            alpha,
        }
    }

    /// Max |α^n − γ^n| over a trajectory (the coupling identity monitor).
    pub fn max_alpha_gamma_gap(&self, trajectory: &Trajectory) -> f64 {
        let mut gap: f64 = 0.0;
        for i in 0..trajectory.times.len() {
            let st = self.state_at(trajectory, i);
            gap = gap.max((&st.alpha - &st.gamma).amax());
        }
        gap
    }

    /// Full fields at one state, lifted parts included.
    pub fn reconstruct(&self, state: &GalerkinState) -> ReconstructedFields {
        let nn = self.assembly.mesh().node_count();
        let t = state.t;
        // Displacement: ũ plus the modal expansion.
        let mut u_full = if self.lifted.has_displacement() {
            self.lifted.u_full(t, nn)
        } else {
            DVector::zeros(3 * nn)
        };
        for (n, mode) in self.basis.displacement.modes.iter().enumerate() {
            if state.alpha[n] != 0.0 {
                let full = self.assembly.embed_reduced(&mode.reduced);
                u_full.axpy(state.alpha[n], &full, 1.0);
            }
        }
        // Temperature.
        let mut theta_nodal = if self.lifted.has_temperature() {
            self.lifted.theta_nodal(t, nn)
        } else {
            DVector::zeros(nn)
        };
        for (m, mode) in self.basis.temperature.modes.iter().enumerate() {
            if state.beta[m] != 0.0 {
                theta_nodal.axpy(state.beta[m], &mode.nodal, 1.0);
            }
        }
        // Plastic strain and stresses.
        let gamma_view = state.gamma.rows(0, state.gamma.len());
        let delta_view = state.delta.rows(0, state.delta.len());
        let eps_p = self.plastic_field(&gamma_view, &delta_view);
        let mut strain_total = self.assembly.strain_of_full(&u_full);
        strain_total.axpy(-1.0, &eps_p);
        let stress = self.assembly.apply_d_qp(&strain_total);
        let mut stress_dev = stress.clone();
        for s in stress_dev.data.iter_mut() {
            *s = s.deviatoric();
        }
        let theta_qp = self.assembly.scalar_at_qp(&theta_nodal);
        let mut sigma = stress.clone();
        for (q, s) in sigma.data.iter_mut().enumerate() {
            let th = self.variant.thermal_stress(theta_qp[q]);
            s.xx -= th;
            s.yy -= th;
            s.zz -= th;
        }
        ReconstructedFields {
            t,
            u_full,
            theta_nodal,
            eps_p,
            stress,
            stress_dev,
            sigma,
        }
    }

    /// Thermal energy H = ∫(θ̃ + θ̂) dx at a sample.
    pub fn thermal_energy(&self, state: &GalerkinState) -> f64 {
        let mut h = self.lifted.theta_integral(state.t);
        for (m, mode) in self.basis.temperature.modes.iter().enumerate() {
            if state.beta[m] != 0.0 {
                h += state.beta[m] * self.mass_row.dot(&mode.nodal);
            }
        }
        h
    }

    /// Potential energy E = ½ ∫ D(ε(u)−ε^p):(ε(u)−ε^p) dx at a sample.
    pub fn potential_energy(&self, state: &GalerkinState) -> f64 {
        let nqp = self.assembly.qp_count();
        let mut e = if self.lifted.has_displacement() {
            self.lifted.strain_qp(state.t, nqp)
        } else {
            QPTensorField::zeros(nqp)
        };
        for (n, mode) in self.basis.displacement.modes.iter().enumerate() {
            if state.alpha[n] != 0.0 {
                e.axpy(state.alpha[n], &mode.strain);
            }
        }
        let gamma_view = state.gamma.rows(0, state.gamma.len());
        let delta_view = state.delta.rows(0, state.delta.len());
        e.axpy(-1.0, &self.plastic_field(&gamma_view, &delta_view));
        0.5 * self.assembly.inner_d_qp(&e, &e)
    }

    /// Recompute ε^p(t) = P(ε^p₀) + ∫₀ᵗ G dτ by fourth-order quadrature
    /// along the trajectory and compare with the coefficient reconstruction
    /// at every sample.
    pub fn recover_plastic_strain(
        &self,
        trajectory: &Trajectory,
        epsp0: &PlasticInit,
    ) -> Result<PlasticRecovery> {
        let nt = trajectory.times.len();
        let nqp = self.assembly.qp_count();
        // G at every sample.
        let mut g_samples: Vec<QPTensorField> = Vec::with_capacity(nt);
        for i in 0..nt {
            let ev = self.evaluate(trajectory.times[i], &trajectory.states[i])?;
            g_samples.push(ev.g_flow);
        }
        let h = trajectory.times[1] - trajectory.times[0];
        for w in trajectory.times.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-12 * h.max(1.0) {
                return Err(Error::Integration(
                    "plastic-strain recovery needs uniform sample times".into(),
                ));
            }
        }
        let mut cumulative = self.projected_initial_plastic(epsp0)?;
        let mut deviation = Vec::with_capacity(nt);
        let record = |i: usize, cum: &QPTensorField| -> f64 {
            let st = self.state_at(trajectory, i);
            let gv = st.gamma.rows(0, st.gamma.len());
            let dv = st.delta.rows(0, st.delta.len());
            let recon = self.plastic_field(&gv, &dv);
            let mut dev: f64 = 0.0;
            for (a, b) in recon.data.iter().zip(&cum.data) {
                dev = dev.max((*a - *b).norm());
            }
            dev
        };
        deviation.push(record(0, &cumulative));
        let mut i = 0;
        while i + 2 < nt {
            // Simpson over the pair [t_i, t_{i+2}], with a third-order
            // correction step to report the midpoint too.
            let mut mid = cumulative.clone();
            for q in 0..nqp {
                mid.data[q] = mid.data[q]
                    + (g_samples[i].data[q].scale(5.0)
                        + g_samples[i + 1].data[q].scale(8.0)
                        - g_samples[i + 2].data[q])
                    .scale(h / 12.0);
            }
            deviation.push(record(i + 1, &mid));
            for q in 0..nqp {
                cumulative.data[q] = cumulative.data[q]
                    + (g_samples[i].data[q]
                        + g_samples[i + 1].data[q].scale(4.0)
                        + g_samples[i + 2].data[q])
                    .scale(h / 3.0);
            }
            deviation.push(record(i + 2, &cumulative));
            i += 2;
        }
        if i + 2 == nt {
            // Odd sample count ran out: close the last interval with the
            // trapezoid-with-derivative-free third-order rule.
            for q in 0..nqp {
                cumulative.data[q] = cumulative.data[q]
                    + (g_samples[i].data[q].scale(5.0)
                        + g_samples[i + 1].data[q].scale(8.0)
                        - g_samples[i.saturating_sub(1)].data[q])
                    .scale(h / 12.0);
            }
            deviation.push(record(i + 1, &cumulative));
        }
        let max_deviation = deviation.iter().cloned().fold(0.0, f64::max);
        Ok(PlasticRecovery {
            times: trajectory.times.clone(),
            deviation,
            max_deviation,
        })
    }
}

/// Everything a run needs, owned together so the borrow graph stays simple.
pub struct Workspace {
    pub assembly: FEAssembly,
    pub basis: BasisSet,
    pub lifted: LiftedFields,
    pub law: ConstitutiveLaw,
    pub variant: CouplingVariant,
    pub truncation: Truncation,
}

impl Workspace {
    /// Build mesh, assembly, bases, and lifting for a scenario.
    pub fn build(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let mesh = crate::mesh::BoxMesh::new(scenario.mesh.extents, scenario.mesh.cells)?;
        let d = crate::tensor::ElasticityTensor::isotropic(
            scenario.material.lambda,
            scenario.material.mu,
        )?;
        let assembly = FEAssembly::assemble(mesh, d)?;
        let k = scenario.galerkin.k.min(assembly.reduced_dim());
        let basis = BasisSet::build(
            &assembly,
            k,
            scenario.galerkin.l,
            scenario.galerkin.l_complement,
        )?;
        let law = ConstitutiveLaw::new(
            scenario.material.p,
            scenario.material.kappa0,
            scenario.material.kappa1,
        )?;
        let variant = CouplingVariant::from_scenario(scenario)?;
        let lifted = LiftedFields::build(
            &assembly,
            &scenario.data.g,
            &scenario.data.f,
            &scenario.data.g_theta,
            variant.lifting_heat_coefficient(),
            scenario.lifting.time_step,
            scenario.integrator.t_end,
        )?;
        let truncation = Truncation::new(scenario.galerkin.k_trunc)?;
        Ok(Self {
            assembly,
            basis,
            lifted,
            law,
            variant,
            truncation,
        })
    }

    pub fn system(&self, scenario: &Scenario) -> Result<System<'_>> {
        System::new(
            &self.assembly,
            &self.basis,
            &self.lifted,
            self.law.clone(),
            self.variant.clone(),
            self.truncation.clone(),
            scenario.data.f.clone(),
            scenario.data.g_theta.clone(),
        )
    }
}
