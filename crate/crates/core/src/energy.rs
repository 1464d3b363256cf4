//! Energy bookkeeping and structural diagnostics along a trajectory: the
//! balance residual, a-priori bound monitors, weak-form residual probes,
//! and the symmetric-versus-broken comparison.
//!
//! The central identity is the total-energy balance. With E the elastic
//! energy of ε(u) − ε^p, H = ∫θ dx, and W the accumulated external power,
//! the symmetric coupling variant satisfies
//!
//! ```text
//!   R(t) = [E + H](t) − [E + H](0) − W(t) ≈ 0
//! ```
//!
//! semi-discretely: the dissipation leaves E and enters H through the
//! constant temperature mode at exactly the same rate, so R is pure
//! time-integration error. The broken variant transfers heat with a
//! mismatched coefficient and R drifts at a rate proportional to
//! ∫ θ div(û_t) dx.

use crate::data::{ScalarData, VectorData};
use crate::output::EnergyRow;
use crate::scenario::{Scenario, VariantKind};
use crate::solver::{System, Trajectory, Workspace};
use crate::{Error, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quadrature weights for ∫₀ᵀ · dt over the sample grid: composite Simpson
/// on a uniform grid (trailing trapezoid for an even interval count),
/// plain trapezoid otherwise.
pub fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h = times[1] - times[0];
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.abs().max(1.0));
    let mut w = vec![0.0; n];
    if uniform && n >= 3 {
        let pairs = (n - 1) / 2;
        for p in 0..pairs {
            let i = 2 * p;
            w[i] += h / 3.0;
            w[i + 1] += 4.0 * h / 3.0;
            w[i + 2] += h / 3.0;
        }
        if (n - 1) % 2 == 1 {
            w[n - 2] += h / 2.0;
            w[n - 1] += h / 2.0;
        }
    } else {
        for i in 0..n - 1 {
            let dt = times[i + 1] - times[i];
            w[i] += dt / 2.0;
            w[i + 1] += dt / 2.0;
        }
    }
    w
}

/// Energy series plus its summary extremes.
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    /// max_t |R(t)|.
    pub max_residual: f64,
    /// max_t |E(t) − E(0) + ∫₀ᵗ dissipation| — the elastic-energy identity,
    /// exact for driver-free symmetric runs.
    pub max_dissipation_identity_gap: f64,
    /// Scale E(0) + |H(0)| + 1 used by relative residual thresholds.
    pub scale: f64,
}

/// Evaluate E, H, and the balance residual at every trajectory sample.
pub fn energy_report(system: &System, trajectory: &Trajectory) -> Result<EnergyReport> {
    let n = trajectory.times.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty trajectory".into()));
    }
    let aux = system.aux_dissipation_index();
    let mut rows = Vec::with_capacity(n);
    let mut base = 0.0;
    let mut e0 = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut max_gap: f64 = 0.0;
    for i in 0..n {
        let state = system.state_at(trajectory, i);
        let potential = system.potential_energy(&state);
        let thermal = system.thermal_energy(&state);
        let dissipation = trajectory.states[i][aux];
        let power = trajectory.states[i][aux + 1];
        if i == 0 {
            base = potential + thermal;
            e0 = potential;
        }
        let residual = potential + thermal - base - power;
        max_residual = max_residual.max(residual.abs());
        max_gap = max_gap.max((potential - e0 + dissipation).abs());
        rows.push(EnergyRow {
            t: trajectory.times[i],
            potential,
            thermal,
            dissipation,
            power,
            residual,
        });
    }
    let scale = rows[0].potential + rows[0].thermal.abs() + 1.0;
    Ok(EnergyReport {
        rows,
        max_residual,
        max_dissipation_identity_gap: max_gap,
        scale,
    })
}

/// The monitored a-priori quantities: each is finite for the symmetric
/// variant uniformly in (k, l) by the existence theory, so watching them
/// stay O(data) across refinement is a cheap structural check.
pub struct Bounds {
    pub sup_potential: f64,
    pub sup_theta_integral: f64,
    /// ‖T^d‖ in L^p of space-time.
    pub stress_dev_lp: f64,
    /// ‖G(θ, T^d)‖ in L^{p′} of space-time, p′ the conjugate exponent.
    pub flow_lp_conj: f64,
    /// ‖T^d : G‖ in L¹ of space-time.
    pub dissipation_l1: f64,
    /// ‖θ‖ in L^{6/5}(0,T; W^{1,6/5}).
    pub theta_sobolev: f64,
    /// ‖ε(u_t)‖ in L^{p′} of space-time.
    pub strain_rate_lp_conj: f64,
    /// ‖ε^p_t‖ in L^{p′} of space-time.
    pub plastic_rate_lp_conj: f64,
}

impl Bounds {
    pub fn entries(&self) -> Vec<(String, f64)> {
        vec![
            ("sup_E".into(), self.sup_potential),
            ("sup_theta_integral".into(), self.sup_theta_integral),
            ("stress_dev_Lp".into(), self.stress_dev_lp),
            ("flow_rate_Lp_conj".into(), self.flow_lp_conj),
            ("dissipation_L1".into(), self.dissipation_l1),
            ("theta_L65_W1_65".into(), self.theta_sobolev),
            ("strain_rate_Lp_conj".into(), self.strain_rate_lp_conj),
            ("plastic_rate_Lp_conj".into(), self.plastic_rate_lp_conj),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_finite())
    }
}

/// Collect the bound monitors by re-evaluating the right-hand side at every
/// sample and integrating in time with the Simpson weights.
pub fn collect_bounds(system: &System, trajectory: &Trajectory) -> Result<Bounds> {
    let p = system.law.exponent();
    let pc = p / (p - 1.0);
    let wq = system.assembly.qp_weight();
    let tw = time_weights(&trajectory.times);
    let nqp = system.assembly.qp_count();
    const SOB: f64 = 1.2;

    let mut sup_potential: f64 = 0.0;
    let mut sup_theta_integral: f64 = 0.0;
    let mut stress_acc = 0.0;
    let mut flow_acc = 0.0;
    let mut diss_acc = 0.0;
    let mut theta_acc = 0.0;
    let mut strain_rate_acc = 0.0;
    let mut plastic_rate_acc = 0.0;

    for i in 0..trajectory.times.len() {
        let t = trajectory.times[i];
        let y = &trajectory.states[i];
        let ev = system.evaluate(t, y)?;
        let state = system.state_at(trajectory, i);
        sup_potential = sup_potential.max(system.potential_energy(&state));
        sup_theta_integral = sup_theta_integral.max(system.thermal_energy(&state).abs());

        let mut stress_x = 0.0;
        let mut flow_x = 0.0;
        let mut diss_x = 0.0;
        let mut plastic_x = 0.0;
        for q in 0..nqp {
            stress_x += ev.t_full_dev.data[q].norm().powf(p);
            flow_x += ev.g_phys.data[q].norm().powf(pc);
            diss_x += ev.src_qp[q].abs();
            plastic_x += ev.g_flow.data[q].norm().powf(pc);
        }
        stress_acc += tw[i] * wq * stress_x;
        flow_acc += tw[i] * wq * flow_x;
        diss_acc += tw[i] * wq * diss_x;
        plastic_rate_acc += tw[i] * wq * plastic_x;

        // Temperature Sobolev monitor: values and gradients at quadrature
        // points of the full field θ̃ + θ̂.
        let fields = system.reconstruct(&state);
        let theta_qp = system.assembly.scalar_at_qp(&fields.theta_nodal);
        let grad_qp = system.assembly.scalar_grad_at_qp(&fields.theta_nodal);
        let mut theta_x = 0.0;
        for q in 0..nqp {
            let gnorm = (grad_qp[q][0] * grad_qp[q][0]
                + grad_qp[q][1] * grad_qp[q][1]
                + grad_qp[q][2] * grad_qp[q][2])
                .sqrt();
            theta_x += theta_qp[q].abs().powf(SOB) + gnorm.powf(SOB);
        }
        theta_acc += tw[i] * wq * theta_x;

        // Strain rate ε(u_t) = ε(ũ_t) + Σ α̇ⁿ ε(w_n).
        let mut rate = if system.lifted.has_displacement() {
            system.lifted.strain_rate_qp(t, nqp)
        } else {
            crate::assembly::QPTensorField::zeros(nqp)
        };
        for (n, mode) in system.basis.displacement.modes.iter().enumerate() {
            if ev.alpha_dot[n] != 0.0 {
                rate.axpy(ev.alpha_dot[n], &mode.strain);
            }
        }
        let mut rate_x = 0.0;
        for q in 0..nqp {
            rate_x += rate.data[q].norm().powf(pc);
        }
        strain_rate_acc += tw[i] * wq * rate_x;
    }

    Ok(Bounds {
        sup_potential,
        sup_theta_integral,
        stress_dev_lp: stress_acc.powf(1.0 / p),
        flow_lp_conj: flow_acc.powf(1.0 / pc),
        dissipation_l1: diss_acc,
        theta_sobolev: theta_acc.powf(1.0 / SOB),
        strain_rate_lp_conj: strain_rate_acc.powf(1.0 / pc),
        plastic_rate_lp_conj: plastic_rate_acc.powf(1.0 / pc),
    })
}

/// Residual of one probe over the sampled times.
pub struct ProbeResult {
    pub label: String,
    /// Whether the probe lies in the Galerkin span (where the residual must
    /// vanish to solver precision).
    pub in_span: bool,
    pub max_residual: f64,
}

pub struct WeakResidualReport {
    pub momentum: Vec<ProbeResult>,
    pub heat: Vec<ProbeResult>,
}

impl WeakResidualReport {
    /// Largest residual among the in-span probes.
    pub fn max_in_span(&self) -> f64 {
        self.momentum
            .iter()
            .chain(self.heat.iter())
            .filter(|p| p.in_span)
            .map(|p| p.max_residual)
            .fold(0.0, f64::max)
    }

    pub fn entries(&self) -> Vec<(String, f64)> {
        self.momentum
            .iter()
            .map(|p| (format!("momentum_{}", p.label), p.max_residual))
            .chain(
                self.heat
                    .iter()
                    .map(|p| (format!("heat_{}", p.label), p.max_residual)),
            )
            .collect()
    }
}

/// Test the weak momentum and heat balances against probe functions
/// realized in the finite-element spaces.
///
/// Momentum probes are interior displacement fields φ; the residual is
/// ∫σ:ε(φ) − ∫f·φ, which vanishes for φ in span{w_n} by the algebraic
/// α-recovery. Heat probes are scalar fields v; the residual collects
/// (θ_t, v) + (∇θ, ∇v) + (B(θ) div u_t, v) − (T_k(T^d:G), v) − flux and
/// manufactured terms, and vanishes for v in span{v_m} up to the lifting's
/// time-march defect.
pub fn weak_residuals(
    system: &System,
    trajectory: &Trajectory,
    f_data: &VectorData,
    g_theta: &ScalarData,
    seed: u64,
) -> Result<WeakResidualReport> {
    let asm = system.assembly;
    let nqp = asm.qp_count();
    let wq = asm.qp_weight();
    let nt = trajectory.times.len();
    // Up to seven evenly spread sample indices.
    let picks: Vec<usize> = if nt <= 7 {
        (0..nt).collect()
    } else {
        (0..7).map(|j| j * (nt - 1) / 6).collect()
    };

    // --- Probe construction ---------------------------------------------
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Momentum probes: reduced-dof vectors, unit D-energy.
    let mut momentum_probes: Vec<(String, bool, DVector<f64>)> = Vec::new();
    for n in 0..system.k().min(3) {
        momentum_probes.push((
            format!("mode_{}", n + 1),
            true,
            system.basis.displacement.modes[n].reduced.clone(),
        ));
    }
    let rdim = asm.reduced_dim();
    for j in 0..3 {
        let mut v = DVector::from_fn(rdim, |_, _| rng.gen_range(-1.0..1.0));
        let strain = asm.strain_of(&v);
        let norm = asm.inner_d_qp(&strain, &strain).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        momentum_probes.push((format!("random_{}", j + 1), false, v));
    }
    // A smooth bump interpolated at the nodes, zero on the boundary by
    // construction of the interior dof set.
    {
        let mesh = asm.mesh();
        let ext = mesh.extents();
        let mut v = DVector::zeros(rdim);
        for (idx, node) in mesh.interior_nodes().iter().enumerate() {
            let x = mesh.node_coords()[*node];
            let b: f64 = (0..3)
                .map(|d| (std::f64::consts::PI * x[d] / ext[d]).sin())
                .product();
            v[3 * idx] = b;
            v[3 * idx + 1] = -0.5 * b;
            v[3 * idx + 2] = 0.25 * b;
        }
        let strain = asm.strain_of(&v);
        let norm = asm.inner_d_qp(&strain, &strain).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        momentum_probes.push(("bump".into(), false, v));
    }
    // Heat probes: nodal scalar fields, unit L² norm.
    let ndim = asm.scalar_dim();
    let mass = asm.scalar_mass();
    let mut heat_probes: Vec<(String, bool, DVector<f64>)> = Vec::new();
    for m in 0..system.l_temperature().min(3) {
        heat_probes.push((
            format!("mode_{}", m + 1),
            true,
            system.basis.temperature.modes[m].nodal.clone(),
        ));
    }
    for j in 0..3 {
        let mut v = DVector::from_fn(ndim, |_, _| rng.gen_range(-1.0..1.0));
        let norm = (mass * &v).dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        heat_probes.push((format!("random_{}", j + 1), false, v));
    }
    {
        let mesh = asm.mesh();
        let ext = mesh.extents();
        let mut v = DVector::zeros(ndim);
        for node in 0..ndim {
            let x = mesh.node_coords()[node];
            v[node] = (0..3)
                .map(|d| (std::f64::consts::PI * x[d] / ext[d]).cos())
                .product();
        }
        let norm = (mass * &v).dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        heat_probes.push(("smooth".into(), false, v));
    }

    // Cache probe quadrature data.
    struct MomentumProbe {
        label: String,
        in_span: bool,
        strain: crate::assembly::QPTensorField,
        reduced: DVector<f64>,
    }
    struct HeatProbe {
        label: String,
        in_span: bool,
        values: Vec<f64>,
        grads: Vec<[f64; 3]>,
        nodal: DVector<f64>,
    }
    let m_probes: Vec<MomentumProbe> = momentum_probes
        .into_iter()
        .map(|(label, in_span, v)| MomentumProbe {
            label,
            in_span,
            strain: asm.strain_of(&v),
            reduced: v,
        })
        .collect();
    let h_probes: Vec<HeatProbe> = heat_probes
        .into_iter()
        .map(|(label, in_span, v)| HeatProbe {
            label,
            in_span,
            values: asm.scalar_at_qp(&v),
            grads: asm.scalar_grad_at_qp(&v),
            nodal: v,
        })
        .collect();

    let mut m_res: Vec<f64> = vec![0.0; m_probes.len()];
    let mut h_res: Vec<f64> = vec![0.0; h_probes.len()];

    for &i in &picks {
        let t = trajectory.times[i];
        let ev = system.evaluate(t, &trajectory.states[i])?;
        let state = system.state_at(trajectory, i);
        let fields = system.reconstruct(&state);

        // Momentum: ∫σ:ε(φ) − ∫f·φ.
        let f_qp: Option<Vec<[f64; 3]>> = if f_data.is_zero() {
            None
        } else {
            Some(
                asm.qp_coords()
                    .iter()
                    .map(|x| f_data.value(*x, t))
                    .collect(),
            )
        };
        let f_load = f_qp.as_ref().map(|fq| asm.vector_load_from_qp(fq));
        for (j, probe) in m_probes.iter().enumerate() {
            let mut r = 0.0;
            for q in 0..nqp {
                r += fields.sigma.data[q].dot(&probe.strain.data[q]);
            }
            r *= wq;
            if let Some(load) = &f_load {
                r -= load.dot(&probe.reduced);
            }
            m_res[j] = m_res[j].max(r.abs());
        }

        // Heat: assemble each term at quadrature points.
        let theta_dot_qp: Vec<f64> = {
            let mut v = vec![0.0; nqp];
            for (m, mode) in system.basis.temperature.modes.iter().enumerate() {
                let b = ev.beta_dot[m];
                if b != 0.0 {
                    for (vv, mv) in v.iter_mut().zip(&mode.values) {
                        *vv += b * mv;
                    }
                }
            }
            if system.lifted.has_temperature() {
                let rate = system.lifted.theta_rate_nodal(t, ndim);
                for (vv, rv) in v.iter_mut().zip(asm.scalar_at_qp(&rate)) {
                    *vv += rv;
                }
            }
            v
        };
        let theta_grad_qp = asm.scalar_grad_at_qp(&fields.theta_nodal);
        let mut div_ut = vec![0.0; nqp];
        if system.lifted.has_displacement() {
            system.lifted.divergence_rate_into(t, &mut div_ut);
        }
        for (n, mode) in system.basis.displacement.modes.iter().enumerate() {
            if ev.alpha_dot[n] != 0.0 {
                for (dv, md) in div_ut.iter_mut().zip(&mode.divergence) {
                    *dv += ev.alpha_dot[n] * md;
                }
            }
        }
        let flux_load = if g_theta.is_zero() {
            None
        } else {
            Some(asm.boundary_flux_load(&|x| g_theta.value(x, t)))
        };
        for (j, probe) in h_probes.iter().enumerate() {
            let mut r = 0.0;
            for q in 0..nqp {
                let grad_dot = theta_grad_qp[q][0] * probe.grads[q][0]
                    + theta_grad_qp[q][1] * probe.grads[q][1]
                    + theta_grad_qp[q][2] * probe.grads[q][2];
                let coupling = system.variant.heat_coefficient(ev.theta_qp[q]) * div_ut[q];
                r += (theta_dot_qp[q] + coupling - system.truncation.apply(ev.src_qp[q]))
                    * probe.values[q]
                    + grad_dot;
            }
            r *= wq;
            if let Some(load) = &flux_load {
                r -= load.dot(&probe.nodal);
            }
            h_res[j] = h_res[j].max(r.abs());
        }
    }

    Ok(WeakResidualReport {
        momentum: m_probes
            .iter()
            .zip(&m_res)
            .map(|(p, &r)| ProbeResult {
                label: p.label.clone(),
                in_span: p.in_span,
                max_residual: r,
            })
            .collect(),
        heat: h_probes
            .iter()
            .zip(&h_res)
            .map(|(p, &r)| ProbeResult {
                label: p.label.clone(),
                in_span: p.in_span,
                max_residual: r,
            })
            .collect(),
    })
}

/// Result of running the same data under the symmetric and broken coupling
/// variants.
pub struct VariantComparison {
    pub symmetric_max_residual: f64,
    pub broken_max_residual: f64,
    /// broken / symmetric residual ratio (∞ when the symmetric residual
    /// underflows to zero).
    pub ratio: f64,
}

/// Run the scenario's data under both coupling variants and compare the
/// balance residuals. The scenario must carry a `gamma` for the broken run.
pub fn compare_variants(scenario: &Scenario) -> Result<VariantComparison> {
    if scenario.variant.gamma.is_none() {
        return Err(Error::InvalidScenario(
            "variant comparison needs an explicit gamma for the broken run".into(),
        ));
    }
    let run = |kind: VariantKind| -> Result<f64> {
        let mut s = scenario.clone();
        s.variant.kind = kind;
        let ws = Workspace::build(&s)?;
        let system = ws.system(&s)?;
        let y0 = system.initial_state(&s.data.theta0, &s.data.epsp0)?;
        let traj = system.integrate(&y0, &s.sample_times(), &s.integrator)?;
        Ok(energy_report(&system, &traj)?.max_residual)
    };
    let symmetric = run(VariantKind::Symmetric)?;
    let broken = run(VariantKind::Broken)?;
    let ratio = if symmetric > 0.0 {
        broken / symmetric
    } else {
        f64::INFINITY
    };
    Ok(VariantComparison {
        symmetric_max_residual: symmetric,
        broken_max_residual: broken,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PlasticInit, ThetaInit};
    use crate::scenario::Scenario;

    fn scenario(variant: &str, gamma_line: &str) -> Scenario {
        let toml = format!(
            r#"
[mesh]
extents = [1.0, 1.0, 1.0]
cells = [2, 2, 2]

[material]
lambda = 2.0
mu = 1.0
p = 2.0
alpha = 0.5
theta_bar = 1.0

[variant]
kind = "{variant}"
{gamma_line}

[galerkin]
k = 3
l = 4

[integrator]
t_end = 0.3
samples = 31
"#
        );
        let mut s = Scenario::from_toml_str(&toml).unwrap();
        s.data.theta0 = ThetaInit::Eigenmode {
            index: 2,
            amplitude: 0.3,
        };
        s.data.epsp0 = PlasticInit::RandomTraceless {
            amplitude: 0.05,
            seed: 11,
        };
        s
    }

    #[test]
    fn simpson_weights_integrate_cubics_exactly() {
        let n = 21;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let w = time_weights(&times);
        let integral: f64 = times
            .iter()
            .zip(&w)
            .map(|(t, w)| w * (t.powi(3) - 2.0 * t + 1.0))
            .sum();
        // ∫₀¹ t³ − 2t + 1 dt = 1/4 − 1 + 1 = 1/4.
        assert!((integral - 0.25).abs() <= 1e-14, "Simpson got {integral}");
        // Even interval count falls back to a trailing trapezoid but still
        // integrates constants exactly.
        let times2: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let w2 = time_weights(&times2);
        assert!((w2.iter().sum::<f64>() - 3.0).abs() <= 1e-14);
    }

    #[test]
    fn symmetric_report_residual_is_time_integrator_sized() {
        let s = scenario("symmetric", "");
        let ws = Workspace::build(&s).unwrap();
        let system = ws.system(&s).unwrap();
        let y0 = system.initial_state(&s.data.theta0, &s.data.epsp0).unwrap();
        let traj = system.integrate(&y0, &s.sample_times(), &s.integrator).unwrap();
        let report = energy_report(&system, &traj).unwrap();
        assert!(report.rows.len() == 31);
        assert!(
            report.max_residual <= 1e-8 * report.scale,
            "residual {:.3e}",
            report.max_residual
        );
        assert!(
            report.max_dissipation_identity_gap <= 1e-8 * report.scale,
            "identity gap {:.3e}",
            report.max_dissipation_identity_gap
        );
        // Dissipation accumulates monotonically from zero.
        assert_eq!(report.rows[0].dissipation, 0.0);
        for w in report.rows.windows(2) {
            assert!(w[1].dissipation >= w[0].dissipation - 1e-14);
        }
    }

    #[test]
    fn broken_variant_drifts_and_comparison_quantifies_it() {
        let s = scenario("broken", "gamma = 0.75");
        let cmp = compare_variants(&s).unwrap();
        assert!(
            cmp.broken_max_residual > 10.0 * cmp.symmetric_max_residual,
            "broken {:.3e} vs symmetric {:.3e}",
            cmp.broken_max_residual,
            cmp.symmetric_max_residual
        );
        assert!(cmp.ratio > 10.0);
    }

    #[test]
    fn bounds_of_a_constant_temperature_state_are_closed_form() {
        // θ ≡ c with no stress anywhere: the Sobolev monitor reduces to
        // (T · V · c^{6/5})^{5/6} and sup ∫θ = cV.
        let mut s = scenario("symmetric", "");
        s.data.theta0 = ThetaInit::Constant { value: 0.4 };
        s.data.epsp0 = PlasticInit::Zero;
        let ws = Workspace::build(&s).unwrap();
        let system = ws.system(&s).unwrap();
        let y0 = system.initial_state(&s.data.theta0, &s.data.epsp0).unwrap();
        let traj = system.integrate(&y0, &s.sample_times(), &s.integrator).unwrap();
        let b = collect_bounds(&system, &traj).unwrap();
        let c: f64 = 0.4;
        let expected_sobolev = (0.3 * c.powf(1.2)).powf(1.0 / 1.2);
        assert!(
            (b.theta_sobolev - expected_sobolev).abs() <= 1e-6 * expected_sobolev,
            "sobolev {} vs {}",
            b.theta_sobolev,
            expected_sobolev
        );
        assert!((b.sup_theta_integral - c).abs() <= 1e-9);
        assert!(b.sup_potential <= 1e-14);
        assert!(b.stress_dev_lp <= 1e-12);
        assert!(b.all_finite());
    }

    #[test]
    fn bounds_are_finite_and_ordered_for_a_generic_run() {
        let s = scenario("symmetric", "");
        let ws = Workspace::build(&s).unwrap();
        let system = ws.system(&s).unwrap();
        let y0 = system.initial_state(&s.data.theta0, &s.data.epsp0).unwrap();
        let traj = system.integrate(&y0, &s.sample_times(), &s.integrator).unwrap();
        let b = collect_bounds(&system, &traj).unwrap();
        assert!(b.all_finite());
        assert!(b.sup_potential > 0.0);
        assert!(b.stress_dev_lp > 0.0);
        // p = 2: dissipation ‖T^d:G‖₁ ≤ ‖T^d‖₂ ‖G‖₂ (Cauchy–Schwarz in
        // space-time).
        assert!(b.dissipation_l1 <= b.stress_dev_lp * b.flow_lp_conj * (1.0 + 1e-10));
    }

    #[test]
    fn in_span_probes_satisfy_the_weak_forms() {
        let s = scenario("symmetric", "");
        let ws = Workspace::build(&s).unwrap();
        let system = ws.system(&s).unwrap();
        let y0 = system.initial_state(&s.data.theta0, &s.data.epsp0).unwrap();
        let traj = system.integrate(&y0, &s.sample_times(), &s.integrator).unwrap();
        let report =
            weak_residuals(&system, &traj, &s.data.f, &s.data.g_theta, 42).unwrap();
        assert_eq!(report.momentum.len(), 7);
        assert_eq!(report.heat.len(), 7);
        let max_in = report.max_in_span();
        assert!(max_in <= 1e-9, "in-span residual {max_in:.3e}");
        // Out-of-span residuals are reported, finite, and at least one is
        // genuinely nonzero (the spaces are proper subspaces).
        let max_out = report
            .momentum
            .iter()
            .chain(report.heat.iter())
            .filter(|p| !p.in_span)
            .map(|p| p.max_residual)
            .fold(0.0f64, f64::max);
        assert!(max_out.is_finite());
        assert!(max_out > 1e-9, "out-of-span residual suspiciously small");
    }

    #[test]
    fn weak_residuals_hold_with_external_load() {
        // A volume force enters through the lifting; in-span momentum
        // probes must still satisfy the balance including the ∫f·φ term.
        let mut s = scenario("symmetric", "");
        s.data.f = crate::data::VectorData {
            terms: vec![crate::data::VectorTerm {
                profile: crate::data::VectorProfile::Constant {
                    value: [0.0, 0.0, -2.0],
                },
                time: crate::data::TimeFactor::Sin { omega: 3.0 },
            }],
        };
        let ws = Workspace::build(&s).unwrap();
        let system = ws.system(&s).unwrap();
        let y0 = system.initial_state(&s.data.theta0, &s.data.epsp0).unwrap();
        let traj = system.integrate(&y0, &s.sample_times(), &s.integrator).unwrap();
        let report =
            weak_residuals(&system, &traj, &s.data.f, &s.data.g_theta, 7).unwrap();
        let max_mom = report
            .momentum
            .iter()
            .filter(|p| p.in_span)
            .map(|p| p.max_residual)
            .fold(0.0f64, f64::max);
        assert!(max_mom <= 1e-9, "momentum residual with load {max_mom:.3e}");
    }
}
