//! Manufactured-solution convergence studies.
//!
//! Two cases, both on the unit cube with the symmetric coupling variant and
//! the truncation inactive:
//!
//! * **heat**: θ* = cos(πx₁)e^{−t} with u* ≡ 0 and ε^p* ≡ 0. The stress
//!   vanishes identically, so the flow rule needs no source; a scalar
//!   source S_θ = (π²−1)θ* closes the heat equation.
//! * **coupled**: u*_i = a_i e^{−t}·sin(πx₁)sin(πx₂)sin(πx₃) and
//!   θ* = cos(πx₁)cos(πx₂)e^{−t} with ε^p* ≡ 0. The momentum equation is
//!   closed by a volume force carried exactly by the lifting, the flow rule
//!   by S_flow = −G(θ*, T*^d), and the heat equation by the source that
//!   absorbs diffusion, coupling, and the spurious dissipation.
//!
//! Both manufactured temperatures have vanishing normal derivative on every
//! face and both displacements vanish on the boundary, so g, g_θ stay zero
//! and no boundary data pollutes the measured orders. Because the spectral
//! temperature space is taken to be the full finite-element space on each
//! rung and the displacement correction to the lifted solve is O(h²)
//! itself, the L² errors of θ and u at the final time contract at the
//! finite-element rate h² with no spectral-truncation floor.

use crate::assembly::FEAssembly;
use crate::basis::BasisSet;
use crate::constitutive::{ConstitutiveLaw, FlowLaw, Truncation};
use crate::data::{PlasticInit, ScalarData, ThetaInit, TimeFactor, VectorData};
use crate::lifting::{DisplacementTermSpec, LiftedFields};
use crate::mesh::BoxMesh;
use crate::scenario::{IntegratorMethod, IntegratorSection, VariantKind};
use crate::solver::{CouplingVariant, MmsSources, System};
use crate::tensor::{ElasticityTensor, SymTensor};
use crate::{Error, Result};
use std::f64::consts::PI;

/// Material constants shared by both cases.
const LAMBDA: f64 = 2.0;
const MU: f64 = 1.0;
const ALPHA: f64 = 0.5;
/// Amplitudes of the manufactured displacement components.
const A: [f64; 3] = [0.2, -0.1, 0.15];

/// One ladder rung: mesh resolution and final-time L² errors.
#[derive(Debug, Clone, Copy)]
pub struct MmsRung {
    pub cells: usize,
    pub h: f64,
    pub theta_error: f64,
    /// Zero for the heat-only case (u* ≡ 0 is reproduced exactly up to
    /// solver precision).
    pub u_error: f64,
}

/// A completed convergence study.
#[derive(Debug, Clone)]
pub struct MmsReport {
    pub label: String,
    pub rungs: Vec<MmsRung>,
    /// Least-squares slope of log(error) against log(h).
    pub theta_rate: f64,
    /// Displacement rate; `None` for the heat-only case.
    pub u_rate: Option<f64>,
}

impl MmsReport {
    /// Rows (cells, h, θ-error, u-error) for the convergence CSV.
    pub fn table_rows(&self) -> Vec<Vec<f64>> {
        self.rungs
            .iter()
            .map(|r| vec![r.cells as f64, r.h, r.theta_error, r.u_error])
            .collect()
    }
}

/// Least-squares slope of ln(e) versus ln(h).
pub fn least_squares_slope(hs: &[f64], errors: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let sx: f64 = lx.iter().sum();
    let sy: f64 = ly.iter().sum();
    let sxx: f64 = lx.iter().map(|x| x * x).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

// --- manufactured fields (heat-only case) -------------------------------

fn h_theta(x: [f64; 3], t: f64) -> f64 {
    (PI * x[0]).cos() * (-t).exp()
}

fn h_source(x: [f64; 3], t: f64) -> f64 {
    (PI * PI - 1.0) * h_theta(x, t)
}

// --- manufactured fields (coupled case) ---------------------------------

fn sin3(x: [f64; 3]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin()
}

/// ∂_j of sin(πx₁)sin(πx₂)sin(πx₃).
fn sin3_grad(x: [f64; 3]) -> [f64; 3] {
    let s: Vec<f64> = x.iter().map(|&v| (PI * v).sin()).collect();
    let c: Vec<f64> = x.iter().map(|&v| (PI * v).cos()).collect();
    [
        PI * c[0] * s[1] * s[2],
        PI * s[0] * c[1] * s[2],
        PI * s[0] * s[1] * c[2],
    ]
}

/// ∂_i∂_j of sin(πx₁)sin(πx₂)sin(πx₃).
fn sin3_hess(x: [f64; 3], i: usize, j: usize) -> f64 {
    let s: Vec<f64> = x.iter().map(|&v| (PI * v).sin()).collect();
    let c: Vec<f64> = x.iter().map(|&v| (PI * v).cos()).collect();
    if i == j {
        -PI * PI * s[0] * s[1] * s[2]
    } else {
        let k = 3 - i - j;
        let mut v = PI * PI * c[i] * c[j];
        v *= s[k];
        v
    }
}

fn c_u(x: [f64; 3], t: f64) -> [f64; 3] {
    let b = sin3(x) * (-t).exp();
    [A[0] * b, A[1] * b, A[2] * b]
}

fn c_div_u(x: [f64; 3], t: f64) -> f64 {
    let g = sin3_grad(x);
    (A[0] * g[0] + A[1] * g[1] + A[2] * g[2]) * (-t).exp()
}

fn c_strain(x: [f64; 3], t: f64) -> SymTensor {
    let g = sin3_grad(x);
    let e = (-t).exp();
    SymTensor::new(
        A[0] * g[0] * e,
        A[1] * g[1] * e,
        A[2] * g[2] * e,
        0.5 * (A[1] * g[2] + A[2] * g[1]) * e,
        0.5 * (A[0] * g[2] + A[2] * g[0]) * e,
        0.5 * (A[0] * g[1] + A[1] * g[0]) * e,
    )
}

/// Elastic stress T* = 2µ ε(u*) + λ tr(ε(u*)) I of the manufactured
/// displacement.
fn c_stress(x: [f64; 3], t: f64) -> SymTensor {
    let eps = c_strain(x, t);
    let tr = eps.trace();
    let mut s = eps.scale(2.0 * MU);
    s.xx += LAMBDA * tr;
    s.yy += LAMBDA * tr;
    s.zz += LAMBDA * tr;
    s
}

/// Volume force f* = −div T*: the t-dependence is the common factor e^{−t},
/// so this returns the spatial part (the lifting carries the time factor).
fn c_force_spatial(x: [f64; 3]) -> [f64; 3] {
    let mut f = [0.0; 3];
    for i in 0..3 {
        // −µΔu_i = 3π²µ a_i sin3; −(λ+µ)∂_i div u = −(λ+µ) Σ_j a_j ∂_i∂_j sin3.
        let mut grad_div = 0.0;
        for j in 0..3 {
            grad_div += A[j] * sin3_hess(x, i, j);
        }
        f[i] = 3.0 * PI * PI * MU * A[i] * sin3(x) - (LAMBDA + MU) * grad_div;
    }
    f
}

fn c_theta(x: [f64; 3], t: f64) -> f64 {
    (PI * x[0]).cos() * (PI * x[1]).cos() * (-t).exp()
}

/// Heat source closing θ*: absorbs time decay, diffusion, the coupling
/// α div u*_t, and the dissipation the discrete system generates from the
/// manufactured stress.
fn c_heat_source(law: &ConstitutiveLaw, x: [f64; 3], t: f64) -> f64 {
    let theta = c_theta(x, t);
    // θ*_t = −θ*, Δθ* = −2π²θ*, div u*_t = −div u*.
    let lhs = (2.0 * PI * PI - 1.0) * theta - ALPHA * c_div_u(x, t);
    let td = c_stress(x, t).deviatoric();
    let g = law.eval(theta, &td);
    lhs - td.dot(&g)
}

/// Flow-rule source keeping ε^p* ≡ 0 exact.
fn c_flow_source(law: &ConstitutiveLaw, x: [f64; 3], t: f64) -> SymTensor {
    let td = c_stress(x, t).deviatoric();
    law.eval(c_theta(x, t), &td).scale(-1.0)
}

// --- rung runner ---------------------------------------------------------

struct RungResult {
    theta_error: f64,
    u_error: f64,
}

fn run_rung(cells: usize, coupled: bool, t_end: f64, tol: f64) -> Result<RungResult> {
    let mesh = BoxMesh::unit_cube(cells)?;
    let d = ElasticityTensor::isotropic(LAMBDA, MU)?;
    let assembly = FEAssembly::assemble(mesh, d)?;
    let l_full = assembly.scalar_dim();
    let k = if coupled {
        8.min(assembly.reduced_dim())
    } else {
        1
    };
    let basis = BasisSet::build(&assembly, k, l_full, Some(0))?;
    let law = ConstitutiveLaw::new(2.0, 1.0, 1.0)?;
    let variant = CouplingVariant {
        kind: VariantKind::Symmetric,
        alpha: ALPHA,
        theta_reference: 0.0,
        theta_bar: 1.0,
        gamma: 0.0,
    };
    let lifted = if coupled {
        // The manufactured force is separable: e^{−t} times a fixed spatial
        // profile, so one lifted solve carries it exactly in time. The
        // temperature march step is far below the spatial error at every
        // rung used here.
        LiftedFields::build_from_terms(
            &assembly,
            vec![DisplacementTermSpec {
                time: TimeFactor::Exp { rate: -1.0 },
                boundary: None,
                force: Some(Box::new(c_force_spatial)),
            }],
            &ScalarData::zero(),
            variant.lifting_heat_coefficient(),
            2.5e-4,
            t_end,
        )?
    } else {
        LiftedFields::zero(t_end)
    };
    let system = System::new(
        &assembly,
        &basis,
        &lifted,
        law.clone(),
        variant,
        Truncation::new(1e9)?,
        VectorData::zero(),
        ScalarData::zero(),
    )?;
    let system = if coupled {
        let law_h = law.clone();
        let law_f = law;
        system.with_mms_sources(MmsSources {
            heat: Box::new(move |x, t| c_heat_source(&law_h, x, t)),
            flow: Box::new(move |x, t| c_flow_source(&law_f, x, t)),
        })
    } else {
        system.with_mms_sources(MmsSources {
            heat: Box::new(h_source),
            flow: Box::new(|_, _| SymTensor::ZERO),
        })
    };
    let theta0 = if coupled {
        ThetaInit::CosineProduct {
            freq: [1, 1, 0],
            amplitude: 1.0,
        }
    } else {
        ThetaInit::CosineProduct {
            freq: [1, 0, 0],
            amplitude: 1.0,
        }
    };
    let y0 = system.initial_state(&theta0, &PlasticInit::Zero)?;
    let times = vec![0.0, 0.5 * t_end, t_end];
    let config = IntegratorSection {
        method: IntegratorMethod::Adaptive,
        rel_tol: tol,
        abs_tol: tol * 1e-2,
        t_end,
        samples: 3,
        fixed_step: 1e-3,
    };
    let trajectory = system.integrate(&y0, &times, &config)?;
    let state = system.state_at(&trajectory, 2);
    let fields = system.reconstruct(&state);

    let w = assembly.qp_weight();
    let theta_qp = assembly.scalar_at_qp(&fields.theta_nodal);
    let mut theta_acc = 0.0;
    for (q, x) in assembly.qp_coords().iter().enumerate() {
        let exact = if coupled {
            c_theta(*x, t_end)
        } else {
            h_theta(*x, t_end)
        };
        let diff = theta_qp[q] - exact;
        theta_acc += diff * diff;
    }
    let theta_error = (w * theta_acc).sqrt();

    let mut u_error = 0.0;
    if coupled {
        let u_qp = assembly.vector_at_qp_full(&fields.u_full);
        let mut acc = 0.0;
        for (q, x) in assembly.qp_coords().iter().enumerate() {
            let exact = c_u(*x, t_end);
            for dcomp in 0..3 {
                let diff = u_qp[q][dcomp] - exact[dcomp];
                acc += diff * diff;
            }
        }
        u_error = (w * acc).sqrt();
    }
    Ok(RungResult {
        theta_error,
        u_error,
    })
}

fn run_case(label: &str, coupled: bool, cells: &[usize], t_end: f64, tol: f64) -> Result<MmsReport> {
    if cells.len() < 2 {
        return Err(Error::InvalidScenario(
            "a convergence study needs at least two resolutions".into(),
        ));
    }
    let mut rungs = Vec::with_capacity(cells.len());
    for &n in cells {
        let r = run_rung(n, coupled, t_end, tol)?;
        rungs.push(MmsRung {
            cells: n,
            h: 1.0 / n as f64,
            theta_error: r.theta_error,
            u_error: r.u_error,
        });
    }
    let hs: Vec<f64> = rungs.iter().map(|r| r.h).collect();
    let te: Vec<f64> = rungs.iter().map(|r| r.theta_error).collect();
    let theta_rate = least_squares_slope(&hs, &te);
    let u_rate = if coupled {
        let ue: Vec<f64> = rungs.iter().map(|r| r.u_error).collect();
        Some(least_squares_slope(&hs, &ue))
    } else {
        None
    };
    Ok(MmsReport {
        label: label.to_string(),
        rungs,
        theta_rate,
        u_rate,
    })
}

/// Heat-only study over the given mesh ladder.
pub fn heat_case(cells: &[usize], t_end: f64, tol: f64) -> Result<MmsReport> {
    run_case("heat", false, cells, t_end, tol)
}

/// Fully coupled study over the given mesh ladder.
pub fn coupled_case(cells: &[usize], t_end: f64, tol: f64) -> Result<MmsReport> {
    run_case("coupled", true, cells, t_end, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Central finite difference of a scalar function of x.
    fn fd_partial(f: &dyn Fn([f64; 3]) -> f64, x: [f64; 3], i: usize, h: f64) -> f64 {
        let mut xp = x;
        let mut xm = x;
        xp[i] += h;
        xm[i] -= h;
        (f(xp) - f(xm)) / (2.0 * h)
    }

    fn interior_points(seed: u64, count: usize) -> Vec<[f64; 3]> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                [
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.1..0.9),
                ]
            })
            .collect()
    }

    #[test]
    fn manufactured_force_is_minus_divergence_of_stress() {
        let t: f64 = 0.37;
        for x in interior_points(1, 12) {
            let f = c_force_spatial(x);
            let et = (-t).exp();
            for i in 0..3 {
                // [div T]_i = Σ_j ∂_j T_ij by finite differences.
                let mut div = 0.0;
                for j in 0..3 {
                    let comp = move |y: [f64; 3]| {
                        let s = c_stress(y, t);
                        match (i, j) {
                            (0, 0) => s.xx,
                            (1, 1) => s.yy,
                            (2, 2) => s.zz,
                            (1, 2) | (2, 1) => s.yz,
                            (0, 2) | (2, 0) => s.xz,
                            _ => s.xy,
                        }
                    };
                    div += fd_partial(&comp, x, j, 1e-5);
                }
                let err = (f[i] * et + div).abs();
                assert!(err <= 2e-5, "component {i} at {x:?}: residual {err:.3e}");
            }
        }
    }

    #[test]
    fn manufactured_heat_source_closes_the_heat_equation() {
        let law = ConstitutiveLaw::new(2.0, 1.0, 1.0).unwrap();
        let t = 0.21;
        for x in interior_points(2, 12) {
            // θ_t − Δθ + α div u_t − T^d:G − S_heat = 0, with Δθ by finite
            // differences and the rest analytic.
            let theta_t = -c_theta(x, t);
            let mut lap = 0.0;
            for i in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += 1e-4;
                xm[i] -= 1e-4;
                lap += (c_theta(xp, t) - 2.0 * c_theta(x, t) + c_theta(xm, t)) / 1e-8;
            }
            let coupling = ALPHA * (-c_div_u(x, t));
            let td = c_stress(x, t).deviatoric();
            let g = law.eval(c_theta(x, t), &td);
            let residual =
                theta_t - lap + coupling - td.dot(&g) - c_heat_source(&law, x, t);
            assert!(residual.abs() <= 1e-5, "residual {residual:.3e} at {x:?}");
        }
    }

    #[test]
    fn manufactured_strain_matches_displacement_gradient() {
        let t = 0.5;
        for x in interior_points(3, 8) {
            let eps = c_strain(x, t);
            let mut fd = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    fd[i][j] = fd_partial(&move |y| c_u(y, t)[i], x, j, 1e-5);
                }
            }
            let sym = SymTensor::new(
                fd[0][0],
                fd[1][1],
                fd[2][2],
                0.5 * (fd[1][2] + fd[2][1]),
                0.5 * (fd[0][2] + fd[2][0]),
                0.5 * (fd[0][1] + fd[1][0]),
            );
            assert!((eps - sym).norm() <= 1e-8, "strain mismatch at {x:?}");
            let dv = c_div_u(x, t);
            assert!((eps.trace() - dv).abs() <= 1e-12);
        }
    }

    #[test]
    fn manufactured_fields_respect_homogeneous_boundary_data() {
        // u* vanishes on every face; ∂θ*/∂n vanishes on every face.
        for &(face, coord) in &[(0usize, 0.0f64), (0, 1.0), (1, 0.0), (1, 1.0), (2, 0.0), (2, 1.0)]
        {
            for p in interior_points(4 + face as u64, 4) {
                let mut x = p;
                x[face] = coord;
                let u = c_u(x, 0.3);
                assert!(u.iter().all(|v| v.abs() <= 1e-13), "u* nonzero on face");
                let dn = fd_partial(&|y| c_theta(y, 0.3), x, face, 1e-6);
                assert!(dn.abs() <= 1e-5, "θ* flux {dn:.3e} on face {face}");
                let dnh = fd_partial(&|y| h_theta(y, 0.3), x, face, 1e-6);
                assert!(dnh.abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn heat_case_converges_at_second_order_on_a_short_ladder() {
        let report = heat_case(&[2, 4], 0.25, 1e-7).unwrap();
        assert!(report.rungs[1].theta_error < report.rungs[0].theta_error);
        assert!(
            report.theta_rate >= 1.5,
            "θ rate {:.2} on {:?}",
            report.theta_rate,
            report
                .rungs
                .iter()
                .map(|r| r.theta_error)
                .collect::<Vec<_>>()
        );
        assert!(report.u_rate.is_none());
    }

    #[test]
    fn coupled_case_converges_in_both_fields_on_a_short_ladder() {
        let report = coupled_case(&[2, 4], 0.25, 1e-7).unwrap();
        assert!(report.rungs[1].theta_error < report.rungs[0].theta_error);
        assert!(report.rungs[1].u_error < report.rungs[0].u_error);
        assert!(
            report.theta_rate >= 1.5,
            "θ rate {:.2}",
            report.theta_rate
        );
        let u_rate = report.u_rate.unwrap();
        assert!(u_rate >= 1.5, "u rate {u_rate:.2}");
    }

    #[test]
    fn slope_fit_recovers_an_exact_power_law() {
        let hs = [0.5, 0.25, 0.125];
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        let s = least_squares_slope(&hs, &errs);
        assert!((s - 2.0).abs() <= 1e-12);
    }
}
