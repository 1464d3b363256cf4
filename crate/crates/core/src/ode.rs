//! Time integrators for the coefficient ODE system.
//!
//! Two methods, chosen by the scenario:
//!
//! - An adaptive embedded Runge-Kutta pair (Dormand-Prince 5(4)): fifth-order
//!   propagation with a fourth-order error estimate, FSAL, PI-free step
//!   control with the usual safety factor. Steps are clipped so every
//!   requested sample time is hit exactly; no interpolation is involved, so
//!   sampled states are genuine solution states.
//! - Classical fixed-step RK4 for convergence studies and for experiments
//!   that need bitwise-matched step sequences between runs.
//!
//! Right-hand sides report failures through `Result`; non-finite stage
//! values cause step rejection and, if persistent, a step-size-underflow
//! error that records how far the integration got.

use crate::{Error, Result};
use nalgebra::DVector;

/// Settings for the embedded-pair integrator.
#[derive(Debug, Clone)]
pub struct AdaptiveSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Smallest step before the integrator gives up (absolute time units).
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-9,
            min_step: 1e-13,
            max_step: f64::INFINITY,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights (the last tableau row: FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Fourth-order (error-estimate) weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const SHRINK_LIMIT: f64 = 0.2;
const GROW_LIMIT: f64 = 5.0;
const MAX_STEPS: usize = 50_000_000;

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::Integration(
            "need at least two sample times (start and end)".into(),
        ));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Integration(
                "sample times must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// Scaled RMS error norm; returns infinity for non-finite entries so the
/// step gets rejected.
fn error_norm(err: &DVector<f64>, y: &DVector<f64>, y_new: &DVector<f64>, s: &AdaptiveSettings) -> f64 {
    let n = err.len().max(1);
    let mut acc = 0.0;
    for i in 0..err.len() {
        let scale = s.abs_tol + s.rel_tol * y[i].abs().max(y_new[i].abs());
        let e = err[i] / scale;
        if !e.is_finite() {
            return f64::INFINITY;
        }
        acc += e * e;
    }
    (acc / n as f64).sqrt()
}

/// Integrate with the adaptive pair, returning the state at each requested
/// sample time (the first entry is the initial state).
pub fn integrate_adaptive<F>(
    mut f: F,
    y0: &DVector<f64>,
    times: &[f64],
    settings: &AdaptiveSettings,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>) -> Result<()>,
{
    check_times(times)?;
    let dim = y0.len();
    let span = times[times.len() - 1] - times[0];
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.clone());

    let mut t = times[0];
    let mut y = y0.clone();
    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(dim)).collect();
    let mut stage = DVector::zeros(dim);
    let mut y_new = DVector::zeros(dim);
    let mut err = DVector::zeros(dim);

    // First-stage derivative; reused across steps (FSAL).
    let mut k0 = DVector::zeros(dim);
    f(t, &y, &mut k0)?;
    k[0] = k0;

    // Initial step heuristic: conservative fraction of the span, moderated
    // by the derivative magnitude.
    let rate = k[0].norm();
    let mut h = (0.01 * (1.0 + y.norm()) / (1.0 + rate))
        .min(span / 100.0)
        .min(settings.max_step);

    let mut next_sample = 1;
    let mut steps = 0usize;
    while next_sample < times.len() {
        if steps >= MAX_STEPS {
            return Err(Error::Integration(format!(
                "step budget exhausted at t = {t:.6e}"
            )));
        }
        steps += 1;
        let target = times[next_sample];
        let mut h_try = h.min(settings.max_step);
        let mut hit_sample = false;
        if t + h_try >= target - 1e-14 * span {
            h_try = target - t;
            hit_sample = true;
        }
        if h_try < settings.min_step {
            return Err(Error::Integration(format!(
                "step size underflow ({h_try:.3e}) at t = {t:.6e}; |y| = {:.3e}",
                y.norm()
            )));
        }

        // Stages 2..7 (stage 1 is the stored FSAL derivative).
        let mut failed = false;
        for s in 1..7 {
            stage.copy_from(&y);
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    stage.axpy(h_try * a, kj, 1.0);
                }
            }
            let mut ks = std::mem::replace(&mut k[s], DVector::zeros(0));
            if ks.len() != dim {
                ks = DVector::zeros(dim);
            }
            let r = f(t + C[s] * h_try, &stage, &mut ks);
            k[s] = ks;
            if r.is_err() {
                failed = true;
                break;
            }
        }
        if failed {
            // Treat a failed evaluation like an oversized step.
            h = (h_try * SHRINK_LIMIT).max(settings.min_step * 0.5);
            if h_try <= settings.min_step * 1.01 {
                return Err(Error::Integration(format!(
                    "right-hand side failed at minimal step, t = {t:.6e}"
                )));
            }
            continue;
        }

        y_new.copy_from(&y);
        err.fill(0.0);
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                y_new.axpy(h_try * B5[j], kj, 1.0);
            }
            let db = B5[j] - B4[j];
            if db != 0.0 {
                err.axpy(h_try * db, kj, 1.0);
            }
        }

        let enorm = error_norm(&err, &y, &y_new, settings);
        if enorm <= 1.0 {
            // Accept.
            t += h_try;
            std::mem::swap(&mut y, &mut y_new);
            let last = k[6].clone();
            k[0] = last;
            if hit_sample {
                out.push(y.clone());
                next_sample += 1;
            }
            let grow = if enorm == 0.0 {
                GROW_LIMIT
            } else {
                (SAFETY * enorm.powf(-0.2)).clamp(SHRINK_LIMIT, GROW_LIMIT)
            };
            h = (h_try * grow).min(settings.max_step);
        } else {
            let shrink = (SAFETY * enorm.powf(-0.2)).clamp(SHRINK_LIMIT, 1.0);
            h = h_try * shrink;
            if h < settings.min_step {
                return Err(Error::Integration(format!(
                    "step size underflow after rejection at t = {t:.6e}; |y| = {:.3e}",
                    y.norm()
                )));
            }
        }
    }
    Ok(out)
}

/// Fixed-step classical RK4: each sample interval is subdivided uniformly
/// into steps no longer than `step`. Deterministic step sequence for a fixed
/// (times, step) pair.
pub fn integrate_rk4<F>(
    mut f: F,
    y0: &DVector<f64>,
    times: &[f64],
    step: f64,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>) -> Result<()>,
{
    check_times(times)?;
    if !(step > 0.0) {
        return Err(Error::Integration("RK4 step must be positive".into()));
    }
    let dim = y0.len();
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.clone());
    let mut y = y0.clone();
    let mut k1 = DVector::zeros(dim);
    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut stage = DVector::zeros(dim);
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        let mut t = t0;
        for i in 0..n {
            f(t, &y, &mut k1)?;
            stage.copy_from(&y);
            stage.axpy(0.5 * h, &k1, 1.0);
            f(t + 0.5 * h, &stage, &mut k2)?;
            stage.copy_from(&y);
            stage.axpy(0.5 * h, &k2, 1.0);
            f(t + 0.5 * h, &stage, &mut k3)?;
            stage.copy_from(&y);
            stage.axpy(h, &k3, 1.0);
            f(t + h, &stage, &mut k4)?;
            y.axpy(h / 6.0, &k1, 1.0);
            y.axpy(h / 3.0, &k2, 1.0);
            y.axpy(h / 3.0, &k3, 1.0);
            y.axpy(h / 6.0, &k4, 1.0);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration(format!(
                    "non-finite state in RK4 at t = {:.6e}",
                    t + h
                )));
            }
            t = t0 + (t1 - t0) * (i + 1) as f64 / n as f64;
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn uniform_times(t_end: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn zero_rhs_keeps_state_constant() {
        let y0 = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let times = uniform_times(1.0, 11);
        let out = integrate_adaptive(
            |_, _, dy: &mut DVector<f64>| {
                dy.fill(0.0);
                Ok(())
            },
            &y0,
            &times,
            &AdaptiveSettings::default(),
        )
        .unwrap();
        for y in &out {
            assert_eq!(y, &y0);
        }
    }

    #[test]
    fn adaptive_matches_scalar_exponential() {
        let y0 = DVector::from_vec(vec![1.0]);
        let times = uniform_times(2.0, 21);
        let out = integrate_adaptive(
            |_, y, dy: &mut DVector<f64>| {
                dy[0] = -y[0];
                Ok(())
            },
            &y0,
            &times,
            &AdaptiveSettings {
                rel_tol: 1e-10,
                abs_tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        for (y, &t) in out.iter().zip(&times) {
            let exact = (-t).exp();
            assert!(
                (y[0] - exact).abs() <= 1e-8,
                "t = {t}: {} vs {exact}",
                y[0]
            );
        }
    }

    /// Matrix exponential by scaling and squaring with a Taylor series, as
    /// an independent oracle for linear systems.
    fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let norm = a.amax();
        let s = (norm.log2().ceil().max(0.0) as i32 + 4) as u32;
        let scaled = a / 2f64.powi(s as i32);
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn adaptive_matches_matrix_exponential() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 0.4, 0.0, 0.1, //
                0.4, -2.0, 0.3, 0.0, //
                0.0, 0.3, -0.5, 0.2, //
                0.1, 0.0, 0.2, -1.5,
            ],
        );
        let y0 = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        let times = vec![0.0, 1.0];
        let out = integrate_adaptive(
            |_, y, dy: &mut DVector<f64>| {
                dy.copy_from(&(&a * y));
                Ok(())
            },
            &y0,
            &times,
            &AdaptiveSettings {
                rel_tol: 1e-11,
                abs_tol: 1e-13,
                ..Default::default()
            },
        )
        .unwrap();
        let exact = expm(&a) * &y0;
        let err = (&out[1] - &exact).amax();
        assert!(err <= 1e-8, "matrix exponential mismatch {err:.3e}");
    }

    #[test]
    fn rk4_matches_matrix_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.1]);
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let times = vec![0.0, 2.0];
        let out = integrate_rk4(
            |_, y, dy: &mut DVector<f64>| {
                dy.copy_from(&(&a * y));
                Ok(())
            },
            &y0,
            &times,
            1e-3,
        )
        .unwrap();
        let exact = expm(&(a * 2.0)) * &y0;
        assert!((&out[1] - exact).amax() <= 1e-9);
    }

    #[test]
    fn rk4_shows_fourth_order_self_convergence() {
        // Nonlinear scalar problem y' = y·sin(t): halving the step should
        // shrink the error by about 2⁴.
        let y0 = DVector::from_vec(vec![1.0]);
        let times = vec![0.0, 3.0];
        let exact = (1.0 - 3.0f64.cos()).exp();
        let run = |h: f64| {
            let out = integrate_rk4(
                |t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| {
                    dy[0] = y[0] * t.sin();
                    Ok(())
                },
                &y0,
                &times,
                h,
            )
            .unwrap();
            (out[1][0] - exact).abs()
        };
        let e1 = run(0.02);
        let e2 = run(0.01);
        let ratio = e1 / e2;
        assert!(
            (10.0..24.0).contains(&ratio),
            "order-4 ratio off: e1 {e1:.3e}, e2 {e2:.3e}, ratio {ratio:.1}"
        );
    }

    #[test]
    fn samples_are_hit_exactly() {
        // y' = 1 integrated exactly by any RK method: y(t_i) = t_i shows the
        // step controller lands on sample times rather than near them.
        let y0 = DVector::from_vec(vec![0.0]);
        let times = uniform_times(1.0, 7);
        let out = integrate_adaptive(
            |_, _, dy: &mut DVector<f64>| {
                dy[0] = 1.0;
                Ok(())
            },
            &y0,
            &times,
            &AdaptiveSettings::default(),
        )
        .unwrap();
        for (y, &t) in out.iter().zip(&times) {
            assert!((y[0] - t).abs() <= 1e-12, "sample at {t} gave {}", y[0]);
        }
    }

    #[test]
    fn blowup_reports_underflow() {
        // y' = y² from y(0) = 1 blows up at t = 1; integrating past it must
        // fail with a step-size underflow, not hang or return garbage.
        let y0 = DVector::from_vec(vec![1.0]);
        let times = vec![0.0, 1.5];
        let err = integrate_adaptive(
            |_, y, dy: &mut DVector<f64>| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            &y0,
            &times,
            &AdaptiveSettings::default(),
        )
        .unwrap_err();
        match err {
            Error::Integration(msg) => assert!(msg.contains("underflow"), "msg: {msg}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn invalid_times_are_rejected() {
        let y0 = DVector::from_vec(vec![0.0]);
        let f = |_: f64, _: &DVector<f64>, dy: &mut DVector<f64>| {
            dy.fill(0.0);
            Ok(())
        };
        assert!(integrate_adaptive(f, &y0, &[0.0], &AdaptiveSettings::default()).is_err());
        assert!(integrate_adaptive(f, &y0, &[0.0, 0.0], &AdaptiveSettings::default()).is_err());
        assert!(integrate_rk4(f, &y0, &[1.0, 0.5], 0.1).is_err());
    }

    #[test]
    fn adaptive_is_deterministic() {
        let y0 = DVector::from_vec(vec![1.0, 0.3]);
        let times = uniform_times(1.0, 5);
        let f = |t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| {
            dy[0] = -y[0] + (3.0 * t).sin() * y[1];
            dy[1] = -0.5 * y[1] + y[0] * y[0];
            Ok(())
        };
        let a = integrate_adaptive(f, &y0, &times, &AdaptiveSettings::default()).unwrap();
        let b = integrate_adaptive(f, &y0, &times, &AdaptiveSettings::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
    }
}
