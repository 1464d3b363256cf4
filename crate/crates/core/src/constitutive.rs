//! Norton-Hoff-type flow laws, admissibility sampling, and truncation.
//!
//! The flow rule ε^p_t = G(θ, T^d) is admissible when, for some p ≥ 2 and
//! constants β > 0, C independent of θ:
//!
//! (a) monotonicity: (G(θ,T₁) − G(θ,T₂)) : (T₁ − T₂) ≥ 0,
//! (b) growth:       |G(θ,T)| ≤ C (1 + |T|)^{p−1},
//! (c) coercivity:   G(θ,T) : T ≥ β |T|^p.
//!
//! The built-in family is G = κ(θ)|T^d|^{p−2} T^d with
//! κ(θ) = κ₀ + κ₁/(1 + θ²), so κ ∈ (κ₀, κ₀ + κ₁] is bounded above and away
//! from zero and the constants β = κ₀, C = κ₀ + κ₁ are uniform in
//! temperature. Temperature enters the displacement problem only through this
//! modulation. `check_assumption` is a sampler, not a prover: it can refute
//! admissibility of a user-supplied law but only gather evidence for it.

use crate::tensor::SymTensor;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A flow law usable by the solver and the admissibility sampler.
pub trait FlowLaw {
    /// Evaluate G(θ, T^d). The input is assumed traceless.
    fn eval(&self, theta: f64, td: &SymTensor) -> SymTensor;
    /// Growth exponent p in assumption (b)/(c).
    fn exponent(&self) -> f64;
}

/// The built-in Norton-Hoff-type law G = κ(θ)|T^d|^{p−2}T^d.
#[derive(Debug, Clone)]
pub struct ConstitutiveLaw {
    p: f64,
    kappa0: f64,
    kappa1: f64,
}

impl ConstitutiveLaw {
    /// Build a law with exponent `p` and modulation κ(θ) = κ₀ + κ₁/(1+θ²).
    ///
    /// Requires p ≥ 2 (the admissibility range), κ₀ > 0 (coercivity) and
    /// κ₁ ≥ 0 (boundedness).
    pub fn new(p: f64, kappa0: f64, kappa1: f64) -> Result<Self> {
        if !(p >= 2.0) {
            return Err(Error::InvalidMaterial(format!(
                "flow exponent p = {p} is inadmissible; the monotone framework needs p >= 2"
            )));
        }
        if !(kappa0 > 0.0) || !(kappa1 >= 0.0) {
            return Err(Error::InvalidMaterial(format!(
                "kappa parameters ({kappa0}, {kappa1}) must satisfy kappa0 > 0, kappa1 >= 0"
            )));
        }
        Ok(Self { p, kappa0, kappa1 })
    }

    /// Standard parameters: p given, κ₀ = κ₁ = 1, so κ ∈ (1, 2].
    pub fn standard(p: f64) -> Result<Self> {
        Self::new(p, 1.0, 1.0)
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    /// Temperature modulation κ(θ).
    pub fn kappa(&self, theta: f64) -> f64 {
        self.kappa0 + self.kappa1 / (1.0 + theta * theta)
    }

    /// Lower coercivity constant β = inf κ.
    pub fn beta(&self) -> f64 {
        self.kappa0
    }

    /// Upper growth constant C = sup κ.
    pub fn growth_constant(&self) -> f64 {
        self.kappa0 + self.kappa1
    }

    /// True when κ is constant in θ (the flow decouples from temperature).
    pub fn is_isothermal(&self) -> bool {
        self.kappa1 == 0.0
    }

    /// Evaluate with a tracelessness check on the input, rejecting tensors
    /// whose trace exceeds 1e-10·(1 + |T^d|).
    pub fn eval_checked(&self, theta: f64, td: &SymTensor) -> Result<SymTensor> {
        let tol = 1e-10 * (1.0 + td.norm());
        if td.trace().abs() > tol {
            return Err(Error::Constitutive(format!(
                "flow law input has trace {:.3e}, beyond tolerance {:.3e}",
                td.trace(),
                tol
            )));
        }
        Ok(FlowLaw::eval(self, theta, td))
    }
}

impl FlowLaw for ConstitutiveLaw {
    fn eval(&self, theta: f64, td: &SymTensor) -> SymTensor {
        let n = td.norm();
        // 0^0 = 1 makes the p = 2 case linear with no branch; for p > 2 the
        // prefactor vanishes at T^d = 0 as required by coercivity.
        let magnitude = if self.p == 2.0 { 1.0 } else { n.powf(self.p - 2.0) };
        td.scale(self.kappa(theta) * magnitude)
    }

    fn exponent(&self) -> f64 {
        self.p
    }
}

/// Outcome of sampling a flow law against the admissibility conditions.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    /// Number of (θ, T₁, T₂) triples drawn.
    pub samples: usize,
    /// Monotonicity violations beyond the rounding band.
    pub violations: usize,
    /// Most negative normalized monotonicity product observed.
    pub worst_monotonicity: f64,
    /// Witness (θ, T₁, T₂) of the worst monotonicity product.
    pub monotonicity_witness: (f64, SymTensor, SymTensor),
    /// inf over nonzero samples of G(θ,T):T / |T|^p.
    pub beta_estimate: f64,
    /// Witness (θ, T) attaining the β estimate.
    pub beta_witness: (f64, SymTensor),
    /// sup over samples of |G(θ,T)| / (1+|T|)^{p-1}.
    pub growth_estimate: f64,
    /// Witness (θ, T) attaining the growth estimate.
    pub growth_witness: (f64, SymTensor),
}

impl AssumptionReport {
    /// A law is declared admissible when no monotonicity violation was seen
    /// and the coercivity estimate is strictly positive.
    pub fn admissible(&self) -> bool {
        self.violations == 0 && self.beta_estimate > 0.0
    }

    /// Flat `key = value` text form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t6 = |t: &SymTensor| {
            format!(
                "[{:.6e}, {:.6e}, {:.6e}, {:.6e}, {:.6e}, {:.6e}]",
                t.xx, t.yy, t.zz, t.yz, t.xz, t.xy
            )
        };
        s.push_str(&format!("samples = {}\n", self.samples));
        s.push_str(&format!("monotonicity_violations = {}\n", self.violations));
        s.push_str(&format!("worst_monotonicity = {:.17e}\n", self.worst_monotonicity));
        s.push_str(&format!("beta_estimate = {:.17e}\n", self.beta_estimate));
        s.push_str(&format!("growth_estimate = {:.17e}\n", self.growth_estimate));
        s.push_str(&format!("admissible = {}\n", self.admissible()));
        s.push_str(&format!(
            "monotonicity_witness_theta = {:.6e}\n",
            self.monotonicity_witness.0
        ));
        s.push_str(&format!(
            "monotonicity_witness_t1 = {}\n",
            t6(&self.monotonicity_witness.1)
        ));
        s.push_str(&format!(
            "monotonicity_witness_t2 = {}\n",
            t6(&self.monotonicity_witness.2)
        ));
        s.push_str(&format!("beta_witness_theta = {:.6e}\n", self.beta_witness.0));
        s.push_str(&format!("beta_witness_t = {}\n", t6(&self.beta_witness.1)));
        s.push_str(&format!("growth_witness_theta = {:.6e}\n", self.growth_witness.0));
        s.push_str(&format!("growth_witness_t = {}\n", t6(&self.growth_witness.1)));
        s
    }
}

fn random_deviatoric(rng: &mut ChaCha8Rng, radius: f64) -> SymTensor {
    SymTensor::new(
        rng.gen_range(-radius..radius),
        rng.gen_range(-radius..radius),
        rng.gen_range(-radius..radius),
        rng.gen_range(-radius..radius),
        rng.gen_range(-radius..radius),
        rng.gen_range(-radius..radius),
    )
    .deviatoric()
}

/// Sample a flow law against the admissibility conditions.
///
/// Draws `samples` triples (θ, T₁^d, T₂^d) with θ and tensor entries uniform
/// in ±`radius`, counts monotonicity violations beyond the rounding band
/// −1e-12·(1+|T₁|+|T₂|)^{2p}, and estimates the coercivity and growth
/// constants from the same stream. Deterministic for a fixed seed.
pub fn check_assumption(
    law: &dyn FlowLaw,
    samples: usize,
    radius: f64,
    seed: u64,
) -> AssumptionReport {
    assert!(samples >= 1, "at least one sample is required");
    let p = law.exponent();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut violations = 0_usize;
    let mut worst_monotonicity = f64::INFINITY;
    let mut monotonicity_witness = (0.0, SymTensor::ZERO, SymTensor::ZERO);
    let mut beta_estimate = f64::INFINITY;
    let mut beta_witness = (0.0, SymTensor::ZERO);
    let mut growth_estimate = 0.0_f64;
    let mut growth_witness = (0.0, SymTensor::ZERO);

    for _ in 0..samples {
        let theta = rng.gen_range(-radius..radius);
        let t1 = random_deviatoric(&mut rng, radius);
        let t2 = random_deviatoric(&mut rng, radius);

        let g1 = law.eval(theta, &t1);
        let g2 = law.eval(theta, &t2);

        let contraction = (g1 - g2).dot(&(t1 - t2));
        let band = 1e-12 * (1.0 + t1.norm() + t2.norm()).powf(2.0 * p);
        if contraction < -band {
            violations += 1;
        }
        if contraction < worst_monotonicity {
            worst_monotonicity = contraction;
            monotonicity_witness = (theta, t1, t2);
        }

        for t in [&t1, &t2] {
            let n = t.norm();
            let g = law.eval(theta, t);
            let growth = g.norm() / (1.0 + n).powf(p - 1.0);
            if growth > growth_estimate {
                growth_estimate = growth;
                growth_witness = (theta, *t);
            }
            if n > 1e-12 {
                let coercivity = g.dot(t) / n.powf(p);
                if coercivity < beta_estimate {
                    beta_estimate = coercivity;
                    beta_witness = (theta, *t);
                }
            }
        }
    }

    if !beta_estimate.is_finite() {
        // All samples were degenerate (radius ~ 0); report no evidence.
        beta_estimate = 0.0;
    }

    AssumptionReport {
        samples,
        violations,
        worst_monotonicity,
        monotonicity_witness,
        beta_estimate: beta_estimate.max(0.0),
        beta_witness,
        growth_estimate,
        growth_witness,
    }
}

/// The scalar truncation operator: clamp to [−k, k].
#[derive(Debug, Clone, Copy)]
pub struct Truncation {
    level: f64,
}

impl Truncation {
    pub fn new(level: f64) -> Result<Self> {
        if !(level > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "truncation level must be positive, got {level}"
            )));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn apply(&self, x: f64) -> f64 {
        x.clamp(-self.level, self.level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NegatingLaw;
    impl FlowLaw for NegatingLaw {
        fn eval(&self, _theta: f64, td: &SymTensor) -> SymTensor {
            td.scale(-1.0)
        }
        fn exponent(&self) -> f64 {
            2.0
        }
    }

    struct ZeroLaw;
    impl FlowLaw for ZeroLaw {
        fn eval(&self, _theta: f64, _td: &SymTensor) -> SymTensor {
            SymTensor::ZERO
        }
        fn exponent(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn p2_constant_kappa_is_identity() {
        let law = ConstitutiveLaw::new(2.0, 1.0, 0.0).unwrap();
        let td = SymTensor::new(0.3, -0.1, -0.2, 0.4, -0.5, 0.6).deviatoric();
        for theta in [-3.0, 0.0, 7.5] {
            let g = law.eval_checked(theta, &td).unwrap();
            assert!((g - td).norm() <= 1e-15);
        }
    }

    #[test]
    fn p3_hand_value() {
        // T^d = diag(1,−1,0): |T^d| = √2, G = √2·T^d, G:T^d = 2√2 = |T^d|³.
        let law = ConstitutiveLaw::new(3.0, 1.0, 0.0).unwrap();
        let td = SymTensor::diag(1.0, -1.0, 0.0);
        let g = law.eval_checked(0.0, &td).unwrap();
        let expected = td.scale(std::f64::consts::SQRT_2);
        assert!((g - expected).norm() <= 1e-14);
        assert!((g.dot(&td) - 2.0_f64 * std::f64::consts::SQRT_2).abs() <= 1e-14);
        assert!((g.dot(&td) - td.norm().powi(3)).abs() <= 1e-14);
    }

    #[test]
    fn zero_stress_gives_zero_flow_for_any_exponent() {
        for p in [2.0, 2.5, 3.0, 4.0] {
            let law = ConstitutiveLaw::standard(p).unwrap();
            let g = law.eval_checked(1.7, &SymTensor::ZERO).unwrap();
            assert_eq!(g.norm(), 0.0);
        }
    }

    #[test]
    fn traceless_input_enforced() {
        let law = ConstitutiveLaw::standard(2.0).unwrap();
        let bad = SymTensor::diag(1.0, 1.0, 1.0);
        assert!(law.eval_checked(0.0, &bad).is_err());
    }

    #[test]
    fn output_is_traceless() {
        let law = ConstitutiveLaw::standard(3.0).unwrap();
        let td = SymTensor::new(0.9, -0.4, -0.5, 0.2, 0.1, -0.7).deviatoric();
        let g = law.eval_checked(2.0, &td).unwrap();
        assert!(g.trace().abs() <= 1e-13 * (1.0 + g.norm()));
    }

    #[test]
    fn continuity_in_temperature() {
        let law = ConstitutiveLaw::standard(3.0).unwrap();
        let td = SymTensor::new(0.5, -0.25, -0.25, 0.3, -0.1, 0.2).deviatoric();
        let base = law.eval(1.0, &td);
        let coarse = (law.eval(1.0 + 1e-3, &td) - base).norm();
        let fine = (law.eval(1.0 + 1e-6, &td) - base).norm();
        assert!(fine < coarse);
        assert!(fine <= 1e-5);
    }

    #[test]
    fn invalid_exponent_rejected() {
        assert!(ConstitutiveLaw::standard(1.5).is_err());
        assert!(ConstitutiveLaw::new(2.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn builtin_family_passes_sampler() {
        for p in [2.0, 3.0, 4.0] {
            let law = ConstitutiveLaw::standard(p).unwrap();
            let report = check_assumption(&law, 10_000, 3.0, 42);
            assert_eq!(report.violations, 0, "p = {p}");
            assert!(report.beta_estimate >= 1.0, "p = {p}: {}", report.beta_estimate);
            assert!(report.growth_estimate <= 2.0, "p = {p}: {}", report.growth_estimate);
            assert!(report.admissible());
        }
    }

    #[test]
    fn negating_law_fails_monotonicity() {
        let report = check_assumption(&NegatingLaw, 1000, 2.0, 1);
        assert!(report.violations > 0);
        assert!(!report.admissible());
    }

    #[test]
    fn zero_law_flagged_inadmissible() {
        let report = check_assumption(&ZeroLaw, 1000, 2.0, 1);
        assert_eq!(report.beta_estimate, 0.0);
        assert!(!report.admissible());
    }

    #[test]
    fn sampler_is_deterministic() {
        let law = ConstitutiveLaw::standard(3.0).unwrap();
        let a = check_assumption(&law, 500, 2.0, 99);
        let b = check_assumption(&law, 500, 2.0, 99);
        assert_eq!(a.beta_estimate, b.beta_estimate);
        assert_eq!(a.growth_estimate, b.growth_estimate);
        assert_eq!(a.worst_monotonicity, b.worst_monotonicity);
    }

    #[test]
    fn report_serializes_to_flat_text() {
        let law = ConstitutiveLaw::standard(2.0).unwrap();
        let report = check_assumption(&law, 100, 1.0, 3);
        let text = report.to_text();
        assert!(text.contains("samples = 100"));
        assert!(text.contains("admissible = true"));
    }

    #[test]
    fn truncation_cases() {
        let t = Truncation::new(5.0).unwrap();
        assert_eq!(t.apply(7.0), 5.0);
        assert_eq!(t.apply(-7.0), -5.0);
        assert_eq!(t.apply(3.0), 3.0);
    }

    #[test]
    fn truncation_is_lipschitz_and_idempotent() {
        use rand::{Rng, SeedableRng};
        let t = Truncation::new(2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = rng.gen_range(-10.0..10.0);
            let y = rng.gen_range(-10.0..10.0);
            assert!((t.apply(x) - t.apply(y)).abs() <= (x - y).abs() + 1e-15);
            assert_eq!(t.apply(t.apply(x)), t.apply(x));
        }
    }

    #[test]
    fn invalid_truncation_level_rejected() {
        assert!(Truncation::new(0.0).is_err());
        assert!(Truncation::new(-1.0).is_err());
    }

    #[test]
    fn monotonicity_band_property_large_sample() {
        // 10⁵ triples, normalized product bounded below by the rounding band.
        let law = ConstitutiveLaw::standard(3.0).unwrap();
        let report = check_assumption(&law, 100_000, 3.0, 2024);
        assert_eq!(report.violations, 0);
        let (_, t1, t2) = &report.monotonicity_witness;
        let band = 1e-12 * (1.0 + t1.norm() + t2.norm()).powf(2.0 * 3.0);
        assert!(report.worst_monotonicity >= -band);
    }
}
