//! Scenario configuration: a single TOML file describing mesh, material,
//! coupling variant, Galerkin levels, data, integrator policy, and outputs.
//!
//! Parsing is strict about physics preconditions (`validate`): the flow
//! exponent must satisfy p ≥ 2, the expansion coefficient must be positive,
//! and the Galerkin levels and integrator tolerances must be usable. A
//! scenario that parses and validates round-trips through serialization
//! unchanged, which keeps run provenance auditable.

use crate::data::{PlasticInit, ScalarData, ThetaInit, VectorData};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Which thermal-expansion coupling the solver runs.
///
/// - `Symmetric`: constant thermal stress and matching constant heat
///   coupling; the variant with conserved total energy.
/// - `Broken`: pointwise thermal stress in the momentum balance but a
///   constant approximation γ in the heat coupling; energy drifts.
/// - `Nonlinear`: pointwise coefficient in both equations; no existence
///   theory backs this variant, and runs carry a "no theory" flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Symmetric,
    Broken,
    Nonlinear,
}

impl std::str::FromStr for VariantKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(VariantKind::Symmetric),
            "broken" => Ok(VariantKind::Broken),
            "nonlinear" => Ok(VariantKind::Nonlinear),
            other => Err(Error::InvalidScenario(format!(
                "unknown variant '{other}' (expected symmetric | broken | nonlinear)"
            ))),
        }
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VariantKind::Symmetric => "symmetric",
            VariantKind::Broken => "broken",
            VariantKind::Nonlinear => "nonlinear",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSection {
    pub extents: [f64; 3],
    pub cells: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSection {
    /// Lamé parameters of the isotropic elasticity operator.
    pub lambda: f64,
    pub mu: f64,
    /// Flow-rule growth exponent, p ≥ 2.
    pub p: f64,
    #[serde(default = "default_one")]
    pub kappa0: f64,
    #[serde(default = "default_one")]
    pub kappa1: f64,
    /// Thermal expansion constant: the product of the raw expansion
    /// coefficient and the reference temperature θ̄ (the constant named α
    /// after the linearization); must be positive.
    pub alpha: f64,
    #[serde(default)]
    pub theta_reference: f64,
    #[serde(default = "default_one")]
    pub theta_bar: f64,
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSection {
    pub kind: VariantKind,
    /// Heat-coupling constant for the broken variant (approximates the
    /// pointwise α(θ − θ_R) there); ignored by the other variants.
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinSection {
    pub k: usize,
    pub l: usize,
    /// Complement-basis count override; defaults to l.
    #[serde(default)]
    pub l_complement: Option<usize>,
    /// Truncation level applied to the heat source; large values leave it
    /// inactive.
    #[serde(default = "default_k_trunc")]
    pub k_trunc: f64,
}

fn default_k_trunc() -> f64 {
    1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMethod {
    Adaptive,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSection {
    #[serde(default = "default_method")]
    pub method: IntegratorMethod,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    pub t_end: f64,
    /// Number of output samples including both endpoints.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Step length for the fixed RK4 method.
    #[serde(default = "default_fixed_step")]
    pub fixed_step: f64,
}

fn default_method() -> IntegratorMethod {
    IntegratorMethod::Adaptive
}

fn default_tol() -> f64 {
    1e-9
}

fn default_samples() -> usize {
    201
}

fn default_fixed_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftingSection {
    /// Implicit-Euler step of the temperature lifting march.
    #[serde(default = "default_lift_step")]
    pub time_step: f64,
}

fn default_lift_step() -> f64 {
    1e-3
}

impl Default for LiftingSection {
    fn default() -> Self {
        Self {
            time_step: default_lift_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataSection {
    /// Volume force f.
    #[serde(default)]
    pub f: VectorData,
    /// Dirichlet boundary displacement g.
    #[serde(default)]
    pub g: VectorData,
    /// Neumann heat flux g_θ.
    #[serde(default)]
    pub g_theta: ScalarData,
    #[serde(default)]
    pub theta0: ThetaInit,
    #[serde(default)]
    pub epsp0: PlasticInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub directory: String,
    /// Times at which quadrature-point field dumps are written; values are
    /// snapped to the nearest trajectory sample.
    #[serde(default)]
    pub field_times: Vec<f64>,
}

fn default_out_dir() -> String {
    "out".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_out_dir(),
            field_times: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mesh: MeshSection,
    pub material: MaterialSection,
    pub variant: VariantSection,
    pub galerkin: GalerkinSection,
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub lifting: LiftingSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Parse(format!("scenario parse: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(format!("scenario serialize: {e}")))
    }

    /// Check every physics and solver precondition; failures map to the
    /// CLI's validation exit code.
    pub fn validate(&self) -> Result<()> {
        let m = &self.mesh;
        if m.extents.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidScenario("mesh extents must be positive".into()));
        }
        if m.cells.iter().any(|&c| c < 2) {
            return Err(Error::InvalidScenario(
                "mesh needs at least 2 cells per axis (otherwise no interior node exists)".into(),
            ));
        }
        let mat = &self.material;
        if !(mat.p >= 2.0) {
            return Err(Error::InvalidScenario(format!(
                "flow exponent p = {} invalid; the monotonicity/coercivity assumption requires p ≥ 2",
                mat.p
            )));
        }
        if !(mat.alpha > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "thermal expansion constant alpha = {} must be positive",
                mat.alpha
            )));
        }
        if !(mat.theta_bar > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "reference temperature theta_bar = {} must be positive",
                mat.theta_bar
            )));
        }
        if !(mat.kappa0 > 0.0) || !(mat.kappa1 >= 0.0) {
            return Err(Error::InvalidScenario(
                "kappa0 must be positive and kappa1 nonnegative".into(),
            ));
        }
        if !(mat.mu > 0.0) || !(3.0 * mat.lambda + 2.0 * mat.mu > 0.0) {
            return Err(Error::InvalidScenario(
                "Lamé parameters must give a positive definite elasticity operator".into(),
            ));
        }
        if self.variant.kind == VariantKind::Broken && self.variant.gamma.is_none() {
            return Err(Error::InvalidScenario(
                "broken variant requires the heat-coupling constant variant.gamma".into(),
            ));
        }
        let g = &self.galerkin;
        if g.k == 0 || g.l == 0 {
            return Err(Error::InvalidScenario(
                "Galerkin levels k and l must be at least 1".into(),
            ));
        }
        if !(g.k_trunc > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "truncation level k_trunc = {} must be positive",
                g.k_trunc
            )));
        }
        let integ = &self.integrator;
        if !(integ.rel_tol > 0.0) || !(integ.abs_tol > 0.0) {
            return Err(Error::InvalidScenario(
                "integrator tolerances must be positive".into(),
            ));
        }
        if !(integ.t_end > 0.0) {
            return Err(Error::InvalidScenario("t_end must be positive".into()));
        }
        if integ.samples < 2 {
            return Err(Error::InvalidScenario(
                "need at least 2 output samples (start and end)".into(),
            ));
        }
        if !(integ.fixed_step > 0.0) {
            return Err(Error::InvalidScenario("fixed_step must be positive".into()));
        }
        if !(self.lifting.time_step > 0.0) {
            return Err(Error::InvalidScenario(
                "lifting time_step must be positive".into(),
            ));
        }
        for &t in &self.output.field_times {
            if !(0.0..=integ.t_end).contains(&t) {
                return Err(Error::InvalidScenario(format!(
                    "field dump time {t} outside [0, t_end]"
                )));
            }
        }
        Ok(())
    }

    /// Apply command-line overrides, then re-validate.
    #[allow(clippy::too_many_arguments)]
    pub fn apply_overrides(
        &mut self,
        k: Option<usize>,
        l: Option<usize>,
        k_trunc: Option<f64>,
        variant: Option<VariantKind>,
        tol: Option<f64>,
        seed: Option<u64>,
    ) -> Result<()> {
        if let Some(k) = k {
            self.galerkin.k = k;
        }
        if let Some(l) = l {
            self.galerkin.l = l;
        }
        if let Some(kt) = k_trunc {
            self.galerkin.k_trunc = kt;
        }
        if let Some(v) = variant {
            self.variant.kind = v;
        }
        if let Some(tol) = tol {
            self.integrator.rel_tol = tol;
            self.integrator.abs_tol = tol;
        }
        if let Some(seed) = seed {
            if let PlasticInit::RandomTraceless { amplitude, .. } = self.data.epsp0 {
                self.data.epsp0 = PlasticInit::RandomTraceless { amplitude, seed };
            }
        }
        self.validate()
    }

    /// Uniform sample times including both endpoints.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.integrator.samples;
        let t_end = self.integrator.t_end;
        (0..n)
            .map(|i| t_end * i as f64 / (n - 1) as f64)
            .collect()
    }
}
