//! Desk-scale spectral-Galerkin simulator for quasi-static thermo-visco-elastic
//! solids with homogeneous thermal expansion.
//!
//! The governing system couples quasi-static momentum balance, a Norton-Hoff-type
//! flow rule for the visco-elastic strain, and a heat equation with a
//! thermo-mechanical coupling term:
//!
//! ```text
//!   -div σ = f,          σ = T - (thermal stress)·I,   T = D(ε(u) - ε^p),
//!   ε^p_t  = G(θ, T^d),
//!   θ_t - Δθ + (coupling)·div u_t = T^d : G(θ, T^d),
//! ```
//!
//! with Dirichlet data `u = g`, Neumann flux `∂θ/∂n = g_θ`, and initial data
//! `θ₀`, `ε^p₀`. Three closures of the thermal stress / heat coupling pair are
//! supported (see [`solver::CouplingVariant`]): the fully nonlinear pointwise
//! form, a broken linearization that destroys the energy symmetry, and the
//! symmetric linearization that conserves total energy.
//!
//! The discretization is spectral-Galerkin on top of a uniform Q1 hexahedral
//! grid: displacement modes are eigenfunctions of the elasticity operator,
//! temperature modes are Neumann-Laplacian eigenfunctions, and the part of
//! ε^p not reachable as a symmetric gradient lives in an explicitly built
//! D-orthonormal complement basis. The resulting coefficient ODE system is
//! integrated by an embedded Dormand-Prince 5(4) pair or fixed-step RK4.
//!
//! Module map:
//! - [`tensor`]: symmetric 3×3 tensors and the elasticity operator D.
//! - [`constitutive`]: flow laws G, admissibility sampling, truncation.
//! - [`mesh`], [`assembly`]: box grids, Q1 FE matrices, quadrature.
//! - [`basis`]: the three Galerkin bases and the divergence coupling matrix.
//! - [`lifting`]: homogenization of boundary data (auxiliary problems).
//! - [`ode`]: the time integrators.
//! - [`solver`]: the coefficient ODE system, reconstruction, recovery.
//! - [`energy`]: energy/bound monitors, weak residuals, variant comparison.
//! - [`mms`]: manufactured-solution verification.
//! - [`scenario`], [`data`]: configuration and analytic data descriptors.
//! - [`output`]: CSV / binary / report writers.

pub mod assembly;
pub mod basis;
pub mod constitutive;
pub mod data;
pub mod energy;
pub mod lifting;
pub mod mesh;
pub mod mms;
pub mod ode;
pub mod output;
pub mod scenario;
pub mod solver;
pub mod tensor;

/// Unified error type for the library.
///
/// Validation errors (`InvalidScenario`, `InvalidMaterial`, `Parse`) indicate
/// bad user input and map to CLI exit code 2; the remaining variants are
/// runtime failures and map to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("constitutive law rejected input: {0}")]
    Constitutive(String),
    #[error("basis construction failed: {0}")]
    Basis(String),
    #[error("malformed data file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by invalid user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidMaterial(_) | Error::InvalidScenario(_) | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
