//! Symmetric 3×3 tensors and the linear elasticity operator D.
//!
//! Tensors are stored by their six independent entries. The 6-vector (Mandel)
//! representation scales the off-diagonal entries by √2,
//!
//! ```text
//!   A ↦ (A₁₁, A₂₂, A₃₃, √2·A₂₃, √2·A₁₃, √2·A₁₂),
//! ```
//!
//! so the Euclidean inner product of Mandel vectors equals the Frobenius
//! product A:B. Consequently the 6×6 matrix of D in this representation is
//! symmetric positive definite exactly when D is, its eigenvalues are the
//! eigenvalues of D acting on S³, and the matrix square root realizes D^{1/2}
//! with no further scaling bookkeeping.

use crate::{Error, Result};
use nalgebra::{Matrix3, Matrix6, Vector6};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// A symmetric 3×3 real tensor (element of S³).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub yz: f64,
    pub xz: f64,
    pub xy: f64,
}

impl SymTensor {
    pub const ZERO: SymTensor = SymTensor {
        xx: 0.0,
        yy: 0.0,
        zz: 0.0,
        yz: 0.0,
        xz: 0.0,
        xy: 0.0,
    };

    pub fn new(xx: f64, yy: f64, zz: f64, yz: f64, xz: f64, xy: f64) -> Self {
        Self {
            xx,
            yy,
            zz,
            yz,
            xz,
            xy,
        }
    }

    /// The identity tensor I.
    pub fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Self::new(a, b, c, 0.0, 0.0, 0.0)
    }

    /// Symmetric part of an arbitrary 3×3 matrix, ½(M + Mᵀ).
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::new(
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            0.5 * (m[(0, 1)] + m[(1, 0)]),
        )
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, self.xy, self.yy, self.yz, self.xz, self.yz, self.zz,
        )
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    /// Deviatoric (traceless) part, A − (tr A / 3)·I.
    pub fn deviatoric(&self) -> Self {
        let m = self.trace() / 3.0;
        Self::new(self.xx - m, self.yy - m, self.zz - m, self.yz, self.xz, self.xy)
    }

    /// Frobenius product A:B = Σ_{ij} A_{ij} B_{ij}.
    pub fn dot(&self, o: &SymTensor) -> f64 {
        self.xx * o.xx
            + self.yy * o.yy
            + self.zz * o.zz
            + 2.0 * (self.yz * o.yz + self.xz * o.xz + self.xy * o.xy)
    }

    /// Frobenius norm |A|.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Mandel 6-vector; dot products of these equal Frobenius products.
    pub fn to_mandel(&self) -> Vector6<f64> {
        Vector6::new(
            self.xx,
            self.yy,
            self.zz,
            SQRT2 * self.yz,
            SQRT2 * self.xz,
            SQRT2 * self.xy,
        )
    }

    pub fn from_mandel(v: &Vector6<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3] / SQRT2, v[4] / SQRT2, v[5] / SQRT2)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(
            s * self.xx,
            s * self.yy,
            s * self.zz,
            s * self.yz,
            s * self.xz,
            s * self.xy,
        )
    }

    pub fn axpy(&mut self, a: f64, x: &SymTensor) {
        self.xx += a * x.xx;
        self.yy += a * x.yy;
        self.zz += a * x.zz;
        self.yz += a * x.yz;
        self.xz += a * x.xz;
        self.xy += a * x.xy;
    }
}

impl std::ops::Add for SymTensor {
    type Output = SymTensor;
    fn add(self, o: SymTensor) -> SymTensor {
        SymTensor::new(
            self.xx + o.xx,
            self.yy + o.yy,
            self.zz + o.zz,
            self.yz + o.yz,
            self.xz + o.xz,
            self.xy + o.xy,
        )
    }
}

impl std::ops::Sub for SymTensor {
    type Output = SymTensor;
    fn sub(self, o: SymTensor) -> SymTensor {
        SymTensor::new(
            self.xx - o.xx,
            self.yy - o.yy,
            self.zz - o.zz,
            self.yz - o.yz,
            self.xz - o.xz,
            self.xy - o.xy,
        )
    }
}

/// 6×6 symmetric matrix acting on Mandel vectors; the matrix form of a
/// four-index tensor on S³.
#[derive(Debug, Clone, PartialEq)]
pub struct VoigtMatrix(pub Matrix6<f64>);

impl VoigtMatrix {
    pub fn identity() -> Self {
        VoigtMatrix(Matrix6::identity())
    }

    /// Apply to a tensor through the Mandel representation.
    pub fn apply(&self, a: &SymTensor) -> SymTensor {
        SymTensor::from_mandel(&(self.0 * a.to_mandel()))
    }
}

/// The constant elasticity operator D = {d_{ijkl}} with the index symmetries
/// d_{ijkl} = d_{jikl} = d_{ijlk} = d_{klij} and positive definiteness on S³.
///
/// Construction validates positive definiteness and records the coercivity
/// constant c_D (smallest eigenvalue on S³) and the operator norm.
#[derive(Debug, Clone)]
pub struct ElasticityTensor {
    mandel: Matrix6<f64>,
    components: [[[[f64; 3]; 3]; 3]; 3],
    c_d: f64,
    bound: f64,
}

/// Map a symmetric index pair to its Mandel slot and scale factor.
fn mandel_slot(i: usize, j: usize) -> (usize, f64) {
    match (i, j) {
        (0, 0) => (0, 1.0),
        (1, 1) => (1, 1.0),
        (2, 2) => (2, 1.0),
        (1, 2) | (2, 1) => (3, SQRT2),
        (0, 2) | (2, 0) => (4, SQRT2),
        (0, 1) | (1, 0) => (5, SQRT2),
        _ => unreachable!(),
    }
}

impl ElasticityTensor {
    /// Isotropic operator from Lamé parameters: D A = 2μ_L A + λ_L (tr A) I.
    ///
    /// Positive definiteness on S³ requires μ_L > 0 and 3λ_L + 2μ_L > 0
    /// (the eigenvalues are 3λ_L + 2μ_L on multiples of I and 2μ_L on the
    /// deviatoric subspace).
    pub fn isotropic(lambda: f64, mu: f64) -> Result<Self> {
        let mut d = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let kron = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                        d[i][j][k][l] = lambda * kron(i, j) * kron(k, l)
                            + mu * (kron(i, k) * kron(j, l) + kron(i, l) * kron(j, k));
                    }
                }
            }
        }
        Self::from_components(d)
    }

    /// General anisotropic operator from its four-index components.
    ///
    /// The index symmetries are validated (not silently repaired), then the
    /// operator is checked for positive definiteness on S³.
    pub fn from_components(d: [[[[f64; 3]; 3]; 3]; 3]) -> Result<Self> {
        let scale: f64 = d
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .fold(0.0, |m, &x| m.max(x.abs()));
        let tol = 1e-14 * (1.0 + scale);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let v = d[i][j][k][l];
                        if (v - d[j][i][k][l]).abs() > tol
                            || (v - d[i][j][l][k]).abs() > tol
                            || (v - d[k][l][i][j]).abs() > tol
                        {
                            return Err(Error::InvalidMaterial(format!(
                                "elasticity components violate index symmetry at ({i},{j},{k},{l})"
                            )));
                        }
                    }
                }
            }
        }

        let mut mandel = Matrix6::zeros();
        for i in 0..3 {
            for j in i..3 {
                let (a, sa) = mandel_slot(i, j);
                for k in 0..3 {
                    for l in k..3 {
                        let (b, sb) = mandel_slot(k, l);
                        mandel[(a, b)] = sa * sb * d[i][j][k][l];
                    }
                }
            }
        }

        let eig = nalgebra::SymmetricEigen::new(mandel);
        let c_d = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let bound = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        if !(c_d > 0.0) {
            return Err(Error::InvalidMaterial(format!(
                "elasticity operator is not positive definite (smallest eigenvalue {c_d:.3e})"
            )));
        }
        Ok(Self {
            mandel,
            components: d,
            c_d,
            bound,
        })
    }

    /// Raw four-index components d_{ijkl}.
    pub fn components(&self) -> &[[[[f64; 3]; 3]; 3]; 3] {
        &self.components
    }

    /// The Mandel 6×6 matrix of D (symmetric positive definite).
    pub fn voigt(&self) -> VoigtMatrix {
        VoigtMatrix(self.mandel)
    }

    /// Coercivity constant: min over S³ of A:(D A)/|A|².
    pub fn coercivity(&self) -> f64 {
        self.c_d
    }

    /// Operator norm: max over S³ of |D A|/|A|.
    pub fn norm_bound(&self) -> f64 {
        self.bound
    }

    /// Apply D by direct index contraction: (D A)_{ij} = Σ_{kl} d_{ijkl} A_{kl}.
    pub fn apply(&self, a: &SymTensor) -> SymTensor {
        let am = a.to_matrix();
        let mut out = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        s += self.components[i][j][k][l] * am[(k, l)];
                    }
                }
                out[(i, j)] = s;
            }
        }
        SymTensor::from_matrix(&out)
    }

    /// D-weighted inner product of tensors: (D A):B = A:(D B).
    pub fn inner(&self, a: &SymTensor, b: &SymTensor) -> f64 {
        (self.mandel * a.to_mandel()).dot(&b.to_mandel())
    }

    /// Symmetric positive definite square root of the Mandel matrix, so that
    /// applying it twice reproduces D.
    pub fn sqrt(&self) -> VoigtMatrix {
        let eig = nalgebra::SymmetricEigen::new(self.mandel);
        let mut root = Matrix6::zeros();
        for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
            // Construction guarantees lam > 0.
            let s = lam.sqrt();
            let v = eig.eigenvectors.column(idx);
            root += s * v * v.transpose();
        }
        VoigtMatrix(root)
    }
}
