//! Spectral Galerkin bases: elasticity eigenpairs, Neumann-Laplacian
//! eigenpairs, and the D-orthonormal complement of the strain span.
//!
//! Three families are produced from one `FEAssembly`:
//!
//! - `DisplacementBasis`: the lowest k generalized eigenpairs of
//!   K_u w = λ M_u w, rescaled so the strains are D-orthonormal,
//!   (ε(w_i), ε(w_j))_D = δ_ij. Under that normalization ∫ w_i·w_j dx =
//!   δ_ij/λ_i.
//! - `TemperatureBasis`: the lowest l eigenpairs of K_θ v = μ M_θ v,
//!   L²-orthonormal. The first pair is pinned to the exact constant mode
//!   (1/√|Ω|, μ = 0).
//! - `ComplementBasis`: quadrature-point tensor fields spanning the
//!   D-orthogonal complement of span{ε(w_n)}, built by projecting
//!   per-quadrature-point indicator tensors (processed in a fixed
//!   lexicographic order: quadrature point major, tensor component minor)
//!   and orthonormalizing by modified Gram-Schmidt with reorthogonalization.
//!
//! Dense eigensolves are used throughout (problem sizes here stay in the low
//! thousands); the mass matrix is factored once and the problem reduced to a
//! standard symmetric one.
//!
//! All outputs are deterministic for a fixed mesh and elasticity operator:
//! eigenvalues are sorted ascending with index tie-breaking, and every basis
//! vector's sign is fixed by making its first coefficient of magnitude
//! > 1e-12 positive.
//!
//! An optional binary cache (`save_cache`/`load_cache`) stores a complete
//! basis set. Layout, all integers and floats little-endian: magic `TVBS`,
//! format version (u32), mesh descriptor hash (u64), k, l, complement count
//! (u32 each), quadrature point count (u64), then for each displacement mode
//! the eigenvalue and reduced nodal vector, for each temperature mode the
//! eigenvalue and nodal vector, and for each complement mode its quadrature
//! field as 6 f64 per point in tensor component order (xx, yy, zz, yz, xz,
//! xy).

use crate::assembly::{FEAssembly, QPTensorField};
use crate::tensor::SymTensor;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::Read;
use std::path::Path;

/// One displacement eigenmode with cached quadrature-point data.
#[derive(Debug, Clone)]
pub struct DisplacementMode {
    pub eigenvalue: f64,
    /// Nodal coefficients on interior nodes (Dirichlet-reduced).
    pub reduced: DVector<f64>,
    /// ε(w) at quadrature points, D-normalized.
    pub strain: QPTensorField,
    /// div w at quadrature points.
    pub divergence: Vec<f64>,
    /// w at quadrature points (for load and power integrals).
    pub values: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct DisplacementBasis {
    pub modes: Vec<DisplacementMode>,
}

/// One temperature eigenmode with cached quadrature-point data.
#[derive(Debug, Clone)]
pub struct TemperatureMode {
    pub eigenvalue: f64,
    pub nodal: DVector<f64>,
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct TemperatureBasis {
    pub modes: Vec<TemperatureMode>,
}

/// D-orthonormal tensor fields spanning the complement of the strain span.
#[derive(Debug, Clone)]
pub struct ComplementBasis {
    pub fields: Vec<QPTensorField>,
}

/// The complete basis set used by the coefficient ODE system, with the
/// divergence coupling table d[n][m] = ∫ div(w_n) v_m dx.
pub struct BasisSet {
    pub displacement: DisplacementBasis,
    pub temperature: TemperatureBasis,
    pub complement: ComplementBasis,
    /// k×l matrix of ∫ div(w_n) v_m dx.
    pub div_coupling: DMatrix<f64>,
}

impl BasisSet {
    pub fn k(&self) -> usize {
        self.displacement.modes.len()
    }

    pub fn l_temperature(&self) -> usize {
        self.temperature.modes.len()
    }

    pub fn l_complement(&self) -> usize {
        self.complement.fields.len()
    }

    /// Build all three bases plus the coupling table.
    ///
    /// `l_complement` defaults to `l`; both counts saturate at the dimension
    /// of their respective discrete spaces (l at the node count, the
    /// complement at 6·(quadrature points) − k).
    pub fn build(
        assembly: &FEAssembly,
        k: usize,
        l: usize,
        l_complement: Option<usize>,
    ) -> Result<Self> {
        let displacement = solve_displacement_eigs(assembly, k)?;
        let l_temp = l.min(assembly.scalar_dim());
        let temperature = solve_temperature_eigs(assembly, l_temp)?;
        let tensor_dim = 6 * assembly.qp_count();
        let lc = l_complement.unwrap_or(l).min(tensor_dim.saturating_sub(k));
        let complement = build_complement(assembly, &displacement, lc)?;
        let div_coupling = divergence_coupling(assembly, &displacement, &temperature);
        Ok(Self {
            displacement,
            temperature,
            complement,
            div_coupling,
        })
    }
}

/// Solve the generalized symmetric eigenproblem A x = λ B x with B positive
/// definite, returning the `count` smallest pairs, B-orthonormal, sorted
/// ascending.
pub fn generalized_symmetric_eig(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    count: usize,
) -> Result<Vec<(f64, DVector<f64>)>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigenproblem wants square matrices of equal size, got {}×{} and {}×{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if count > n {
        return Err(Error::DimensionMismatch(format!(
            "requested {count} eigenpairs from a {n}-dimensional problem"
        )));
    }
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Eigensolver("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ, then a standard symmetric eigensolve.
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Eigensolver("singular Cholesky factor".into()))?;
    let c_t = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::Eigensolver("singular Cholesky factor".into()))?;
    let c = (&c_t + c_t.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let lt = l.transpose();
    let mut out = Vec::with_capacity(count);
    for &i in order.iter().take(count) {
        let y = eig.eigenvectors.column(i).clone_owned();
        let x = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Eigensolver("singular Cholesky factor".into()))?;
        let lam = eig.eigenvalues[i];
        if !lam.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigensolver(
                "non-finite eigenpair from dense solve".into(),
            ));
        }
        out.push((lam, x));
    }
    Ok(out)
}

/// Flip `v` so its first entry with magnitude > 1e-12 is positive.
fn fix_sign(v: &mut DVector<f64>) {
    for &x in v.iter() {
        if x.abs() > 1e-12 {
            if x < 0.0 {
                *v = -&*v;
            }
            return;
        }
    }
}

/// Lowest-k eigenpairs of the Dirichlet elasticity operator, strains
/// D-orthonormal.
pub fn solve_displacement_eigs(assembly: &FEAssembly, k: usize) -> Result<DisplacementBasis> {
    if k > assembly.reduced_dim() {
        return Err(Error::DimensionMismatch(format!(
            "requested k = {k} displacement modes but the reduced space has dimension {}",
            assembly.reduced_dim()
        )));
    }
    let pairs =
        generalized_symmetric_eig(assembly.vector_stiffness(), assembly.vector_mass(), k)?;
    let mut modes = Vec::with_capacity(k);
    for (lam, mut w) in pairs {
        if lam <= 0.0 {
            return Err(Error::Eigensolver(format!(
                "nonpositive elasticity eigenvalue {lam:.3e}; Dirichlet operator must be definite"
            )));
        }
        // Rescale from M-orthonormal to D-orthonormal strains; the scaling
        // is computed through the same quadrature the solver uses so the
        // Gram identity is exact by construction, not just up to eigensolver
        // accuracy.
        let strain = assembly.strain_of(&w);
        let norm_d = assembly.inner_d_qp(&strain, &strain).sqrt();
        w /= norm_d;
        fix_sign(&mut w);
        let strain = assembly.strain_of(&w);
        let full = assembly.embed_reduced(&w);
        let divergence = assembly.divergence_of_full(&full);
        let values = assembly.vector_at_qp_full(&full);
        modes.push(DisplacementMode {
            eigenvalue: lam,
            reduced: w,
            strain,
            divergence,
            values,
        });
    }
    Ok(DisplacementBasis { modes })
}

/// Lowest-l Neumann-Laplacian eigenpairs, L²-orthonormal, with the exact
/// constant mode pinned first.
pub fn solve_temperature_eigs(assembly: &FEAssembly, l: usize) -> Result<TemperatureBasis> {
    if l > assembly.scalar_dim() {
        return Err(Error::DimensionMismatch(format!(
            "requested l = {l} temperature modes but the scalar space has dimension {}",
            assembly.scalar_dim()
        )));
    }
    if l == 0 {
        return Err(Error::Basis(
            "temperature basis needs at least the constant mode (l ≥ 1)".into(),
        ));
    }
    let pairs = generalized_symmetric_eig(assembly.scalar_stiffness(), assembly.scalar_mass(), l)?;
    let mut modes = Vec::with_capacity(l);
    for (i, (mu, mut v)) in pairs.into_iter().enumerate() {
        let mu = if i == 0 {
            // The Neumann kernel is exactly the constants; replace the
            // numerically computed mode by the closed form.
            let volume = assembly.mesh().volume();
            v = DVector::from_element(assembly.scalar_dim(), 1.0 / volume.sqrt());
            0.0
        } else {
            mu.max(0.0)
        };
        fix_sign(&mut v);
        let values = assembly.scalar_at_qp(&v);
        let gradients = assembly.scalar_grad_at_qp(&v);
        modes.push(TemperatureMode {
            eigenvalue: mu,
            nodal: v,
            values,
            gradients,
        });
    }
    Ok(TemperatureBasis { modes })
}

/// D-orthonormal basis of the complement of span{ε(w_n)} in the discrete
/// tensor space, from indicator-tensor candidates.
pub fn build_complement(
    assembly: &FEAssembly,
    dbasis: &DisplacementBasis,
    l: usize,
) -> Result<ComplementBasis> {
    let nqp = assembly.qp_count();
    let tensor_dim = 6 * nqp;
    let k = dbasis.modes.len();
    if l > tensor_dim.saturating_sub(k) {
        return Err(Error::DimensionMismatch(format!(
            "requested {l} complement modes; at most {} exist beyond the {k} strain modes",
            tensor_dim.saturating_sub(k)
        )));
    }
    let mut fields: Vec<QPTensorField> = Vec::with_capacity(l);
    let drop_tol = 1e-8;
    'candidates: for q in 0..nqp {
        for comp in 0..6 {
            if fields.len() == l {
                break 'candidates;
            }
            let mut cand = QPTensorField::zeros(nqp);
            let mut unit = nalgebra::Vector6::zeros();
            unit[comp] = 1.0;
            cand.data[q] = SymTensor::from_mandel(&unit);
            let initial_norm = assembly.inner_d_qp(&cand, &cand).sqrt();
            // Two projection passes (Gram-Schmidt with reorthogonalization)
            // keep the joint Gram matrix at roundoff level.
            for _ in 0..2 {
                for mode in &dbasis.modes {
                    let c = assembly.inner_d_qp(&cand, &mode.strain);
                    cand.axpy(-c, &mode.strain);
                }
                for zeta in &fields {
                    let c = assembly.inner_d_qp(&cand, zeta);
                    cand.axpy(-c, zeta);
                }
            }
            let norm = assembly.inner_d_qp(&cand, &cand).sqrt();
            if norm <= drop_tol * initial_norm {
                continue;
            }
            cand.scale(1.0 / norm);
            fix_field_sign(&mut cand);
            fields.push(cand);
        }
    }
    if fields.len() < l {
        return Err(Error::Basis(format!(
            "only {} of {l} requested complement fields survived Gram-Schmidt",
            fields.len()
        )));
    }
    Ok(ComplementBasis { fields })
}

/// Sign convention for quadrature fields: first tensor component (point
/// major, component order xx, yy, zz, yz, xz, xy) with magnitude > 1e-12 is
/// made positive.
fn fix_field_sign(f: &mut QPTensorField) {
    for t in &f.data {
        for x in [t.xx, t.yy, t.zz, t.yz, t.xz, t.xy] {
            if x.abs() > 1e-12 {
                if x < 0.0 {
                    f.scale(-1.0);
                }
                return;
            }
        }
    }
}

/// Coupling table d[n][m] = ∫ div(w_n) v_m dx.
pub fn divergence_coupling(
    assembly: &FEAssembly,
    dbasis: &DisplacementBasis,
    tbasis: &TemperatureBasis,
) -> DMatrix<f64> {
    let k = dbasis.modes.len();
    let l = tbasis.modes.len();
    let mut d = DMatrix::zeros(k, l);
    for (n, wmode) in dbasis.modes.iter().enumerate() {
        for (m, vmode) in tbasis.modes.iter().enumerate() {
            let mut s = 0.0;
            for q in 0..assembly.qp_count() {
                s += wmode.divergence[q] * vmode.values[q];
            }
            d[(n, m)] = assembly.qp_weight() * s;
        }
    }
    d
}

const CACHE_MAGIC: &[u8; 4] = b"TVBS";
const CACHE_VERSION: u32 = 1;

/// Write a basis set to the documented binary cache format.
pub fn save_cache(path: &Path, assembly: &FEAssembly, basis: &BasisSet) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&assembly.mesh().descriptor_hash().to_le_bytes());
    buf.extend_from_slice(&(basis.k() as u32).to_le_bytes());
    buf.extend_from_slice(&(basis.l_temperature() as u32).to_le_bytes());
    buf.extend_from_slice(&(basis.l_complement() as u32).to_le_bytes());
    buf.extend_from_slice(&(assembly.qp_count() as u64).to_le_bytes());
    for mode in &basis.displacement.modes {
        buf.extend_from_slice(&mode.eigenvalue.to_le_bytes());
        buf.extend_from_slice(&(mode.reduced.len() as u64).to_le_bytes());
        for &x in mode.reduced.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    for mode in &basis.temperature.modes {
        buf.extend_from_slice(&mode.eigenvalue.to_le_bytes());
        buf.extend_from_slice(&(mode.nodal.len() as u64).to_le_bytes());
        for &x in mode.nodal.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    for field in &basis.complement.fields {
        for t in &field.data {
            for x in [t.xx, t.yy, t.zz, t.yz, t.xz, t.xy] {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    crate::output::atomic_write(path, &buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Load a basis cache written by `save_cache`, rebuilding the cached
/// quadrature data and coupling table from the assembly. The cache must
/// match the assembly's mesh.
pub fn load_cache(path: &Path, assembly: &FEAssembly) -> Result<BasisSet> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("basis cache has wrong magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CACHE_VERSION {
        return Err(Error::Format(format!(
            "basis cache version {version} unsupported (expected {CACHE_VERSION})"
        )));
    }
    let hash = read_u64(&mut r)?;
    if hash != assembly.mesh().descriptor_hash() {
        return Err(Error::Format(
            "basis cache was built for a different mesh".into(),
        ));
    }
    let k = read_u32(&mut r)? as usize;
    let l = read_u32(&mut r)? as usize;
    let lc = read_u32(&mut r)? as usize;
    let nqp = read_u64(&mut r)? as usize;
    if nqp != assembly.qp_count() {
        return Err(Error::Format(
            "basis cache quadrature count does not match the assembly".into(),
        ));
    }
    let mut dmodes = Vec::with_capacity(k);
    for _ in 0..k {
        let eigenvalue = read_f64(&mut r)?;
        let len = read_u64(&mut r)? as usize;
        if len != assembly.reduced_dim() {
            return Err(Error::Format(
                "basis cache displacement length does not match the assembly".into(),
            ));
        }
        let mut reduced = DVector::zeros(len);
        for i in 0..len {
            reduced[i] = read_f64(&mut r)?;
        }
        let strain = assembly.strain_of(&reduced);
        let full = assembly.embed_reduced(&reduced);
        let divergence = assembly.divergence_of_full(&full);
        let values = assembly.vector_at_qp_full(&full);
        dmodes.push(DisplacementMode {
            eigenvalue,
            reduced,
            strain,
            divergence,
            values,
        });
    }
    let mut tmodes = Vec::with_capacity(l);
    for _ in 0..l {
        let eigenvalue = read_f64(&mut r)?;
        let len = read_u64(&mut r)? as usize;
        if len != assembly.scalar_dim() {
            return Err(Error::Format(
                "basis cache temperature length does not match the assembly".into(),
            ));
        }
        let mut nodal = DVector::zeros(len);
        for i in 0..len {
            nodal[i] = read_f64(&mut r)?;
        }
        let values = assembly.scalar_at_qp(&nodal);
        let gradients = assembly.scalar_grad_at_qp(&nodal);
        tmodes.push(TemperatureMode {
            eigenvalue,
            nodal,
            values,
            gradients,
        });
    }
    let mut fields = Vec::with_capacity(lc);
    for _ in 0..lc {
        let mut f = QPTensorField::zeros(nqp);
        for t in f.data.iter_mut() {
            let xx = read_f64(&mut r)?;
            let yy = read_f64(&mut r)?;
            let zz = read_f64(&mut r)?;
            let yz = read_f64(&mut r)?;
            let xz = read_f64(&mut r)?;
            let xy = read_f64(&mut r)?;
            *t = SymTensor::new(xx, yy, zz, yz, xz, xy);
        }
        fields.push(f);
    }
    let displacement = DisplacementBasis { modes: dmodes };
    let temperature = TemperatureBasis { modes: tmodes };
    let div_coupling = divergence_coupling(assembly, &displacement, &temperature);
    Ok(BasisSet {
        displacement,
        temperature,
        complement: ComplementBasis { fields },
        div_coupling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoxMesh;
    use crate::tensor::ElasticityTensor;

    fn assembly(n: usize) -> FEAssembly {
        let mesh = BoxMesh::unit_cube(n).unwrap();
        let d = ElasticityTensor::isotropic(2.0, 1.0).unwrap();
        FEAssembly::assemble(mesh, d).unwrap()
    }

    #[test]
    fn generalized_eig_recovers_diagonal_problem() {
        // A = diag(3,1,2), B = I: eigenvalues sorted ascending.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let b = DMatrix::identity(3, 3);
        let pairs = generalized_symmetric_eig(&a, &b, 3).unwrap();
        let lams: Vec<f64> = pairs.iter().map(|(l, _)| *l).collect();
        assert!((lams[0] - 1.0).abs() < 1e-12);
        assert!((lams[1] - 2.0).abs() < 1e-12);
        assert!((lams[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_eig_is_b_orthonormal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 12;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = (&raw + raw.transpose()) * 0.5;
        let rawb = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3));
        let b = &rawb * rawb.transpose() + DMatrix::identity(n, n) * 2.0;
        let pairs = generalized_symmetric_eig(&a, &b, n).unwrap();
        for (i, (li, xi)) in pairs.iter().enumerate() {
            let resid = (&a * xi - &b * xi * *li).norm() / (&a * xi).norm().max(1e-30);
            assert!(resid <= 1e-10, "residual {resid:.3e}");
            for (j, (_, xj)) in pairs.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = (xi.transpose() * &b * xj)[(0, 0)];
                assert!((got - want).abs() <= 1e-10, "B-Gram[{i}][{j}] = {got}");
            }
        }
    }

    #[test]
    fn displacement_basis_gram_is_identity() {
        let asm = assembly(3);
        let basis = solve_displacement_eigs(&asm, 6).unwrap();
        for (i, mi) in basis.modes.iter().enumerate() {
            for (j, mj) in basis.modes.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = asm.inner_d_qp(&mi.strain, &mj.strain);
                assert!((got - want).abs() <= 1e-10, "Gram[{i}][{j}] = {got:.3e}");
            }
        }
    }

    #[test]
    fn displacement_mass_orthogonality_is_scaled_by_eigenvalue() {
        // With D-orthonormal strains, ∫ w_i · w_j dx = δ_ij / λ_i.
        let asm = assembly(3);
        let basis = solve_displacement_eigs(&asm, 5).unwrap();
        for (i, mi) in basis.modes.iter().enumerate() {
            for (j, mj) in basis.modes.iter().enumerate() {
                let got = (mi.reduced.transpose() * asm.vector_mass() * &mj.reduced)[(0, 0)];
                let want = if i == j { 1.0 / mi.eigenvalue } else { 0.0 };
                assert!(
                    (got - want).abs() <= 1e-10,
                    "mass Gram[{i}][{j}] = {got:.3e}, want {want:.3e}"
                );
            }
        }
    }

    #[test]
    fn displacement_eigenvalues_ascend_and_are_positive() {
        let asm = assembly(3);
        let basis = solve_displacement_eigs(&asm, 8).unwrap();
        let mut prev = 0.0;
        for m in &basis.modes {
            assert!(m.eigenvalue > 0.0);
            assert!(m.eigenvalue >= prev);
            prev = m.eigenvalue;
        }
    }

    #[test]
    fn displacement_eigen_residuals_are_small() {
        let asm = assembly(3);
        let basis = solve_displacement_eigs(&asm, 6).unwrap();
        for m in &basis.modes {
            let kw = asm.vector_stiffness() * &m.reduced;
            let mw = asm.vector_mass() * &m.reduced;
            let resid = (&kw - mw * m.eigenvalue).norm() / kw.norm();
            assert!(resid <= 1e-8, "eigen-residual {resid:.3e}");
        }
    }

    #[test]
    fn lowest_elasticity_eigenvalue_stabilizes_under_refinement() {
        // λ₁ on n=4 and n=8 meshes should agree within 10% (both converging
        // to the continuum value from above).
        let l4 = solve_displacement_eigs(&assembly(4), 1).unwrap().modes[0].eigenvalue;
        let l8 = solve_displacement_eigs(&assembly(8), 1).unwrap().modes[0].eigenvalue;
        let rel = (l4 - l8).abs() / l8;
        assert!(rel < 0.10, "λ₁(n=4) = {l4:.5}, λ₁(n=8) = {l8:.5}, rel {rel:.3}");
    }

    #[test]
    fn temperature_basis_has_exact_constant_first() {
        let asm = assembly(3);
        let basis = solve_temperature_eigs(&asm, 5).unwrap();
        assert_eq!(basis.modes[0].eigenvalue, 0.0);
        let c = basis.modes[0].nodal[0];
        assert!((c - 1.0).abs() <= 1e-12, "unit cube constant mode = 1");
        for &v in basis.modes[0].nodal.iter() {
            assert_eq!(v, c);
        }
    }

    #[test]
    fn temperature_basis_is_l2_orthonormal() {
        let asm = assembly(3);
        let basis = solve_temperature_eigs(&asm, 6).unwrap();
        for (i, mi) in basis.modes.iter().enumerate() {
            for (j, mj) in basis.modes.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = (mi.nodal.transpose() * asm.scalar_mass() * &mj.nodal)[(0, 0)];
                assert!((got - want).abs() <= 1e-10, "L² Gram[{i}][{j}] = {got:.3e}");
            }
        }
    }

    #[test]
    fn temperature_stiffness_orthogonality() {
        // ∫ ∇v_i · ∇v_j dx = μ_i δ_ij.
        let asm = assembly(3);
        let basis = solve_temperature_eigs(&asm, 5).unwrap();
        for (i, mi) in basis.modes.iter().enumerate() {
            for (j, mj) in basis.modes.iter().enumerate() {
                let got = (mi.nodal.transpose() * asm.scalar_stiffness() * &mj.nodal)[(0, 0)];
                let want = if i == j { mi.eigenvalue } else { 0.0 };
                assert!(
                    (got - want).abs() <= 1e-8 * (1.0 + mi.eigenvalue),
                    "stiffness Gram[{i}][{j}] = {got:.3e}"
                );
            }
        }
    }

    #[test]
    fn second_neumann_eigenvalue_approximates_pi_squared() {
        // Continuum Neumann spectrum of the unit cube: π²(i²+j²+k²); the
        // first nonzero value is π². Q1 at n=8 should be within 5%.
        let asm = assembly(8);
        let basis = solve_temperature_eigs(&asm, 2).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        let rel = (basis.modes[1].eigenvalue - pi2).abs() / pi2;
        assert!(rel < 0.05, "μ₂ = {:.4}, π² = {pi2:.4}", basis.modes[1].eigenvalue);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal_to_strains() {
        let asm = assembly(2);
        let dbasis = solve_displacement_eigs(&asm, 3).unwrap();
        let comp = build_complement(&asm, &dbasis, 6).unwrap();
        for (i, zi) in comp.fields.iter().enumerate() {
            for mode in &dbasis.modes {
                let c = asm.inner_d_qp(zi, &mode.strain);
                assert!(c.abs() <= 1e-10, "cross term {c:.3e}");
            }
            for (j, zj) in comp.fields.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = asm.inner_d_qp(zi, zj);
                assert!((got - want).abs() <= 1e-10, "ζ Gram[{i}][{j}] = {got:.3e}");
            }
        }
    }

    #[test]
    fn complement_of_empty_basis_spans_candidates() {
        // With k = 0 the construction just orthonormalizes the candidate
        // span; its dimension must match the rank of the candidate set,
        // which is the full tensor space dimension.
        let asm = assembly(2);
        let empty = DisplacementBasis { modes: vec![] };
        let dim = 6 * asm.qp_count();
        let comp = build_complement(&asm, &empty, dim).unwrap();
        assert_eq!(comp.fields.len(), dim);
        // Requesting one more must fail.
        assert!(build_complement(&asm, &empty, dim + 1).is_err());
    }

    #[test]
    fn full_complement_plus_strains_is_complete() {
        // k strain modes + (6·nqp − k) complement fields reproduce any
        // quadrature field: projection coefficients reconstruct it.
        let asm = assembly(2);
        let dbasis = solve_displacement_eigs(&asm, 3).unwrap();
        let full = 6 * asm.qp_count() - 3;
        let comp = build_complement(&asm, &dbasis, full).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut target = QPTensorField::zeros(asm.qp_count());
        for t in target.data.iter_mut() {
            *t = SymTensor::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
        }
        let mut recon = QPTensorField::zeros(asm.qp_count());
        for mode in &dbasis.modes {
            let c = asm.inner_d_qp(&target, &mode.strain);
            recon.axpy(c, &mode.strain);
        }
        for z in &comp.fields {
            let c = asm.inner_d_qp(&target, z);
            recon.axpy(c, z);
        }
        let mut err: f64 = 0.0;
        for (a, b) in recon.data.iter().zip(&target.data) {
            err = err.max((*a - *b).norm());
        }
        assert!(err <= 1e-9, "completeness error {err:.3e}");
    }

    #[test]
    fn divergence_coupling_constant_column_vanishes() {
        // ∫ div(w_n) v₁ dx = v₁ ∫ div(w_n) dx = 0 for Dirichlet modes.
        let asm = assembly(3);
        let dbasis = solve_displacement_eigs(&asm, 6).unwrap();
        let tbasis = solve_temperature_eigs(&asm, 4).unwrap();
        let d = divergence_coupling(&asm, &dbasis, &tbasis);
        for n in 0..6 {
            assert!(d[(n, 0)].abs() <= 1e-12, "d[{n}][0] = {:.3e}", d[(n, 0)]);
        }
    }

    #[test]
    fn divergence_coupling_has_nonzero_entries() {
        let asm = assembly(4);
        let dbasis = solve_displacement_eigs(&asm, 6).unwrap();
        let tbasis = solve_temperature_eigs(&asm, 6).unwrap();
        let d = divergence_coupling(&asm, &dbasis, &tbasis);
        let max = d.amax();
        assert!(max > 1e-6, "coupling matrix unexpectedly zero, max {max:.3e}");
    }

    #[test]
    fn divergence_coupling_matches_brute_force() {
        let asm = assembly(2);
        let dbasis = solve_displacement_eigs(&asm, 2).unwrap();
        let tbasis = solve_temperature_eigs(&asm, 3).unwrap();
        let d = divergence_coupling(&asm, &dbasis, &tbasis);
        for (n, wm) in dbasis.modes.iter().enumerate() {
            for (m, vm) in tbasis.modes.iter().enumerate() {
                let prod: Vec<f64> = wm
                    .divergence
                    .iter()
                    .zip(&vm.values)
                    .map(|(a, b)| a * b)
                    .collect();
                let brute = asm.integrate(&prod);
                assert!((d[(n, m)] - brute).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn basis_build_saturates_counts() {
        let asm = assembly(2);
        // Scalar space has 27 nodes; tensor space 6·64 = 384.
        let basis = BasisSet::build(&asm, 3, 100, None).unwrap();
        assert_eq!(basis.l_temperature(), 27);
        assert_eq!(basis.l_complement(), 100);
        let basis2 = BasisSet::build(&asm, 3, 4, Some(0)).unwrap();
        assert_eq!(basis2.l_complement(), 0);
        assert_eq!(basis2.l_temperature(), 4);
    }

    #[test]
    fn basis_is_deterministic() {
        let asm = assembly(3);
        let b1 = BasisSet::build(&asm, 4, 4, None).unwrap();
        let b2 = BasisSet::build(&asm, 4, 4, None).unwrap();
        for (m1, m2) in b1.displacement.modes.iter().zip(&b2.displacement.modes) {
            assert_eq!(m1.reduced, m2.reduced);
            assert_eq!(m1.eigenvalue, m2.eigenvalue);
        }
        for (m1, m2) in b1.temperature.modes.iter().zip(&b2.temperature.modes) {
            assert_eq!(m1.nodal, m2.nodal);
        }
        for (f1, f2) in b1.complement.fields.iter().zip(&b2.complement.fields) {
            for (a, b) in f1.data.iter().zip(&f2.data) {
                assert_eq!(a.to_mandel(), b.to_mandel());
            }
        }
    }

    #[test]
    fn cache_roundtrip_preserves_basis() {
        let asm = assembly(2);
        let basis = BasisSet::build(&asm, 3, 4, Some(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.bin");
        save_cache(&path, &asm, &basis).unwrap();
        let loaded = load_cache(&path, &asm).unwrap();
        assert_eq!(loaded.k(), 3);
        assert_eq!(loaded.l_temperature(), 4);
        assert_eq!(loaded.l_complement(), 5);
        for (m1, m2) in basis
            .displacement
            .modes
            .iter()
            .zip(&loaded.displacement.modes)
        {
            assert_eq!(m1.reduced, m2.reduced);
            assert_eq!(m1.eigenvalue, m2.eigenvalue);
        }
        for (f1, f2) in basis.complement.fields.iter().zip(&loaded.complement.fields) {
            for (a, b) in f1.data.iter().zip(&f2.data) {
                assert_eq!(a.to_mandel(), b.to_mandel());
            }
        }
        // A mismatched mesh must be rejected.
        let other = assembly(3);
        assert!(load_cache(&path, &other).is_err());
    }
}
