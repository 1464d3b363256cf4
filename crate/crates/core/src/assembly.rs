//! Q1 finite-element assembly on uniform box meshes.
//!
//! Trilinear shape functions with 2×2×2 Gauss quadrature. On a uniform
//! axis-aligned mesh the Jacobian is the constant diag(h₁/2, h₂/2, h₃/2), so
//! shape values and physical gradients are cached once per Gauss point and
//! shared by every cell, and all integrands assembled here (products of
//! per-axis degree ≤ 3) are integrated exactly.
//!
//! Four global matrices are built:
//! - scalar mass M_θ and stiffness K_θ on all nodes (Neumann space: K_θ is
//!   positive semidefinite with the constants as kernel),
//! - vector mass M_u and elastic stiffness K_u on interior nodes only
//!   (Dirichlet space by node elimination; K_u is positive definite).
//!
//! The elastic stiffness uses the D-weighted product of symmetric gradients,
//! `∫ D ε(φ_a) : ε(φ_b) dx`, so its generalized eigenpairs are the discrete
//! elasticity eigenfunctions.
//!
//! Tensor-valued states (ε^p, T, lifted stresses) live at quadrature points;
//! `QPTensorField` is their carrier and the `*_qp` inner products define the
//! discrete integrals of all tensor terms.

use crate::mesh::{BoxMesh, BoundaryFace};
use crate::tensor::{ElasticityTensor, SymTensor};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, Matrix6};

/// Reference corner coordinates of the local hex numbering.
const XI: [f64; 8] = [-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 8] = [-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0];
const ZETA: [f64; 8] = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];

/// 2-point Gauss abscissa on [−1, 1] (weights are 1).
const GAUSS: [f64; 2] = [-0.577_350_269_189_625_76, 0.577_350_269_189_625_76];

/// A tensor value per quadrature point.
#[derive(Debug, Clone)]
pub struct QPTensorField {
    pub data: Vec<SymTensor>,
}

impl QPTensorField {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: vec![SymTensor::ZERO; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// self += a·x, pointwise.
    pub fn axpy(&mut self, a: f64, x: &QPTensorField) {
        assert_eq!(self.len(), x.len(), "quadrature field length mismatch");
        for (s, t) in self.data.iter_mut().zip(&x.data) {
            s.axpy(a, t);
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in self.data.iter_mut() {
            *s = s.scale(a);
        }
    }
}

/// Per-Gauss-point cache: shape values and physical gradients of the 8 local
/// nodes, plus the (constant) quadrature weight.
#[derive(Debug, Clone)]
struct GaussCache {
    shape: [f64; 8],
    grad: [[f64; 3]; 8],
    /// Offset of the Gauss point from the cell's low corner, in physical units.
    offset: [f64; 3],
}

/// One quadrature point of a boundary face.
#[derive(Debug, Clone)]
pub struct FaceQp {
    pub coord: [f64; 3],
    /// Bilinear shape values of the face's four nodes.
    pub shape: [f64; 4],
    pub weight: f64,
}

/// A boundary face with its quadrature rule.
#[derive(Debug, Clone)]
pub struct FaceQuadrature {
    pub face: BoundaryFace,
    pub qps: Vec<FaceQp>,
}

/// Assembled finite-element operators and quadrature tables for one mesh and
/// one elasticity operator. Immutable after construction.
pub struct FEAssembly {
    mesh: BoxMesh,
    d: ElasticityTensor,
    gauss: Vec<GaussCache>,
    qp_weight_value: f64,
    qp_coords: Vec<[f64; 3]>,
    scalar_mass: DMatrix<f64>,
    scalar_stiffness: DMatrix<f64>,
    vector_mass: DMatrix<f64>,
    vector_stiffness: DMatrix<f64>,
    /// Element elastic stiffness over all 24 local dofs (local node a, axis d
    /// flattened as 3a+d); shared by every cell of the uniform mesh.
    element_vector_stiffness: DMatrix<f64>,
    face_quads: Vec<FaceQuadrature>,
    d_mandel: Matrix6<f64>,
}

impl FEAssembly {
    pub fn assemble(mesh: BoxMesh, d: ElasticityTensor) -> Result<Self> {
        let h = mesh.spacing();
        let detj = h[0] * h[1] * h[2] / 8.0;

        // Shape data per Gauss point, shared by all cells.
        let mut gauss = Vec::with_capacity(8);
        for &gz in &GAUSS {
            for &gy in &GAUSS {
                for &gx in &GAUSS {
                    let mut shape = [0.0; 8];
                    let mut grad = [[0.0; 3]; 8];
                    for a in 0..8 {
                        let (xa, ya, za) = (XI[a], ETA[a], ZETA[a]);
                        shape[a] = 0.125 * (1.0 + xa * gx) * (1.0 + ya * gy) * (1.0 + za * gz);
                        // d/dx = d/dξ · 2/h₁, etc.
                        grad[a] = [
                            0.125 * xa * (1.0 + ya * gy) * (1.0 + za * gz) * 2.0 / h[0],
                            0.125 * (1.0 + xa * gx) * ya * (1.0 + za * gz) * 2.0 / h[1],
                            0.125 * (1.0 + xa * gx) * (1.0 + ya * gy) * za * 2.0 / h[2],
                        ];
                    }
                    let offset = [
                        0.5 * h[0] * (1.0 + gx),
                        0.5 * h[1] * (1.0 + gy),
                        0.5 * h[2] * (1.0 + gz),
                    ];
                    gauss.push(GaussCache {
                        shape,
                        grad,
                        offset,
                    });
                }
            }
        }

        let nn = mesh.node_count();
        let ni = mesh.interior_nodes().len();

        // Physical quadrature point coordinates, cell-major.
        let mut qp_coords = Vec::with_capacity(mesh.cell_count() * 8);
        for cell in mesh.cell_nodes() {
            let corner = mesh.node_coords()[cell[0]];
            for g in &gauss {
                qp_coords.push([
                    corner[0] + g.offset[0],
                    corner[1] + g.offset[1],
                    corner[2] + g.offset[2],
                ]);
            }
        }

        // Element matrices (identical for every cell).
        let mut me: DMatrix<f64> = DMatrix::zeros(8, 8);
        let mut ke: DMatrix<f64> = DMatrix::zeros(8, 8);
        for g in &gauss {
            for a in 0..8 {
                for b in 0..8 {
                    me[(a, b)] += detj * g.shape[a] * g.shape[b];
                    ke[(a, b)] += detj
                        * (g.grad[a][0] * g.grad[b][0]
                            + g.grad[a][1] * g.grad[b][1]
                            + g.grad[a][2] * g.grad[b][2]);
                }
            }
        }

        // Strain basis tensors ε(N_a e_d) per Gauss point, then the 24×24
        // D-weighted element stiffness.
        let strain_basis: Vec<[[SymTensor; 3]; 8]> = gauss
            .iter()
            .map(|g| {
                let mut out = [[SymTensor::ZERO; 3]; 8];
                for a in 0..8 {
                    for dir in 0..3 {
                        out[a][dir] = strain_of_basis(&g.grad[a], dir);
                    }
                }
                out
            })
            .collect();
        let mut keu = DMatrix::zeros(24, 24);
        for basis in &strain_basis {
            for a in 0..8 {
                for da in 0..3 {
                    let ea = &basis[a][da];
                    for b in 0..8 {
                        for db in 0..3 {
                            keu[(3 * a + da, 3 * b + db)] +=
                                detj * d.inner(ea, &basis[b][db]);
                        }
                    }
                }
            }
        }

        // Scatter into global matrices.
        let mut scalar_mass = DMatrix::zeros(nn, nn);
        let mut scalar_stiffness = DMatrix::zeros(nn, nn);
        let mut vector_mass = DMatrix::zeros(3 * ni, 3 * ni);
        let mut vector_stiffness = DMatrix::zeros(3 * ni, 3 * ni);
        for cell in mesh.cell_nodes() {
            for a in 0..8 {
                let ga = cell[a];
                for b in 0..8 {
                    let gb = cell[b];
                    scalar_mass[(ga, gb)] += me[(a, b)];
                    scalar_stiffness[(ga, gb)] += ke[(a, b)];
                }
            }
            for a in 0..8 {
                let Some(ia) = mesh.interior_index(cell[a]) else {
                    continue;
                };
                for b in 0..8 {
                    let Some(ib) = mesh.interior_index(cell[b]) else {
                        continue;
                    };
                    for da in 0..3 {
                        for db in 0..3 {
                            vector_stiffness[(3 * ia + da, 3 * ib + db)] +=
                                keu[(3 * a + da, 3 * b + db)];
                            if da == db {
                                vector_mass[(3 * ia + da, 3 * ib + db)] += me[(a, b)];
                            }
                        }
                    }
                }
            }
        }

        // A singular mass matrix cannot arise from a valid mesh, but the
        // eigensolves downstream assume it; fail loudly rather than there.
        for m in [&scalar_mass, &vector_mass] {
            if m.clone().cholesky().is_none() {
                return Err(Error::Eigensolver(
                    "assembled mass matrix is not positive definite".into(),
                ));
            }
        }

        // Face quadrature: 2×2 Gauss on each boundary quad.
        let mut face_quads = Vec::with_capacity(mesh.boundary_faces().len());
        for face in mesh.boundary_faces() {
            let p0 = mesh.node_coords()[face.nodes[0]];
            let p1 = mesh.node_coords()[face.nodes[1]];
            let p3 = mesh.node_coords()[face.nodes[3]];
            // The quad is a rectangle spanned by (p1 − p0) and (p3 − p0).
            let e1 = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
            let e2 = [p3[0] - p0[0], p3[1] - p0[1], p3[2] - p0[2]];
            let len1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
            let len2 = (e2[0] * e2[0] + e2[1] * e2[1] + e2[2] * e2[2]).sqrt();
            let area = len1 * len2;
            let mut qps = Vec::with_capacity(4);
            for &gt in &GAUSS {
                for &gs in &GAUSS {
                    let (s, t) = (0.5 * (1.0 + gs), 0.5 * (1.0 + gt));
                    let coord = [
                        p0[0] + s * e1[0] + t * e2[0],
                        p0[1] + s * e1[1] + t * e2[1],
                        p0[2] + s * e1[2] + t * e2[2],
                    ];
                    let shape = [
                        (1.0 - s) * (1.0 - t),
                        s * (1.0 - t),
                        s * t,
                        (1.0 - s) * t,
                    ];
                    qps.push(FaceQp {
                        coord,
                        shape,
                        weight: area / 4.0,
                    });
                }
            }
            face_quads.push(FaceQuadrature {
                face: face.clone(),
                qps,
            });
        }

        let d_mandel = d.voigt().0;
        Ok(Self {
            mesh,
            d,
            gauss,
            qp_weight_value: detj,
            qp_coords,
            scalar_mass,
            scalar_stiffness,
            vector_mass,
            vector_stiffness,
            element_vector_stiffness: keu,
            face_quads,
            d_mandel,
        })
    }

    pub fn mesh(&self) -> &BoxMesh {
        &self.mesh
    }

    pub fn elasticity(&self) -> &ElasticityTensor {
        &self.d
    }

    /// Number of scalar (temperature) degrees of freedom.
    pub fn scalar_dim(&self) -> usize {
        self.mesh.node_count()
    }

    /// Number of Dirichlet-reduced displacement degrees of freedom.
    pub fn reduced_dim(&self) -> usize {
        3 * self.mesh.interior_nodes().len()
    }

    pub fn qp_count(&self) -> usize {
        self.qp_coords.len()
    }

    pub fn qp_coords(&self) -> &[[f64; 3]] {
        &self.qp_coords
    }

    /// Quadrature weight (identical at every point of the uniform mesh).
    pub fn qp_weight(&self) -> f64 {
        self.qp_weight_value
    }

    pub fn scalar_mass(&self) -> &DMatrix<f64> {
        &self.scalar_mass
    }

    pub fn scalar_stiffness(&self) -> &DMatrix<f64> {
        &self.scalar_stiffness
    }

    pub fn vector_mass(&self) -> &DMatrix<f64> {
        &self.vector_mass
    }

    pub fn vector_stiffness(&self) -> &DMatrix<f64> {
        &self.vector_stiffness
    }

    pub fn face_quadratures(&self) -> &[FaceQuadrature] {
        &self.face_quads
    }

    /// Extend a reduced displacement vector by zeros on boundary nodes.
    pub fn embed_reduced(&self, reduced: &DVector<f64>) -> DVector<f64> {
        assert_eq!(reduced.len(), self.reduced_dim(), "reduced vector length");
        let mut full = DVector::zeros(3 * self.mesh.node_count());
        for (idx, &node) in self.mesh.interior_nodes().iter().enumerate() {
            for d in 0..3 {
                full[3 * node + d] = reduced[3 * idx + d];
            }
        }
        full
    }

    /// Restrict a full nodal displacement vector to interior nodes.
    pub fn restrict_full(&self, full: &DVector<f64>) -> DVector<f64> {
        assert_eq!(full.len(), 3 * self.mesh.node_count(), "full vector length");
        let mut reduced = DVector::zeros(self.reduced_dim());
        for (idx, &node) in self.mesh.interior_nodes().iter().enumerate() {
            for d in 0..3 {
                reduced[3 * idx + d] = full[3 * node + d];
            }
        }
        reduced
    }

    /// Symmetric gradient of a reduced displacement field at quadrature points.
    pub fn strain_of(&self, reduced: &DVector<f64>) -> QPTensorField {
        self.strain_of_full(&self.embed_reduced(reduced))
    }

    /// Symmetric gradient of a full nodal displacement field (3 dofs per node).
    pub fn strain_of_full(&self, full: &DVector<f64>) -> QPTensorField {
        assert_eq!(full.len(), 3 * self.mesh.node_count(), "full vector length");
        let mut out = QPTensorField::zeros(self.qp_count());
        let mut q = 0;
        for cell in self.mesh.cell_nodes() {
            for g in &self.gauss {
                let mut grad = [[0.0; 3]; 3]; // grad[i][j] = ∂u_i/∂x_j
                for (a, &node) in cell.iter().enumerate() {
                    for i in 0..3 {
                        let ua = full[3 * node + i];
                        for j in 0..3 {
                            grad[i][j] += ua * g.grad[a][j];
                        }
                    }
                }
                out.data[q] = SymTensor::new(
                    grad[0][0],
                    grad[1][1],
                    grad[2][2],
                    0.5 * (grad[1][2] + grad[2][1]),
                    0.5 * (grad[0][2] + grad[2][0]),
                    0.5 * (grad[0][1] + grad[1][0]),
                );
                q += 1;
            }
        }
        out
    }

    /// Divergence of a full nodal displacement field at quadrature points.
    pub fn divergence_of_full(&self, full: &DVector<f64>) -> Vec<f64> {
        assert_eq!(full.len(), 3 * self.mesh.node_count(), "full vector length");
        let mut out = vec![0.0; self.qp_count()];
        let mut q = 0;
        for cell in self.mesh.cell_nodes() {
            for g in &self.gauss {
                let mut div = 0.0;
                for (a, &node) in cell.iter().enumerate() {
                    for i in 0..3 {
                        div += full[3 * node + i] * g.grad[a][i];
                    }
                }
                out[q] = div;
                q += 1;
            }
        }
        out
    }

    /// Values of a nodal scalar field at quadrature points.
    pub fn scalar_at_qp(&self, nodal: &DVector<f64>) -> Vec<f64> {
        assert_eq!(nodal.len(), self.mesh.node_count(), "scalar vector length");
        let mut out = vec![0.0; self.qp_count()];
        let mut q = 0;
        for cell in self.mesh.cell_nodes() {
            for g in &self.gauss {
                let mut v = 0.0;
                for (a, &node) in cell.iter().enumerate() {
                    v += nodal[node] * g.shape[a];
                }
                out[q] = v;
                q += 1;
            }
        }
        out
    }

    /// Gradient of a nodal scalar field at quadrature points.
    pub fn scalar_grad_at_qp(&self, nodal: &DVector<f64>) -> Vec<[f64; 3]> {
        assert_eq!(nodal.len(), self.mesh.node_count(), "scalar vector length");
        let mut out = vec![[0.0; 3]; self.qp_count()];
        let mut q = 0;
        for cell in self.mesh.cell_nodes() {
            for g in &self.gauss {
                let mut gv = [0.0; 3];
                for (a, &node) in cell.iter().enumerate() {
                    for j in 0..3 {
                        gv[j] += nodal[node] * g.grad[a][j];
                    }
                }
                out[q] = gv;
                q += 1;
            }
        }
        out
    }

    /// Values of a full nodal vector field at quadrature points.
    pub fn vector_at_qp_full(&self, full: &DVector<f64>) -> Vec<[f64; 3]> {
        assert_eq!(full.len(), 3 * self.mesh.node_count(), "full vector length");
        let mut out = vec![[0.0; 3]; self.qp_count()];
        let mut q = 0;
        for cell in self.mesh.cell_nodes() {
            for g in &self.gauss {
                let mut v = [0.0; 3];
                for (a, &node) in cell.iter().enumerate() {
                    for i in 0..3 {
                        v[i] += full[3 * node + i] * g.shape[a];
                    }
                }
                out[q] = v;
                q += 1;
            }
        }
        out
    }

    /// ∫_Ω f dx for a scalar integrand sampled at quadrature points.
    pub fn integrate(&self, vals: &[f64]) -> f64 {
        assert_eq!(vals.len(), self.qp_count(), "integrand length");
        self.qp_weight_value * vals.iter().sum::<f64>()
    }

    /// D-weighted inner product of two quadrature-point tensor fields,
    /// (X, Y)_D = ∫ D X : Y dx.
    pub fn inner_d_qp(&self, x: &QPTensorField, y: &QPTensorField) -> f64 {
        assert_eq!(x.len(), self.qp_count(), "field length");
        assert_eq!(y.len(), self.qp_count(), "field length");
        let mut s = 0.0;
        for (a, b) in x.data.iter().zip(&y.data) {
            s += (self.d_mandel * a.to_mandel()).dot(&b.to_mandel());
        }
        self.qp_weight_value * s
    }

    /// Frobenius inner product of two quadrature-point tensor fields,
    /// ∫ X : Y dx.
    pub fn frobenius_qp(&self, x: &QPTensorField, y: &QPTensorField) -> f64 {
        assert_eq!(x.len(), self.qp_count(), "field length");
        assert_eq!(y.len(), self.qp_count(), "field length");
        let mut s = 0.0;
        for (a, b) in x.data.iter().zip(&y.data) {
            s += a.dot(b);
        }
        self.qp_weight_value * s
    }

    /// Apply D pointwise to a quadrature field.
    pub fn apply_d_qp(&self, x: &QPTensorField) -> QPTensorField {
        let mut out = QPTensorField::zeros(x.len());
        for (o, a) in out.data.iter_mut().zip(&x.data) {
            *o = SymTensor::from_mandel(&(self.d_mandel * a.to_mandel()));
        }
        out
    }

    /// Reduced load vector ∫ f · φ dx from a quadrature-point vector field,
    /// for interior (Dirichlet) test functions φ = N_a e_d.
    pub fn vector_load_from_qp(&self, f_vals: &[[f64; 3]]) -> DVector<f64> {
        assert_eq!(f_vals.len(), self.qp_count(), "integrand length");
        let mut load = DVector::zeros(self.reduced_dim());
        let mut q = 0;
        for cell in self.mesh.cell_nodes() {
            for g in &self.gauss {
                let fv = f_vals[q];
                for (a, &node) in cell.iter().enumerate() {
                    if let Some(ia) = self.mesh.interior_index(node) {
                        let w = self.qp_weight_value * g.shape[a];
                        for d in 0..3 {
                            load[3 * ia + d] += w * fv[d];
                        }
                    }
                }
                q += 1;
            }
        }
        load
    }

    /// Nodal load vector ∫ q N_m dx from a quadrature-point scalar field.
    pub fn scalar_load_from_qp(&self, q_vals: &[f64]) -> DVector<f64> {
        assert_eq!(q_vals.len(), self.qp_count(), "integrand length");
        let mut load = DVector::zeros(self.mesh.node_count());
        let mut q = 0;
        for cell in self.mesh.cell_nodes() {
            for g in &self.gauss {
                let wq = self.qp_weight_value * q_vals[q];
                for (a, &node) in cell.iter().enumerate() {
                    load[node] += wq * g.shape[a];
                }
                q += 1;
            }
        }
        load
    }

    /// ∫_{∂Ω} g v dS with `g` analytic and `v` a nodal scalar field.
    pub fn boundary_integral(&self, g: &dyn Fn([f64; 3]) -> f64, v: &DVector<f64>) -> f64 {
        assert_eq!(v.len(), self.mesh.node_count(), "scalar vector length");
        let mut s = 0.0;
        for fq in &self.face_quads {
            for qp in &fq.qps {
                let mut vv = 0.0;
                for (a, &node) in fq.face.nodes.iter().enumerate() {
                    vv += v[node] * qp.shape[a];
                }
                s += qp.weight * g(qp.coord) * vv;
            }
        }
        s
    }

    /// Nodal flux load ∫_{∂Ω} g N_m dS.
    pub fn boundary_flux_load(&self, g: &dyn Fn([f64; 3]) -> f64) -> DVector<f64> {
        let mut load = DVector::zeros(self.mesh.node_count());
        for fq in &self.face_quads {
            for qp in &fq.qps {
                let wg = qp.weight * g(qp.coord);
                for (a, &node) in fq.face.nodes.iter().enumerate() {
                    load[node] += wg * qp.shape[a];
                }
            }
        }
        load
    }

    /// Reduced load induced by prescribed boundary displacements:
    /// −(K_full · g)|interior, where `g_full` carries boundary nodal values
    /// (interior entries must be zero).
    pub fn elastic_boundary_load(&self, g_full: &DVector<f64>) -> DVector<f64> {
        assert_eq!(g_full.len(), 3 * self.mesh.node_count(), "full vector length");
        let mut load = DVector::zeros(self.reduced_dim());
        for cell in self.mesh.cell_nodes() {
            // Skip cells not touching the boundary: their local data is zero.
            if cell.iter().all(|&n| !self.mesh.is_boundary_node(n)) {
                continue;
            }
            let mut local = [0.0; 24];
            for (a, &node) in cell.iter().enumerate() {
                for d in 0..3 {
                    local[3 * a + d] = g_full[3 * node + d];
                }
            }
            for (a, &node) in cell.iter().enumerate() {
                let Some(ia) = self.mesh.interior_index(node) else {
                    continue;
                };
                for d in 0..3 {
                    let mut s = 0.0;
                    for bd in 0..24 {
                        s += self.element_vector_stiffness[(3 * a + d, bd)] * local[bd];
                    }
                    load[3 * ia + d] -= s;
                }
            }
        }
        load
    }
}

/// Strain tensor of the basis field N e_dir with gradient `grad` of N:
/// sym(e_dir ⊗ grad).
fn strain_of_basis(grad: &[f64; 3], dir: usize) -> SymTensor {
    let mut g = [[0.0; 3]; 3];
    for j in 0..3 {
        g[dir][j] = grad[j];
    }
    SymTensor::new(
        g[0][0],
        g[1][1],
        g[2][2],
        0.5 * (g[1][2] + g[2][1]),
        0.5 * (g[0][2] + g[2][0]),
        0.5 * (g[0][1] + g[1][0]),
    )
}
