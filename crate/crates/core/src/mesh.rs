//! Axis-aligned box meshes with uniform hexahedral cells.
//!
//! The domain Ω = (0,L₁)×(0,L₂)×(0,L₃) is split into n₁×n₂×n₃ identical
//! cells. Nodes are numbered lexicographically (x fastest), cells likewise.
//! Local hex numbering follows the usual convention:
//!
//! ```text
//!        7-------6
//!       /|      /|          local node i sits at reference corner
//!      4-------5 |          (ξ_i, η_i, ζ_i) ∈ {−1,+1}³, see XI/ETA/ZETA
//!      | 3-----|-2          in the assembly module.
//!      |/      |/
//!      0-------1
//! ```
//!
//! Every boundary face is tagged with the box side it lies on; Dirichlet
//! conditions eliminate all boundary nodes, Neumann data integrates over the
//! tagged faces.

use crate::{Error, Result};

/// One of the six sides of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceSide {
    XMinus,
    XPlus,
    YMinus,
    YPlus,
    ZMinus,
    ZPlus,
}

impl FaceSide {
    pub const ALL: [FaceSide; 6] = [
        FaceSide::XMinus,
        FaceSide::XPlus,
        FaceSide::YMinus,
        FaceSide::YPlus,
        FaceSide::ZMinus,
        FaceSide::ZPlus,
    ];

    /// Outward unit normal of the side.
    pub fn normal(&self) -> [f64; 3] {
        match self {
            FaceSide::XMinus => [-1.0, 0.0, 0.0],
            FaceSide::XPlus => [1.0, 0.0, 0.0],
            FaceSide::YMinus => [0.0, -1.0, 0.0],
            FaceSide::YPlus => [0.0, 1.0, 0.0],
            FaceSide::ZMinus => [0.0, 0.0, -1.0],
            FaceSide::ZPlus => [0.0, 0.0, 1.0],
        }
    }
}

/// A boundary quad: the four mesh nodes of one cell face lying on ∂Ω,
/// ordered counterclockwise seen from outside.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub side: FaceSide,
    pub nodes: [usize; 4],
}

/// Uniform structured hexahedral mesh of an axis-aligned box.
#[derive(Debug, Clone)]
pub struct BoxMesh {
    extents: [f64; 3],
    cells_per_axis: [usize; 3],
    nodes: Vec<[f64; 3]>,
    cells: Vec<[usize; 8]>,
    faces: Vec<BoundaryFace>,
    is_boundary: Vec<bool>,
    interior_nodes: Vec<usize>,
    /// Position of a node in `interior_nodes`, if interior.
    interior_index: Vec<Option<usize>>,
}

impl BoxMesh {
    pub fn new(extents: [f64; 3], cells_per_axis: [usize; 3]) -> Result<Self> {
        for (i, &l) in extents.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidScenario(format!(
                    "box extent {i} must be positive and finite, got {l}"
                )));
            }
        }
        for (i, &n) in cells_per_axis.iter().enumerate() {
            if n < 2 {
                return Err(Error::InvalidScenario(format!(
                    "need at least 2 cells per axis (axis {i} has {n}); otherwise no interior node exists"
                )));
            }
        }

        let [n1, n2, n3] = cells_per_axis;
        let np = [n1 + 1, n2 + 1, n3 + 1];
        let h = [
            extents[0] / n1 as f64,
            extents[1] / n2 as f64,
            extents[2] / n3 as f64,
        ];

        let node_id = |i: usize, j: usize, k: usize| i + np[0] * (j + np[1] * k);

        let mut nodes = Vec::with_capacity(np[0] * np[1] * np[2]);
        for k in 0..np[2] {
            for j in 0..np[1] {
                for i in 0..np[0] {
                    nodes.push([i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]]);
                }
            }
        }

        let mut cells = Vec::with_capacity(n1 * n2 * n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    cells.push([
                        node_id(i, j, k),
                        node_id(i + 1, j, k),
                        node_id(i + 1, j + 1, k),
                        node_id(i, j + 1, k),
                        node_id(i, j, k + 1),
                        node_id(i + 1, j, k + 1),
                        node_id(i + 1, j + 1, k + 1),
                        node_id(i, j + 1, k + 1),
                    ]);
                }
            }
        }

        let mut faces = Vec::new();
        for k in 0..n3 {
            for j in 0..n2 {
                faces.push(BoundaryFace {
                    side: FaceSide::XMinus,
                    nodes: [
                        node_id(0, j, k),
                        node_id(0, j + 1, k),
                        node_id(0, j + 1, k + 1),
                        node_id(0, j, k + 1),
                    ],
                });
                faces.push(BoundaryFace {
                    side: FaceSide::XPlus,
                    nodes: [
                        node_id(n1, j, k),
                        node_id(n1, j + 1, k),
                        node_id(n1, j + 1, k + 1),
                        node_id(n1, j, k + 1),
                    ],
                });
            }
        }
        for k in 0..n3 {
            for i in 0..n1 {
                faces.push(BoundaryFace {
                    side: FaceSide::YMinus,
                    nodes: [
                        node_id(i, 0, k),
                        node_id(i + 1, 0, k),
                        node_id(i + 1, 0, k + 1),
                        node_id(i, 0, k + 1),
                    ],
                });
                faces.push(BoundaryFace {
                    side: FaceSide::YPlus,
                    nodes: [
                        node_id(i, n2, k),
                        node_id(i + 1, n2, k),
                        node_id(i + 1, n2, k + 1),
                        node_id(i, n2, k + 1),
                    ],
                });
            }
        }
        for j in 0..n2 {
            for i in 0..n1 {
                faces.push(BoundaryFace {
                    side: FaceSide::ZMinus,
                    nodes: [
                        node_id(i, j, 0),
                        node_id(i + 1, j, 0),
                        node_id(i + 1, j + 1, 0),
                        node_id(i, j + 1, 0),
                    ],
                });
                faces.push(BoundaryFace {
                    side: FaceSide::ZPlus,
                    nodes: [
                        node_id(i, j, n3),
                        node_id(i + 1, j, n3),
                        node_id(i + 1, j + 1, n3),
                        node_id(i, j + 1, n3),
                    ],
                });
            }
        }

        let mut is_boundary = vec![false; nodes.len()];
        for k in 0..np[2] {
            for j in 0..np[1] {
                for i in 0..np[0] {
                    if i == 0 || i == n1 || j == 0 || j == n2 || k == 0 || k == n3 {
                        is_boundary[node_id(i, j, k)] = true;
                    }
                }
            }
        }
        let interior_nodes: Vec<usize> = (0..nodes.len()).filter(|&n| !is_boundary[n]).collect();
        let mut interior_index = vec![None; nodes.len()];
        for (idx, &n) in interior_nodes.iter().enumerate() {
            interior_index[n] = Some(idx);
        }

        Ok(Self {
            extents,
            cells_per_axis,
            nodes,
            cells,
            faces,
            is_boundary,
            interior_nodes,
            interior_index,
        })
    }

    /// Unit cube with n cells per axis.
    pub fn unit_cube(n: usize) -> Result<Self> {
        Self::new([1.0, 1.0, 1.0], [n, n, n])
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn cells_per_axis(&self) -> [usize; 3] {
        self.cells_per_axis
    }

    /// Cell edge lengths per axis.
    pub fn spacing(&self) -> [f64; 3] {
        [
            self.extents[0] / self.cells_per_axis[0] as f64,
            self.extents[1] / self.cells_per_axis[1] as f64,
            self.extents[2] / self.cells_per_axis[2] as f64,
        ]
    }

    pub fn volume(&self) -> f64 {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    pub fn surface_area(&self) -> f64 {
        let [a, b, c] = self.extents;
        2.0 * (a * b + b * c + a * c)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_coords(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_nodes(&self) -> &[[usize; 8]] {
        &self.cells
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    pub fn is_boundary_node(&self, n: usize) -> bool {
        self.is_boundary[n]
    }

    /// Interior node ids, ascending.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    /// Position of node `n` in the interior enumeration, if interior.
    pub fn interior_index(&self, n: usize) -> Option<usize> {
        self.interior_index[n]
    }

    /// FNV-1a hash of the mesh descriptor, for cache/dump validation.
    pub fn descriptor_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for &e in &self.extents {
            eat(&e.to_le_bytes());
        }
        for &c in &self.cells_per_axis {
            eat(&(c as u64).to_le_bytes());
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_and_cell_counts() {
        let m = BoxMesh::new([1.0, 2.0, 3.0], [2, 3, 4]).unwrap();
        assert_eq!(m.node_count(), 3 * 4 * 5);
        assert_eq!(m.cell_count(), 2 * 3 * 4);
        assert_eq!(m.boundary_faces().len(), 2 * (3 * 4 + 2 * 4 + 2 * 3));
    }

    #[test]
    fn interior_nodes_of_small_mesh() {
        // 2³ cells: exactly one interior node, at the center.
        let m = BoxMesh::unit_cube(2).unwrap();
        assert_eq!(m.interior_nodes().len(), 1);
        let c = m.node_coords()[m.interior_nodes()[0]];
        assert_eq!(c, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn every_face_node_is_on_its_side() {
        let m = BoxMesh::new([1.0, 1.5, 0.5], [3, 2, 4]).unwrap();
        for f in m.boundary_faces() {
            for &n in &f.nodes {
                let x = m.node_coords()[n];
                let on = match f.side {
                    FaceSide::XMinus => x[0] == 0.0,
                    FaceSide::XPlus => x[0] == m.extents()[0],
                    FaceSide::YMinus => x[1] == 0.0,
                    FaceSide::YPlus => x[1] == m.extents()[1],
                    FaceSide::ZMinus => x[2] == 0.0,
                    FaceSide::ZPlus => x[2] == m.extents()[2],
                };
                assert!(on, "node {n} not on side {:?}", f.side);
            }
        }
    }

    #[test]
    fn boundary_flags_match_coordinates() {
        let m = BoxMesh::unit_cube(3).unwrap();
        for (n, x) in m.node_coords().iter().enumerate() {
            let expect = x.iter().any(|&c| c == 0.0 || c == 1.0);
            assert_eq!(m.is_boundary_node(n), expect);
        }
        assert_eq!(
            m.interior_nodes().len() + m.node_coords().iter().enumerate().filter(|(n, _)| m.is_boundary_node(*n)).count(),
            m.node_count()
        );
    }

    #[test]
    fn too_coarse_mesh_rejected() {
        assert!(BoxMesh::new([1.0, 1.0, 1.0], [1, 2, 2]).is_err());
        assert!(BoxMesh::new([0.0, 1.0, 1.0], [2, 2, 2]).is_err());
    }

    #[test]
    fn descriptor_hash_distinguishes_meshes() {
        let a = BoxMesh::unit_cube(2).unwrap();
        let b = BoxMesh::unit_cube(3).unwrap();
        let c = BoxMesh::new([1.0, 1.0, 2.0], [2, 2, 2]).unwrap();
        assert_ne!(a.descriptor_hash(), b.descriptor_hash());
        assert_ne!(a.descriptor_hash(), c.descriptor_hash());
        assert_eq!(a.descriptor_hash(), BoxMesh::unit_cube(2).unwrap().descriptor_hash());
    }
}
