//! Element and global operators of the coupled piezoelectric system.
//!
//! Discrete equations (free-traction, charge-free natural boundaries):
//!
//! ```text
//! M ü = −K_uu u − K_uφ φ + f
//! K_φφ φ = K_uφᵀ u + q
//! ```
//!
//! with `K_uu = ∫ Bᵀ C B`, `K_uφ = ∫ Bᵀ eᵀ ∇N`, `K_φφ = ∫ ∇Nᵀ ε ∇N` and a
//! row-sum lumped mass. The coupling block is integrated once and used in
//! both equations.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::materials::MaterialSet;
use crate::mesh::{BoxMesh, DofMap, LOCAL_NODES};
use crate::sparse::CsrMatrix;

const GAUSS_2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];
const GAUSS_3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Trilinear shape function values at reference point `xi`.
pub fn shape_values(xi: &Vec3) -> [f64; 8] {
    LOCAL_NODES.map(|n| 0.125 * (1.0 + n[0] * xi[0]) * (1.0 + n[1] * xi[1]) * (1.0 + n[2] * xi[2]))
}

/// Physical gradients of the shape functions for a brick with edge lengths `h`.
pub fn shape_gradients(xi: &Vec3, h: &Vec3) -> [Vec3; 8] {
    LOCAL_NODES.map(|n| {
        let f = [1.0 + n[0] * xi[0], 1.0 + n[1] * xi[1], 1.0 + n[2] * xi[2]];
        [
            0.125 * n[0] * f[1] * f[2] * 2.0 / h[0],
            0.125 * f[0] * n[1] * f[2] * 2.0 / h[1],
            0.125 * f[0] * f[1] * n[2] * 2.0 / h[2],
        ]
    })
}

/// Engineering-strain operator row block for one node (6x3).
pub fn strain_operator(g: &Vec3) -> [[f64; 3]; 6] {
    [
        [g[0], 0.0, 0.0],
        [0.0, g[1], 0.0],
        [0.0, 0.0, g[2]],
        [0.0, g[2], g[1]],
        [g[2], 0.0, g[0]],
        [g[1], g[0], 0.0],
    ]
}

/// Matrices of a single brick. Displacement DOFs are ordered `3 * node + component`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrices {
    pub k_uu: [[f64; 24]; 24],
    pub k_uphi: [[f64; 8]; 24],
    pub k_phiphi: [[f64; 8]; 8],
    /// kg
    pub m_lumped: [f64; 24],
}

pub fn element_matrices(spacing: &Vec3, m: &MaterialSet) -> ElementMatrices {
    let mut k_uu = [[0.0; 24]; 24];
    let mut k_uphi = [[0.0; 8]; 24];
    let mut k_phiphi = [[0.0; 8]; 8];
    let jac = spacing[0] * spacing[1] * spacing[2] / 8.0;
    let c = &m.elastic.voigt;
    let e = &m.piezo.matrix;
    let eps = &m.permittivity.matrix;

    for &(x, wx) in &GAUSS_2 {
        for &(y, wy) in &GAUSS_2 {
            for &(z, wz) in &GAUSS_2 {
                let w = wx * wy * wz * jac;
                let grads = shape_gradients(&[x, y, z], spacing);
                let b: [[[f64; 3]; 6]; 8] = grads.map(|g| strain_operator(&g));
                // C B and eᵀ∇N per node
                let mut cb = [[[0.0; 3]; 6]; 8];
                for a in 0..8 {
                    for i in 0..6 {
                        for comp in 0..3 {
                            cb[a][i][comp] = (0..6).map(|k| c[i][k] * b[a][k][comp]).sum();
                        }
                    }
                }
                let mut etg = [[0.0; 6]; 8];
                for a in 0..8 {
                    for i in 0..6 {
                        etg[a][i] = (0..3).map(|k| e[k][i] * grads[a][k]).sum();
                    }
                }
                for a in 0..8 {
                    for bn in 0..8 {
                        for ca in 0..3 {
                            for cbn in 0..3 {
                                let v: f64 = (0..6).map(|i| b[a][i][ca] * cb[bn][i][cbn]).sum();
                                k_uu[3 * a + ca][3 * bn + cbn] += w * v;
                            }
                            let v: f64 = (0..6).map(|i| b[a][i][ca] * etg[bn][i]).sum();
                            k_uphi[3 * a + ca][bn] += w * v;
                        }
                        let mut v = 0.0;
                        for i in 0..3 {
                            for j in 0..3 {
                                v += grads[a][i] * eps[i][j] * grads[bn][j];
                            }
                        }
                        k_phiphi[a][bn] += w * v;
                    }
                }
            }
        }
    }
    let nodal_mass = m.density * spacing[0] * spacing[1] * spacing[2] / 8.0;
    ElementMatrices { k_uu, k_uphi, k_phiphi, m_lumped: [nodal_mass; 24] }
}

/// Assembled global operators.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub k_uu: CsrMatrix,
    pub k_uphi: CsrMatrix,
    /// Transpose of `k_uphi`, kept for row-oriented products in the potential equation.
    pub k_phiu: CsrMatrix,
    pub k_phiphi: CsrMatrix,
    /// Lumped mass per displacement DOF, kg.
    pub mass: Vec<f64>,
}

impl GlobalSystem {
    pub fn displacement_count(&self) -> usize {
        self.mass.len()
    }

    pub fn potential_count(&self) -> usize {
        self.k_phiphi.nrows()
    }
}

fn dof_node_adjacency(mesh: &BoxMesh, dofs: &DofMap) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::with_capacity(27); dofs.dof_nodes()];
    for e in 0..mesh.element_count() {
        let nodes = mesh.element_nodes(e).map(|n| dofs.dof_node(n));
        for &a in &nodes {
            adj[a].extend_from_slice(&nodes);
        }
    }
    for row in adj.iter_mut() {
        row.sort_unstable();
        row.dedup();
    }
    adj
}

fn blocked_pattern(adj: &[Vec<usize>], row_block: usize, col_block: usize) -> Vec<Vec<usize>> {
    let mut rows = Vec::with_capacity(adj.len() * row_block);
    for cols in adj {
        for _ in 0..row_block {
            let mut r = Vec::with_capacity(cols.len() * col_block);
            for &c in cols {
                for k in 0..col_block {
                    r.push(col_block * c + k);
                }
            }
            rows.push(r);
        }
    }
    rows
}

/// Scatter the (identical) element matrices of a uniform mesh into CSR operators.
pub fn assemble(mesh: &BoxMesh, dofs: &DofMap, m: &MaterialSet) -> GlobalSystem {
    assert_eq!(dofs.node_count(), mesh.node_count(), "dof map built for a different mesh");
    let em = element_matrices(&mesh.spacing, m);
    let adj = dof_node_adjacency(mesh, dofs);
    let nd = dofs.dof_nodes();
    let mut k_uu = CsrMatrix::from_pattern(3 * nd, 3 * nd, blocked_pattern(&adj, 3, 3));
    let mut k_uphi = CsrMatrix::from_pattern(3 * nd, nd, blocked_pattern(&adj, 3, 1));
    let mut k_phiphi = CsrMatrix::from_pattern(nd, nd, blocked_pattern(&adj, 1, 1));
    let mut mass = vec![0.0; 3 * nd];

    for e in 0..mesh.element_count() {
        let nodes = mesh.element_nodes(e).map(|n| dofs.dof_node(n));
        for a in 0..8 {
            for ca in 0..3 {
                let row = 3 * nodes[a] + ca;
                mass[row] += em.m_lumped[3 * a + ca];
                for b in 0..8 {
                    for cb in 0..3 {
                        k_uu.add(row, 3 * nodes[b] + cb, em.k_uu[3 * a + ca][3 * b + cb]);
                    }
                    k_uphi.add(row, nodes[b], em.k_uphi[3 * a + ca][b]);
                }
            }
            for b in 0..8 {
                k_phiphi.add(nodes[a], nodes[b], em.k_phiphi[a][b]);
            }
        }
    }
    let k_phiu = k_uphi.transpose();
    GlobalSystem { k_uu, k_uphi, k_phiu, k_phiphi, mass }
}

/// Consistent nodal load `∫ N_a f` for a vector body force density (N/m³).
pub fn body_load<F: Fn(&Vec3) -> Vec3>(mesh: &BoxMesh, dofs: &DofMap, f: F) -> Vec<f64> {
    let mut out = vec![0.0; dofs.displacement_count()];
    integrate_against_shapes(mesh, |e, p, w, n| {
        let nodes = mesh.element_nodes(e);
        let v = f(p);
        for a in 0..8 {
            for c in 0..3 {
                out[dofs.displacement(nodes[a], c)] += w * n[a] * v[c];
            }
        }
    });
    out
}

/// Consistent nodal charge `∫ N_a q` for a scalar density.
pub fn scalar_load<F: Fn(&Vec3) -> f64>(mesh: &BoxMesh, dofs: &DofMap, q: F) -> Vec<f64> {
    let mut out = vec![0.0; dofs.potential_count()];
    integrate_against_shapes(mesh, |e, p, w, n| {
        let nodes = mesh.element_nodes(e);
        let v = q(p);
        for a in 0..8 {
            out[dofs.potential(nodes[a])] += w * n[a] * v;
        }
    });
    out
}

fn integrate_against_shapes<F: FnMut(usize, &Vec3, f64, &[f64; 8])>(mesh: &BoxMesh, mut visit: F) {
    let jac = mesh.element_volume() / 8.0;
    for e in 0..mesh.element_count() {
        for &(x, wx) in &GAUSS_3 {
            for &(y, wy) in &GAUSS_3 {
                for &(z, wz) in &GAUSS_3 {
                    let xi = [x, y, z];
                    let p = mesh.map_point(e, &xi);
                    visit(e, &p, wx * wy * wz * jac, &shape_values(&xi));
                }
            }
        }
    }
}

/// Free/fixed split of one DOF space.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub free: Vec<usize>,
    pub fixed: Vec<usize>,
    /// `Some(k)` when the DOF is the k-th free DOF.
    pub free_index: Vec<Option<usize>>,
    /// `Some(k)` when the DOF is the k-th fixed DOF.
    pub fixed_index: Vec<Option<usize>>,
}

impl Partition {
    /// `fixed` order is preserved; duplicates are rejected.
    pub fn new(n: usize, fixed: &[usize]) -> Result<Self> {
        let mut fixed_index = vec![None; n];
        for (k, &d) in fixed.iter().enumerate() {
            if d >= n {
                return Err(Error::InvalidArgument(alloc::format!("constrained dof {d} out of range (n = {n})")));
            }
            if fixed_index[d].is_some() {
                return Err(Error::DuplicateConstraint(d));
            }
            fixed_index[d] = Some(k);
        }
        let free: Vec<usize> = (0..n).filter(|&d| fixed_index[d].is_none()).collect();
        let mut free_index = vec![None; n];
        for (k, &d) in free.iter().enumerate() {
            free_index[d] = Some(k);
        }
        Ok(Self { free, fixed: fixed.to_vec(), free_index, fixed_index })
    }

    pub fn len(&self) -> usize {
        self.free_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free_index.is_empty()
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed_index[dof].is_some()
    }
}

/// Symmetric elimination of a square operator: `K_ff x_f = b_f − K_fc x_c`.
#[derive(Debug, Clone)]
pub struct ReducedOperator {
    pub partition: Partition,
    pub k_ff: CsrMatrix,
    pub k_fc: CsrMatrix,
}

impl ReducedOperator {
    pub fn new(k: &CsrMatrix, partition: Partition) -> Self {
        let nf = partition.free.len();
        let nc = partition.fixed.len();
        let k_ff = k.select(&partition.free, &partition.free_index, nf);
        let k_fc = k.select(&partition.free, &partition.fixed_index, nc);
        Self { partition, k_ff, k_fc }
    }

    /// `(free rows, fixed columns)` of the reduced system.
    pub fn dims(&self) -> (usize, usize) {
        (self.k_ff.nrows(), self.k_fc.ncols())
    }

    /// Reduced right-hand side `b_f − K_fc x_c` for a full-length `b`.
    pub fn reduced_rhs(&self, b: &[f64], fixed_values: &[f64]) -> Vec<f64> {
        let mut rhs: Vec<f64> = self.partition.free.iter().map(|&d| b[d]).collect();
        self.k_fc.mul_vec_add(-1.0, fixed_values, &mut rhs);
        rhs
    }

    /// Scatter free and fixed parts back into a full vector.
    pub fn expand(&self, x_free: &[f64], fixed_values: &[f64], out: &mut [f64]) {
        for (k, &d) in self.partition.free.iter().enumerate() {
            out[d] = x_free[k];
        }
        for (k, &d) in self.partition.fixed.iter().enumerate() {
            out[d] = fixed_values[k];
        }
    }
}

/// Which DOF space a constraint refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dof {
    Displacement(usize),
    Potential(usize),
}

/// Constrained views of a [`GlobalSystem`].
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub potential: ReducedOperator,
    pub displacement: Partition,
    /// Values of the fixed potential DOFs, in `potential.partition.fixed` order.
    pub potential_values: Vec<f64>,
    /// Values of the fixed displacement DOFs, in `displacement.fixed` order.
    pub displacement_values: Vec<f64>,
}

impl ConstrainedSystem {
    /// Reduced mechanical stiffness (built on demand; only static solves need it).
    pub fn displacement_operator(&self, system: &GlobalSystem) -> ReducedOperator {
        ReducedOperator::new(&system.k_uu, self.displacement.clone())
    }
}

pub fn constrain(system: &GlobalSystem, fixed: &[(Dof, f64)]) -> Result<ConstrainedSystem> {
    let mut pot = Vec::new();
    let mut pot_values = Vec::new();
    let mut disp = Vec::new();
    let mut disp_values = Vec::new();
    for &(dof, v) in fixed {
        match dof {
            Dof::Potential(d) => {
                pot.push(d);
                pot_values.push(v);
            }
            Dof::Displacement(d) => {
                disp.push(d);
                disp_values.push(v);
            }
        }
    }
    let potential = ReducedOperator::new(&system.k_phiphi, Partition::new(system.potential_count(), &pot)?);
    let displacement = Partition::new(system.displacement_count(), &disp)?;
    Ok(ConstrainedSystem { potential, displacement, potential_values: pot_values, displacement_values: disp_values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{gaas_constants, gaas_device_frame, ElasticTensor, PermittivityTensor, PiezoTensor};
    use crate::mesh::build_box_mesh;

    fn unit_dielectric() -> MaterialSet {
        MaterialSet {
            elastic: ElasticTensor::isotropic(1.0, 1.0),
            piezo: PiezoTensor::ZERO,
            permittivity: PermittivityTensor::isotropic(1.0),
            density: 1.0,
        }
    }

    /// Analytic Q1 Laplacian on the unit cube: ∫∇N_a·∇N_b depends only on how
    /// many coordinates of the two nodes differ: none 1/3, one (edge) 0,
    /// two (face diagonal) −1/12, three (body diagonal) −1/12.
    fn analytic_unit_laplacian(a: usize, b: usize) -> f64 {
        let differ = (0..3).filter(|&k| LOCAL_NODES[a][k] != LOCAL_NODES[b][k]).count();
        match differ {
            0 => 1.0 / 3.0,
            1 => 0.0,
            2 => -1.0 / 12.0,
            _ => -1.0 / 12.0,
        }
    }

    #[test]
    fn dielectric_matches_analytic_laplacian() {
        let em = element_matrices(&[1.0, 1.0, 1.0], &unit_dielectric());
        for a in 0..8 {
            for b in 0..8 {
                assert!((em.k_phiphi[a][b] - analytic_unit_laplacian(a, b)).abs() < 1e-14, "({a},{b})");
            }
        }
    }

    #[test]
    fn element_null_spaces() {
        let h = [50e-9, 30e-9, 40e-9];
        let em = element_matrices(&h, &gaas_device_frame());
        let scale = em.k_uu.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        for c in 0..3 {
            for r in 0..24 {
                let s: f64 = (0..8).map(|b| em.k_uu[r][3 * b + c]).sum();
                assert!(s.abs() < 1e-8 * scale);
            }
        }
        let pscale = em.k_phiphi.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        for row in &em.k_phiphi {
            assert!(row.iter().sum::<f64>().abs() < 1e-8 * pscale);
        }
        for r in 0..24 {
            assert!(em.k_uphi[r].iter().sum::<f64>().abs() < 1e-8 * 1e-7);
        }
    }

    #[test]
    fn symmetric_and_rigid_rotation_free() {
        let h = [1.0, 1.0, 1.0];
        let em = element_matrices(&h, &gaas_device_frame());
        for i in 0..24 {
            for j in 0..24 {
                assert!((em.k_uu[i][j] - em.k_uu[j][i]).abs() < 1e-12 * em.k_uu[0][0]);
            }
        }
        // infinitesimal rotation about z: u = (−y, x, 0)
        let mut u = [0.0; 24];
        for a in 0..8 {
            let p = LOCAL_NODES[a].map(|v| 0.5 * (v + 1.0));
            u[3 * a] = -p[1];
            u[3 * a + 1] = p[0];
        }
        for r in 0..24 {
            let s: f64 = (0..24).map(|c| em.k_uu[r][c] * u[c]).sum();
            assert!(s.abs() < 1e-8 * em.k_uu[0][0]);
        }
    }

    #[test]
    fn zero_piezo_decouples_exactly() {
        let m = gaas_constants().without_piezo();
        let em = element_matrices(&[1e-7, 1e-7, 1e-7], &m);
        assert!(em.k_uphi.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn lumped_mass_sums_to_element_mass() {
        let h = [50e-9, 50e-9, 25e-9];
        let m = gaas_constants();
        let em = element_matrices(&h, &m);
        for c in 0..3 {
            let s: f64 = (0..8).map(|a| em.m_lumped[3 * a + c]).sum();
            let expected = m.density * h[0] * h[1] * h[2];
            assert!((s - expected).abs() < 1e-12 * expected);
        }
        assert!(em.m_lumped.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn single_element_assembly_equals_element_matrices() {
        let mesh = build_box_mesh([1.0, 1.0, 1.0], [1, 1, 1]).unwrap();
        let dofs = DofMap::new(&mesh);
        let m = gaas_device_frame();
        let sys = assemble(&mesh, &dofs, &m);
        let em = element_matrices(&mesh.spacing, &m);
        let nodes = mesh.element_nodes(0);
        for a in 0..8 {
            for b in 0..8 {
                assert_eq!(sys.k_phiphi.get(nodes[a], nodes[b]), em.k_phiphi[a][b]);
                for c in 0..3 {
                    assert_eq!(sys.k_uphi.get(3 * nodes[a] + c, nodes[b]), em.k_uphi[3 * a + c][b]);
                    for d in 0..3 {
                        assert_eq!(sys.k_uu.get(3 * nodes[a] + c, 3 * nodes[b] + d), em.k_uu[3 * a + c][3 * b + d]);
                    }
                }
            }
        }
    }

    #[test]
    fn two_element_shared_face_sums() {
        let mesh = build_box_mesh([2.0, 1.0, 1.0], [2, 1, 1]).unwrap();
        let dofs = DofMap::new(&mesh);
        let sys = assemble(&mesh, &dofs, &unit_dielectric());
        assert_eq!(sys.k_phiphi.nrows(), 12);
        // hand assembly from the analytic element matrix
        let mut dense = [[0.0; 12]; 12];
        for e in 0..2 {
            let nodes = mesh.element_nodes(e);
            for a in 0..8 {
                for b in 0..8 {
                    dense[nodes[a]][nodes[b]] += analytic_unit_laplacian(a, b);
                }
            }
        }
        for i in 0..12 {
            for j in 0..12 {
                assert!((sys.k_phiphi.get(i, j) - dense[i][j]).abs() < 1e-14, "({i},{j})");
            }
        }
        // shared-face node 1 (x = 1, y = 0, z = 0) collects both diagonals
        assert!((sys.k_phiphi.get(1, 1) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn global_symmetry_and_neumann_null_space() {
        let mesh = build_box_mesh([1e-6, 0.2e-6, 0.5e-6], [5, 2, 3]).unwrap();
        let dofs = DofMap::new(&mesh);
        let sys = assemble(&mesh, &dofs, &gaas_device_frame());
        assert!(sys.k_uu.symmetry_defect() <= 1e-12 * sys.k_uu.max_abs());
        assert!(sys.k_phiphi.symmetry_defect() <= 1e-12 * sys.k_phiphi.max_abs());
        let ones = vec![1.0; sys.potential_count()];
        let mut y = vec![0.0; sys.potential_count()];
        sys.k_phiphi.mul_vec(&ones, &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-8 * sys.k_phiphi.max_abs()));
        // coupling transpose consistency
        let t = sys.k_uphi.transpose();
        assert_eq!(t, sys.k_phiu);
    }

    #[test]
    fn partition_rejects_duplicates() {
        assert_eq!(Partition::new(4, &[1, 2, 1]).unwrap_err(), Error::DuplicateConstraint(1));
        assert!(Partition::new(4, &[4]).is_err());
    }

    #[test]
    fn unconstrained_reduction_is_identity() {
        let mesh = build_box_mesh([1.0, 1.0, 1.0], [2, 1, 1]).unwrap();
        let dofs = DofMap::new(&mesh);
        let sys = assemble(&mesh, &dofs, &unit_dielectric());
        let cs = constrain(&sys, &[]).unwrap();
        assert_eq!(cs.potential.k_ff, sys.k_phiphi);
        assert_eq!(cs.potential.dims(), (12, 0));
        let err = constrain(&sys, &[(Dof::Potential(3), 0.0), (Dof::Potential(3), 1.0)]).unwrap_err();
        assert_eq!(err, Error::DuplicateConstraint(3));
    }

    #[test]
    fn body_load_integrates_total_force() {
        let mesh = build_box_mesh([2.0, 1.0, 3.0], [3, 2, 4]).unwrap();
        let dofs = DofMap::new(&mesh);
        let f = body_load(&mesh, &dofs, |_| [1.0, -2.0, 0.5]);
        for (c, want) in [1.0, -2.0, 0.5].iter().enumerate() {
            let s: f64 = (0..dofs.dof_nodes()).map(|n| f[3 * n + c]).sum();
            assert!((s - want * 6.0).abs() < 1e-12);
        }
        let q = scalar_load(&mesh, &dofs, |p| p[0]);
        // ∫ x over the box = (2²/2)·1·3
        assert!((q.iter().sum::<f64>() - 6.0).abs() < 1e-12);
    }
}
