//! GaAs constants, tensor bookkeeping, crystal rotation and the Christoffel
//! velocity oracle.
//!
//! Voigt convention used everywhere in the crate: the pair index order is
//! (xx, yy, zz, yz, xz, xy) and strain vectors carry engineering shear
//! (γ_yz = 2 ε_yz, ...). Under that convention the full tensors expand without
//! extra factors: `c_ijkl = C[v(i,j)][v(k,l)]` and `e_ijk = E[i][v(j,k)]`.

use crate::error::{Error, Result};
use crate::linalg::{
    self, det3, mat3_mul, mat6_mul, orthogonality_residual, sym3_eigen, transpose3, transpose6, Mat3, Mat6, Vec3,
};

/// Vacuum permittivity, F/m (the three-significant-figure value used for GaAs here).
pub const EPSILON_0: f64 = 8.85e-12;

pub const GAAS_C11: f64 = 11.88e10;
pub const GAAS_C12: f64 = 5.38e10;
pub const GAAS_C44: f64 = 5.94e10;
pub const GAAS_E14: f64 = -0.16;
pub const GAAS_REL_PERMITTIVITY: f64 = 13.18;
pub const GAAS_DENSITY: f64 = 5.36e3;

/// Voigt index of the symmetric pair (i, j).
pub const fn voigt(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) | (2, 1) => 3,
        (0, 2) | (2, 0) => 4,
        (0, 1) | (1, 0) => 5,
        _ => panic!("tensor index out of range"),
    }
}

/// Inverse of [`voigt`]: the canonical pair for a Voigt index.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// 6x6 stiffness in Voigt form, N/m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticTensor {
    pub voigt: Mat6,
}

impl ElasticTensor {
    pub fn cubic(c11: f64, c12: f64, c44: f64) -> Self {
        let mut c = [[0.0; 6]; 6];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = if i == j { c11 } else { c12 };
            }
            c[i + 3][i + 3] = c44;
        }
        Self { voigt: c }
    }

    pub fn isotropic(lambda: f64, mu: f64) -> Self {
        Self::cubic(lambda + 2.0 * mu, lambda, mu)
    }

    pub fn full(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.voigt[voigt(i, j)][voigt(k, l)]
    }

    pub fn to_full(&self) -> [[[[f64; 3]; 3]; 3]; 3] {
        let mut out = [[[[0.0; 3]; 3]; 3]; 3];
        for (i, a) in out.iter_mut().enumerate() {
            for (j, b) in a.iter_mut().enumerate() {
                for (k, c) in b.iter_mut().enumerate() {
                    for (l, d) in c.iter_mut().enumerate() {
                        *d = self.full(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// Compress a full 4th-rank tensor. Uses the canonical pair of each Voigt index.
    pub fn from_full(c: &[[[[f64; 3]; 3]; 3]; 3]) -> Self {
        let mut v = [[0.0; 6]; 6];
        for (row, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
            for (col, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
                v[row][col] = c[i][j][k][l];
            }
        }
        Self { voigt: v }
    }
}

/// 3x6 piezoelectric stress constants, C/m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiezoTensor {
    pub matrix: [[f64; 6]; 3],
}

impl PiezoTensor {
    pub const ZERO: Self = Self { matrix: [[0.0; 6]; 3] };

    /// Zinc-blende (point group -43m) form: e_14 = e_25 = e_36.
    pub fn zincblende(e14: f64) -> Self {
        let mut m = [[0.0; 6]; 3];
        m[0][3] = e14;
        m[1][4] = e14;
        m[2][5] = e14;
        Self { matrix: m }
    }

    pub fn full(&self, i: usize, j: usize, k: usize) -> f64 {
        self.matrix[i][voigt(j, k)]
    }

    pub fn to_full(&self) -> [[[f64; 3]; 3]; 3] {
        let mut out = [[[0.0; 3]; 3]; 3];
        for (i, a) in out.iter_mut().enumerate() {
            for (j, b) in a.iter_mut().enumerate() {
                for (k, c) in b.iter_mut().enumerate() {
                    *c = self.full(i, j, k);
                }
            }
        }
        out
    }

    pub fn from_full(e: &[[[f64; 3]; 3]; 3]) -> Self {
        let mut m = [[0.0; 6]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (col, &(j, k)) in VOIGT_PAIRS.iter().enumerate() {
                row[col] = e[i][j][k];
            }
        }
        Self { matrix: m }
    }
}

/// Clamped (constant-strain) permittivity, F/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermittivityTensor {
    pub matrix: Mat3,
}

impl PermittivityTensor {
    pub fn isotropic(eps: f64) -> Self {
        Self { matrix: [[eps, 0.0, 0.0], [0.0, eps, 0.0], [0.0, 0.0, eps]] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSet {
    pub elastic: ElasticTensor,
    pub piezo: PiezoTensor,
    pub permittivity: PermittivityTensor,
    /// kg/m³
    pub density: f64,
}

impl MaterialSet {
    pub fn new(
        elastic: ElasticTensor,
        piezo: PiezoTensor,
        permittivity: PermittivityTensor,
        density: f64,
    ) -> Result<Self> {
        if !(density > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("density must be positive, got {density}")));
        }
        Ok(Self { elastic, piezo, permittivity, density })
    }

    /// Same material with the piezoelectric coupling switched off.
    pub fn without_piezo(&self) -> Self {
        Self { piezo: PiezoTensor::ZERO, ..*self }
    }
}

/// Rotation whose rows are the device axes expressed in crystal coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrystalOrientation {
    pub rotation: Mat3,
}

impl CrystalOrientation {
    pub const IDENTITY: Self = Self { rotation: linalg::IDENTITY3 };

    pub fn new(rotation: Mat3) -> Result<Self> {
        let residual = orthogonality_residual(&rotation);
        if residual > 1e-8 {
            return Err(Error::NonOrthogonalRotation { residual });
        }
        if det3(&rotation) < 0.0 {
            return Err(Error::InvalidArgument("rotation has determinant -1".into()));
        }
        Ok(Self { rotation })
    }

    /// Map a vector from crystal to device coordinates.
    pub fn to_device(&self, v: &Vec3) -> Vec3 {
        linalg::mat3_vec(&self.rotation, v)
    }
}

/// GaAs in its cubic crystal frame.
pub fn gaas_constants() -> MaterialSet {
    MaterialSet {
        elastic: ElasticTensor::cubic(GAAS_C11, GAAS_C12, GAAS_C44),
        piezo: PiezoTensor::zincblende(GAAS_E14),
        permittivity: PermittivityTensor::isotropic(GAAS_REL_PERMITTIVITY * EPSILON_0),
        density: GAAS_DENSITY,
    }
}

/// Device x along [011], z along [100], y = z × x = [0,-1,1]/√2.
pub fn device_frame_orientation() -> CrystalOrientation {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    CrystalOrientation { rotation: [[0.0, s, s], [0.0, -s, s], [1.0, 0.0, 0.0]] }
}

/// Bond stress-transformation matrix `M` with `σ' = M σ` for Voigt stress.
pub fn bond_stress_matrix(a: &Mat3) -> Mat6 {
    let mut m = [[0.0; 6]; 6];
    for (row, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        for (col, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
            m[row][col] = if k == l { a[i][k] * a[j][l] } else { a[i][k] * a[j][l] + a[i][l] * a[j][k] };
        }
    }
    m
}

/// Bond strain-transformation matrix `N` with `γ' = N γ` for engineering Voigt strain.
pub fn bond_strain_matrix(a: &Mat3) -> Mat6 {
    let mut n = [[0.0; 6]; 6];
    for (row, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        for (col, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
            let base = if k == l { a[i][k] * a[j][l] } else { a[i][k] * a[j][l] + a[i][l] * a[j][k] };
            n[row][col] = if i == j { if k == l { base } else { base * 0.5 } } else if k == l { 2.0 * base } else { base };
        }
    }
    n
}

/// Rotate all material tensors into the frame described by `r`.
pub fn bond_rotate(m: &MaterialSet, r: &CrystalOrientation) -> Result<MaterialSet> {
    let residual = orthogonality_residual(&r.rotation);
    if residual > 1e-8 {
        return Err(Error::NonOrthogonalRotation { residual });
    }
    let a = &r.rotation;
    let bm = bond_stress_matrix(a);
    let bm_t = transpose6(&bm);
    let elastic = ElasticTensor { voigt: mat6_mul(&mat6_mul(&bm, &m.elastic.voigt), &bm_t) };

    // e' = a · e · Mᵀ  (Mᵀ = N⁻¹ for proper rotations)
    let mut ae = [[0.0; 6]; 3];
    for i in 0..3 {
        for col in 0..6 {
            ae[i][col] = (0..3).map(|p| a[i][p] * m.piezo.matrix[p][col]).sum();
        }
    }
    let mut piezo = [[0.0; 6]; 3];
    for i in 0..3 {
        for col in 0..6 {
            piezo[i][col] = (0..6).map(|k| ae[i][k] * bm_t[k][col]).sum();
        }
    }

    let permittivity = mat3_mul(&mat3_mul(a, &m.permittivity.matrix), &transpose3(a));

    Ok(MaterialSet {
        elastic,
        piezo: PiezoTensor { matrix: piezo },
        permittivity: PermittivityTensor { matrix: permittivity },
        density: m.density,
    })
}

/// GaAs rotated into the device frame used by the simulator.
pub fn gaas_device_frame() -> MaterialSet {
    bond_rotate(&gaas_constants(), &device_frame_orientation()).expect("device frame rotation is orthogonal")
}

/// Christoffel acoustic tensor Γ_il = c_ijkl n_j n_k, optionally with the
/// piezoelectric stiffening (γ γᵀ)/(n·ε·n), γ_i = e_kij n_k n_j.
pub fn christoffel_matrix(m: &MaterialSet, n: &Vec3, stiffened: bool) -> Mat3 {
    let mut gamma = [[0.0; 3]; 3];
    for i in 0..3 {
        for l in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    s += m.elastic.full(i, j, k, l) * n[j] * n[k];
                }
            }
            gamma[i][l] = s;
        }
    }
    if stiffened {
        let mut g = [0.0; 3];
        for (i, gi) in g.iter_mut().enumerate() {
            for k in 0..3 {
                for j in 0..3 {
                    *gi += m.piezo.full(k, i, j) * n[k] * n[j];
                }
            }
        }
        let eps_n = linalg::dot3(n, &linalg::mat3_vec(&m.permittivity.matrix, n));
        for i in 0..3 {
            for l in 0..3 {
                gamma[i][l] += g[i] * g[l] / eps_n;
            }
        }
    }
    gamma
}

/// Plane-wave phase velocities along `direction`, m/s, sorted descending.
pub fn christoffel_velocities(m: &MaterialSet, direction: &Vec3, stiffened: bool) -> Result<[f64; 3]> {
    Ok(christoffel_modes(m, direction, stiffened)?.map(|(v, _)| v))
}

/// Phase velocities with their polarization vectors, sorted by descending speed.
pub fn christoffel_modes(m: &MaterialSet, direction: &Vec3, stiffened: bool) -> Result<[(f64, Vec3); 3]> {
    let norm = linalg::norm3(direction);
    if libm::fabs(norm - 1.0) > 1e-9 {
        return Err(Error::NonUnitDirection { norm });
    }
    let gamma = christoffel_matrix(m, direction, stiffened);
    let (w, v) = sym3_eigen(&gamma);
    let mut modes = [0, 1, 2].map(|c| (libm::sqrt(w[c].max(0.0) / m.density), [v[0][c], v[1][c], v[2][c]]));
    modes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));
    Ok(modes)
}

/// Largest Christoffel velocity over the axes, face diagonals and body diagonals.
pub fn max_sampled_velocity(m: &MaterialSet, stiffened: bool) -> f64 {
    let s2 = core::f64::consts::FRAC_1_SQRT_2;
    let s3 = 1.0 / libm::sqrt(3.0);
    let mut dirs: alloc::vec::Vec<Vec3> = alloc::vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        for sign in [1.0, -1.0] {
            let mut d = [0.0; 3];
            d[a] = s2;
            d[b] = sign * s2;
            dirs.push(d);
        }
    }
    for sy in [1.0, -1.0] {
        for sz in [1.0, -1.0] {
            dirs.push([s3, sy * s3, sz * s3]);
        }
    }
    dirs.iter()
        .filter_map(|d| christoffel_velocities(m, d, stiffened).ok())
        .map(|v| v[0])
        .fold(0.0, f64::max)
}
