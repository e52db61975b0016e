//! Structured box mesh of identical 8-node bricks, DOF numbering and gate tagging.
//!
//! Nodes are numbered lexicographically with x fastest, then y, then z.
//! Element-local node order is the usual brick order: the bottom face
//! counter-clockwise from (-,-,-), then the top face in the same order.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::pulse::GateLayout;

/// Reference coordinates of the 8 local nodes.
pub const LOCAL_NODES: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

const LOCAL_OFFSETS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMesh {
    /// (Lx, Ly, Lz) in meters; the box spans [0, L] on each axis.
    pub extents: Vec3,
    pub divisions: [usize; 3],
    pub spacing: Vec3,
}

pub fn build_box_mesh(extents: Vec3, divisions: [usize; 3]) -> Result<BoxMesh> {
    for axis in 0..3 {
        if !(extents[axis] > 0.0) || !extents[axis].is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "extent along axis {axis} must be positive, got {}",
                extents[axis]
            )));
        }
        if divisions[axis] == 0 {
            return Err(Error::InvalidArgument(alloc::format!("divisions along axis {axis} must be at least 1")));
        }
    }
    let spacing = [0, 1, 2].map(|a| extents[a] / divisions[a] as f64);
    Ok(BoxMesh { extents, divisions, spacing })
}

impl BoxMesh {
    pub fn nodes_per_axis(&self) -> [usize; 3] {
        self.divisions.map(|n| n + 1)
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    pub fn element_count(&self) -> usize {
        self.divisions.iter().product()
    }

    pub fn element_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn node_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        let [px, py, _] = self.nodes_per_axis();
        ix + px * (iy + py * iz)
    }

    pub fn node_ijk(&self, n: usize) -> [usize; 3] {
        let [px, py, _] = self.nodes_per_axis();
        [n % px, (n / px) % py, n / (px * py)]
    }

    pub fn node_position(&self, n: usize) -> Vec3 {
        let ijk = self.node_ijk(n);
        [0, 1, 2].map(|a| ijk[a] as f64 * self.spacing[a])
    }

    pub fn element_index(&self, ex: usize, ey: usize, ez: usize) -> usize {
        let [nx, ny, _] = self.divisions;
        ex + nx * (ey + ny * ez)
    }

    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let [nx, ny, _] = self.divisions;
        [e % nx, (e / nx) % ny, e / (nx * ny)]
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let [ex, ey, ez] = self.element_ijk(e);
        LOCAL_OFFSETS.map(|[dx, dy, dz]| self.node_index(ex + dx, ey + dy, ez + dz))
    }

    /// Position of the element's (-,-,-) corner.
    pub fn element_origin(&self, e: usize) -> Vec3 {
        let ijk = self.element_ijk(e);
        [0, 1, 2].map(|a| ijk[a] as f64 * self.spacing[a])
    }

    /// Isoparametric map: position of reference point `xi` in element `e`.
    pub fn map_point(&self, e: usize, xi: &Vec3) -> Vec3 {
        let o = self.element_origin(e);
        [0, 1, 2].map(|a| o[a] + 0.5 * (xi[a] + 1.0) * self.spacing[a])
    }

    pub fn is_top_node(&self, n: usize) -> bool {
        self.node_ijk(n)[2] == self.divisions[2]
    }

    /// Find the element containing `p` and its reference coordinates.
    ///
    /// Points on a face shared by two elements go to the lower-index element.
    pub fn locate_point(&self, p: &Vec3) -> Result<(usize, Vec3)> {
        let mut idx = [0usize; 3];
        let mut xi = [0.0; 3];
        for a in 0..3 {
            let tol = 1e-12 * self.extents[a];
            if !(p[a] >= -tol && p[a] <= self.extents[a] + tol) {
                return Err(Error::OutOfDomain { x: p[0], y: p[1], z: p[2] });
            }
            let n = self.divisions[a];
            let s = (p[a] / self.spacing[a]).clamp(0.0, n as f64);
            let nearest = libm::round(s);
            let k = if libm::fabs(s - nearest) <= 1e-9 {
                // on a grid plane: lower-index neighbour
                (nearest as usize).saturating_sub(1).min(n - 1)
            } else {
                (libm::floor(s) as usize).min(n - 1)
            };
            idx[a] = k;
            xi[a] = (2.0 * (s - k as f64) - 1.0).clamp(-1.0, 1.0);
        }
        Ok((self.element_index(idx[0], idx[1], idx[2]), xi))
    }
}

/// Node to DOF numbering. Displacement DOFs and potential DOFs live in
/// separate index spaces (`3 * dof_nodes` and `dof_nodes` entries).
///
/// With periodic axes, nodes on the upper face of a periodic axis share the
/// DOFs of their partner on the lower face.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    node_dof: Vec<usize>,
    dof_nodes: usize,
    periodic: [bool; 3],
}

impl DofMap {
    pub fn new(mesh: &BoxMesh) -> Self {
        Self::periodic(mesh, [false; 3])
    }

    pub fn periodic(mesh: &BoxMesh, periodic: [bool; 3]) -> Self {
        let [px, py, pz] = mesh.nodes_per_axis();
        let reduced = [0, 1, 2].map(|a| if periodic[a] { mesh.divisions[a] } else { mesh.divisions[a] + 1 });
        let mut node_dof = Vec::with_capacity(px * py * pz);
        for iz in 0..pz {
            for iy in 0..py {
                for ix in 0..px {
                    let r = [ix % reduced[0], iy % reduced[1], iz % reduced[2]];
                    node_dof.push(r[0] + reduced[0] * (r[1] + reduced[1] * r[2]));
                }
            }
        }
        Self { node_dof, dof_nodes: reduced.iter().product(), periodic }
    }

    pub fn is_periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn node_count(&self) -> usize {
        self.node_dof.len()
    }

    /// Number of distinct DOF-carrying nodes (equals the node count unless periodic).
    pub fn dof_nodes(&self) -> usize {
        self.dof_nodes
    }

    pub fn displacement_count(&self) -> usize {
        3 * self.dof_nodes
    }

    pub fn potential_count(&self) -> usize {
        self.dof_nodes
    }

    pub fn dof_node(&self, node: usize) -> usize {
        self.node_dof[node]
    }

    pub fn displacement(&self, node: usize, component: usize) -> usize {
        3 * self.node_dof[node] + component
    }

    pub fn potential(&self, node: usize) -> usize {
        self.node_dof[node]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateRole {
    Driven,
    Grounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRegion {
    pub id: usize,
    pub role: GateRole,
    /// Node x-index range covered, inclusive.
    pub columns: (usize, usize),
    pub nodes: Vec<usize>,
}

/// Disjoint gate footprints on the top face: ids 0 (left, grounded),
/// 1 (center, driven), 2 (right, grounded).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRegionSet {
    pub regions: Vec<SurfaceRegion>,
}

impl SurfaceRegionSet {
    pub fn center(&self) -> &[usize] {
        self.regions.iter().find(|r| r.role == GateRole::Driven).map(|r| r.nodes.as_slice()).unwrap_or(&[])
    }

    pub fn grounded(&self) -> impl Iterator<Item = &[usize]> {
        self.regions.iter().filter(|r| r.role == GateRole::Grounded).map(|r| r.nodes.as_slice())
    }

    pub fn total_nodes(&self) -> usize {
        self.regions.iter().map(|r| r.nodes.len()).sum()
    }

    /// Mean x of the driven gate's nodes.
    pub fn center_x(&self, mesh: &BoxMesh) -> f64 {
        let nodes = self.center();
        nodes.iter().map(|&n| mesh.node_position(n)[0]).sum::<f64>() / nodes.len().max(1) as f64
    }
}

/// Snap the three gate footprints to grid columns and collect their top-face nodes.
///
/// The driven gate's left edge snaps to the nearest node column; widths and
/// gaps are rounded to whole cells, so the layout stays mirror-consistent.
pub fn tag_gates(mesh: &BoxMesh, layout: &GateLayout) -> Result<SurfaceRegionSet> {
    let hx = mesh.spacing[0];
    let nx = mesh.divisions[0] as isize;
    let width = libm::round(layout.width / hx) as isize;
    let gap = libm::round(layout.gap / hx) as isize;
    if width < 1 {
        return Err(Error::GateLayout(alloc::format!(
            "gate width {:e} m is below one cell ({hx:e} m)",
            layout.width
        )));
    }
    if gap < 1 {
        return Err(Error::GateLayout(alloc::format!(
            "gate gap {:e} m snaps to zero cells; footprints would overlap",
            layout.gap
        )));
    }
    let center_left = libm::round((0.5 * mesh.extents[0] - 0.5 * layout.width) / hx) as isize;
    let spans = [
        (center_left - gap - width, center_left - gap, GateRole::Grounded),
        (center_left, center_left + width, GateRole::Driven),
        (center_left + width + gap, center_left + 2 * width + gap, GateRole::Grounded),
    ];
    if spans[0].0 < 0 || spans[2].1 > nx {
        return Err(Error::GateLayout("outer gates extend past the top face".into()));
    }
    let [_, py, _] = mesh.nodes_per_axis();
    let iz = mesh.divisions[2];
    let regions = spans
        .iter()
        .enumerate()
        .map(|(id, &(lo, hi, role))| {
            let mut nodes = Vec::with_capacity((hi - lo + 1) as usize * py);
            for iy in 0..py {
                for ix in lo..=hi {
                    nodes.push(mesh.node_index(ix as usize, iy, iz));
                }
            }
            SurfaceRegion { id, role, columns: (lo as usize, hi as usize), nodes }
        })
        .collect();
    Ok(SurfaceRegionSet { regions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;
    use alloc::collections::BTreeSet;

    #[test]
    fn unit_mesh_counts() {
        let m = build_box_mesh([1e-6, 1e-6, 1e-6], [1, 1, 1]).unwrap();
        assert_eq!(m.node_count(), 8);
        assert_eq!(m.element_count(), 1);
        assert_eq!(m.element_nodes(0), [0, 1, 3, 2, 4, 5, 7, 6]);
    }

    #[test]
    fn default_slab_counts_and_spacing() {
        let m = build_box_mesh([16e-6, 0.5e-6, 4e-6], [320, 10, 80]).unwrap();
        assert_eq!(m.node_count(), 321 * 11 * 81);
        assert_eq!(m.element_count(), 320 * 10 * 80);
        let m = build_box_mesh([16e-6, 0.5e-6, 4e-6], [64, 2, 16]).unwrap();
        for h in m.spacing {
            assert!((h - 0.25e-6).abs() < 1e-20);
        }
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(build_box_mesh([0.0, 1.0, 1.0], [1, 1, 1]).is_err());
        assert!(build_box_mesh([1.0, -1.0, 1.0], [1, 1, 1]).is_err());
        assert!(build_box_mesh([1.0, 1.0, 1.0], [1, 0, 1]).is_err());
    }

    #[test]
    fn connectivity_is_conforming() {
        let m = build_box_mesh([3.0, 2.0, 2.0], [3, 2, 2]).unwrap();
        // local faces as node-index quadruples
        const FACES: [[usize; 4]; 6] =
            [[0, 1, 2, 3], [4, 5, 6, 7], [0, 1, 5, 4], [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]];
        let mut count: BTreeMap<[usize; 4], usize> = BTreeMap::new();
        for e in 0..m.element_count() {
            let nodes = m.element_nodes(e);
            for f in FACES {
                let mut key = f.map(|l| nodes[l]);
                key.sort_unstable();
                *count.entry(key).or_default() += 1;
            }
        }
        for (face, c) in count {
            let on_boundary = (0..3).any(|a| {
                let coords: BTreeSet<usize> = face.iter().map(|&n| m.node_ijk(n)[a]).collect();
                coords.len() == 1 && {
                    let v = *coords.iter().next().unwrap();
                    v == 0 || v == m.divisions[a]
                }
            });
            assert_eq!(c, if on_boundary { 1 } else { 2 }, "face {face:?}");
        }
    }

    #[test]
    fn dof_map_is_bijective() {
        let m = build_box_mesh([1.0, 1.0, 1.0], [2, 3, 1]).unwrap();
        let d = DofMap::new(&m);
        let mut seen = BTreeSet::new();
        for n in 0..m.node_count() {
            assert!(seen.insert(d.potential(n)));
            for c in 0..3 {
                assert_eq!(d.displacement(n, c), 3 * d.potential(n) + c);
            }
        }
        assert_eq!(d.potential_count(), m.node_count());
        assert_eq!(d.displacement_count(), 3 * m.node_count());
    }

    #[test]
    fn periodic_dof_map_identifies_faces() {
        let m = build_box_mesh([1.0, 1.0, 1.0], [4, 1, 1]).unwrap();
        let d = DofMap::periodic(&m, [true, true, false]);
        assert_eq!(d.dof_nodes(), 4 * 1 * 2);
        assert_eq!(d.potential(m.node_index(4, 0, 0)), d.potential(m.node_index(0, 0, 0)));
        assert_eq!(d.potential(m.node_index(2, 1, 1)), d.potential(m.node_index(2, 0, 1)));
    }

    #[test]
    fn locate_centroid_and_corners() {
        let m = build_box_mesh([2.0, 2.0, 2.0], [2, 2, 2]).unwrap();
        let (e, xi) = m.locate_point(&[0.5, 1.5, 0.5]).unwrap();
        assert_eq!(m.element_ijk(e), [0, 1, 0]);
        assert!(xi.iter().all(|v| v.abs() < 1e-15));
        let (e, xi) = m.locate_point(&[2.0, 0.0, 2.0]).unwrap();
        assert_eq!(m.element_ijk(e), [1, 0, 1]);
        assert_eq!(xi, [1.0, -1.0, 1.0]);
    }

    #[test]
    fn shared_face_goes_to_lower_element() {
        let m = build_box_mesh([2.0, 1.0, 1.0], [2, 1, 1]).unwrap();
        let (e, xi) = m.locate_point(&[1.0, 0.5, 0.5]).unwrap();
        assert_eq!(e, 0);
        assert!((xi[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn locate_rejects_outside() {
        let m = build_box_mesh([1.0, 1.0, 1.0], [1, 1, 1]).unwrap();
        assert!(matches!(m.locate_point(&[1.1, 0.5, 0.5]), Err(Error::OutOfDomain { .. })));
        assert!(m.locate_point(&[1.0 + 1e-14, 0.5, 0.5]).is_ok());
    }

    #[test]
    fn center_gate_columns_at_50nm() {
        let m = build_box_mesh([16e-6, 50e-9, 4e-6], [320, 1, 80]).unwrap();
        let g = tag_gates(&m, &GateLayout::default()).unwrap();
        let center = g.regions.iter().find(|r| r.role == GateRole::Driven).unwrap();
        assert_eq!(center.columns.1 - center.columns.0 + 1, 6);
        assert_eq!(center.nodes.len(), 6 * 2);
        assert!((g.center_x(&m) - 8e-6).abs() <= 0.5 * m.spacing[0] + 1e-15);
        for r in &g.regions {
            assert!(r.nodes.iter().all(|&n| m.is_top_node(n)));
            // never touching the side faces
            assert!(r.columns.0 > 0 && r.columns.1 < m.divisions[0]);
        }
    }

    #[test]
    fn regions_are_disjoint() {
        let m = build_box_mesh([4e-6, 0.1e-6, 1e-6], [160, 2, 10]).unwrap();
        let g = tag_gates(&m, &GateLayout::default()).unwrap();
        let mut all = BTreeSet::new();
        for r in &g.regions {
            for &n in &r.nodes {
                assert!(all.insert(n));
            }
        }
    }

    #[test]
    fn rejects_overlapping_after_snapping() {
        let m = build_box_mesh([4e-6, 0.1e-6, 1e-6], [10, 1, 4]).unwrap();
        let err = tag_gates(&m, &GateLayout { width: 250e-9, gap: 100e-9 }).unwrap_err();
        assert!(matches!(err, Error::GateLayout(_)));
    }
}
