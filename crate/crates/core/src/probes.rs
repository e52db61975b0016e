//! Field sampling, line records and the amplitude / speed / response-time
//! metrics extracted from them.

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{shape_gradients, shape_values, strain_operator};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::materials::{MaterialSet, VOIGT_PAIRS};
use crate::mesh::{BoxMesh, DofMap};
use crate::timeloop::SimulationState;

/// Which nodal field a probe reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Potential,
    Displacement(usize),
}

/// Uniformly sampled time series at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrace {
    pub position: Vec3,
    pub field: Field,
    pub spacing: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProbeTrace {
    pub fn new(position: Vec3, field: Field, spacing: f64) -> Self {
        Self { position, field, spacing, times: Vec::new(), values: Vec::new() }
    }

    pub fn from_samples(position: Vec3, field: Field, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidArgument("trace times and values differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("trace times must be strictly increasing".into()));
        }
        let spacing = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        Ok(Self { position, field, spacing, times, values })
    }

    pub fn push(&mut self, t: f64, v: f64) {
        self.times.push(t);
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation; clamps outside the sampled window.
    pub fn at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.values, t)
    }
}

pub(crate) fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            if t <= times[0] {
                return values[0];
            }
            if t >= times[n - 1] {
                return values[n - 1];
            }
            let k = times.partition_point(|&s| s <= t).saturating_sub(1).min(n - 2);
            let w = (t - times[k]) / (times[k + 1] - times[k]);
            values[k] + w * (values[k + 1] - values[k])
        }
    }
}

/// Full nodal fields at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub time: f64,
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
}

/// Trilinear interpolation of a nodal scalar (indexed by potential DOF).
pub fn interpolate_scalar(mesh: &BoxMesh, dofs: &DofMap, values: &[f64], e: usize, xi: &Vec3) -> f64 {
    let n = shape_values(xi);
    mesh.element_nodes(e).iter().zip(n).map(|(&node, w)| w * values[dofs.potential(node)]).sum()
}

fn interpolate_displacement(mesh: &BoxMesh, dofs: &DofMap, u: &[f64], c: usize, e: usize, xi: &Vec3) -> f64 {
    let n = shape_values(xi);
    mesh.element_nodes(e).iter().zip(n).map(|(&node, w)| w * u[dofs.displacement(node, c)]).sum()
}

pub fn sample_field(mesh: &BoxMesh, dofs: &DofMap, state: &SimulationState, field: Field, e: usize, xi: &Vec3) -> f64 {
    match field {
        Field::Potential => interpolate_scalar(mesh, dofs, &state.phi, e, xi),
        Field::Displacement(c) => interpolate_displacement(mesh, dofs, &state.u_curr, c, e, xi),
    }
}

/// Value of a nodal field at an arbitrary point.
pub fn sample_point(mesh: &BoxMesh, dofs: &DofMap, phi: &[f64], u: &[f64], field: Field, p: &Vec3) -> Result<f64> {
    let (e, xi) = mesh.locate_point(p)?;
    Ok(match field {
        Field::Potential => interpolate_scalar(mesh, dofs, phi, e, &xi),
        Field::Displacement(c) => interpolate_displacement(mesh, dofs, u, c, e, &xi),
    })
}

/// φ at (x_i, y, z) for every x grid line.
pub fn record_line(mesh: &BoxMesh, dofs: &DofMap, phi: &[f64], z: f64, y: f64) -> Result<Vec<f64>> {
    (0..=mesh.divisions[0])
        .map(|i| {
            let p = [i as f64 * mesh.spacing[0], y, z];
            let (e, xi) = mesh.locate_point(&p)?;
            Ok(interpolate_scalar(mesh, dofs, phi, e, &xi))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeMetrics {
    pub rms: f64,
    pub max_modulus: f64,
    pub window: (f64, f64),
}

pub fn amplitude_metrics(x: &[f64], samples: &[f64]) -> Result<AmplitudeMetrics> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("amplitude metrics need at least one sample".into()));
    }
    let mean_sq = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
    let max_modulus = samples.iter().fold(0.0_f64, |m, v| m.max(libm::fabs(*v)));
    let window = match (x.first(), x.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 0.0),
    };
    Ok(AmplitudeMetrics { rms: libm::sqrt(mean_sq), max_modulus, window })
}

/// Local maximum of |φ| along a line with sub-grid (parabolic) position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub index: usize,
    pub x: f64,
    /// Signed field value at the grid maximum.
    pub value: f64,
}

/// Local maxima of |line| above `floor`; endpoints excluded.
pub fn find_extrema(x: &[f64], line: &[f64], floor: f64) -> Vec<Extremum> {
    let mut out = Vec::new();
    if line.len() < 3 {
        return out;
    }
    for i in 1..line.len() - 1 {
        let (a, b, c) = (libm::fabs(line[i - 1]), libm::fabs(line[i]), libm::fabs(line[i + 1]));
        if b >= a && b > c && b > floor {
            let denom = a - 2.0 * b + c;
            let shift = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            let h = x[i + 1] - x[i];
            out.push(Extremum { index: i, x: x[i] + shift * h, value: line[i] });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedExtremum {
    pub x_start: f64,
    pub x_end: f64,
    /// Signed outward speed relative to the source position, m/s.
    pub speed: f64,
    pub amplitude: f64,
    /// A second candidate lay within one grid cell of the chosen partner.
    pub ambiguous: bool,
}

fn line_floor(line: &[f64], noise_fraction: f64) -> f64 {
    noise_fraction * line.iter().fold(0.0_f64, |m, v| m.max(libm::fabs(*v)))
}

/// Pair extrema of two line records by greedy nearest position on the same
/// side of `center`, and report the outward speed of each pair.
pub fn wavefront_speed(
    x: &[f64],
    first: (&[f64], f64),
    second: (&[f64], f64),
    center: f64,
    noise_fraction: f64,
) -> Result<Vec<TrackedExtremum>> {
    let (line_a, t_a) = first;
    let (line_b, t_b) = second;
    let dt = t_b - t_a;
    if dt == 0.0 {
        return Err(Error::InvalidArgument("snapshots must be separated in time".into()));
    }
    let a = find_extrema(x, line_a, line_floor(line_a, noise_fraction));
    let b = find_extrema(x, line_b, line_floor(line_b, noise_fraction));
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoExtrema);
    }
    let cell = x.get(1).map_or(0.0, |x1| x1 - x[0]);
    let from: Vec<f64> = a.iter().map(|e| e.x).collect();
    Ok(pair_extrema(&a, &from, &b, center, cell)
        .into_iter()
        .map(|(i, j, ambiguous)| {
            let (ea, eb) = (a[i], b[j]);
            let outward = libm::fabs(eb.x - center) - libm::fabs(ea.x - center);
            TrackedExtremum {
                x_start: ea.x,
                x_end: eb.x,
                speed: outward / dt,
                amplitude: libm::fabs(ea.value).max(libm::fabs(eb.value)),
                ambiguous,
            }
        })
        .collect())
}

/// Greedy nearest pairing of `a` (seen from positions `from`) with `b`.
fn pair_extrema(a: &[Extremum], from: &[f64], b: &[Extremum], center: f64, cell: f64) -> Vec<(usize, usize, bool)> {
    let side = |x: f64| x >= center;
    let mut candidates = Vec::new();
    for (i, ea) in a.iter().enumerate() {
        for (j, eb) in b.iter().enumerate() {
            // same side, same polarity
            if side(ea.x) == side(eb.x) && (ea.value >= 0.0) == (eb.value >= 0.0) {
                candidates.push((libm::fabs(eb.x - from[i]), i, j));
            }
        }
    }
    candidates.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap_or(core::cmp::Ordering::Equal));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for &(d, i, j) in &candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        let ambiguous = candidates.iter().any(|&(d2, i2, j2)| i2 == i && j2 != j && d2 - d <= cell);
        pairs.push((i, j, ambiguous));
    }
    pairs
}

/// An extremum followed across several line records.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Least-squares outward speed, m/s.
    pub speed: f64,
    pub ambiguous: bool,
}

impl Track {
    pub fn peak_amplitude(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m: f64, a| m.max(*a))
    }
}

/// Chain consecutive pairings into tracks and fit one speed per track.
/// Once a track has two points, its next position is predicted from the last
/// displacement and pairing is nearest to the prediction. Only tracks spanning
/// at least `min_records` records are returned.
pub fn track_extrema(
    x: &[f64],
    lines: &[Vec<f64>],
    times: &[f64],
    center: f64,
    noise_fraction: f64,
    min_records: usize,
) -> Vec<Track> {
    let cell = x.get(1).map_or(0.0, |x1| x1 - x[0]);
    let extrema: Vec<Vec<Extremum>> =
        lines.iter().map(|l| find_extrema(x, l, line_floor(l, noise_fraction))).collect();
    let mut tracks: Vec<Track> = Vec::new();
    // index of the open track owning each extremum of the previous record
    let mut open: Vec<Option<usize>> = Vec::new();
    for (k, ex) in extrema.iter().enumerate() {
        let mut next_open = vec![None; ex.len()];
        if k > 0 {
            let from: Vec<f64> = extrema[k - 1]
                .iter()
                .zip(&open)
                .map(|(e, t)| match t.map(|t| &tracks[t].positions) {
                    Some(p) if p.len() >= 2 => 2.0 * p[p.len() - 1] - p[p.len() - 2],
                    _ => e.x,
                })
                .collect();
            for (i, j, ambiguous) in pair_extrema(&extrema[k - 1], &from, ex, center, cell) {
                if let Some(t) = open[i] {
                    let tr = &mut tracks[t];
                    tr.times.push(times[k]);
                    tr.positions.push(ex[j].x);
                    tr.amplitudes.push(libm::fabs(ex[j].value));
                    tr.ambiguous |= ambiguous;
                    next_open[j] = Some(t);
                }
            }
        }
        for (j, e) in ex.iter().enumerate() {
            if next_open[j].is_none() {
                tracks.push(Track {
                    times: vec![times[k]],
                    positions: vec![e.x],
                    amplitudes: vec![libm::fabs(e.value)],
                    speed: 0.0,
                    ambiguous: false,
                });
                next_open[j] = Some(tracks.len() - 1);
            }
        }
        open = next_open;
    }
    tracks.retain(|t| t.times.len() >= min_records.max(2));
    for t in tracks.iter_mut() {
        let d: Vec<f64> = t.positions.iter().map(|p| libm::fabs(p - center)).collect();
        t.speed = slope(&t.times, &d);
    }
    tracks
}

/// Which tracks count as propagating modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeFilter {
    /// Records outside `[t_start, t_end]` are ignored, s.
    pub t_start: f64,
    pub t_end: f64,
    pub min_records: usize,
    /// Tracks whose peak is below this fraction of the strongest track are dropped.
    pub min_amplitude_fraction: f64,
    /// Minimum outward distance covered over the track, m; rejects ringing near the gates.
    pub min_travel: f64,
    pub noise_fraction: f64,
}

impl Default for ModeFilter {
    fn default() -> Self {
        Self { t_start: 0.5e-9, t_end: 1.5e-9, min_records: 6, min_amplitude_fraction: 0.25, min_travel: 1e-6, noise_fraction: 0.01 }
    }
}

/// Unambiguous outward-moving tracks that pass `filter`, slowest first.
pub fn mode_speeds(x: &[f64], lines: &[Vec<f64>], times: &[f64], center: f64, filter: &ModeFilter) -> Result<Vec<Track>> {
    let keep: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= filter.t_start && times[k] <= filter.t_end).collect();
    let sel_lines: Vec<Vec<f64>> = keep.iter().map(|&k| lines[k].clone()).collect();
    let sel_times: Vec<f64> = keep.iter().map(|&k| times[k]).collect();
    let tracks = track_extrema(x, &sel_lines, &sel_times, center, filter.noise_fraction, filter.min_records);
    let strongest = tracks.iter().map(Track::peak_amplitude).fold(0.0, f64::max);
    let mut out: Vec<Track> = tracks
        .into_iter()
        .filter(|t| {
            let travel = libm::fabs(t.positions[t.positions.len() - 1] - center) - libm::fabs(t.positions[0] - center);
            !t.ambiguous
                && t.speed > 0.0
                && travel >= filter.min_travel
                && t.peak_amplitude() >= filter.min_amplitude_fraction * strongest
        })
        .collect();
    if out.is_empty() {
        return Err(Error::NoExtrema);
    }
    out.sort_by(|a, b| a.speed.partial_cmp(&b.speed).unwrap_or(core::cmp::Ordering::Equal));
    Ok(out)
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseTime {
    /// First crossing of the equilibrium value after onset, s (∞ if never crossed).
    pub t_c: f64,
    pub equilibrium: f64,
    /// Time after onset from which the trace stays within ±20% of equilibrium, s.
    pub band_time: f64,
}

/// Lattice response time of a trace under a held bias on `[on_start, on_end]`.
pub fn response_time(times: &[f64], values: &[f64], on_start: f64, on_end: f64) -> Result<ResponseTime> {
    if times.len() != values.len() || times.len() < 2 || !(on_end > on_start) {
        return Err(Error::InvalidArgument("response time needs a trace covering the on window".into()));
    }
    let tail_start = on_end - 0.2 * (on_end - on_start);
    let tail: Vec<f64> =
        times.iter().zip(values).filter(|(t, _)| **t >= tail_start && **t <= on_end).map(|(_, v)| *v).collect();
    if tail.is_empty() {
        return Err(Error::InvalidArgument("trace does not cover the end of the on window".into()));
    }
    let eq = tail.iter().sum::<f64>() / tail.len() as f64;

    let window: Vec<(f64, f64)> =
        times.iter().zip(values).filter(|(t, _)| **t >= on_start && **t <= on_end).map(|(t, v)| (*t, *v)).collect();
    let start_sign = (window[0].1 - eq).signum();
    let mut t_c = f64::INFINITY;
    for w in window.windows(2) {
        let (ta, va) = w[0];
        let (tb, vb) = w[1];
        let da = va - eq;
        let db = vb - eq;
        if da == 0.0 {
            t_c = ta - on_start;
            break;
        }
        if db == 0.0 || db.signum() != start_sign {
            let frac = da / (da - db);
            t_c = ta + frac * (tb - ta) - on_start;
            break;
        }
    }

    let band = 0.2 * libm::fabs(eq);
    let inside = |v: f64| libm::fabs(v - eq) <= band;
    let last_outside = window.iter().rposition(|&(_, v)| !inside(v));
    let band_time = match last_outside {
        None => 0.0,
        Some(k) if k + 1 >= window.len() => return Err(Error::NeverSettles),
        Some(k) => {
            let (ta, va) = window[k];
            let (tb, vb) = window[k + 1];
            // entry point into the band edge on the side the trace came from
            let edge = if va > eq { eq + band } else { eq - band };
            let frac = if vb != va { ((edge - va) / (vb - va)).clamp(0.0, 1.0) } else { 1.0 };
            ta + frac * (tb - ta) - on_start
        }
    };
    Ok(ResponseTime { t_c, equilibrium: eq, band_time })
}

/// Index of the largest |φ| on a line.
pub fn find_crest(line: &[f64]) -> Result<usize> {
    let (idx, max) = line
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bm), (i, v)| if libm::fabs(*v) > bm { (i, libm::fabs(*v)) } else { (bi, bm) });
    if max == 0.0 {
        return Err(Error::CrestNotFound);
    }
    Ok(idx)
}

/// Twice the distance from the crest to the nearest opposite-polarity extremum.
pub fn estimate_wavelength(x: &[f64], line: &[f64], crest: usize) -> Result<f64> {
    let sign = line[crest] >= 0.0;
    let floor = 0.05 * libm::fabs(line[crest]);
    let nearest = find_extrema(x, line, floor)
        .into_iter()
        .filter(|e| (e.value >= 0.0) != sign)
        .map(|e| libm::fabs(e.x - x[crest]))
        .fold(f64::INFINITY, f64::min);
    if nearest.is_finite() {
        Ok(2.0 * nearest)
    } else {
        Err(Error::CrestNotFound)
    }
}

/// |φ| two wavelengths below the surface over |φ| at the surface, at `crest_x`.
pub fn surface_localization(
    mesh: &BoxMesh,
    dofs: &DofMap,
    phi: &[f64],
    crest_x: f64,
    y: f64,
    wavelength: f64,
) -> Result<f64> {
    let top = mesh.extents[2];
    let surface = libm::fabs(sample_point(mesh, dofs, phi, &[], Field::Potential, &[crest_x, y, top])?);
    if surface == 0.0 {
        return Err(Error::CrestNotFound);
    }
    let depth = (top - 2.0 * wavelength).max(0.0);
    let deep = libm::fabs(sample_point(mesh, dofs, phi, &[], Field::Potential, &[crest_x, y, depth])?);
    Ok(deep / surface)
}

/// Stress (Pa) and electric displacement (C/m²) at reference point `xi` of element `e`.
pub fn evaluate_stress_and_displacement(
    mesh: &BoxMesh,
    dofs: &DofMap,
    material: &MaterialSet,
    u: &[f64],
    phi: &[f64],
    e: usize,
    xi: &Vec3,
) -> (Mat3, Vec3) {
    let grads = shape_gradients(xi, &mesh.spacing);
    let nodes = mesh.element_nodes(e);
    let mut strain = [0.0; 6];
    let mut field = [0.0; 3];
    for (a, &node) in nodes.iter().enumerate() {
        let b = strain_operator(&grads[a]);
        for (i, s) in strain.iter_mut().enumerate() {
            for c in 0..3 {
                *s += b[i][c] * u[dofs.displacement(node, c)];
            }
        }
        let p = phi[dofs.potential(node)];
        for k in 0..3 {
            field[k] -= grads[a][k] * p;
        }
    }
    let c = &material.elastic.voigt;
    let ep = &material.piezo.matrix;
    let eps = &material.permittivity.matrix;
    let mut stress_v = [0.0; 6];
    for (i, s) in stress_v.iter_mut().enumerate() {
        *s = (0..6).map(|j| c[i][j] * strain[j]).sum::<f64>() - (0..3).map(|k| ep[k][i] * field[k]).sum::<f64>();
    }
    let mut stress = [[0.0; 3]; 3];
    for (i, &(p, q)) in VOIGT_PAIRS.iter().enumerate() {
        stress[p][q] = stress_v[i];
        stress[q][p] = stress_v[i];
    }
    let mut d = [0.0; 3];
    for (i, di) in d.iter_mut().enumerate() {
        *di = (0..3).map(|j| eps[i][j] * field[j]).sum::<f64>() + (0..6).map(|j| ep[i][j] * strain[j]).sum::<f64>();
    }
    (stress, d)
}

/// One of the six faces of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    fn axis_side(self) -> (usize, bool) {
        match self {
            Face::XMin => (0, false),
            Face::XMax => (0, true),
            Face::YMin => (1, false),
            Face::YMax => (1, true),
            Face::ZMin => (2, false),
            Face::ZMax => (2, true),
        }
    }

    pub fn normal(self) -> Vec3 {
        let (axis, high) = self.axis_side();
        let mut n = [0.0; 3];
        n[axis] = if high { 1.0 } else { -1.0 };
        n
    }
}

/// Face-averaged |σ·n| (Pa) and |D·n| (C/m²), evaluated at the centers of the
/// element faces on `face` whose center satisfies `include`.
pub fn face_flux_average(
    mesh: &BoxMesh,
    dofs: &DofMap,
    material: &MaterialSet,
    u: &[f64],
    phi: &[f64],
    face: Face,
    include: &dyn Fn(&Vec3) -> bool,
) -> (f64, f64) {
    let (axis, high) = face.axis_side();
    let n = face.normal();
    let (mut traction, mut charge, mut count) = (0.0, 0.0, 0usize);
    for e in 0..mesh.element_count() {
        let ijk = mesh.element_ijk(e);
        let on_face = if high { ijk[axis] + 1 == mesh.divisions[axis] } else { ijk[axis] == 0 };
        if !on_face {
            continue;
        }
        let mut xi = [0.0; 3];
        xi[axis] = if high { 1.0 } else { -1.0 };
        if !include(&mesh.map_point(e, &xi)) {
            continue;
        }
        let (s, d) = evaluate_stress_and_displacement(mesh, dofs, material, u, phi, e, &xi);
        let t: Vec3 = core::array::from_fn(|i| (0..3).map(|j| s[i][j] * n[j]).sum());
        traction += libm::sqrt(t.iter().map(|v| v * v).sum());
        charge += libm::fabs(d.iter().zip(&n).map(|(a, b)| a * b).sum());
        count += 1;
    }
    if count == 0 {
        return (0.0, 0.0);
    }
    (traction / count as f64, charge / count as f64)
}

/// Mean Frobenius norm of σ at element centers, Pa.
pub fn interior_stress_scale(mesh: &BoxMesh, dofs: &DofMap, material: &MaterialSet, u: &[f64], phi: &[f64]) -> f64 {
    let total: f64 = (0..mesh.element_count())
        .map(|e| {
            let (s, _) = evaluate_stress_and_displacement(mesh, dofs, material, u, phi, e, &[0.0; 3]);
            libm::sqrt(s.iter().flatten().map(|v| v * v).sum())
        })
        .sum();
    total / mesh.element_count() as f64
}

/// Ramp-then-flat fit `m(t) = b + s·min(t, k)`; returns `(k, plateau)`.
///
/// Candidate breakpoints are scanned on a fine grid between the first and
/// last sample; `b` and `s` come from linear least squares at each candidate.
pub fn knee_point(t: &[f64], m: &[f64]) -> Result<(f64, f64)> {
    if t.len() != m.len() || t.len() < 3 {
        return Err(Error::InvalidArgument("knee fit needs at least three points".into()));
    }
    let (lo, hi) = (t[0], t[t.len() - 1]);
    let mut best = (f64::INFINITY, lo, 0.0);
    let candidates = 2000;
    for c in 1..candidates {
        let k = lo + (hi - lo) * c as f64 / candidates as f64;
        let g: Vec<f64> = t.iter().map(|&ti| ti.min(k)).collect();
        let s = slope(&g, m);
        let n = t.len() as f64;
        let b = (m.iter().sum::<f64>() - s * g.iter().sum::<f64>()) / n;
        let sse: f64 = g.iter().zip(m).map(|(gi, mi)| (b + s * gi - mi) * (b + s * gi - mi)).sum();
        if sse < best.0 {
            best = (sse, k, b + s * k);
        }
    }
    Ok((best.1, best.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{gaas_device_frame, GAAS_C11, GAAS_REL_PERMITTIVITY, EPSILON_0};
    use crate::mesh::build_box_mesh;

    fn grid(n: usize, h: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * h).collect()
    }

    #[test]
    fn line_reproduces_constant_and_linear_fields() {
        let mesh = build_box_mesh([1e-6, 1e-7, 1e-6], [10, 1, 10]).unwrap();
        let dofs = DofMap::new(&mesh);
        let c = vec![0.25; dofs.potential_count()];
        let line = record_line(&mesh, &dofs, &c, 0.9e-6, 0.0).unwrap();
        assert!(line.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let lin: Vec<f64> = (0..mesh.node_count()).map(|n| 3.0 * mesh.node_position(n)[2] / 1e-6).collect();
        let line = record_line(&mesh, &dofs, &lin, 0.37e-6, 0.5e-7).unwrap();
        assert!(line.iter().all(|v| (v - 1.11).abs() < 1e-12));
        // at a node: exact nodal value
        let line = record_line(&mesh, &dofs, &lin, 0.8e-6, 0.0).unwrap();
        assert!(line.iter().all(|v| (v - lin[mesh.node_index(0, 0, 8)]).abs() < 1e-14));
    }

    #[test]
    fn amplitude_metrics_cases() {
        let x = grid(4, 1.0);
        let m = amplitude_metrics(&x, &[0.0; 4]).unwrap();
        assert_eq!((m.rms, m.max_modulus), (0.0, 0.0));
        let m = amplitude_metrics(&x, &[-2.0; 4]).unwrap();
        assert_eq!((m.rms, m.max_modulus), (2.0, 2.0));
        assert!(amplitude_metrics(&x, &[]).is_err());
    }

    #[test]
    fn translating_gaussian_speed() {
        let h = 50e-9;
        let x = grid(321, h);
        let center = 8e-6;
        let v = 3000.0;
        let width = 0.4e-6;
        let pulse = |t: f64| -> Vec<f64> {
            x.iter()
                .map(|&xi| {
                    let r = center + 2e-6 + v * t;
                    let l = center - 2e-6 - v * t;
                    libm::exp(-((xi - r) / width).powi(2)) + libm::exp(-((xi - l) / width).powi(2))
                })
                .collect()
        };
        let a = pulse(0.0);
        let b = pulse(0.1e-9);
        let tracked = wavefront_speed(&x, (&a, 0.0), (&b, 0.1e-9), center, 0.01).unwrap();
        assert_eq!(tracked.len(), 2);
        for t in tracked {
            assert!((t.speed - v).abs() < 0.01 * v, "{}", t.speed);
            assert!(!t.ambiguous);
        }
    }

    #[test]
    fn static_field_has_zero_speed_and_reversal_negates() {
        let x = grid(101, 1e-8);
        let line: Vec<f64> = x.iter().map(|&xi| libm::sin(xi / 1e-7)).collect();
        for t in wavefront_speed(&x, (&line, 0.0), (&line, 1e-10), 5e-7, 0.01).unwrap() {
            assert_eq!(t.speed, 0.0);
        }
        let moved: Vec<f64> = x.iter().map(|&xi| libm::sin((xi - 2e-8) / 1e-7)).collect();
        let fwd = wavefront_speed(&x, (&line, 0.0), (&moved, 1e-10), 0.0, 0.01).unwrap();
        let rev = wavefront_speed(&x, (&line, 1e-10), (&moved, 0.0), 0.0, 0.01).unwrap();
        assert_eq!(fwd.len(), rev.len());
        for (f, r) in fwd.iter().zip(&rev) {
            assert!((f.speed + r.speed).abs() < 1e-9 * f.speed.abs().max(1.0));
        }
    }

    #[test]
    fn no_extrema_is_an_error() {
        let x = grid(10, 1.0);
        let zero = vec![0.0; 10];
        assert_eq!(wavefront_speed(&x, (&zero, 0.0), (&zero, 1.0), 5.0, 0.01).unwrap_err(), Error::NoExtrema);
    }

    #[test]
    fn tracks_follow_moving_peaks() {
        let x = grid(401, 25e-9);
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.1e-9).collect();
        let lines: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| x.iter().map(|&xi| libm::exp(-((xi - 7e-6 - 2800.0 * t) / 0.3e-6).powi(2))).collect())
            .collect();
        let tracks = track_extrema(&x, &lines, &times, 5e-6, 0.01, 6);
        assert_eq!(tracks.len(), 1);
        assert!((tracks[0].speed - 2800.0).abs() < 0.01 * 2800.0);
    }

    #[test]
    fn step_response_time() {
        let times: Vec<f64> = (0..101).map(|k| k as f64 * 0.01).collect();
        let values: Vec<f64> = times.iter().map(|&t| if t >= 0.3 - 1e-12 { 2.0 } else { 0.0 }).collect();
        let r = response_time(&times, &values, 0.0, 1.0).unwrap();
        assert!((r.t_c - 0.3).abs() < 1e-9, "{r:?}");
        assert_eq!(r.equilibrium, 2.0);
    }

    #[test]
    fn exponential_band_time() {
        let tau = 1.0;
        let times: Vec<f64> = (0..=40_000).map(|k| k as f64 * 1e-3).collect();
        let values: Vec<f64> = times.iter().map(|&t| 1.0 - libm::exp(-t / tau)).collect();
        let r = response_time(&times, &values, 0.0, 40.0).unwrap();
        let expected = -tau * libm::log(0.2);
        assert!((r.band_time - expected).abs() < 0.02 * expected, "{r:?}");
    }

    #[test]
    fn unsettled_trace_is_an_error() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let values: Vec<f64> = times.iter().map(|&t| if (t as usize) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(response_time(&times, &values, 0.0, 99.0).unwrap_err(), Error::NeverSettles);
    }

    #[test]
    fn exponential_depth_decay_ratio() {
        let lambda = 1e-6;
        let mesh = build_box_mesh([4e-6, 0.1e-6, 4e-6], [40, 1, 400]).unwrap();
        let dofs = DofMap::new(&mesh);
        let top = mesh.extents[2];
        let phi: Vec<f64> = (0..mesh.node_count())
            .map(|n| {
                let p = mesh.node_position(n);
                libm::exp(-(top - p[2]) / (0.5 * lambda)) * libm::cos(p[0] / 1e-6)
            })
            .collect();
        let r = surface_localization(&mesh, &dofs, &phi, 0.0, 0.0, lambda).unwrap();
        assert!((r - libm::exp(-4.0)).abs() < 1e-3 * libm::exp(-4.0), "{r}");
        let uniform = vec![1.0; mesh.node_count()];
        assert!((surface_localization(&mesh, &dofs, &uniform, 1e-6, 0.0, lambda).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wavelength_from_crest_spacing() {
        let x = grid(401, 10e-9);
        let line: Vec<f64> = x.iter().map(|&xi| libm::sin(2.0 * core::f64::consts::PI * xi / 1e-6)).collect();
        let crest = find_crest(&line).unwrap();
        let lambda = estimate_wavelength(&x, &line, crest).unwrap();
        assert!((lambda - 1e-6).abs() < 0.01e-6, "{lambda}");
        assert_eq!(find_crest(&[0.0; 4]).unwrap_err(), Error::CrestNotFound);
    }

    #[test]
    fn constitutive_evaluation() {
        let mesh = build_box_mesh([1e-6, 1e-6, 1e-6], [2, 2, 2]).unwrap();
        let dofs = DofMap::new(&mesh);
        let m = gaas_device_frame();
        let zero_u = vec![0.0; dofs.displacement_count()];
        let zero_phi = vec![0.0; dofs.potential_count()];
        let (s, d) = evaluate_stress_and_displacement(&mesh, &dofs, &m, &zero_u, &zero_phi, 3, &[0.1, -0.2, 0.3]);
        assert!(s.iter().flatten().all(|v| *v == 0.0) && d.iter().all(|v| *v == 0.0));

        // uniaxial ε_zz = s with the piezo part switched off
        let strain = 1e-4;
        let mut u = zero_u.clone();
        for n in 0..mesh.node_count() {
            u[dofs.displacement(n, 2)] = strain * mesh.node_position(n)[2];
        }
        let bare = m.without_piezo();
        let (s, _) = evaluate_stress_and_displacement(&mesh, &dofs, &bare, &u, &zero_phi, 0, &[0.0; 3]);
        assert!((s[2][2] - GAAS_C11 * strain).abs() < 1e-9 * GAAS_C11 * strain);

        // capacitor: φ = −E0 z
        let e0 = 1e5;
        let phi: Vec<f64> = (0..mesh.node_count()).map(|n| -e0 * mesh.node_position(n)[2]).collect();
        let (s, d) = evaluate_stress_and_displacement(&mesh, &dofs, &m, &zero_u, &phi, 5, &[0.3, 0.3, -0.7]);
        let eps = GAAS_REL_PERMITTIVITY * EPSILON_0;
        assert!((d[2] - eps * e0).abs() < 1e-12 * eps * e0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s[i][j], s[j][i]);
            }
        }
    }

    #[test]
    fn knee_of_ramp_plateau() {
        let t: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let m: Vec<f64> = t.iter().map(|&ti| 0.1 + 2.0 * ti.min(0.35)).collect();
        let (k, plateau) = knee_point(&t, &m).unwrap();
        assert!((k - 0.35).abs() < 2e-3, "{k}");
        assert!((plateau - 0.8).abs() < 1e-2);
    }
}
