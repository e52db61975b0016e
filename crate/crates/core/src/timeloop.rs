//! Operator-split time integration of the coupled system.
//!
//! Each step first solves the quasi-static potential for the current
//! displacement and gate voltages, then advances the displacement with the
//! explicit central-difference update on the lumped mass:
//!
//! ```text
//! K_φφ φⁿ = K_uφᵀ uⁿ + qⁿ              (gate nodes Dirichlet)
//! uⁿ⁺¹ = 2uⁿ − uⁿ⁻¹ + Δt² M⁻¹ (−K_uu uⁿ − K_uφ φⁿ + fⁿ)
//! ```

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{assemble, GlobalSystem, Partition, ReducedOperator};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::materials::{max_sampled_velocity, MaterialSet};
use crate::mesh::{tag_gates, BoxMesh, DofMap, SurfaceRegionSet};
use crate::probes::{record_line, sample_field, Field, FieldSnapshot, ProbeTrace};
use crate::pulse::{pulse_value, GateLayout, TrapezoidalPulse};
use crate::cholesky::EnvelopeCholesky;
use crate::solver::{CgConfig, CgOutcome, CgSolver, LinearSolver};
use crate::sparse::{dot, norm, CsrMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub u_curr: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_prev: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

impl SimulationState {
    pub fn at_rest(n_u: usize, n_phi: usize) -> Self {
        Self {
            u_curr: vec![0.0; n_u],
            u_prev: vec![0.0; n_u],
            phi: vec![0.0; n_phi],
            phi_prev: vec![0.0; n_phi],
            t: 0.0,
            step: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u_curr.iter().chain(self.phi.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub cg_iterations: usize,
    pub residual: f64,
    pub max_u: f64,
    pub max_phi: f64,
    /// Staggered discrete energy ½ vᵀMv + ½ uⁿᵀK_uu uⁿ⁻¹ + ½ φⁿᵀK_φφ φⁿ⁻¹, J.
    /// Exactly conserved by the scheme once the gates are grounded and no forcing acts.
    pub energy: f64,
}

/// Boundary treatment of the two y faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YFaces {
    /// Mirror symmetry: u_y = 0, zero shear traction, D_y = 0. Makes a thin
    /// slab behave as plane strain.
    Symmetric,
    /// Traction-free and charge-free like every other face.
    Free,
}

/// Assembled device: mesh, operators and the constrained DOF sets.
/// Geometry-only; the pulse is supplied per run so one device serves a sweep.
#[derive(Debug, Clone)]
pub struct Device {
    pub mesh: BoxMesh,
    pub dofs: DofMap,
    pub material: MaterialSet,
    pub system: GlobalSystem,
    pub regions: Option<SurfaceRegionSet>,
    /// Reduced potential operator; fixed DOFs are the Dirichlet nodes.
    pub potential: ReducedOperator,
    /// For each fixed potential DOF, whether it follows the pulse (else 0 V).
    pub driven: Vec<bool>,
    /// Fixed (zero) displacement DOFs.
    pub displacement: Partition,
}

impl Device {
    /// Three surface gates, central one driven, outer two grounded.
    pub fn gated(mesh: BoxMesh, material: MaterialSet, layout: &GateLayout, y_faces: YFaces) -> Result<Self> {
        let dofs = DofMap::new(&mesh);
        let regions = tag_gates(&mesh, layout)?;
        let mut fixed = Vec::with_capacity(regions.total_nodes());
        let mut driven = Vec::with_capacity(regions.total_nodes());
        for &n in regions.center() {
            fixed.push(dofs.potential(n));
            driven.push(true);
        }
        for r in regions.grounded() {
            for &n in r {
                fixed.push(dofs.potential(n));
                driven.push(false);
            }
        }
        let fixed_u = match y_faces {
            YFaces::Free => Vec::new(),
            YFaces::Symmetric => {
                let ny = mesh.divisions[1];
                (0..mesh.node_count())
                    .filter(|&n| {
                        let iy = mesh.node_ijk(n)[1];
                        iy == 0 || iy == ny
                    })
                    .map(|n| dofs.displacement(n, 1))
                    .collect()
            }
        };
        let mut dev = Self::custom(mesh, dofs, material, &fixed, &fixed_u)?;
        dev.driven = driven;
        dev.regions = Some(regions);
        Ok(dev)
    }

    /// Arbitrary fixed potential and displacement DOFs (all held at zero).
    pub fn custom(
        mesh: BoxMesh,
        dofs: DofMap,
        material: MaterialSet,
        fixed_potential: &[usize],
        fixed_displacement: &[usize],
    ) -> Result<Self> {
        let system = assemble(&mesh, &dofs, &material);
        let partition = Partition::new(system.potential_count(), fixed_potential)?;
        let potential = ReducedOperator::new(&system.k_phiphi, partition);
        let displacement = Partition::new(system.displacement_count(), fixed_displacement)?;
        Ok(Self {
            driven: vec![false; fixed_potential.len()],
            mesh,
            dofs,
            material,
            system,
            regions: None,
            potential,
            displacement,
        })
    }

    /// Fixed potential values at time `t` in partition order.
    pub fn potential_values(&self, pulse: &TrapezoidalPulse, t: f64) -> Vec<f64> {
        let v = pulse_value(pulse, t);
        self.driven.iter().map(|&d| if d { v } else { 0.0 }).collect()
    }

    pub fn stable_dt(&self, safety: f64) -> f64 {
        stable_dt(&self.mesh, &self.material, safety)
    }
}

/// Explicit-scheme time step bound `safety · h_min / v_max`.
pub fn stable_dt(mesh: &BoxMesh, m: &MaterialSet, safety: f64) -> f64 {
    let h_min = mesh.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    safety * h_min / max_sampled_velocity(m, false)
}

/// Solve the potential equation for displacement `u` with Dirichlet values `gates`
/// (potential DOF, volts). One-shot convenience over [`PotentialSolver`].
pub fn electrostatic_solve(sys: &GlobalSystem, u: &[f64], gates: &[(usize, f64)], cfg: &CgConfig) -> Result<Vec<f64>> {
    let fixed: Vec<usize> = gates.iter().map(|g| g.0).collect();
    let values: Vec<f64> = gates.iter().map(|g| g.1).collect();
    let reduced = ReducedOperator::new(&sys.k_phiphi, Partition::new(sys.potential_count(), &fixed)?);
    let mut solver = PotentialSolver::new(&reduced, *cfg)?;
    let mut phi = vec![0.0; sys.potential_count()];
    solver.solve(sys, &reduced, u, &values, None, &mut phi)?;
    Ok(phi)
}

#[derive(Debug, Clone)]
enum Backend {
    Cg(CgSolver),
    Direct(EnvelopeCholesky),
}

/// Repeated potential solves against one reduced operator; CG is warm-started
/// from the incoming potential.
#[derive(Debug, Clone)]
pub struct PotentialSolver {
    backend: Backend,
    b: Vec<f64>,
    rhs: Vec<f64>,
    x: Vec<f64>,
    check: Vec<f64>,
}

impl PotentialSolver {
    pub fn new(reduced: &ReducedOperator, cfg: CgConfig) -> Result<Self> {
        Self::with_backend(reduced, cfg, LinearSolver::ConjugateGradient)
    }

    pub fn with_backend(reduced: &ReducedOperator, cfg: CgConfig, kind: LinearSolver) -> Result<Self> {
        if reduced.partition.fixed.is_empty() {
            return Err(Error::UnconstrainedPotential);
        }
        let nf = reduced.partition.free.len();
        let backend = match kind {
            LinearSolver::ConjugateGradient => Backend::Cg(CgSolver::new(&reduced.k_ff, cfg)?),
            LinearSolver::Cholesky => Backend::Direct(EnvelopeCholesky::factor(&reduced.k_ff)?),
        };
        Ok(Self {
            backend,
            b: vec![0.0; reduced.partition.len()],
            rhs: vec![0.0; nf],
            x: vec![0.0; nf],
            check: Vec::new(),
        })
    }

    /// Overwrites `phi`; its incoming free values are the initial guess.
    pub fn solve(
        &mut self,
        sys: &GlobalSystem,
        reduced: &ReducedOperator,
        u: &[f64],
        fixed_values: &[f64],
        charge: Option<&[f64]>,
        phi: &mut [f64],
    ) -> Result<CgOutcome> {
        sys.k_phiu.mul_vec(u, &mut self.b);
        if let Some(q) = charge {
            for (b, q) in self.b.iter_mut().zip(q) {
                *b += q;
            }
        }
        for (k, &d) in reduced.partition.free.iter().enumerate() {
            self.rhs[k] = self.b[d];
            self.x[k] = phi[d];
        }
        reduced.k_fc.mul_vec_add(-1.0, fixed_values, &mut self.rhs);
        let out = match &mut self.backend {
            Backend::Cg(cg) => cg.solve(&reduced.k_ff, &self.rhs, &mut self.x)?,
            Backend::Direct(chol) => {
                chol.solve(&self.rhs, &mut self.x);
                self.check.resize(self.rhs.len(), 0.0);
                reduced.k_ff.mul_vec(&self.x, &mut self.check);
                let b_norm = norm(&self.rhs);
                let r: f64 = libm::sqrt(self.check.iter().zip(&self.rhs).map(|(a, b)| (a - b) * (a - b)).sum());
                CgOutcome { iterations: 0, residual: if b_norm > 0.0 { r / b_norm } else { r } }
            }
        };
        reduced.expand(&self.x, fixed_values, phi);
        Ok(out)
    }
}

/// Central-difference displacement update. Fixed DOFs are held at zero.
///
/// `force` is an optional external nodal load (N) added to the internal forces.
pub fn mechanical_step(
    sys: &GlobalSystem,
    fixed: &Partition,
    state: &SimulationState,
    phi: &[f64],
    force: Option<&[f64]>,
    dt: f64,
) -> Vec<f64> {
    let mut scratch = vec![0.0; sys.displacement_count()];
    let mut next = vec![0.0; sys.displacement_count()];
    mechanical_step_into(sys, fixed, &state.u_curr, &state.u_prev, phi, force, dt, &mut scratch, &mut next);
    next
}

#[allow(clippy::too_many_arguments)]
fn mechanical_step_into(
    sys: &GlobalSystem,
    fixed: &Partition,
    u: &[f64],
    u_prev: &[f64],
    phi: &[f64],
    force: Option<&[f64]>,
    dt: f64,
    scratch: &mut [f64],
    next: &mut [f64],
) {
    sys.k_uu.mul_vec(u, scratch);
    sys.k_uphi.mul_vec_add(1.0, phi, scratch);
    let dt2 = dt * dt;
    for i in 0..next.len() {
        if fixed.is_fixed(i) {
            next[i] = 0.0;
            continue;
        }
        let f = force.map_or(0.0, |f| f[i]);
        next[i] = 2.0 * u[i] - u_prev[i] + dt2 * (f - scratch[i]) / sys.mass[i];
    }
}

/// External loads for forced runs (manufactured solutions).
pub trait Forcing {
    /// Nodal mechanical load at time `t`, written into `out` (length = displacement DOFs).
    fn mechanical(&self, t: f64, out: &mut [f64]);
    /// Nodal charge term added to the potential right-hand side (length = potential DOFs).
    fn charge(&self, t: f64, out: &mut [f64]);
}

/// A point probe sampled every `every` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProbe {
    pub position: Vec3,
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingPlan {
    /// Cadence of line records and the grid snapshots are aligned to, s.
    pub interval: f64,
    /// Depths below the top face at which φ is recorded along x.
    pub line_depths: Vec<f64>,
    /// y coordinate of the recorded lines.
    pub line_y: f64,
    pub points: Vec<PointProbe>,
    /// Point probes are sampled every this many steps.
    pub point_every: usize,
    pub snapshot_times: Vec<f64>,
}

impl Default for RecordingPlan {
    fn default() -> Self {
        Self {
            interval: 0.1e-9,
            line_depths: vec![100e-9],
            line_y: 0.0,
            points: Vec::new(),
            point_every: 1,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub pulse: TrapezoidalPulse,
    pub t_end: f64,
    /// Upper bound on the time step; `None` uses `stable_dt(safety)`.
    pub dt: Option<f64>,
    pub safety: f64,
    pub cg: CgConfig,
    pub linear_solver: LinearSolver,
    pub recording: RecordingPlan,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            pulse: TrapezoidalPulse::default(),
            t_end: 2.0e-9,
            dt: None,
            safety: 0.5,
            cg: CgConfig::default(),
            linear_solver: LinearSolver::default(),
            recording: RecordingPlan::default(),
        }
    }
}

/// φ along x at one depth, one row per record time.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSeries {
    pub depth: f64,
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dt: f64,
    pub steps: usize,
    pub lines: Vec<LineSeries>,
    pub points: Vec<ProbeTrace>,
    pub snapshots: Vec<FieldSnapshot>,
    pub reports: Vec<StepReport>,
    pub final_state: SimulationState,
}

/// Pick the step: at most the requested/stable bound and an integer divisor of
/// the recording interval, so records land exactly on step times.
pub fn aligned_dt(bound: f64, interval: f64) -> f64 {
    let per = libm::ceil(interval / bound - 1e-9).max(1.0);
    interval / per
}

/// Run the coupled simulation from rest to `t_end`.
pub fn run(device: &Device, params: &RunParams) -> Result<RunOutput> {
    run_with(device, params, None, |_, _| {})
}

/// [`run`] with optional forcing and a per-step observer.
pub fn run_with<F: FnMut(&SimulationState, &StepReport)>(
    device: &Device,
    params: &RunParams,
    forcing: Option<&dyn Forcing>,
    observe: F,
) -> Result<RunOutput> {
    let sys = &device.system;
    let rest = SimulationState::at_rest(sys.displacement_count(), sys.potential_count());
    run_from(device, params, rest, forcing, observe)
}

/// Start from `initial` (`u_curr` = uⁿ at t = 0, `u_prev` = uⁿ⁻¹ one step earlier).
///
/// The step is only known inside the run, so callers that need a consistent
/// `u_prev` should fix `params.dt` to an aligned value (see [`aligned_dt`]).
pub fn run_from<F: FnMut(&SimulationState, &StepReport)>(
    device: &Device,
    params: &RunParams,
    initial: SimulationState,
    forcing: Option<&dyn Forcing>,
    mut observe: F,
) -> Result<RunOutput> {
    if !(params.t_end > 0.0) {
        return Err(Error::InvalidArgument("t_end must be positive".into()));
    }
    if !(params.safety > 0.0 && params.safety <= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("safety must lie in (0, 1], got {}", params.safety)));
    }
    let plan = &params.recording;
    if !(plan.interval > 0.0) || plan.point_every == 0 {
        return Err(Error::InvalidArgument("recording interval and point cadence must be positive".into()));
    }
    let stable = device.stable_dt(params.safety);
    let bound = params.dt.map_or(stable, |d| d.min(stable));
    let dt = aligned_dt(bound, plan.interval);
    let steps = libm::ceil(params.t_end / dt - 1e-9) as usize;
    let record_every = libm::round(plan.interval / dt) as usize;
    let snapshot_steps: Vec<usize> = plan.snapshot_times.iter().map(|&t| libm::round(t / dt) as usize).collect();

    let sys = &device.system;
    let nu = sys.displacement_count();
    let nphi = sys.potential_count();
    if initial.u_curr.len() != nu || initial.u_prev.len() != nu || initial.phi.len() != nphi {
        return Err(Error::InvalidArgument("initial state does not match the device DOF counts".into()));
    }
    let mut state = initial;
    state.phi_prev.clone_from(&state.phi);
    let mut solver = PotentialSolver::with_backend(&device.potential, params.cg, params.linear_solver)?;
    let mut scratch = vec![0.0; nu];
    let mut next = vec![0.0; nu];
    let mut force = forcing.map(|_| vec![0.0; nu]);
    let mut charge = forcing.map(|_| vec![0.0; nphi]);
    let mut kphi_prev = vec![0.0; nphi];

    let mut lines: Vec<LineSeries> = plan
        .line_depths
        .iter()
        .map(|&depth| LineSeries {
            depth,
            x: (0..=device.mesh.divisions[0]).map(|i| i as f64 * device.mesh.spacing[0]).collect(),
            times: Vec::new(),
            values: Vec::new(),
        })
        .collect();
    let point_locations = plan
        .points
        .iter()
        .map(|p| device.mesh.locate_point(&p.position))
        .collect::<Result<Vec<_>>>()?;
    let mut points: Vec<ProbeTrace> =
        plan.points.iter().map(|p| ProbeTrace::new(p.position, p.field, dt * plan.point_every as f64)).collect();
    let mut snapshots = Vec::new();
    let mut reports = Vec::with_capacity(steps + 1);

    for step in 0..=steps {
        let t = step as f64 * dt;
        state.t = t;
        state.step = step;
        let fixed_values = device.potential_values(&params.pulse, t);
        if let (Some(f), Some(force), Some(charge)) = (forcing, force.as_mut(), charge.as_mut()) {
            f.mechanical(t, force);
            f.charge(t, charge);
        }

        // warm start: linear extrapolation of the potential history
        let mut guess: Vec<f64> = state.phi.iter().zip(&state.phi_prev).map(|(a, b)| 2.0 * a - b).collect();
        core::mem::swap(&mut state.phi_prev, &mut state.phi);
        core::mem::swap(&mut state.phi, &mut guess);
        let outcome = solver
            .solve(sys, &device.potential, &state.u_curr, &fixed_values, charge.as_deref(), &mut state.phi)
            .map_err(|e| Error::StepFailed { step, source: Box::new(e) })?;
        if step == 0 {
            state.phi_prev.copy_from_slice(&state.phi);
        }
        if !state.is_finite() {
            return Err(Error::Unstable { step, time: t });
        }

        let report = StepReport {
            step,
            time: t,
            cg_iterations: outcome.iterations,
            residual: outcome.residual,
            max_u: state.u_curr.iter().fold(0.0, |m, v| m.max(libm::fabs(*v))),
            max_phi: state.phi.iter().fold(0.0, |m, v| m.max(libm::fabs(*v))),
            energy: staggered_energy(sys, &state, dt, &mut scratch, &mut kphi_prev),
        };

        if step % record_every == 0 {
            for line in lines.iter_mut() {
                let depth_z = device.mesh.extents[2] - line.depth;
                line.times.push(t);
                line.values.push(record_line(&device.mesh, &device.dofs, &state.phi, depth_z, plan.line_y)?);
            }
        }
        if step % plan.point_every == 0 {
            for (trace, &(e, xi)) in points.iter_mut().zip(&point_locations) {
                trace.push(t, sample_field(&device.mesh, &device.dofs, &state, trace.field, e, &xi));
            }
        }
        if snapshot_steps.contains(&step) {
            snapshots.push(FieldSnapshot { time: t, phi: state.phi.clone(), u: state.u_curr.clone() });
        }
        observe(&state, &report);
        reports.push(report);
        if step == steps {
            break;
        }

        mechanical_step_into(
            sys,
            &device.displacement,
            &state.u_curr,
            &state.u_prev,
            &state.phi,
            force.as_deref(),
            dt,
            &mut scratch,
            &mut next,
        );
        core::mem::swap(&mut state.u_prev, &mut state.u_curr);
        core::mem::swap(&mut state.u_curr, &mut next);
    }

    Ok(RunOutput { dt, steps, lines, points, snapshots, reports, final_state: state })
}

fn staggered_energy(sys: &GlobalSystem, s: &SimulationState, dt: f64, scratch: &mut [f64], kphi: &mut [f64]) -> f64 {
    let mut kinetic = 0.0;
    for i in 0..s.u_curr.len() {
        let v = (s.u_curr[i] - s.u_prev[i]) / dt;
        kinetic += sys.mass[i] * v * v;
    }
    sys.k_uu.mul_vec(&s.u_prev, scratch);
    let strain = dot(&s.u_curr, scratch);
    sys.k_phiphi.mul_vec(&s.phi_prev, kphi);
    let field = dot(&s.phi, kphi);
    0.5 * (kinetic + strain + field)
}

/// Static equilibrium with fixed potentials and fixed (zero) displacements,
/// by alternating potential and displacement solves. Converges when the
/// electromechanical coupling is weak (true for GaAs).
pub fn static_solve(
    device: &Device,
    fixed_potential_values: &[f64],
    cfg: &CgConfig,
    max_sweeps: usize,
    tolerance: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sys = &device.system;
    let mech = ReducedOperator::new(&sys.k_uu, device.displacement.clone());
    let mut mech_cg = CgSolver::new(&mech.k_ff, *cfg)?;
    let mut pot = PotentialSolver::new(&device.potential, *cfg)?;
    let mut u = vec![0.0; sys.displacement_count()];
    let mut phi = vec![0.0; sys.potential_count()];
    let mut load = vec![0.0; sys.displacement_count()];
    let mut u_free = vec![0.0; mech.partition.free.len()];
    let zeros = vec![0.0; mech.partition.fixed.len()];
    for _ in 0..max_sweeps {
        pot.solve(sys, &device.potential, &u, fixed_potential_values, None, &mut phi)?;
        sys.k_uphi.mul_vec(&phi, &mut load);
        load.iter_mut().for_each(|v| *v = -*v);
        let rhs = mech.reduced_rhs(&load, &zeros);
        mech_cg.solve(&mech.k_ff, &rhs, &mut u_free)?;
        let before = u.clone();
        mech.expand(&u_free, &zeros, &mut u);
        let change: f64 = u.iter().zip(&before).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let size: f64 = u.iter().map(|a| a * a).sum::<f64>();
        if change <= tolerance * tolerance * size {
            pot.solve(sys, &device.potential, &u, fixed_potential_values, None, &mut phi)?;
            return Ok((u, phi));
        }
    }
    Err(Error::NotConverged { iterations: max_sweeps, residual: f64::NAN })
}

/// `K x` convenience used by diagnostics.
pub fn apply(k: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; k.nrows()];
    k.mul_vec(x, &mut y);
    y
}
