//! Newmark time stepping with a Newton loop per step and the between-step advection phase.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::Vector3;

use crate::advection::{exceeds_cfl, AdvectionPlan, HistoryAdvector, LocationIndex};
use crate::ale::{Assembler, AssemblyInput, ExternalLoads, GlobalSystem, GuidingSchedule, KinematicState, NewmarkParams};
use crate::element::{shape_eval, Point3};
use crate::error::{Error, Result};
use crate::material::{commit_state, MaterialParams, MaterialPointState};
use crate::mesh::{build_gauss_submesh, GaussSubMesh, Mesh};
use crate::sparse::{DofMap, SparseLu};

/// `(1/(βΔt²), γ/(βΔt))`
pub fn newmark_increment_factors(p: &NewmarkParams) -> (f64, f64) {
    p.increment_factors()
}

/// Newton and step-control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverControls {
    /// Residual tolerance [N], relative to `max(1, ‖f_ext‖)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub cutback_factor: f64,
    pub max_cutbacks: usize,
    /// Element contributions computed in a fixed sequential order.
    pub deterministic: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            tolerance: 1e-6,
            max_iterations: 25,
            cutback_factor: 0.5,
            max_cutbacks: 4,
            deterministic: false,
        }
    }
}

impl SolverControls {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.tolerance > 0.0) {
            v.push(format!("solver tolerance must be positive, got {}", self.tolerance));
        }
        if self.max_iterations < 1 {
            v.push("max_iterations must be at least 1".into());
        }
        if !(self.cutback_factor > 0.0 && self.cutback_factor < 1.0) {
            v.push(format!("cutback factor must lie in (0, 1), got {}", self.cutback_factor));
        }
        v
    }
}

/// Point at which displacement histories are recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub point: Point3,
}

/// Interpolation stencil of a probe on the ALE mesh.
#[derive(Debug, Clone)]
pub struct ProbeStencil {
    nodes: [usize; 8],
    weights: [f64; 8],
}

impl ProbeStencil {
    pub fn new(mesh: &Mesh, index: &LocationIndex, p: &Point3) -> Result<Self> {
        let (e, xi) = crate::advection::locate_point(&mesh.nodes, &mesh.elements, index, p)
            .ok_or_else(|| Error::InvalidSpec(format!("probe point {:?} lies outside the mesh", p.as_slice())))?;
        Ok(ProbeStencil {
            nodes: mesh.elements[e],
            weights: shape_eval(&xi).values,
        })
    }

    pub fn eval(&self, u: &[Vector3<f64>]) -> Vector3<f64> {
        self.nodes.iter().zip(&self.weights).map(|(&n, &w)| u[n] * w).sum()
    }
}

/// Wall time per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub assembly: Duration,
    pub solve: Duration,
    pub advection: Duration,
    pub total: Duration,
}

/// Full state of the ALE model at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct AleState {
    pub t: f64,
    pub kin: KinematicState,
    /// Committed Gauss-point states, `8 e + g`.
    pub history: Vec<MaterialPointState>,
}

impl AleState {
    pub fn rest(mesh: &Mesh, t: f64) -> Self {
        AleState {
            t,
            kin: KinematicState::rest(mesh.n_nodes()),
            history: vec![MaterialPointState::virgin(); 8 * mesh.n_elements()],
        }
    }
}

/// Linear-algebra strategy of the Newton loop: full sparse solve or reduced projection.
pub trait NewtonBackend {
    /// Maps the advected free displacement to the initial Newton iterate.
    fn predict(&mut self, u_free: &mut [f64]);
    /// Maps the advected free displacement, velocity and acceleration that the
    /// Newmark update starts from.
    fn predict_base(&mut self, _u_free: &mut [f64], _v_free: &mut [f64], _a_free: &mut [f64]) {}
    /// Norm checked against the tolerance.
    fn residual_norm(&mut self, sys: &GlobalSystem) -> f64;
    /// Free-DOF displacement increment.
    fn increment(&mut self, sys: &GlobalSystem) -> std::result::Result<Vec<f64>, String>;
}

/// Sparse direct solve of the full system.
#[derive(Default)]
pub struct FullBackend {
    lu: SparseLu,
}

impl NewtonBackend for FullBackend {
    fn predict(&mut self, _u_free: &mut [f64]) {}

    fn residual_norm(&mut self, sys: &GlobalSystem) -> f64 {
        norm(&sys.residual)
    }

    fn increment(&mut self, sys: &GlobalSystem) -> std::result::Result<Vec<f64>, String> {
        let mut du = sys.residual.clone();
        self.lu.factor(&sys.k_dyn)?.solve(&mut du)?;
        Ok(du)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Statistics of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub cutbacks: usize,
    pub residual: f64,
}

/// The ALE model: fixed mesh, materials, loads and guiding velocity.
pub struct AleModel {
    pub asm: Assembler,
    pub loads: ExternalLoads,
    pub schedule: GuidingSchedule,
    pub newmark: NewmarkParams,
    pub controls: SolverControls,
    pub node_index: LocationIndex,
    submesh: Option<(GaussSubMesh, HistoryAdvector)>,
}

impl AleModel {
    pub fn new(
        mesh: Arc<Mesh>,
        materials: Vec<MaterialParams>,
        loads: ExternalLoads,
        schedule: GuidingSchedule,
        newmark: NewmarkParams,
        controls: SolverControls,
    ) -> Result<Self> {
        let mut problems = newmark.violations();
        problems.extend(controls.violations());
        for m in &materials {
            problems.extend(m.violations());
        }
        if !problems.is_empty() {
            return Err(Error::InvalidSpec(problems.join("; ")));
        }
        let viscous = materials.iter().any(MaterialParams::is_viscous);
        let mut asm = Assembler::new(mesh.clone(), materials)?;
        asm.parallel = !controls.deterministic;
        let node_index = LocationIndex::build(&mesh.nodes, &mesh.elements);
        let submesh = if viscous && !schedule.is_stationary() {
            let sub = build_gauss_submesh(&mesh)?;
            let adv = HistoryAdvector::new(&sub);
            Some((sub, adv))
        } else {
            None
        };
        Ok(AleModel {
            asm,
            loads,
            schedule,
            newmark,
            controls,
            node_index,
            submesh,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.asm.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.asm.dofs
    }

    /// Eulerian phase: transports fields and history by the frame motion over `[t0, t1]`.
    pub fn advect(&self, state: &AleState, t0: f64, t1: f64) -> AleState {
        let shift = self.schedule.shift(t0, t1);
        if shift == Vector3::zeros() {
            return AleState { t: state.t, ..state.clone() };
        }
        let mesh = self.mesh();
        if exceeds_cfl(mesh, &shift) {
            log::warn!(
                "frame moves {:.4} m in one step, more than the smallest element size",
                shift.norm()
            );
        }
        let plan = AdvectionPlan::new(&mesh.nodes, &mesh.elements, &self.node_index, &mesh.nodes, &shift);
        let z = Vector3::zeros();
        let mut kin = KinematicState {
            u: plan.apply(&state.kin.u, z),
            v: plan.apply(&state.kin.v, z),
            a: plan.apply(&state.kin.a, z),
        };
        for &(n, d) in &mesh.dirichlet_nodes {
            kin.u[n][d] = 0.0;
            kin.v[n][d] = 0.0;
            kin.a[n][d] = 0.0;
        }
        let history = match &self.submesh {
            Some((sub, adv)) => adv.advect(sub, &state.history, &shift),
            None => state.history.clone(),
        };
        AleState {
            t: state.t,
            kin,
            history,
        }
    }

    /// Newton iteration for one step from `state` (already advected) over `dt`.
    pub fn newton(
        &self,
        backend: &mut dyn NewtonBackend,
        state: &AleState,
        dt: f64,
        step: usize,
        timings: &mut PhaseTimings,
    ) -> Result<(AleState, StepReport)> {
        let t0 = state.t;
        let t1 = t0 + dt;
        let nm = NewmarkParams { dt, ..self.newmark };
        let (w, _) = self.schedule.eval(t1);
        let (_, wdot) = self.schedule.eval(t0);
        let f_ext = self.loads.at(t1);
        let dofs = self.dofs();
        let n = state.kin.u.len();

        let gather = |f: &[Vector3<f64>]| -> Vec<f64> { dofs.free_dofs.iter().map(|&d| f[d / 3][d % 3]).collect() };
        let mut base = state.kin.clone();
        let t = Instant::now();
        let mut u_free = gather(&base.u);
        {
            let (mut v, mut a) = (gather(&base.v), gather(&base.a));
            backend.predict_base(&mut u_free, &mut v, &mut a);
            for (k, &d) in dofs.free_dofs.iter().enumerate() {
                base.u[d / 3][d % 3] = u_free[k];
                base.v[d / 3][d % 3] = v[k];
                base.a[d / 3][d % 3] = a[k];
            }
        }
        backend.predict(&mut u_free);
        timings.solve += t.elapsed();

        let c2 = 1.0 / (nm.beta * dt * dt);
        let ca = 1.0 / (2.0 * nm.beta) - 1.0;
        let mut iterations = 0;
        let mut kin = base.clone();
        loop {
            for (&d, &x) in dofs.free_dofs.iter().zip(&u_free) {
                kin.u[d / 3][d % 3] = x;
            }
            for i in 0..n {
                let (un, vn, an) = (base.u[i], base.v[i], base.a[i]);
                let a = (kin.u[i] - un - vn * dt) * c2 - an * ca;
                kin.a[i] = a;
                kin.v[i] = vn + (an * (1.0 - nm.gamma) + a * nm.gamma) * dt;
            }
            let ta = Instant::now();
            let sys = self.asm.assemble(&AssemblyInput {
                kin: &kin,
                history: &state.history,
                w,
                wdot,
                f_ext: &f_ext,
                newmark: nm,
                keep_components: false,
            });
            timings.assembly += ta.elapsed();
            let sys = sys.map_err(|e| match e {
                Error::InvertedElement { .. } | Error::IntegrationFailure(_) => Error::NonConvergence {
                    step,
                    time: t1,
                    residual: f64::INFINITY,
                },
                other => other,
            })?;
            iterations += 1;
            let ts = Instant::now();
            let r = backend.residual_norm(&sys);
            let limit = self.controls.tolerance * norm(&sys.f_ext).max(1.0);
            if !r.is_finite() {
                timings.solve += ts.elapsed();
                return Err(Error::NonConvergence { step, time: t1, residual: r });
            }
            if r <= limit {
                timings.solve += ts.elapsed();
                let history = if self.asm.materials().iter().any(MaterialParams::is_viscous) {
                    sys.trial.into_iter().map(commit_state).collect()
                } else {
                    state.history.clone()
                };
                return Ok((
                    AleState { t: t1, kin, history },
                    StepReport {
                        iterations,
                        cutbacks: 0,
                        residual: r,
                    },
                ));
            }
            if iterations > self.controls.max_iterations {
                timings.solve += ts.elapsed();
                return Err(Error::NonConvergence { step, time: t1, residual: r });
            }
            let du = backend
                .increment(&sys)
                .map_err(|reason| Error::LinearSolve { step, reason })?;
            timings.solve += ts.elapsed();
            for (x, d) in u_free.iter_mut().zip(&du) {
                *x += d;
            }
        }
    }

    /// Advection plus Newton over `[state.t, state.t + dt]`, with recursive cutback.
    pub fn advance(
        &self,
        backend: &mut dyn NewtonBackend,
        state: &AleState,
        dt: f64,
        step: usize,
        timings: &mut PhaseTimings,
    ) -> Result<(AleState, StepReport)> {
        self.advance_depth(backend, state, dt, step, 0, timings)
    }

    fn advance_depth(
        &self,
        backend: &mut dyn NewtonBackend,
        state: &AleState,
        dt: f64,
        step: usize,
        depth: usize,
        timings: &mut PhaseTimings,
    ) -> Result<(AleState, StepReport)> {
        let ta = Instant::now();
        let moved = self.advect(state, state.t, state.t + dt);
        timings.advection += ta.elapsed();
        match self.newton(backend, &moved, dt, step, timings) {
            Ok(r) => Ok(r),
            Err(e @ (Error::NonConvergence { .. } | Error::LinearSolve { .. })) => {
                if depth >= self.controls.max_cutbacks {
                    return Err(e);
                }
                log::info!("step {step}: cutting back dt = {dt:e} ({e})");
                let end = state.t + dt;
                let h = dt * self.controls.cutback_factor;
                let mut s = state.clone();
                let mut report = StepReport {
                    iterations: 0,
                    cutbacks: 1,
                    residual: 0.0,
                };
                while s.t < end - 1e-9 * dt {
                    let hh = h.min(end - s.t);
                    let (next, r) = self.advance_depth(backend, &s, hh, step, depth + 1, timings)?;
                    report.iterations += r.iterations;
                    report.cutbacks += r.cutbacks;
                    report.residual = r.residual;
                    s = next;
                }
                s.t = end;
                Ok((s, report))
            }
            Err(e) => Err(e),
        }
    }

    /// Displacement of the free DOFs.
    pub fn free_displacement(&self, kin: &KinematicState) -> Vec<f64> {
        self.dofs().free_dofs.iter().map(|&d| kin.u[d / 3][d % 3]).collect()
    }
}

/// What to keep while marching.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub t_end: f64,
    pub probes: Vec<Probe>,
    pub store_snapshots: bool,
    /// Times at which the full displacement field is kept.
    pub dump_times: Vec<f64>,
}

/// Recorded output of a transient run.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// Time after each step.
    pub times: Vec<f64>,
    /// Free-DOF displacement after each step (when requested).
    pub snapshots: Vec<Vec<f64>>,
    pub probe_names: Vec<String>,
    /// `probe_values[p][step]`
    pub probe_values: Vec<Vec<Vector3<f64>>>,
    pub newton_iterations: Vec<usize>,
    pub cutbacks: usize,
    pub timings: PhaseTimings,
    /// `(time, nodal displacement)` at dump times.
    pub dumps: Vec<(f64, Vec<Vector3<f64>>)>,
}

impl Trajectory {
    /// Histogram of Newton iteration counts: `(iterations, number of steps)`.
    pub fn iteration_histogram(&self) -> Vec<(usize, usize)> {
        let mut h = std::collections::BTreeMap::new();
        for &k in &self.newton_iterations {
            *h.entry(k).or_insert(0) += 1;
        }
        h.into_iter().collect()
    }

    pub fn probe(&self, name: &str) -> Option<&[Vector3<f64>]> {
        let i = self.probe_names.iter().position(|p| p == name)?;
        Some(&self.probe_values[i])
    }
}

/// Number of steps and the time of step `k` for a horizon `[t0, t_end]`.
pub fn step_times(t0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let n = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    (1..=n).map(|k| (t0 + k as f64 * dt).min(t_end)).collect()
}

/// Marches the model from `initial` to `opts.t_end`.
pub fn run_transient_with(
    model: &AleModel,
    backend: &mut dyn NewtonBackend,
    initial: AleState,
    opts: &RunOptions,
) -> Result<(Trajectory, AleState)> {
    let start = Instant::now();
    let stencils = opts
        .probes
        .iter()
        .map(|p| ProbeStencil::new(model.mesh(), &model.node_index, &p.point))
        .collect::<Result<Vec<_>>>()?;
    let mut traj = Trajectory {
        probe_names: opts.probes.iter().map(|p| p.name.clone()).collect(),
        probe_values: vec![Vec::new(); opts.probes.len()],
        ..Default::default()
    };
    let mut dumps_left: Vec<f64> = opts.dump_times.clone();
    dumps_left.sort_by(f64::total_cmp);
    let mut state = initial;
    let times = step_times(state.t, opts.t_end, model.newmark.dt);
    for (k, &t1) in times.iter().enumerate() {
        let dt = t1 - state.t;
        let (mut next, report) = model.advance(backend, &state, dt, k + 1, &mut traj.timings)?;
        next.t = t1;
        traj.times.push(t1);
        traj.newton_iterations.push(report.iterations);
        traj.cutbacks += report.cutbacks;
        for (vals, s) in traj.probe_values.iter_mut().zip(&stencils) {
            vals.push(s.eval(&next.kin.u));
        }
        if opts.store_snapshots {
            traj.snapshots.push(model.free_displacement(&next.kin));
        }
        while let Some(&td) = dumps_left.first() {
            if td <= t1 + 1e-9 * dt {
                traj.dumps.push((t1, next.kin.u.clone()));
                dumps_left.remove(0);
            } else {
                break;
            }
        }
        log::debug!("step {} t = {:.4} iterations {}", k + 1, t1, report.iterations);
        state = next;
    }
    traj.timings.total = start.elapsed();
    Ok((traj, state))
}

/// Full-order run from rest.
pub fn run_transient(model: &AleModel, opts: &RunOptions) -> Result<(Trajectory, AleState)> {
    let initial = AleState::rest(model.mesh(), 0.0);
    run_transient_with(model, &mut FullBackend::default(), initial, opts)
}
