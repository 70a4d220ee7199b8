//! Conventional Lagrangian Newmark solver with loads that travel over the surface.
//!
//! Kept independent of the ALE assembly: it builds its own consistent mass matrix
//! and solves `M a + f_int(u) = f_ext(t)` directly.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::Vector3;

use crate::advection::{locate_point, LocationIndex};
use crate::ale::loads::add_body_force;
use crate::ale::{element_internal, loads::add_pressure, GuidingSchedule, NewmarkParams, SurfaceLoad};
use crate::element::{gauss_derivatives, shape_eval, GlobalDerivatives};
use crate::error::{Error, Result};
use crate::material::{commit_state, MaterialParams, MaterialPointState};
use crate::mesh::Mesh;
use crate::solver::{norm, step_times, PhaseTimings, RunOptions, SolverControls, Trajectory};
use crate::sparse::{CscPattern, DofMap, SparseLu, SparseMatrix};

/// State of the Lagrangian model (free-DOF vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub history: Vec<MaterialPointState>,
}

pub struct LagrangianModel {
    pub mesh: Arc<Mesh>,
    materials: Vec<MaterialParams>,
    derivs: Vec<[GlobalDerivatives; 8]>,
    pub dofs: DofMap,
    pattern: Arc<CscPattern>,
    positions: Vec<u32>,
    mass: SparseMatrix,
    loads: Vec<SurfaceLoad>,
    /// Motion of the load patches over the surface.
    pub path: GuidingSchedule,
    body: Vec<f64>,
    pub newmark: NewmarkParams,
    pub controls: SolverControls,
    index: LocationIndex,
}

impl LagrangianModel {
    pub fn new(
        mesh: Arc<Mesh>,
        materials: Vec<MaterialParams>,
        loads: Vec<SurfaceLoad>,
        path: GuidingSchedule,
        gravity: Option<Vector3<f64>>,
        newmark: NewmarkParams,
        controls: SolverControls,
    ) -> Result<Self> {
        let mut problems = newmark.violations();
        problems.extend(controls.violations());
        if materials.len() < mesh.n_layers() {
            problems.push("fewer materials than layers".into());
        }
        if !problems.is_empty() {
            return Err(Error::InvalidSpec(problems.join("; ")));
        }
        let derivs = (0..mesh.n_elements())
            .map(|e| {
                gauss_derivatives(&mesh.element_coords(e)).map_err(|err| match err {
                    Error::DegenerateElement { det_j, .. } => Error::DegenerateElement { element: e, det_j },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dofs = DofMap::new(&mesh.constrained_mask());
        let pattern = Arc::new(CscPattern::from_elements(&mesh.elements, &dofs));
        let positions = pattern.element_positions(&mesh.elements, &dofs);
        let mut mass = SparseMatrix::zeros(pattern.clone());
        for (e, d) in derivs.iter().enumerate() {
            let rho = materials[mesh.layer_of_element[e]].density();
            let pos = &positions[576 * e..576 * (e + 1)];
            for gd in d {
                let dv = rho * gd.weight * gd.det_j;
                for a in 0..8 {
                    for b in 0..8 {
                        let m = gd.values[a] * gd.values[b] * dv;
                        for i in 0..3 {
                            let p = pos[24 * (3 * b + i) + 3 * a + i];
                            if p != u32::MAX {
                                mass.values[p as usize] += m;
                            }
                        }
                    }
                }
            }
        }
        let densities: Vec<f64> = materials.iter().map(MaterialParams::density).collect();
        let mut body = vec![0.0; mesh.n_dofs()];
        if let Some(g) = gravity {
            add_body_force(&mesh, &densities, &g, &mut body)?;
        }
        let index = LocationIndex::build(&mesh.nodes, &mesh.elements);
        Ok(LagrangianModel {
            mesh,
            materials,
            derivs,
            dofs,
            pattern,
            positions,
            mass,
            loads,
            path,
            body,
            newmark,
            controls,
            index,
        })
    }

    pub fn rest(&self, t: f64) -> LagrangianState {
        let n = self.dofs.n_free();
        LagrangianState {
            t,
            u: vec![0.0; n],
            v: vec![0.0; n],
            a: vec![0.0; n],
            history: vec![MaterialPointState::virgin(); 8 * self.mesh.n_elements()],
        }
    }

    /// Distance the loads have travelled at time `t`.
    pub fn load_offset(&self, t: f64) -> Vector3<f64> {
        self.path.shift(self.path.speed.start().min(t), t)
    }

    /// External force on the free DOFs at time `t`.
    pub fn external_force(&self, t: f64) -> Result<Vec<f64>> {
        let mut f = self.body.clone();
        let off = self.load_offset(t);
        for l in &self.loads {
            let p = l.pressure * l.amplitude.value(t);
            if p == 0.0 {
                continue;
            }
            for r in &l.shifted(off.x, off.y).rects {
                add_pressure(&self.mesh, r, p, &mut f)?;
            }
        }
        Ok(self.dofs.gather(&f))
    }

    fn assemble(
        &self,
        u: &[f64],
        history: &[MaterialPointState],
        dt: f64,
        c2: f64,
    ) -> Result<(SparseMatrix, Vec<f64>, Vec<MaterialPointState>)> {
        let mut full = vec![0.0; self.mesh.n_dofs()];
        self.dofs.scatter(u, &mut full);
        let mut k = self.mass.clone();
        k.values.iter_mut().for_each(|v| *v *= c2);
        let mut fint = vec![0.0; self.mesh.n_dofs()];
        let mut trial = Vec::with_capacity(history.len());
        for e in 0..self.mesh.n_elements() {
            let conn = self.mesh.elements[e];
            let phi = std::array::from_fn(|a| {
                let n = conn[a];
                self.mesh.nodes[n] + Vector3::new(full[3 * n], full[3 * n + 1], full[3 * n + 2])
            });
            let states = std::array::from_fn(|g| history[8 * e + g]);
            let mat = &self.materials[self.mesh.layer_of_element[e]];
            let r = element_internal(&self.derivs[e], mat, &states, &phi, dt)?;
            let pos = &self.positions[576 * e..576 * (e + 1)];
            for c in 0..24 {
                for rr in 0..24 {
                    let p = pos[24 * c + rr];
                    if p != u32::MAX {
                        k.values[p as usize] += r.stiffness[(rr, c)];
                    }
                }
            }
            for a in 0..8 {
                for i in 0..3 {
                    fint[3 * conn[a] + i] += r.force[3 * a + i];
                }
            }
            trial.extend(r.trial.iter().map(|t| commit_state(*t)));
        }
        Ok((k, self.dofs.gather(&fint), trial))
    }

    /// One Newmark step of size `dt` with Newton iterations.
    pub fn step(&self, lu: &mut SparseLu, s: &LagrangianState, dt: f64, step: usize) -> Result<(LagrangianState, usize)> {
        let t1 = s.t + dt;
        let (beta, gamma) = (self.newmark.beta, self.newmark.gamma);
        let c2 = 1.0 / (beta * dt * dt);
        let ca = 1.0 / (2.0 * beta) - 1.0;
        let f_ext = self.external_force(t1)?;
        let limit = self.controls.tolerance * norm(&f_ext).max(1.0);
        let n = s.u.len();
        let mut u = s.u.clone();
        let mut it = 0;
        loop {
            let a: Vec<f64> = (0..n).map(|i| c2 * (u[i] - s.u[i] - dt * s.v[i]) - ca * s.a[i]).collect();
            let (k, fint, trial) = self.assemble(&u, &s.history, dt, c2).map_err(|e| match e {
                Error::InvertedElement { .. } | Error::IntegrationFailure(_) => Error::NonConvergence {
                    step,
                    time: t1,
                    residual: f64::INFINITY,
                },
                other => other,
            })?;
            let ma = self.mass.mul_vec(&a);
            let mut r: Vec<f64> = (0..n).map(|i| f_ext[i] - ma[i] - fint[i]).collect();
            it += 1;
            let rn = norm(&r);
            if rn <= limit {
                let v = (0..n).map(|i| s.v[i] + dt * ((1.0 - gamma) * s.a[i] + gamma * a[i])).collect();
                let history = if self.materials.iter().any(MaterialParams::is_viscous) {
                    trial
                } else {
                    s.history.clone()
                };
                return Ok((LagrangianState { t: t1, u, v, a, history }, it));
            }
            if it > self.controls.max_iterations || !rn.is_finite() {
                return Err(Error::NonConvergence { step, time: t1, residual: rn });
            }
            lu.factor(&k)
                .and_then(|f| f.solve(&mut r))
                .map_err(|reason| Error::LinearSolve { step, reason })?;
            for (x, d) in u.iter_mut().zip(&r) {
                *x += d;
            }
        }
    }

    fn advance(&self, lu: &mut SparseLu, s: &LagrangianState, dt: f64, step: usize, depth: usize) -> Result<(LagrangianState, usize)> {
        match self.step(lu, s, dt, step) {
            Err(Error::NonConvergence { .. } | Error::LinearSolve { .. }) if depth < self.controls.max_cutbacks => {
                let end = s.t + dt;
                let h = dt * self.controls.cutback_factor;
                let mut cur = s.clone();
                let mut total = 0;
                while cur.t < end - 1e-9 * dt {
                    let (next, it) = self.advance(lu, &cur, h.min(end - cur.t), step, depth + 1)?;
                    total += it;
                    cur = next;
                }
                cur.t = end;
                Ok((cur, total))
            }
            other => other,
        }
    }

    /// Displacement at a reference point, or `None` outside the mesh.
    pub fn displacement_at(&self, u: &[f64], p: &Vector3<f64>) -> Option<Vector3<f64>> {
        let (e, xi) = locate_point(&self.mesh.nodes, &self.mesh.elements, &self.index, p)?;
        let w = shape_eval(&xi).values;
        let mut full = vec![0.0; self.mesh.n_dofs()];
        let conn = self.mesh.elements[e];
        for &n in &conn {
            for i in 0..3 {
                let f = self.dofs.free_index[3 * n + i];
                if f != crate::sparse::FIXED {
                    full[3 * n + i] = u[f];
                }
            }
        }
        Some(
            conn.iter()
                .zip(&w)
                .map(|(&n, &wk)| Vector3::new(full[3 * n], full[3 * n + 1], full[3 * n + 2]) * wk)
                .sum(),
        )
    }

    /// Full nodal displacement.
    pub fn nodal_displacement(&self, u: &[f64]) -> Vec<Vector3<f64>> {
        let mut full = vec![0.0; self.mesh.n_dofs()];
        self.dofs.scatter(u, &mut full);
        full.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
    }

    pub fn pattern(&self) -> &Arc<CscPattern> {
        &self.pattern
    }
}

/// Marches the Lagrangian model from rest. Probe points ride with the loads:
/// probe `p` is evaluated at `p + offset(t)`.
pub fn run_lagrangian(model: &LagrangianModel, opts: &RunOptions) -> Result<(Trajectory, LagrangianState)> {
    let start = Instant::now();
    let mut lu = SparseLu::new();
    let mut traj = Trajectory {
        probe_names: opts.probes.iter().map(|p| p.name.clone()).collect(),
        probe_values: vec![Vec::new(); opts.probes.len()],
        ..Default::default()
    };
    let mut timings = PhaseTimings::default();
    let mut s = model.rest(0.0);
    let mut dumps: Vec<f64> = opts.dump_times.clone();
    dumps.sort_by(f64::total_cmp);
    for (k, &t1) in step_times(0.0, opts.t_end, model.newmark.dt).iter().enumerate() {
        let ts = Instant::now();
        let (mut next, it) = model.advance(&mut lu, &s, t1 - s.t, k + 1, 0)?;
        timings.solve += ts.elapsed();
        next.t = t1;
        let off = model.load_offset(t1);
        for (vals, p) in traj.probe_values.iter_mut().zip(&opts.probes) {
            let q = p.point + off;
            let u = model.displacement_at(&next.u, &q).ok_or_else(|| {
                Error::InvalidSpec(format!("moving probe {} left the mesh at t = {t1}", p.name))
            })?;
            vals.push(u);
        }
        traj.times.push(t1);
        traj.newton_iterations.push(it);
        if opts.store_snapshots {
            traj.snapshots.push(next.u.clone());
        }
        while dumps.first().is_some_and(|&td| td <= t1 + 1e-9) {
            traj.dumps.push((t1, model.nodal_displacement(&next.u)));
            dumps.remove(0);
        }
        s = next;
    }
    timings.total = start.elapsed();
    traj.timings = timings;
    Ok((traj, s))
}
