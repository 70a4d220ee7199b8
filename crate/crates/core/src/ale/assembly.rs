//! Global assembly of the ALE Newton system over the free DOFs.

use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::operators::{apply, element_internal, AleBase, ElementInternal, NodalVectors};
use crate::element::{gauss_derivatives, GlobalDerivatives, Point3};
use crate::error::{Error, Result};
use crate::material::{MaterialParams, MaterialPointState, TrialState};
use crate::mesh::Mesh;
use crate::sparse::{CscPattern, DofMap, SparseMatrix, FIXED};

/// Newmark time-integration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
}

impl Default for NewmarkParams {
    fn default() -> Self {
        NewmarkParams {
            beta: 0.25,
            gamma: 0.5,
            dt: 0.05,
        }
    }
}

impl NewmarkParams {
    /// `(1/(βΔt²), γ/(βΔt))`, the factors multiplying `K₂` and `K₃`.
    pub fn increment_factors(&self) -> (f64, f64) {
        let c2 = 1.0 / (self.beta * self.dt * self.dt);
        (c2, self.gamma / (self.beta * self.dt))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            v.push(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            v.push(format!("Newmark beta must lie in (0, 0.5], got {}", self.beta));
        }
        if !(self.gamma >= 0.5 && self.gamma <= 1.0) {
            v.push(format!("Newmark gamma must lie in [0.5, 1], got {}", self.gamma));
        }
        v
    }
}

/// Nodal displacement, velocity and acceleration over the ALE mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    pub u: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub a: Vec<Vector3<f64>>,
}

impl KinematicState {
    pub fn rest(n_nodes: usize) -> Self {
        KinematicState {
            u: vec![Vector3::zeros(); n_nodes],
            v: vec![Vector3::zeros(); n_nodes],
            a: vec![Vector3::zeros(); n_nodes],
        }
    }
}

/// Inputs to one assembly.
pub struct AssemblyInput<'a> {
    pub kin: &'a KinematicState,
    /// Committed Gauss-point states, 8 per element.
    pub history: &'a [MaterialPointState],
    pub w: Vector3<f64>,
    pub wdot: Vector3<f64>,
    /// Full-length external force vector.
    pub f_ext: &'a [f64],
    pub newmark: NewmarkParams,
    /// Also return `K_T`, `K₂…K₅` separately.
    pub keep_components: bool,
}

/// Assembled tangents (on the free-DOF pattern) and force vectors (free DOFs).
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub k_dyn: SparseMatrix,
    /// `[K_T, K₂, K₃, K₄, K₅]` when requested.
    pub components: Option<[SparseMatrix; 5]>,
    pub f_int: Vec<f64>,
    pub f_ext: Vec<f64>,
    /// `f₁…f₅`
    pub f_ale: [Vec<f64>; 5],
    /// `G = f_ext − Σf_i − f_int`
    pub residual: Vec<f64>,
    pub trial: Vec<TrialState>,
}

/// Precomputed geometry and sparsity for repeated assembly on a fixed mesh.
pub struct Assembler {
    pub mesh: Arc<Mesh>,
    materials: Vec<MaterialParams>,
    derivs: Vec<[GlobalDerivatives; 8]>,
    ale: Vec<AleBase>,
    pub dofs: DofMap,
    pub pattern: Arc<CscPattern>,
    positions: Vec<u32>,
    pub parallel: bool,
}

const CHUNK: usize = 256;

impl Assembler {
    /// `materials[l]` applies to layer `l`.
    pub fn new(mesh: Arc<Mesh>, materials: Vec<MaterialParams>) -> Result<Self> {
        if materials.len() < mesh.n_layers() {
            return Err(Error::InvalidSpec(format!(
                "{} layers but only {} materials",
                mesh.n_layers(),
                materials.len()
            )));
        }
        let derivs = (0..mesh.n_elements())
            .map(|e| {
                gauss_derivatives(&mesh.element_coords(e)).map_err(|err| match err {
                    Error::DegenerateElement { det_j, .. } => Error::DegenerateElement { element: e, det_j },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ale = derivs
            .iter()
            .enumerate()
            .map(|(e, d)| AleBase::new(d, materials[mesh.layer_of_element[e]].density()))
            .collect();
        let dofs = DofMap::new(&mesh.constrained_mask());
        let pattern = Arc::new(CscPattern::from_elements(&mesh.elements, &dofs));
        let positions = pattern.element_positions(&mesh.elements, &dofs);
        Ok(Assembler {
            mesh,
            materials,
            derivs,
            ale,
            dofs,
            pattern,
            positions,
            parallel: true,
        })
    }

    pub fn n_free(&self) -> usize {
        self.dofs.n_free()
    }

    pub fn material_of(&self, e: usize) -> &MaterialParams {
        &self.materials[self.mesh.layer_of_element[e]]
    }

    pub fn materials(&self) -> &[MaterialParams] {
        &self.materials
    }

    pub fn derivatives(&self, e: usize) -> &[GlobalDerivatives; 8] {
        &self.derivs[e]
    }

    fn nodal<T: Copy>(&self, e: usize, field: &[T]) -> [T; 8] {
        self.mesh.elements[e].map(|n| field[n])
    }

    /// Current placement `φ = χ + û` of an element's nodes.
    pub fn placement(&self, e: usize, u: &[Vector3<f64>]) -> NodalVectors {
        let conn = self.mesh.elements[e];
        std::array::from_fn(|a| self.mesh.nodes[conn[a]] + u[conn[a]])
    }

    fn element_internal(&self, e: usize, input: &AssemblyInput) -> Result<ElementInternal> {
        let states: [MaterialPointState; 8] = std::array::from_fn(|g| input.history[8 * e + g]);
        element_internal(
            &self.derivs[e],
            self.material_of(e),
            &states,
            &self.placement(e, &input.kin.u),
            input.newmark.dt,
        )
    }

    pub fn assemble(&self, input: &AssemblyInput) -> Result<GlobalSystem> {
        let n_el = self.mesh.n_elements();
        if input.history.len() != 8 * n_el || input.kin.u.len() != self.mesh.n_nodes() {
            return Err(Error::DimensionMismatch("state arrays do not match the mesh".into()));
        }
        let nf = self.n_free();
        let (c2, c3) = input.newmark.increment_factors();
        let mut k_dyn = SparseMatrix::zeros(self.pattern.clone());
        let mut comps = input
            .keep_components
            .then(|| std::array::from_fn::<_, 5, _>(|_| SparseMatrix::zeros(self.pattern.clone())));
        let mut f_int_full = vec![0.0; self.mesh.n_dofs()];
        let mut f_ale_full: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; self.mesh.n_dofs()]);
        let mut trial = Vec::with_capacity(8 * n_el);

        for start in (0..n_el).step_by(CHUNK) {
            let end = (start + CHUNK).min(n_el);
            let internals: Vec<Result<ElementInternal>> = if self.parallel {
                (start..end).into_par_iter().map(|e| self.element_internal(e, input)).collect()
            } else {
                (start..end).map(|e| self.element_internal(e, input)).collect()
            };
            for (e, internal) in (start..end).zip(internals) {
                let internal = internal?;
                let ops = self.ale[e].operators(&input.w, &input.wdot);
                let conn = self.mesh.elements[e];
                let pos = &self.positions[576 * e..576 * (e + 1)];
                for c in 0..24 {
                    for r in 0..24 {
                        let p = pos[24 * c + r];
                        if p == u32::MAX {
                            continue;
                        }
                        let p = p as usize;
                        let kt = internal.stiffness[(r, c)];
                        let (blk, same) = ((r / 3, c / 3), r % 3 == c % 3);
                        let mut v = kt;
                        if same {
                            v += c2 * ops.k2[blk] + c3 * ops.k3[blk] + ops.k4[blk] + ops.k5[blk];
                        }
                        k_dyn.values[p] += v;
                        if let Some(cm) = comps.as_mut() {
                            cm[0].values[p] += kt;
                            if same {
                                cm[1].values[p] += ops.k2[blk];
                                cm[2].values[p] += ops.k3[blk];
                                cm[3].values[p] += ops.k4[blk];
                                cm[4].values[p] += ops.k5[blk];
                            }
                        }
                    }
                }
                let phi = self.placement(e, &input.kin.u);
                let forces = [
                    ops.f1,
                    ops.f2(&self.nodal(e, &input.kin.a)),
                    ops.f3(&self.nodal(e, &input.kin.v)),
                    ops.f4(&phi),
                    apply(&ops.k5, &phi),
                ];
                for a in 0..8 {
                    for i in 0..3 {
                        let d = 3 * conn[a] + i;
                        f_int_full[d] += internal.force[3 * a + i];
                        for (acc, f) in f_ale_full.iter_mut().zip(forces.iter()) {
                            acc[d] += f[a][i];
                        }
                    }
                }
                trial.extend_from_slice(&internal.trial);
            }
        }

        let f_int = self.dofs.gather(&f_int_full);
        let f_ext = self.dofs.gather(input.f_ext);
        let f_ale = f_ale_full.map(|f| self.dofs.gather(&f));
        let residual = (0..nf)
            .map(|i| f_ext[i] - f_ale.iter().map(|f| f[i]).sum::<f64>() - f_int[i])
            .collect();
        Ok(GlobalSystem {
            k_dyn,
            components: comps,
            f_int,
            f_ext,
            f_ale,
            residual,
            trial,
        })
    }

    /// Free-DOF index of global DOF `3 * node + dir`, if free.
    pub fn free_index(&self, node: usize, dir: usize) -> Option<usize> {
        let f = self.dofs.free_index[3 * node + dir];
        (f != FIXED).then_some(f)
    }

    /// Reference coordinates of all nodes.
    pub fn reference(&self) -> &[Point3] {
        &self.mesh.nodes
    }
}
