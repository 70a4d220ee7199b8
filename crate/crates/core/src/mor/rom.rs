//! Galerkin-projected Newton iterations on the full ALE assembly.
//!
//! The displacement is confined to the span of Φ (`u = Φ q`). Velocity and
//! acceleration follow from the Newmark update of the reconstructed
//! displacement. Gauss-point history is advected in full coordinates.
//!
//! How the advected rates enter the next step is set by [`RomKinematics`].
//! Rates outside span(Φ) see no stiffness, so with `Full` any part of the
//! advection operator that leaves the basis is fed back through the Newmark
//! predictor and can grow from step to step.

use faer::{Accum, Mat, MatRef, Par};

use super::basis::PodBasis;
use crate::ale::GlobalSystem;
use crate::error::{Error, Result};
use crate::solver::{norm, run_transient_with, AleModel, AleState, NewtonBackend, RunOptions, Trajectory};
use crate::sparse::{dense_solve, CscPattern, RowPlan};

/// Treatment of the advected fields the Newmark update starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RomKinematics {
    /// Re-project velocity and acceleration onto span(Φ); the advected
    /// displacement enters the Newmark update in full coordinates.
    #[default]
    ProjectedRates,
    /// Re-project displacement, velocity and acceleration.
    Reprojected,
    /// Keep all advected fields in full coordinates. Matches the full-order
    /// run exactly when Φ spans it, but perturbations can grow.
    Full,
}

pub struct ReducedBackend {
    n: usize,
    m: usize,
    /// Row-major `n × m` copy of Φ for the sparse–dense product.
    phi_rows: Vec<f64>,
    phi: Mat<f64>,
    /// `ΦᵀG` from the last residual evaluation.
    reduced_residual: Vec<f64>,
    kinematics: RomKinematics,
    /// Row plan for the current tangent pattern, rebuilt if the pattern changes.
    plan: Option<(std::sync::Arc<CscPattern>, RowPlan)>,
}

impl ReducedBackend {
    pub fn new(basis: &PodBasis, kinematics: RomKinematics) -> Self {
        let (n, m) = (basis.n_free, basis.m);
        let phi = Mat::from_fn(n, m, |i, j| basis.phi[j * n + i]);
        let mut phi_rows = vec![0.0; n * m];
        for j in 0..m {
            for i in 0..n {
                phi_rows[i * m + j] = basis.phi[j * n + i];
            }
        }
        ReducedBackend {
            n,
            m,
            phi_rows,
            phi,
            reduced_residual: Vec::new(),
            kinematics,
            plan: None,
        }
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.m];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.phi_rows[i * self.m..(i + 1) * self.m];
                for (qj, p) in q.iter_mut().zip(row) {
                    *qj += p * xi;
                }
            }
        }
        q
    }

    fn lift(&self, q: &[f64]) -> Vec<f64> {
        self.phi_rows
            .chunks_exact(self.m)
            .map(|row| row.iter().zip(q).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// `Φᵀ K Φ` for the current tangent.
    pub fn reduced_tangent(&mut self, sys: &GlobalSystem) -> Mat<f64> {
        let pattern = &sys.k_dyn.pattern;
        if !matches!(&self.plan, Some((p, _)) if std::sync::Arc::ptr_eq(p, pattern)) {
            self.plan = Some((pattern.clone(), RowPlan::new(pattern)));
        }
        let plan = &self.plan.as_ref().unwrap().1;
        let y = plan.mul_dense_rows(&sys.k_dyn.values, &self.phi_rows, self.m);
        let y = MatRef::from_row_major_slice(&y, self.n, self.m);
        let mut kr = Mat::<f64>::zeros(self.m, self.m);
        faer::linalg::matmul::matmul(kr.as_mut(), Accum::Replace, self.phi.transpose(), y, 1.0, Par::Seq);
        kr
    }
}

impl NewtonBackend for ReducedBackend {
    fn predict(&mut self, u_free: &mut [f64]) {
        let q = self.project(u_free);
        u_free.copy_from_slice(&self.lift(&q));
    }

    fn predict_base(&mut self, u: &mut [f64], v: &mut [f64], a: &mut [f64]) {
        if self.kinematics == RomKinematics::Reprojected {
            self.predict(u);
        }
        if self.kinematics != RomKinematics::Full {
            self.predict(v);
            self.predict(a);
        }
    }

    fn residual_norm(&mut self, sys: &GlobalSystem) -> f64 {
        self.reduced_residual = self.project(&sys.residual);
        norm(&self.reduced_residual)
    }

    fn increment(&mut self, sys: &GlobalSystem) -> std::result::Result<Vec<f64>, String> {
        let kr = self.reduced_tangent(sys);
        let mut dq = self.reduced_residual.clone();
        dense_solve(&kr, &mut dq)?;
        Ok(self.lift(&dq))
    }
}

/// Reduced transient run from rest (`q(0) = Φᵀ·0 = 0`).
pub fn run_transient_rom(
    model: &AleModel,
    basis: &PodBasis,
    kinematics: RomKinematics,
    opts: &RunOptions,
) -> Result<(Trajectory, AleState)> {
    if basis.n_free != model.dofs().n_free() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows but the model has {} free DOFs",
            basis.n_free,
            model.dofs().n_free()
        )));
    }
    let mut backend = ReducedBackend::new(basis, kinematics);
    run_transient_with(model, &mut backend, AleState::rest(model.mesh(), 0.0), opts)
}
