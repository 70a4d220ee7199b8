//! Constitutive laws.
//!
//! Two models are available:
//!
//! * St. Venant Kirchhoff: `S = λ tr(E) I + 2 μ E`, `E = (FᵀF − I)/2`.
//! * A finite-strain Maxwell model on a Neo-Hookean basis. The equilibrium
//!   branch stores `κ/4 (J² − 1 − 2 ln J) + μ/2 (tr C̄ − 3)`, the
//!   non-equilibrium branch `μ_v/2 (tr(C̄ C_v⁻¹) − 3)` with the viscous right
//!   Cauchy–Green tensor `C_v` as internal variable. `C_v` evolves as
//!   `Ċ_v = (μ_v/η_v) (C̄ − ⅓ tr(C̄ C_v⁻¹) C_v)`, which keeps `det C_v = 1` and
//!   yields non-negative dissipation. Backward Euler together with the
//!   unimodularity constraint has the closed-form solution
//!   `C_v = det(B)^{-1/3} B` with `B = C_v,n + (μ_v Δt/η_v) C̄`.
//!
//! Stresses are first Piola–Kirchhoff; tangents are `∂P_iJ/∂F_kL` stored as a
//! 9×9 matrix with row `3 i + J` and column `3 k + L`.

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Tangent = SMatrix<f64, 9, 9>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MaterialParams {
    /// St. Venant Kirchhoff with Lamé constants [Pa].
    StVenantKirchhoff { lambda: f64, mu: f64, density: f64 },
    /// Neo-Hookean equilibrium branch (κ, μ) plus a Maxwell branch (μ_v, η_v).
    NeoVisco {
        kappa: f64,
        mu: f64,
        mu_v: f64,
        eta_v: f64,
        density: f64,
    },
}

impl MaterialParams {
    pub fn density(&self) -> f64 {
        match *self {
            MaterialParams::StVenantKirchhoff { density, .. } => density,
            MaterialParams::NeoVisco { density, .. } => density,
        }
    }

    pub fn is_viscous(&self) -> bool {
        matches!(self, MaterialParams::NeoVisco { .. })
    }

    /// Returns a list of violated invariants (empty when valid).
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |name: &str, x: f64| {
            if !(x > 0.0) || !x.is_finite() {
                v.push(format!("{name} must be strictly positive, got {x}"));
            }
        };
        match *self {
            MaterialParams::StVenantKirchhoff { lambda, mu, density } => {
                check("lambda", lambda);
                check("mu", mu);
                check("density", density);
            }
            MaterialParams::NeoVisco {
                kappa,
                mu,
                mu_v,
                eta_v,
                density,
            } => {
                check("kappa", kappa);
                check("mu", mu);
                check("mu_v", mu_v);
                check("eta_v", eta_v);
                check("density", density);
            }
        }
        v
    }

    /// Stress and consistent tangent for a trial deformation.
    pub fn response(
        &self,
        f: &Matrix3<f64>,
        state: &MaterialPointState,
        dt: f64,
    ) -> Result<(StressTangent, TrialState)> {
        match *self {
            MaterialParams::StVenantKirchhoff { lambda, mu, .. } => {
                Ok((stvk_response(f, lambda, mu)?, TrialState(*state)))
            }
            MaterialParams::NeoVisco { .. } => visco_response(f, self, state, dt),
        }
    }

    /// Stored energy per unit reference volume.
    pub fn strain_energy(&self, f: &Matrix3<f64>, state: &MaterialPointState) -> f64 {
        let c = f.transpose() * f;
        match *self {
            MaterialParams::StVenantKirchhoff { lambda, mu, .. } => {
                let e = 0.5 * (c - Matrix3::identity());
                0.5 * lambda * e.trace().powi(2) + mu * (e * e).trace()
            }
            MaterialParams::NeoVisco { .. } => neo_energy(self, &c, &state.to_matrix()),
        }
    }
}

/// Viscous internal variable `C_v` of one Gauss point, stored as
/// `[xx, yy, zz, yz, xz, xy]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialPointState {
    pub cv: [f64; 6],
}

impl Default for MaterialPointState {
    fn default() -> Self {
        Self::virgin()
    }
}

impl MaterialPointState {
    pub fn virgin() -> Self {
        MaterialPointState {
            cv: [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        MaterialPointState {
            cv: [
                m[(0, 0)],
                m[(1, 1)],
                m[(2, 2)],
                0.5 * (m[(1, 2)] + m[(2, 1)]),
                0.5 * (m[(0, 2)] + m[(2, 0)]),
                0.5 * (m[(0, 1)] + m[(1, 0)]),
            ],
        }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let c = &self.cv;
        Matrix3::new(c[0], c[5], c[4], c[5], c[1], c[3], c[4], c[3], c[2])
    }

    pub fn is_spd(&self) -> bool {
        let m = self.to_matrix();
        m.cholesky().is_some()
    }
}

/// Updated internal state that has not been committed yet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialState(pub MaterialPointState);

/// Promotes a trial state to the committed state of the next step.
pub fn commit_state(trial: TrialState) -> MaterialPointState {
    trial.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressTangent {
    pub stress: Matrix3<f64>,
    pub tangent: Tangent,
}

fn check_det(f: &Matrix3<f64>) -> Result<f64> {
    let det_f = f.determinant();
    if !(det_f > 0.0) {
        return Err(Error::InvertedElement { det_f });
    }
    Ok(det_f)
}

/// Assembles `∂P/∂F` from `S` and a directional derivative `dC ↦ dS`.
fn piola_tangent(
    f: &Matrix3<f64>,
    s: &Matrix3<f64>,
    mut ds: impl FnMut(&Matrix3<f64>) -> Matrix3<f64>,
) -> Tangent {
    let mut t = Tangent::zeros();
    for k in 0..3 {
        for l in 0..3 {
            let mut df = Matrix3::zeros();
            df[(k, l)] = 1.0;
            let dc = df.transpose() * f + f.transpose() * df;
            let dp = df * s + f * ds(&dc);
            for i in 0..3 {
                for j in 0..3 {
                    t[(3 * i + j, 3 * k + l)] = dp[(i, j)];
                }
            }
        }
    }
    t
}

pub fn stvk_response(f: &Matrix3<f64>, lambda: f64, mu: f64) -> Result<StressTangent> {
    check_det(f)?;
    let id = Matrix3::identity();
    let e = 0.5 * (f.transpose() * f - id);
    let s = id * (lambda * e.trace()) + e * (2.0 * mu);
    let tangent = piola_tangent(f, &s, |dc| {
        let de = 0.5 * dc;
        id * (lambda * de.trace()) + de * (2.0 * mu)
    });
    Ok(StressTangent {
        stress: f * s,
        tangent,
    })
}

struct NeoVisco {
    kappa: f64,
    mu: f64,
    mu_v: f64,
    /// μ_v Δt / η_v
    rate: f64,
}

struct NeoEval {
    s: Matrix3<f64>,
    cv: Matrix3<f64>,
}

impl NeoVisco {
    fn of(params: &MaterialParams, dt: f64) -> Self {
        match *params {
            MaterialParams::NeoVisco {
                kappa,
                mu,
                mu_v,
                eta_v,
                ..
            } => NeoVisco {
                kappa,
                mu,
                mu_v,
                rate: mu_v * dt / eta_v,
            },
            MaterialParams::StVenantKirchhoff { .. } => unreachable!("not a viscous material"),
        }
    }

    fn evaluate(&self, c: &Matrix3<f64>, cv_n: &Matrix3<f64>) -> Result<NeoEval> {
        let id = Matrix3::<f64>::identity();
        let j2 = c.determinant();
        let ci = c.try_inverse().ok_or(Error::InvertedElement { det_f: 0.0 })?;
        let jm23 = j2.powf(-1.0 / 3.0);
        let i1 = c.trace();

        let s_vol = ci * (0.5 * self.kappa * (j2 - 1.0));
        let s_iso = (id - ci * (i1 / 3.0)) * (self.mu * jm23);

        let b = cv_n + c * (self.rate * jm23);
        let det_b = b.determinant();
        if !(det_b > 0.0) {
            return Err(Error::IntegrationFailure(format!("det B = {det_b:e}")));
        }
        let cv = b * det_b.powf(-1.0 / 3.0);
        if cv.cholesky().is_none() {
            return Err(Error::IntegrationFailure("trial C_v is not positive definite".into()));
        }
        let bi = b
            .try_inverse()
            .ok_or_else(|| Error::IntegrationFailure("singular B".into()))?;
        let cvi = bi * det_b.powf(1.0 / 3.0);
        let tr = (c * cvi).trace();
        let s_neq = (cvi - ci * (tr / 3.0)) * (self.mu_v * jm23);
        Ok(NeoEval {
            s: s_vol + s_iso + s_neq,
            cv,
        })
    }

    /// Directional derivative of the algorithmic `S` along `dc`.
    fn derivative(&self, c: &Matrix3<f64>, cv_n: &Matrix3<f64>, dc: &Matrix3<f64>) -> Matrix3<f64> {
        let id = Matrix3::<f64>::identity();
        let j2 = c.determinant();
        let ci = c.try_inverse().expect("checked in evaluate");
        let jm23 = j2.powf(-1.0 / 3.0);
        let i1 = c.trace();
        let tr_cidc = (ci * dc).trace();

        let dj2 = j2 * tr_cidc;
        let dci = -ci * dc * ci;
        let d_s_vol = (ci * dj2 + dci * (j2 - 1.0)) * (0.5 * self.kappa);

        let djm23 = -jm23 * tr_cidc / 3.0;
        let di1 = dc.trace();
        let d_s_iso = ((id - ci * (i1 / 3.0)) * djm23 - (ci * di1 + dci * i1) * (jm23 / 3.0)) * self.mu;

        let b = cv_n + c * (self.rate * jm23);
        let bi = b.try_inverse().expect("checked in evaluate");
        let cb = b.determinant().powf(1.0 / 3.0);
        let db = (c * djm23 + dc * jm23) * self.rate;
        let dcb = cb * (bi * db).trace() / 3.0;
        let cvi = bi * cb;
        let dcvi = bi * dcb - bi * db * bi * cb;
        let tr = (c * cvi).trace();
        let dtr = (dc * cvi).trace() + (c * dcvi).trace();
        let d_s_neq = ((cvi - ci * (tr / 3.0)) * djm23
            + (dcvi - ci * (dtr / 3.0) - dci * (tr / 3.0)) * jm23)
            * self.mu_v;
        d_s_vol + d_s_iso + d_s_neq
    }
}

fn neo_energy(params: &MaterialParams, c: &Matrix3<f64>, cv: &Matrix3<f64>) -> f64 {
    let MaterialParams::NeoVisco { kappa, mu, mu_v, .. } = *params else {
        unreachable!()
    };
    let j2 = c.determinant();
    let j = j2.sqrt();
    let jm23 = j2.powf(-1.0 / 3.0);
    let cvi = cv.try_inverse().unwrap_or_else(Matrix3::identity);
    0.25 * kappa * (j2 - 1.0 - 2.0 * j.ln())
        + 0.5 * mu * (jm23 * c.trace() - 3.0)
        + 0.5 * mu_v * (jm23 * (c * cvi).trace() - 3.0)
}

/// Viscoelastic response with an implicit update of `C_v` over `dt`.
/// The returned trial state is not committed.
pub fn visco_response(
    f: &Matrix3<f64>,
    params: &MaterialParams,
    state_n: &MaterialPointState,
    dt: f64,
) -> Result<(StressTangent, TrialState)> {
    check_det(f)?;
    if !(dt > 0.0) {
        return Err(Error::IntegrationFailure(format!("time increment must be positive, got {dt}")));
    }
    let model = NeoVisco::of(params, dt);
    let c = f.transpose() * f;
    let cv_n = state_n.to_matrix();
    let eval = model.evaluate(&c, &cv_n)?;
    let tangent = piola_tangent(f, &eval.s, |dc| model.derivative(&c, &cv_n, dc));
    Ok((
        StressTangent {
            stress: f * eval.s,
            tangent,
        },
        TrialState(MaterialPointState::from_matrix(&eval.cv)),
    ))
}

/// Euler–Almansi strain `(I − F⁻ᵀ F⁻¹)/2`.
pub fn euler_almansi(f: &Matrix3<f64>) -> Matrix3<f64> {
    let b_inv = (f * f.transpose())
        .try_inverse()
        .unwrap_or_else(Matrix3::identity);
    0.5 * (Matrix3::identity() - b_inv)
}
