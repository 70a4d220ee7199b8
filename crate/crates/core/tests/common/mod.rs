//! Checks shared by the integration tests and the acceptance harness.

use std::sync::Arc;

use morale::ale::{Assembler, AssemblyInput, KinematicState, NewmarkParams};
use morale::material::{MaterialParams, MaterialPointState};
use morale::mesh::{build_layered_grid, AxisDivision, GridSpec, LayerSpec, Mesh};
use nalgebra::{DMatrix, DVector, Vector3};

fn two_layer_mesh() -> Mesh {
    let layer = |name: &str, t: f64| LayerSpec {
        name: name.into(),
        thickness: t,
        division: AxisDivision::Uniform { count: 1 },
    };
    let spec = GridSpec {
        layers: vec![layer("top", 0.4), layer("bottom", 0.6)],
        ..GridSpec::uniform_box([2.0, 1.0, 1.0], [3, 2, 2])
    };
    build_layered_grid(&spec).unwrap()
}

/// Central-difference check of the assembled dynamic tangent, `K = −∂G/∂u`
/// with velocity and acceleration following the Newmark update, on a StVK
/// layer over a viscoelastic one. Returns the relative error and the relative
/// asymmetry of the analytic tangent.
pub fn assembled_tangent_check(w: Vector3<f64>, wdot: Vector3<f64>) -> (f64, f64) {
    let mesh = Arc::new(two_layer_mesh());
    let stvk = MaterialParams::StVenantKirchhoff {
        lambda: 2500.0,
        mu: 1250.0,
        density: 10.0,
    };
    let visco = MaterialParams::NeoVisco {
        kappa: 3000.0,
        mu: 1000.0,
        mu_v: 500.0,
        eta_v: 200.0,
        density: 12.0,
    };
    let asm = Assembler::new(mesh.clone(), vec![stvk, visco]).unwrap();
    let nm = NewmarkParams::default();
    let (c2, _) = nm.increment_factors();
    let ca = 1.0 / (2.0 * nm.beta) - 1.0;
    let (dt, gamma) = (nm.dt, nm.gamma);

    // committed state at t_n with nonzero fields everywhere
    let field = |s: f64| -> Vec<Vector3<f64>> {
        mesh.nodes
            .iter()
            .map(|x| Vector3::new((s * x.x + x.y).sin(), (x.z * s).cos() - 0.5, (x.x * x.y + s).sin()) * 0.02)
            .collect()
    };
    let mut base = KinematicState {
        u: field(1.3),
        v: field(2.1),
        a: field(0.7),
    };
    for &(node, d) in &mesh.dirichlet_nodes {
        base.u[node][d] = 0.0;
        base.v[node][d] = 0.0;
        base.a[node][d] = 0.0;
    }
    let mut history = vec![MaterialPointState::virgin(); 8 * mesh.n_elements()];
    for (i, h) in history.iter_mut().enumerate() {
        h.cv = [1.05, 0.97, 1.02, 0.01 * (i % 3) as f64, -0.02, 0.015];
    }
    let f_ext = vec![0.0; mesh.n_dofs()];

    let assemble = |x: &DVector<f64>| {
        let mut kin = base.clone();
        for (k, &d) in asm.dofs.free_dofs.iter().enumerate() {
            kin.u[d / 3][d % 3] = x[k];
        }
        for i in 0..mesh.n_nodes() {
            let a = (kin.u[i] - base.u[i] - base.v[i] * dt) * c2 - base.a[i] * ca;
            kin.v[i] = base.v[i] + (base.a[i] * (1.0 - gamma) + a * gamma) * dt;
            kin.a[i] = a;
        }
        asm.assemble(&AssemblyInput {
            kin: &kin,
            history: &history,
            w,
            wdot,
            f_ext: &f_ext,
            newmark: nm,
            keep_components: false,
        })
        .unwrap()
    };
    let nf = asm.dofs.n_free();
    let x0 = DVector::from_iterator(
        nf,
        asm.dofs
            .free_dofs
            .iter()
            .enumerate()
            .map(|(k, &d)| base.u[d / 3][d % 3] + 0.01 * ((k as f64) * 0.37).sin()),
    );
    let k = assemble(&x0).k_dyn.to_dense();
    let h = 1e-6;
    let mut fd = DMatrix::zeros(nf, nf);
    for j in 0..nf {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        let (gp, gm) = (assemble(&xp).residual, assemble(&xm).residual);
        for i in 0..nf {
            fd[(i, j)] = -(gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let scale = k.amax();
    ((&k - &fd).amax() / scale, (&k - k.transpose()).amax() / scale)
}
