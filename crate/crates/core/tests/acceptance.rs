//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test --release -p morale-core --test acceptance`.

mod common;

use std::sync::Arc;
use std::time::Instant;

use morale::advection::{advect_nodal_field, LocationIndex};
use morale::ale::{Amplitude, ExternalLoads, GuidingSchedule, NewmarkParams, PiecewiseLinear, SurfaceLoad};
use morale::lagrangian::{run_lagrangian, LagrangianModel};
use morale::material::{commit_state, stvk_response, visco_response, MaterialParams, MaterialPointState, Tangent};
use morale::mesh::{build_gauss_submesh, build_layered_grid, AxisDivision, GridSpec, Rect};
use morale::mor::{build_snapshot_matrix, compute_basis, run_transient_rom, ModeSelection, PodBasis, RomKinematics, SnapshotMatrix};
use morale::scenario::Scenario;
use morale::solver::{run_transient, AleModel, Probe, RunOptions, SolverControls, Trajectory};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};

struct Suite {
    failed: usize,
}

impl Suite {
    fn check(&mut self, id: &str, ok: bool, what: impl std::fmt::Display) {
        println!("{} {id:<4} {what}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn uz(t: &Trajectory, probe: &str) -> Vec<f64> {
    t.probe(probe).expect("probe exists").iter().map(|u| u.z).collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
fn rel_rms(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    (num / na.max(nb)).sqrt()
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn degenerate_equivalence(s: &mut Suite) {
    let t0 = Instant::now();
    let mesh = Arc::new(build_layered_grid(&GridSpec::uniform_box([8.0, 4.0, 1.0], [16, 8, 2])).unwrap());
    let stvk = MaterialParams::StVenantKirchhoff {
        lambda: 2500.0,
        mu: 1250.0,
        density: 10.0,
    };
    let load = SurfaceLoad {
        rects: vec![Rect::centered(4.0, 2.0, 1.0, 1.0)],
        pressure: 50.0,
        amplitude: Amplitude {
            base: PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap(),
            modulation: None,
        },
    };
    let controls = SolverControls {
        tolerance: 1e-10,
        ..Default::default()
    };
    let nm = NewmarkParams::default();
    let loads = ExternalLoads::new(&mesh, std::slice::from_ref(&load), &[10.0], None).unwrap();
    let ale = AleModel::new(mesh.clone(), vec![stvk], loads, GuidingSchedule::stationary(), nm, controls).unwrap();
    let lag = LagrangianModel::new(mesh, vec![stvk], vec![load], GuidingSchedule::stationary(), None, nm, controls).unwrap();
    let opts = RunOptions {
        t_end: 100.0 * nm.dt,
        probes: ["surface", "inner"]
            .iter()
            .zip([Vector3::new(4.0, 2.0, 1.0), Vector3::new(3.25, 1.5, 0.5)])
            .map(|(n, p)| Probe {
                name: n.to_string(),
                point: p,
            })
            .collect(),
        ..Default::default()
    };
    let (a, _) = run_transient(&ale, &opts).unwrap();
    let (b, _) = run_lagrangian(&lag, &opts).unwrap();
    let mut worst = 0.0f64;
    for name in ["surface", "inner"] {
        for (x, y) in a.probe(name).unwrap().iter().zip(b.probe(name).unwrap()) {
            worst = worst.max((x - y).amax());
        }
    }
    let dt = secs(t0);
    s.check(
        "C1",
        a.times.len() == 100 && worst < 1e-10 && dt < 60.0,
        format_args!("stationary frame vs fixed-mesh Newmark, 100 steps: max |du| = {worst:.2e} m (< 1e-10), {dt:.1} s (< 60)"),
    );
}

fn lagrangian_vs_ale(s: &mut Suite) {
    let t0 = Instant::now();
    let sc = Scenario::builtin("desk").unwrap();
    let (fom, _) = run_transient(&sc.ale_model().unwrap(), &sc.run_options(false)).unwrap();
    let (lag, _) = run_lagrangian(&sc.lagrangian_model().unwrap(), &sc.run_options(false)).unwrap();
    // constant-velocity window of the desk timeline
    let pts = sc.guiding.speed.points();
    let (w0, w1) = (pts[2].0, pts[3].0);
    let keep: Vec<usize> = (0..fom.times.len()).filter(|&k| (w0 - 1e-9..=w1 + 1e-9).contains(&fom.times[k])).collect();
    let pick = |v: Vec<f64>| keep.iter().map(|&k| v[k]).collect::<Vec<_>>();
    let e = rel_rms(&pick(uz(&fom, "surface")), &pick(uz(&lag, "surface")));
    let dt = secs(t0);
    s.check(
        "C2",
        e < 0.05 && dt < 600.0,
        format_args!(
            "desk scenario ({} elements) vs fixed mesh, u_z over [{w0}, {w1}] s: relative RMS {:.2}% (< 5%), {dt:.1} s (< 600)",
            elements(&sc),
            100.0 * e
        ),
    );
}

fn elements(sc: &Scenario) -> usize {
    sc.build_mesh().map(|m| m.n_elements()).unwrap_or(0)
}

/// Study-1 full-order run shared by the reduced-order criteria.
struct Study1 {
    model: AleModel,
    opts: RunOptions,
    fom: Trajectory,
    d: SnapshotMatrix,
}

fn study1() -> Study1 {
    let sc = Scenario::builtin("study1").unwrap();
    let model = sc.ale_model().unwrap();
    let opts = sc.run_options(true);
    let (fom, _) = run_transient(&model, &opts).unwrap();
    let d = build_snapshot_matrix(&fom).unwrap();
    let opts = RunOptions {
        store_snapshots: false,
        ..opts
    };
    Study1 { model, opts, fom, d }
}

fn fom_vs_rom(s: &mut Suite, st: &Study1) -> (PodBasis, Trajectory) {
    let b = compute_basis(&st.d, ModeSelection::Energy(0.9999)).unwrap();
    let (rom, _) = run_transient_rom(&st.model, &b, RomKinematics::default(), &st.opts).unwrap();
    let e = rel_rms(&uz(&st.fom, "surface"), &uz(&rom, "surface"));
    s.check(
        "C3a",
        e <= 0.02,
        format_args!("study1 ROM at energy 0.9999 (m = {} of {} snapshots): relative RMS {:.2}% (<= 2%)", b.m, st.d.n_columns(), 100.0 * e),
    );

    let full = compute_basis(&st.d, ModeSelection::Fixed(st.d.n_columns())).unwrap();
    let (r, _) = run_transient_rom(&st.model, &full, RomKinematics::default(), &st.opts).unwrap();
    let e = rel_rms(&uz(&st.fom, "surface"), &uz(&r, "surface"));
    let tol = st.model.controls.tolerance;
    s.check(
        "C3b",
        e <= 10.0 * tol,
        format_args!("study1 ROM at m = rank(D) = {}: relative RMS {:.2e} (<= 10 x Newton tolerance {tol:.0e})", full.m, e),
    );
    (b, rom)
}

fn speedup(s: &mut Suite, st: &Study1, b: &PodBasis, rom: &Trajectory) {
    let (f, r) = (&st.fom.timings, &rom.timings);
    let solve = f.solve.as_secs_f64() / r.solve.as_secs_f64();
    let total = f.total.as_secs_f64() / r.total.as_secs_f64();
    s.check(
        "C5",
        st.model.mesh().n_elements() >= 2048 && solve >= 5.0 && total >= 2.0,
        format_args!(
            "{} elements, m = {}: solve {:.1} s -> {:.1} s ({solve:.1}x, >= 5), total {:.1} s -> {:.1} s ({total:.2}x, >= 2)",
            st.model.mesh().n_elements(),
            b.m,
            f.solve.as_secs_f64(),
            r.solve.as_secs_f64(),
            f.total.as_secs_f64(),
            r.total.as_secs_f64()
        ),
    );
}

fn prediction(s: &mut Suite) {
    let t0 = Instant::now();
    let base = Scenario::builtin("study1").unwrap();
    let variant = |w: f64, p: f64| {
        let mut sc = base.clone();
        sc.grid.layers[0].division = AxisDivision::Uniform { count: 2 };
        let pts = sc.guiding.speed.points();
        let w_max = pts.iter().fold(0.0f64, |m, q| m.max(q.1));
        let speed = PiecewiseLinear::new(pts.iter().map(|&(t, v)| (t, v * w / w_max)).collect()).unwrap();
        sc.guiding = GuidingSchedule::new(speed, sc.guiding.direction).unwrap();
        sc.loads[0].pressure = p;
        sc
    };
    let train = variant(25.0, 50.0);
    let (fom, _) = run_transient(&train.ale_model().unwrap(), &train.run_options(true)).unwrap();
    let b = compute_basis(&build_snapshot_matrix(&fom).unwrap(), ModeSelection::Energy(0.9999)).unwrap();
    let elements = elements(&train);
    for (w, p) in [(20.0, 50.0), (25.0, 60.0), (20.0, 60.0)] {
        let sc = variant(w, p);
        let model = sc.ale_model().unwrap();
        let (f, _) = run_transient(&model, &sc.run_options(false)).unwrap();
        let (r, _) = run_transient_rom(&model, &b, RomKinematics::default(), &sc.run_options(false)).unwrap();
        let e = rel_rms(&uz(&f, "surface"), &uz(&r, "surface"));
        s.check(
            "C4",
            e < 0.05,
            format_args!("basis from (25 m/s, 50 Pa), m = {}, {elements} elements, run at ({w} m/s, {p} Pa): relative RMS {:.2}% (< 5%)", b.m, 100.0 * e),
        );
    }
    println!("     prediction runs took {:.1} s", secs(t0));
}

fn schedule_integral(s: &mut Suite) {
    let sc = Scenario::builtin("study2").unwrap();
    let t_stop = sc.guiding.speed.end().max(sc.t_end);
    let travel = sc.guiding.travel(t_stop);
    s.check(
        "C6",
        (travel - 305.56).abs() <= 0.005 * 305.56,
        format_args!("study2 frame travel {travel:.2} m (305.56 m +- 0.5%)"),
    );
}

fn submesh_counts(s: &mut Suite) {
    let mesh = Scenario::builtin("study2").unwrap().build_mesh().unwrap();
    let sub = build_gauss_submesh(&mesh).unwrap();
    s.check(
        "C7",
        mesh.n_elements() == 4680 && sub.n_subnodes() == 37440 && sub.n_cells() == 27846,
        format_args!(
            "study2 mesh {} elements: {} sub-nodes (37440), {} sub-cells (27846)",
            mesh.n_elements(),
            sub.n_subnodes(),
            sub.n_cells()
        ),
    );
}

fn fd_tangent(p: impl Fn(&Matrix3<f64>) -> Matrix3<f64>, f: &Matrix3<f64>) -> Tangent {
    let h = 1e-6;
    let mut t = Tangent::zeros();
    for k in 0..3 {
        for l in 0..3 {
            let mut fp = *f;
            fp[(k, l)] += h;
            let mut fm = *f;
            fm[(k, l)] -= h;
            let dp = (p(&fp) - p(&fm)) / (2.0 * h);
            for i in 0..3 {
                for j in 0..3 {
                    t[(3 * i + j, 3 * k + l)] = dp[(i, j)];
                }
            }
        }
    }
    t
}

const VISCO: MaterialParams = MaterialParams::NeoVisco {
    kappa: 3000.0,
    mu: 1000.0,
    mu_v: 500.0,
    eta_v: 200.0,
    density: 12.0,
};

fn hygiene(s: &mut Suite, st: &Study1) {
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let mut random_f = |amp: f64| loop {
        let f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.random_range(-amp..amp));
        if f.determinant() > 0.3 {
            return f;
        }
    };
    let (mut e_stvk, mut e_visco) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let f = random_f(0.3);
        let an = stvk_response(&f, 2500.0, 1250.0).unwrap().tangent;
        let fd = fd_tangent(|f| stvk_response(f, 2500.0, 1250.0).unwrap().stress, &f);
        e_stvk = e_stvk.max((an - fd).norm() / an.norm());

        let f = random_f(0.25);
        let c0 = {
            let g = random_f(0.2);
            let c = g.transpose() * g;
            c * c.determinant().powf(-1.0 / 3.0)
        };
        let state = MaterialPointState::from_matrix(&c0);
        let an = visco_response(&f, &VISCO, &state, 0.05).unwrap().0.tangent;
        let fd = fd_tangent(|f| visco_response(f, &VISCO, &state, 0.05).unwrap().0.stress, &f);
        e_visco = e_visco.max((an - fd).norm() / an.norm());
    }
    s.check("C8a", e_stvk < 1e-6, format_args!("StVK material tangent vs finite differences: {e_stvk:.1e} (< 1e-6)"));
    s.check("C8b", e_visco < 1e-6, format_args!("viscoelastic material tangent vs finite differences: {e_visco:.1e} (< 1e-6)"));

    let (err, asym) = common::assembled_tangent_check(Vector3::new(-3.0, 0.5, 0.0), Vector3::new(0.4, -0.2, 0.0));
    s.check(
        "C8c",
        err < 1e-6,
        format_args!("assembled dynamic tangent at w != 0 vs finite differences: {err:.1e} (< 1e-6), asymmetry {asym:.1e}"),
    );

    let b = compute_basis(&st.d, ModeSelection::Energy(0.9999)).unwrap();
    let defect = b.orthonormality_defect();
    s.check("C8d", defect < 1e-10, format_args!("study1 POD basis orthonormality: {defect:.1e} (< 1e-10)"));

    let tail = b.sigma[b.m..].iter().map(|x| x * x).sum::<f64>().sqrt();
    let worst = (0..st.d.n_columns())
        .map(|j| {
            let c = st.d.column(j);
            let r = b.reconstruct(&b.project(c));
            c.iter().zip(&r).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        })
        .fold(0.0f64, f64::max);
    s.check(
        "C8e",
        worst <= tail * (1.0 + 1e-9) + 1e-14,
        format_args!("snapshot reconstruction error {worst:.2e} <= discarded singular tail {tail:.2e}"),
    );

    let spec = GridSpec {
        x: AxisDivision::Graded {
            spacing: vec![0.8, 0.5, 0.3, 0.3, 0.4, 0.7, 1.0],
        },
        y: AxisDivision::Graded {
            spacing: vec![0.6, 0.4, 0.5, 0.5],
        },
        ..GridSpec::uniform_box([4.0, 2.0, 1.0], [7, 4, 3])
    };
    let mesh = build_layered_grid(&spec).unwrap();
    let index = LocationIndex::build(&mesh.nodes, &mesh.elements);
    let (lo, hi) = mesh.bounds();
    let mut adv = 0.0f64;
    for _ in 0..20 {
        let g = Matrix3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let c = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let shift = Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), 0.0);
        let field: Vec<_> = mesh.nodes.iter().map(|x| g * x + c).collect();
        let out = advect_nodal_field(&mesh, &index, &field, &shift);
        for (x, v) in mesh.nodes.iter().zip(&out) {
            let up = x - shift;
            if (0..3).all(|i| up[i] >= lo[i] + 1e-9 && up[i] <= hi[i] - 1e-9) {
                let exact = g * up + c;
                adv = adv.max((v - exact).amax() / (1.0 + exact.amax()));
            }
        }
    }
    s.check("C8f", adv < 1e-12, format_args!("advection of linear fields on a graded grid: {adv:.1e} (< 1e-12)"));

    // held deformation: the non-equilibrium stress decays monotonically
    let mut f = Matrix3::identity();
    f[(0, 1)] = 0.3;
    f[(2, 2)] = 1.05;
    let MaterialParams::NeoVisco { kappa, mu, .. } = VISCO else { unreachable!() };
    let eq = MaterialParams::NeoVisco {
        kappa,
        mu,
        mu_v: 1e-300,
        eta_v: 1.0,
        density: 1.0,
    };
    let p_eq = visco_response(&f, &eq, &MaterialPointState::virgin(), 1.0).unwrap().0.stress;
    let mut state = MaterialPointState::virgin();
    let (mut last, mut first, mut monotone) = (f64::INFINITY, 0.0, true);
    for k in 0..5000 {
        let (r, trial) = visco_response(&f, &VISCO, &state, 0.01).unwrap();
        let neq = (r.stress - p_eq).norm();
        if k == 0 {
            first = neq;
        }
        monotone &= neq <= last * (1.0 + 1e-12) + 1e-13 * p_eq.norm();
        last = neq;
        state = commit_state(trial);
    }
    s.check(
        "C8g",
        monotone && last < 1e-6 * first,
        format_args!("viscoelastic relaxation at held deformation: monotone = {monotone}, overstress {first:.2e} -> {last:.2e} Pa"),
    );
}

fn main() {
    let start = Instant::now();
    let mut s = Suite { failed: 0 };
    degenerate_equivalence(&mut s);
    lagrangian_vs_ale(&mut s);
    let t = Instant::now();
    let st = study1();
    println!("     study1 full-order run took {:.1} s", secs(t));
    let (b, rom) = fom_vs_rom(&mut s, &st);
    prediction(&mut s);
    speedup(&mut s, &st, &b, &rom);
    schedule_integral(&mut s);
    submesh_counts(&mut s);
    hygiene(&mut s, &st);
    let total = secs(start);
    s.check("C8h", total < 900.0, format_args!("full suite runtime {total:.0} s (< 900)"));
    if s.failed > 0 {
        println!("{} criteria failed", s.failed);
        std::process::exit(1);
    }
}
