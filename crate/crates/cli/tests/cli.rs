use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
name = "tiny"

[mesh]
extent = ["4 m", "2 m"]
x = { count = 8 }
y = { count = 4 }
[[mesh.layers]]
name = "soil"
material = "soil"
thickness = "1 m"
z = { count = 2 }

[materials.soil]
model = "st_venant_kirchhoff"
lambda = "2500 Pa"
mu = "1250 Pa"
density = "10 kg/m^3"

[[loads]]
center = ["2 m", "1 m"]
size = ["1 m", "1 m"]
pressure = "50 Pa"
amplitude = [["0 s", 0.0], ["0.5 s", 1.0]]

[guiding]
direction = [-1.0, 0.0, 0.0]
speed = [["0 s", "0 m/s"], ["0.5 s", "0 m/s"], ["1 s", "4 m/s"]]

[time]
dt = "0.05 s"
end = "1.5 s"

[[probes]]
name = "center"
point = ["2 m", "1 m", "1 m"]

[mor]
tol = 0.9999
"#;

fn morale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morale"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn metric(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .trim()
        .parse()
        .unwrap()
}

fn write_scenario(dir: &Path) -> String {
    let p = dir.join("tiny.scenario");
    std::fs::write(&p, TINY).unwrap();
    p.display().to_string()
}

#[test]
fn self_comparison_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "time,ux,uy,uz\n0.05,1e-3,0,-2e-3\n0.1,2e-3,1e-4,-3e-3\n").unwrap();
    let a = a.display().to_string();
    let out = ok(&morale(&["compare", &a, &a]));
    assert_eq!(metric(&out, "relative_rms"), 0.0);
    assert_eq!(metric(&out, "max_abs"), 0.0);
}

#[test]
fn full_order_snapshot_basis_and_reduced_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path());
    let fom = dir.path().join("fom");
    let fom_s = fom.display().to_string();
    ok(&morale(&["snapshot", "--scenario", &sc, "--out", &fom_s, "--dump-fields", "1.0"]));

    let csv = std::fs::read_to_string(fom.join("probe_center.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("time,ux,uy,uz"));
    assert_eq!(lines.count(), 30);
    let report = std::fs::read_to_string(fom.join("report.toml")).unwrap();
    for key in ["assembly_s", "solve_s", "advection_s", "total_s", "newton_histogram"] {
        assert!(report.contains(key), "{key} missing from report:\n{report}");
    }
    let vtk = std::fs::read_to_string(fom.join("field_t0001.000.vtk")).unwrap();
    assert!(vtk.contains("CELL_DATA") && vtk.contains("e_zz"));

    let snap = fom.join("snapshots.mors").display().to_string();
    let out = ok(&morale(&["basis", "--tol", "0.9999", &snap, "--out", &fom_s]));
    let m = metric(&out, "m");
    assert!((1.0..=30.0).contains(&m));
    assert!(metric(&out, "e") >= 0.9999);

    let rom = dir.path().join("rom").display().to_string();
    let basis = fom.join("basis.morb").display().to_string();
    ok(&morale(&["rom", &sc, "--basis", &basis, "--out", &rom]));
    let a = fom.join("probe_center.csv").display().to_string();
    let b = Path::new(&rom).join("probe_center.csv").display().to_string();
    let out = ok(&morale(&["compare", &a, &b]));
    assert!(metric(&out, "relative_rms") < 0.05);
}

#[test]
fn deterministic_runs_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path());
    let mut csv = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        ok(&morale(&["fom", "--scenario", &sc, "--deterministic", "--out", &out.display().to_string()]));
        csv.push(std::fs::read(out.join("probe_center.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn bad_inputs_fail_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.scenario");
    std::fs::write(&p, TINY.replace("lambda = \"2500 Pa\"", "lambda = \"2500 m\"")).unwrap();
    let out = morale(&["fom", "--scenario", &p.display().to_string()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("materials.soil.lambda"));

    let out = morale(&["fom", "--scenario", "no-such-thing"]);
    assert!(!out.status.success());

    let out = morale(&["rom", "--scenario", &write_scenario(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--basis"));
}
