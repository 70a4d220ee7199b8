//! Command-line driver: full-order, reduced and conventional runs plus basis tools.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use morale::mor::{self, ModeSelection, RomKinematics};
use morale::output::{self, RunReport};
use morale::scenario::Scenario;
use morale::solver::{run_transient, Trajectory};

#[derive(Parser)]
#[command(name = "morale", version, about = "Moving-frame FE runs with POD reduced-order models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full-order moving-frame run.
    Fom(RunArgs),
    /// Full-order run that also writes the snapshot matrix.
    Snapshot(RunArgs),
    /// Builds a POD basis from a snapshot file.
    Basis(BasisArgs),
    /// Reduced-order run.
    Rom(RomArgs),
    /// Error metrics between two probe CSV files.
    Compare(CompareArgs),
    /// Conventional moving-load run on a long fixed mesh.
    Lagrangian(RunArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file or built-in name (study1, study2, desk).
    #[arg(long = "scenario", value_name = "PATH")]
    scenario: Option<String>,
    #[arg(value_name = "SCENARIO", conflicts_with = "scenario")]
    scenario_pos: Option<String>,
    /// Output directory (default from the scenario).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for assembly and advection.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Sequential assembly for bitwise reproducible output.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Times at which to write VTK field dumps, comma separated [s].
    #[arg(long, value_name = "T1,T2,...", value_delimiter = ',')]
    dump_fields: Option<Vec<f64>>,
}

#[derive(Args)]
#[group(multiple = false)]
struct Selection {
    /// Energy tolerance for the mode count.
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    /// Fixed number of modes.
    #[arg(long, value_name = "M")]
    modes: Option<usize>,
}

impl Selection {
    fn resolve(&self, scenario: Option<&Scenario>) -> Result<ModeSelection> {
        match (self.tol, self.modes) {
            (Some(t), None) => Ok(ModeSelection::Energy(t)),
            (None, Some(m)) => Ok(ModeSelection::Fixed(m)),
            _ => scenario
                .and_then(|s| s.mor.as_ref())
                .map(|m| m.selection)
                .context("give --tol or --modes, or a scenario with a [mor] section"),
        }
    }
}

#[derive(Args)]
struct BasisArgs {
    /// Snapshot file (default: the scenario's snapshot source).
    #[arg(value_name = "SNAPSHOTS")]
    snapshots: Option<PathBuf>,
    #[arg(long = "scenario", value_name = "PATH")]
    scenario: Option<String>,
    #[command(flatten)]
    selection: Selection,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kinematics {
    ProjectedRates,
    Reprojected,
    Full,
}

#[derive(Args)]
struct RomArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Basis file; without it the basis is built from the scenario's snapshots.
    #[arg(long, value_name = "PATH")]
    basis: Option<PathBuf>,
    #[command(flatten)]
    selection: Selection,
    /// How advected fields enter the reduced step.
    #[arg(long, value_enum, default_value = "projected-rates")]
    kinematics: Kinematics,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Writes per-step errors and a report here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fom(a) => full_order(a, false),
        Command::Snapshot(a) => full_order(a, true),
        Command::Basis(a) => basis(a),
        Command::Rom(a) => rom(a),
        Command::Compare(a) => compare(a),
        Command::Lagrangian(a) => lagrangian(a),
    }
}

struct Setup {
    scenario: Scenario,
    out: PathBuf,
}

fn setup(c: &Common, dump_fields: &Option<Vec<f64>>) -> Result<Setup> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let spec = c
        .scenario
        .as_deref()
        .or(c.scenario_pos.as_deref())
        .context("no scenario given (--scenario PATH or a built-in name)")?;
    let mut scenario = Scenario::resolve(spec)?;
    if c.deterministic {
        scenario.controls.deterministic = true;
    }
    if let Some(t) = dump_fields {
        if let Some(bad) = t.iter().find(|&&t| !(0.0..=scenario.t_end).contains(&t)) {
            bail!("dump time {bad} s lies outside [0, {}] s", scenario.t_end);
        }
        scenario.dump_times = t.clone();
    }
    let out = c.out.clone().unwrap_or_else(|| scenario.output_dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Setup { scenario, out })
}

/// Probe CSVs, field dumps and the report of one transient run.
fn emit(s: &Setup, mesh: &morale::mesh::Mesh, traj: &Trajectory, mut report: RunReport) -> Result<()> {
    for p in output::write_probe_csvs(&s.out, traj)? {
        report.files.push(p.display().to_string());
    }
    for p in output::write_field_dumps(&s.out, mesh, &traj.dumps)? {
        report.files.push(p.display().to_string());
    }
    let path = report.write(&s.out)?;
    log::info!(
        "{} steps in {:.2} s (assembly {:.2} s, solve {:.2} s, advection {:.2} s); report {}",
        report.steps,
        report.total_s,
        report.assembly_s,
        report.solve_s,
        report.advection_s,
        path.display()
    );
    Ok(())
}

fn full_order(a: RunArgs, snapshots: bool) -> Result<()> {
    let s = setup(&a.common, &a.dump_fields)?;
    let model = s.scenario.ale_model()?;
    log::info!(
        "{}: {} elements, {} free DOFs, {} steps",
        s.scenario.name,
        model.mesh().n_elements(),
        model.dofs().n_free(),
        s.scenario.n_steps()
    );
    let (traj, _) = run_transient(&model, &s.scenario.run_options(snapshots))?;
    let command = if snapshots { "snapshot" } else { "fom" };
    let mut report = RunReport::from_trajectory(command, &s.scenario.name, &traj);
    if snapshots {
        let d = mor::build_snapshot_matrix(&traj)?;
        let path = s.out.join("snapshots.mors");
        mor::save_snapshots(&d, &path)?;
        report.files.push(path.display().to_string());
    }
    emit(&s, model.mesh(), &traj, report)
}

fn basis(a: BasisArgs) -> Result<()> {
    let scenario = a.scenario.as_deref().map(Scenario::resolve).transpose()?;
    let source = match (&a.snapshots, &scenario) {
        (Some(p), _) => p.clone(),
        (None, Some(s)) => s
            .mor
            .as_ref()
            .and_then(|m| m.snapshots.clone())
            .context("the scenario names no snapshot file; pass one")?,
        (None, None) => bail!("no snapshot file given"),
    };
    let selection = a.selection.resolve(scenario.as_ref())?;
    let t = Instant::now();
    let d = mor::load_snapshots(&source)?;
    let b = mor::compute_basis(&d, selection)?;
    let out = a
        .out
        .or_else(|| scenario.as_ref().map(|s| s.output_dir.clone()))
        .unwrap_or_else(|| source.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("basis.morb");
    mor::save_basis(&b, &path)?;
    let mut report = RunReport {
        command: "basis".into(),
        scenario: scenario.map(|s| s.name).unwrap_or_default(),
        modes: Some(b.m),
        energy: Some(b.energy()),
        total_s: t.elapsed().as_secs_f64(),
        files: vec![path.display().to_string()],
        ..Default::default()
    };
    report.write(&out)?;
    println!("m = {}", b.m);
    println!("e = {:.9}", b.energy());
    Ok(())
}

fn rom(a: RomArgs) -> Result<()> {
    let s = setup(&a.run.common, &a.run.dump_fields)?;
    let model = s.scenario.ale_model()?;
    let b = match &a.basis {
        Some(p) => mor::load_basis(p)?,
        None => {
            let src = s
                .scenario
                .mor
                .as_ref()
                .and_then(|m| m.snapshots.clone())
                .context("give --basis, or a scenario whose [mor] section names a snapshot file")?;
            let d = mor::load_snapshots(&src)?;
            mor::compute_basis(&d, a.selection.resolve(Some(&s.scenario))?)?
        }
    };
    let kinematics = match a.kinematics {
        Kinematics::ProjectedRates => RomKinematics::ProjectedRates,
        Kinematics::Reprojected => RomKinematics::Reprojected,
        Kinematics::Full => RomKinematics::Full,
    };
    log::info!("{}: {} modes (e = {:.6})", s.scenario.name, b.m, b.energy());
    let (traj, _) = mor::run_transient_rom(&model, &b, kinematics, &s.scenario.run_options(false))?;
    let mut report = RunReport::from_trajectory("rom", &s.scenario.name, &traj);
    report.modes = Some(b.m);
    report.energy = Some(b.energy());
    emit(&s, model.mesh(), &traj, report)
}

fn lagrangian(a: RunArgs) -> Result<()> {
    let s = setup(&a.common, &a.dump_fields)?;
    let model = s.scenario.lagrangian_model()?;
    log::info!(
        "{}: conventional run on {} elements, {} steps",
        s.scenario.name,
        model.mesh.n_elements(),
        s.scenario.n_steps()
    );
    let (traj, _) = morale::lagrangian::run_lagrangian(&model, &s.scenario.run_options(false))?;
    let report = RunReport::from_trajectory("lagrangian", &s.scenario.name, &traj);
    emit(&s, &model.mesh, &traj, report)
}

fn compare(a: CompareArgs) -> Result<()> {
    let x = output::read_probe_csv(&a.a)?;
    let y = output::read_probe_csv(&a.b)?;
    let c = output::compare(&x, &y)?;
    println!("relative_rms = {:.9e}", c.relative_rms);
    println!("max_abs = {:.9e}", c.max_abs);
    if let Some(out) = a.out {
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join("compare.csv");
        std::fs::write(&path, c.csv()).with_context(|| format!("writing {}", path.display()))?;
        println!("per-step errors in {}", path.display());
    }
    Ok(())
}
