//! Declarative run configuration.
//!
//! Scenario files are TOML. Any physical value may be written as a plain SI
//! number or as a `"value unit"` string (`"3.0e4 MPa"`, `"100 km/h"`).
//!
//! ```toml
//! name = "example"
//! output_dir = "out/example"   # optional
//! gravity = "9.81 m/s^2"       # optional body force along -z
//! dump_times = ["5 s"]         # optional field dumps
//!
//! [mesh]
//! extent = ["8 m", "4 m"]      # x, y; depth is the sum of layer thicknesses
//! x = { count = 32 }           # or { spacing = [...] }
//! y = { count = 16 }
//! fixed_sides = ["x_min", "x_max", "y_min", "y_max", "bottom"]   # default
//! [[mesh.layers]]              # top to bottom
//! name = "soil"
//! material = "soil"
//! thickness = "1 m"
//! z = { count = 4 }
//!
//! [materials.soil]             # model = "st_venant_kirchhoff" | "neo_visco"
//! model = "st_venant_kirchhoff"
//! lambda = "2500 Pa"
//! mu = "1250 Pa"
//! density = "10 kg/m^3"
//!
//! [[loads]]
//! center = ["4 m", "2 m"]
//! size = ["1 m", "1 m"]        # one patch; with dual_gap two patches split along y
//! pressure = "50 Pa"           # or total_force
//! amplitude = [["0 s", 0.0], ["1 s", 1.0]]
//! oscillation = { start = "8 s", end = "12 s", frequency = "5 Hz", amplitude = 0.2 }
//!
//! [guiding]                    # omitted: stationary frame
//! direction = [-1.0, 0.0, 0.0]
//! speed = [["0 s", "0 m/s"], ["3 s", "25 m/s"]]
//!
//! [time]
//! dt = "0.05 s"
//! end = "16.5 s"
//!
//! [solver]                     # all optional
//! tolerance = 1e-6
//!
//! [[probes]]
//! name = "center"
//! point = ["4 m", "2 m", "1 m"]
//!
//! [mor]                        # exactly one of tol, modes
//! tol = 0.9999
//!
//! [lagrangian]                 # long mesh for the conventional comparison
//! length = "300 m"
//! x = { count = 90 }
//! ```

mod units;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use units::{parse_text, Dim, Quantity};

use crate::ale::{
    Amplitude, ExternalLoads, GuidingSchedule, NewmarkParams, PiecewiseLinear, SurfaceLoad, TriangularWave,
};
use crate::element::Point3;
use crate::error::{Error, Result};
use crate::lagrangian::LagrangianModel;
use crate::material::MaterialParams;
use crate::mesh::{build_layered_grid, default_fixed_sides, AxisDivision, GridSpec, LayerSpec, Mesh, Rect, Side};
use crate::mor::ModeSelection;
use crate::solver::{AleModel, Probe, RunOptions, SolverControls};

const BUILTINS: &[(&str, &str)] = &[
    ("study1", include_str!("../../scenarios/study1.scenario")),
    ("study2", include_str!("../../scenarios/study2.scenario")),
    ("desk", include_str!("../../scenarios/desk.scenario")),
];

// ---------------------------------------------------------------- file layout

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dump_times: Vec<Quantity>,
    pub mesh: MeshSection,
    pub materials: BTreeMap<String, MaterialSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<LoadSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guiding: Option<GuidingSection>,
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mor: Option<MorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<LagrangianSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivisionSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Vec<Quantity>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[Quantity; 3]>,
    pub extent: [Quantity; 2],
    pub x: DivisionSection,
    pub y: DivisionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_sides: Option<Vec<Side>>,
    pub layers: Vec<LayerSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub name: String,
    pub material: String,
    pub thickness: Quantity,
    pub z: DivisionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub model: String,
    pub density: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_v: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_v: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationSection {
    pub start: Quantity,
    pub end: Quantity,
    pub frequency: Quantity,
    pub amplitude: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub center: [Quantity; 2],
    pub size: [Quantity; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_gap: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_force: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Vec<[Quantity; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation: Option<OscillationSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidingSection {
    pub direction: [f64; 3],
    pub speed: Vec<[Quantity; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: Quantity,
    pub end: Quantity,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_beta() -> f64 {
    0.25
}

fn default_gamma() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub cutback_factor: f64,
    pub max_cutbacks: usize,
    pub deterministic: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverControls::default();
        SolverSection {
            tolerance: c.tolerance,
            max_iterations: c.max_iterations,
            cutback_factor: c.cutback_factor,
            max_cutbacks: c.max_cutbacks,
            deterministic: c.deterministic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub name: String,
    pub point: [Quantity; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// Snapshot file used to train the basis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianSection {
    pub length: Quantity,
    pub x: DivisionSection,
}

// ------------------------------------------------------------ resolved form

#[derive(Debug, Clone, PartialEq)]
pub struct MorSettings {
    pub selection: ModeSelection,
    pub snapshots: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSpec {
    pub length: f64,
    pub x: AxisDivision,
}

/// Validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    /// Material of each layer, top to bottom.
    pub materials: Vec<MaterialParams>,
    pub loads: Vec<SurfaceLoad>,
    pub guiding: GuidingSchedule,
    pub newmark: NewmarkParams,
    pub t_end: f64,
    pub controls: SolverControls,
    pub probes: Vec<Probe>,
    pub mor: Option<MorSettings>,
    pub gravity: Option<Vector3<f64>>,
    pub output_dir: PathBuf,
    pub dump_times: Vec<f64>,
    pub lagrangian: Option<LagrangianSpec>,
    file: ScenarioFile,
}

/// Collects problems under dotted key paths.
struct Issues(Vec<String>);

impl Issues {
    fn push(&mut self, key: &str, msg: impl std::fmt::Display) {
        self.0.push(format!("{key}: {msg}"));
    }

    fn q(&mut self, key: &str, q: &Quantity, dim: Dim) -> f64 {
        q.si(dim).unwrap_or_else(|e| {
            self.push(key, e);
            f64::NAN
        })
    }

    fn positive(&mut self, key: &str, q: &Quantity, dim: Dim) -> f64 {
        let v = self.q(key, q, dim);
        if !v.is_nan() && v <= 0.0 {
            self.push(key, format!("must be positive, got {v}"));
        }
        v
    }

    fn division(&mut self, key: &str, d: &DivisionSection) -> AxisDivision {
        match (d.count, &d.spacing) {
            (Some(count), None) => {
                if count == 0 {
                    self.push(key, "count must be positive");
                }
                AxisDivision::Uniform { count }
            }
            (None, Some(sp)) => AxisDivision::Graded {
                spacing: sp
                    .iter()
                    .enumerate()
                    .map(|(i, q)| self.positive(&format!("{key}.spacing[{i}]"), q, Dim::LENGTH))
                    .collect(),
            },
            _ => {
                self.push(key, "give exactly one of count, spacing");
                AxisDivision::Uniform { count: 1 }
            }
        }
    }

    fn table(&mut self, key: &str, rows: &[[Quantity; 2]], value_dim: Dim) -> Option<PiecewiseLinear> {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .enumerate()
            .map(|(i, [t, v])| {
                (
                    self.q(&format!("{key}[{i}][0]"), t, Dim::TIME),
                    self.q(&format!("{key}[{i}][1]"), v, value_dim),
                )
            })
            .collect();
        if pts.iter().any(|(a, b)| a.is_nan() || b.is_nan()) {
            return None;
        }
        match PiecewiseLinear::new(pts) {
            Ok(p) => Some(p),
            Err(e) => {
                self.push(key, e);
                None
            }
        }
    }

    /// A table defines the history from `t = 0`; beyond its last point the
    /// final value is held.
    fn covers_start(&mut self, key: &str, p: &PiecewiseLinear) {
        if p.start() > 0.0 {
            self.push(key, format!("table starts at t = {} s, must start at or before 0", p.start()));
        }
    }
}

fn check_spacing_sum(issues: &mut Issues, key: &str, d: &AxisDivision, extent: f64) {
    if let AxisDivision::Graded { spacing } = d {
        let sum: f64 = spacing.iter().sum();
        if sum.is_finite() && extent.is_finite() && (sum - extent).abs() > 1e-9 * extent.max(1.0) {
            issues.push(key, format!("spacing sums to {sum} m but the extent is {extent} m"));
        }
    }
}

fn material(issues: &mut Issues, key: &str, m: &MaterialSection) -> Option<MaterialParams> {
    let density = issues.positive(&format!("{key}.density"), &m.density, Dim::DENSITY);
    let mut get = |name: &str, q: &Option<Quantity>, dim: Dim| -> f64 {
        match q {
            Some(q) => issues.q(&format!("{key}.{name}"), q, dim),
            None => {
                issues.push(&format!("{key}.{name}"), format!("required for model '{}'", m.model));
                f64::NAN
            }
        }
    };
    let params = match m.model.as_str() {
        "st_venant_kirchhoff" => {
            let p = MaterialParams::StVenantKirchhoff {
                lambda: get("lambda", &m.lambda, Dim::PRESSURE),
                mu: get("mu", &m.mu, Dim::PRESSURE),
                density,
            };
            for (name, q) in [("kappa", &m.kappa), ("mu_v", &m.mu_v), ("eta_v", &m.eta_v)] {
                if q.is_some() {
                    issues.push(&format!("{key}.{name}"), "not a parameter of st_venant_kirchhoff");
                }
            }
            p
        }
        "neo_visco" => {
            let p = MaterialParams::NeoVisco {
                kappa: get("kappa", &m.kappa, Dim::PRESSURE),
                mu: get("mu", &m.mu, Dim::PRESSURE),
                mu_v: get("mu_v", &m.mu_v, Dim::PRESSURE),
                eta_v: get("eta_v", &m.eta_v, Dim::VISCOSITY),
                density,
            };
            if m.lambda.is_some() {
                issues.push(&format!("{key}.lambda"), "not a parameter of neo_visco");
            }
            p
        }
        other => {
            issues.push(
                &format!("{key}.model"),
                format!("unknown model '{other}', expected st_venant_kirchhoff or neo_visco"),
            );
            return None;
        }
    };
    // NaNs come from problems already reported
    if has_nan(&params) {
        return None;
    }
    let bad = params.violations();
    for b in &bad {
        issues.push(key, b);
    }
    bad.is_empty().then_some(params)
}

fn has_nan(p: &MaterialParams) -> bool {
    match *p {
        MaterialParams::StVenantKirchhoff { lambda, mu, density } => [lambda, mu, density].iter().any(|v| v.is_nan()),
        MaterialParams::NeoVisco {
            kappa,
            mu,
            mu_v,
            eta_v,
            density,
        } => [kappa, mu, mu_v, eta_v, density].iter().any(|v| v.is_nan()),
    }
}

fn load(issues: &mut Issues, key: &str, l: &LoadSection) -> Option<SurfaceLoad> {
    let cx = issues.q(&format!("{key}.center[0]"), &l.center[0], Dim::LENGTH);
    let cy = issues.q(&format!("{key}.center[1]"), &l.center[1], Dim::LENGTH);
    let sx = issues.positive(&format!("{key}.size[0]"), &l.size[0], Dim::LENGTH);
    let sy = issues.positive(&format!("{key}.size[1]"), &l.size[1], Dim::LENGTH);
    let rects = match &l.dual_gap {
        None => vec![Rect::centered(cx, cy, sx, sy)],
        Some(g) => {
            let gap = issues.q(&format!("{key}.dual_gap"), g, Dim::LENGTH);
            if gap < 0.0 {
                issues.push(&format!("{key}.dual_gap"), "must not be negative");
            }
            let off = 0.5 * (gap + sy);
            vec![Rect::centered(cx, cy - off, sx, sy), Rect::centered(cx, cy + off, sx, sy)]
        }
    };
    let area: f64 = rects.iter().map(Rect::area).sum();
    let pressure = match (&l.pressure, &l.total_force) {
        (Some(p), None) => issues.q(&format!("{key}.pressure"), p, Dim::PRESSURE),
        (None, Some(f)) => issues.q(&format!("{key}.total_force"), f, Dim::FORCE) / area,
        _ => {
            issues.push(key, "give exactly one of pressure, total_force");
            f64::NAN
        }
    };
    let base = match &l.amplitude {
        Some(rows) => {
            let t = issues.table(&format!("{key}.amplitude"), rows, Dim::NONE);
            if let Some(t) = &t {
                issues.covers_start(&format!("{key}.amplitude"), t);
            }
            t
        }
        None => Some(PiecewiseLinear::constant(1.0)),
    };
    let modulation = l.oscillation.as_ref().map(|o| {
        let k = format!("{key}.oscillation");
        let w = TriangularWave {
            start: issues.q(&format!("{k}.start"), &o.start, Dim::TIME),
            end: issues.q(&format!("{k}.end"), &o.end, Dim::TIME),
            frequency: issues.positive(&format!("{k}.frequency"), &o.frequency, Dim::FREQUENCY),
            relative_amplitude: issues.q(&format!("{k}.amplitude"), &o.amplitude, Dim::NONE),
        };
        if w.end < w.start {
            issues.push(&k, "end precedes start");
        }
        w
    });
    let base = base?;
    if pressure.is_nan() {
        return None;
    }
    Some(SurfaceLoad {
        rects,
        pressure,
        amplitude: Amplitude { base, modulation },
    })
}

fn inside(r: &Rect, lo: &Point3, hi: &Point3) -> bool {
    let eps = 1e-9;
    r.x0 >= lo.x - eps && r.x1 <= hi.x + eps && r.y0 >= lo.y - eps && r.y1 <= hi.y + eps
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Scenario(vec![e.to_string()]))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Scenario(v) => Error::Scenario(v.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
            other => other,
        })
    }

    /// Names of the scenarios shipped with the library.
    pub fn builtin_names() -> Vec<&'static str> {
        BUILTINS.iter().map(|(n, _)| *n).collect()
    }

    pub fn builtin_text(name: &str) -> Option<&'static str> {
        let name = name.strip_suffix(".scenario").unwrap_or(name);
        BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let text = Self::builtin_text(name)
            .ok_or_else(|| Error::Scenario(vec![format!("no built-in scenario named '{name}'")]))?;
        Self::from_toml_str(text)
    }

    /// A file path if it exists, otherwise a built-in name.
    pub fn resolve(spec: &str) -> Result<Self> {
        let p = Path::new(spec);
        if p.exists() {
            Self::load(p)
        } else if Self::builtin_text(spec).is_some() {
            Self::builtin(spec)
        } else {
            Err(Error::Scenario(vec![format!(
                "'{spec}' is neither a readable file nor a built-in scenario ({})",
                Self::builtin_names().join(", ")
            )]))
        }
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let mut is = Issues(Vec::new());
        let f = &file;

        // materials
        let mut mats = BTreeMap::new();
        for (name, m) in &f.materials {
            if let Some(p) = material(&mut is, &format!("materials.{name}"), m) {
                mats.insert(name.clone(), p);
            }
        }

        // mesh
        let origin = match &f.mesh.origin {
            Some(o) => Point3::new(
                is.q("mesh.origin[0]", &o[0], Dim::LENGTH),
                is.q("mesh.origin[1]", &o[1], Dim::LENGTH),
                is.q("mesh.origin[2]", &o[2], Dim::LENGTH),
            ),
            None => Point3::zeros(),
        };
        let ex = is.positive("mesh.extent[0]", &f.mesh.extent[0], Dim::LENGTH);
        let ey = is.positive("mesh.extent[1]", &f.mesh.extent[1], Dim::LENGTH);
        let x = is.division("mesh.x", &f.mesh.x);
        let y = is.division("mesh.y", &f.mesh.y);
        check_spacing_sum(&mut is, "mesh.x", &x, ex);
        check_spacing_sum(&mut is, "mesh.y", &y, ey);
        if f.mesh.layers.is_empty() {
            is.push("mesh.layers", "at least one layer is required");
        }
        let mut layers = Vec::new();
        let mut materials = Vec::new();
        for (i, l) in f.mesh.layers.iter().enumerate() {
            let key = format!("mesh.layers[{i}]");
            let thickness = is.positive(&format!("{key}.thickness"), &l.thickness, Dim::LENGTH);
            let division = is.division(&format!("{key}.z"), &l.z);
            check_spacing_sum(&mut is, &format!("{key}.z"), &division, thickness);
            match (f.materials.contains_key(&l.material), mats.get(&l.material)) {
                (_, Some(m)) => materials.push(*m),
                (false, _) => is.push(&format!("{key}.material"), format!("no material named '{}'", l.material)),
                (true, None) => {}
            }
            layers.push(LayerSpec {
                name: l.name.clone(),
                thickness,
                division,
            });
        }
        let depth: f64 = layers.iter().map(|l| l.thickness).sum();
        let fixed_sides = f.mesh.fixed_sides.clone().unwrap_or_else(default_fixed_sides);

        // loads
        let loads: Vec<SurfaceLoad> = f
            .loads
            .iter()
            .enumerate()
            .filter_map(|(i, l)| load(&mut is, &format!("loads[{i}]"), l))
            .collect();
        let hull_lo = origin;
        let hull_hi = origin + Vector3::new(ex, ey, depth);
        for (i, l) in loads.iter().enumerate() {
            if l.rects.iter().any(|r| !inside(r, &hull_lo, &hull_hi)) {
                is.push(&format!("loads[{i}]"), "patch extends beyond the top surface");
            }
        }

        // time
        let dt = is.positive("time.dt", &f.time.dt, Dim::TIME);
        let t_end = is.positive("time.end", &f.time.end, Dim::TIME);
        let newmark = NewmarkParams {
            beta: f.time.beta,
            gamma: f.time.gamma,
            dt,
        };
        if !dt.is_nan() {
            for v in newmark.violations() {
                is.push("time", v);
            }
        }
        if dt > t_end {
            is.push("time.dt", "step is longer than the horizon");
        }

        // guiding velocity
        let guiding = match &f.guiding {
            None => GuidingSchedule::stationary(),
            Some(g) => {
                let speed = is.table("guiding.speed", &g.speed, Dim::VELOCITY);
                match speed {
                    Some(s) => {
                        is.covers_start("guiding.speed", &s);
                        GuidingSchedule::new(s, Vector3::from(g.direction)).unwrap_or_else(|e| {
                            is.push("guiding.direction", e);
                            GuidingSchedule::stationary()
                        })
                    }
                    None => GuidingSchedule::stationary(),
                }
            }
        };

        // solver
        let controls = SolverControls {
            tolerance: f.solver.tolerance,
            max_iterations: f.solver.max_iterations,
            cutback_factor: f.solver.cutback_factor,
            max_cutbacks: f.solver.max_cutbacks,
            deterministic: f.solver.deterministic,
        };
        for v in controls.violations() {
            is.push("solver", v);
        }

        // probes
        let mut probes = Vec::new();
        for (i, p) in f.probes.iter().enumerate() {
            let key = format!("probes[{i}]");
            let pt = Point3::new(
                is.q(&format!("{key}.point[0]"), &p.point[0], Dim::LENGTH),
                is.q(&format!("{key}.point[1]"), &p.point[1], Dim::LENGTH),
                is.q(&format!("{key}.point[2]"), &p.point[2], Dim::LENGTH),
            );
            let eps = 1e-9;
            if (0..3).any(|k| pt[k] < hull_lo[k] - eps || pt[k] > hull_hi[k] + eps) {
                is.push(&format!("{key}.point"), format!("({}, {}, {}) lies outside the mesh", pt.x, pt.y, pt.z));
            }
            if probes.iter().any(|q: &Probe| q.name == p.name) {
                is.push(&format!("{key}.name"), format!("duplicate probe name '{}'", p.name));
            }
            probes.push(Probe {
                name: p.name.clone(),
                point: pt,
            });
        }

        // reduced order settings
        let mor = f.mor.as_ref().and_then(|m| {
            let selection = match (m.tol, m.modes) {
                (Some(t), None) => {
                    if !(t > 0.0 && t <= 1.0) {
                        is.push("mor.tol", format!("must lie in (0, 1], got {t}"));
                    }
                    ModeSelection::Energy(t)
                }
                (None, Some(n)) => {
                    if n == 0 {
                        is.push("mor.modes", "must be positive");
                    }
                    ModeSelection::Fixed(n)
                }
                _ => {
                    is.push("mor", "give exactly one of tol, modes");
                    return None;
                }
            };
            Some(MorSettings {
                selection,
                snapshots: m.snapshots.as_ref().map(PathBuf::from),
            })
        });

        let gravity = f
            .gravity
            .as_ref()
            .map(|g| Vector3::new(0.0, 0.0, -is.q("gravity", g, Dim::ACCELERATION)));
        let mut dump_times: Vec<f64> = f
            .dump_times
            .iter()
            .enumerate()
            .map(|(i, q)| is.q(&format!("dump_times[{i}]"), q, Dim::TIME))
            .collect();
        for (i, t) in dump_times.iter().enumerate() {
            if *t < 0.0 || *t > t_end {
                is.push(&format!("dump_times[{i}]"), format!("{t} s lies outside the horizon"));
            }
        }
        dump_times.sort_by(f64::total_cmp);

        let lagrangian = f.lagrangian.as_ref().map(|l| {
            let length = is.positive("lagrangian.length", &l.length, Dim::LENGTH);
            let x = is.division("lagrangian.x", &l.x);
            check_spacing_sum(&mut is, "lagrangian.x", &x, length);
            if !length.is_nan() && length < ex {
                is.push("lagrangian.length", "shorter than the moving-frame mesh");
            }
            LagrangianSpec { length, x }
        });
        if let Some(l) = &lagrangian {
            let travel = guiding.travel(t_end);
            let hi = Point3::new(origin.x + l.length, hull_hi.y, hull_hi.z);
            for (i, ld) in loads.iter().enumerate() {
                if ld.rects.iter().any(|r| {
                    let s = r.translated(-guiding.direction.x * travel, -guiding.direction.y * travel);
                    !inside(&s, &hull_lo, &hi)
                }) {
                    is.push(
                        "lagrangian.length",
                        format!("loads[{i}] leaves the mesh after {travel:.2} m of travel"),
                    );
                }
            }
        }

        if !is.0.is_empty() {
            return Err(Error::Scenario(is.0));
        }
        let grid = GridSpec {
            origin,
            extent: [ex, ey, depth],
            x,
            y,
            layers,
            fixed_sides,
            load_regions: loads.iter().flat_map(|l| l.rects.iter().copied()).collect(),
        };
        Ok(Scenario {
            name: f.name.clone(),
            grid,
            materials,
            loads,
            guiding,
            newmark,
            t_end,
            controls,
            probes,
            mor,
            gravity,
            output_dir: PathBuf::from(f.output_dir.clone().unwrap_or_else(|| format!("out/{}", f.name))),
            dump_times,
            lagrangian,
            file,
        })
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario serializes")
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.newmark.dt - 1e-9).ceil() as usize
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        build_layered_grid(&self.grid)
    }

    pub fn densities(&self) -> Vec<f64> {
        self.materials.iter().map(MaterialParams::density).collect()
    }

    pub fn ale_model(&self) -> Result<AleModel> {
        let mesh = Arc::new(self.build_mesh()?);
        let loads = ExternalLoads::new(&mesh, &self.loads, &self.densities(), self.gravity)?;
        AleModel::new(
            mesh,
            self.materials.clone(),
            loads,
            self.guiding.clone(),
            self.newmark,
            self.controls,
        )
    }

    /// Grid of the conventional comparison: the moving-frame grid stretched
    /// along x to cover the load path.
    pub fn lagrangian_grid(&self) -> Result<GridSpec> {
        let l = self
            .lagrangian
            .as_ref()
            .ok_or_else(|| Error::Scenario(vec![format!("scenario '{}' has no [lagrangian] section", self.name)]))?;
        let mut g = self.grid.clone();
        g.extent[0] = l.length;
        g.x = l.x.clone();
        g.load_regions.clear();
        Ok(g)
    }

    pub fn lagrangian_model(&self) -> Result<LagrangianModel> {
        let mesh = Arc::new(build_layered_grid(&self.lagrangian_grid()?)?);
        let path = GuidingSchedule::new(self.guiding.speed.clone(), -self.guiding.direction)?;
        LagrangianModel::new(
            mesh,
            self.materials.clone(),
            self.loads.clone(),
            path,
            self.gravity,
            self.newmark,
            self.controls,
        )
    }

    pub fn run_options(&self, store_snapshots: bool) -> RunOptions {
        RunOptions {
            t_end: self.t_end,
            probes: self.probes.clone(),
            store_snapshots,
            dump_times: self.dump_times.clone(),
        }
    }
}
