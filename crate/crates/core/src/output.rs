//! Result files: probe traces, run reports and legacy VTK field dumps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::element::gauss_derivatives;
use crate::error::{Error, Result};
use crate::material::euler_almansi;
use crate::mesh::Mesh;
use crate::solver::Trajectory;

/// Displacement history at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub times: Vec<f64>,
    pub values: Vec<Vector3<f64>>,
}

pub fn probe_csv(times: &[f64], values: &[Vector3<f64>]) -> String {
    let mut s = String::from("time,ux,uy,uz\n");
    for (t, u) in times.iter().zip(values) {
        writeln!(s, "{t:.9e},{:.9e},{:.9e},{:.9e}", u.x, u.y, u.z).expect("string write");
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `probe_<name>.csv` for every probe and returns the paths.
pub fn write_probe_csvs(dir: &Path, traj: &Trajectory) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (name, vals) in traj.probe_names.iter().zip(&traj.probe_values) {
        let p = dir.join(format!("probe_{name}.csv"));
        write_file(&p, &probe_csv(&traj.times, vals))?;
        out.push(p);
    }
    Ok(out)
}

pub fn parse_probe_csv(text: &str, path: &Path) -> Result<ProbeSeries> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "time,ux,uy,uz" => {}
        _ => return Err(Error::format(path, "expected header 'time,ux,uy,uz'")),
    }
    let mut s = ProbeSeries {
        times: Vec::new(),
        values: Vec::new(),
    };
    for (i, line) in lines {
        let v: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        if v.len() != 4 {
            return Err(Error::format(path, format!("line {}: expected 4 columns", i + 1)));
        }
        s.times.push(v[0]);
        s.values.push(Vector3::new(v[1], v[2], v[3]));
    }
    Ok(s)
}

pub fn read_probe_csv(path: &Path) -> Result<ProbeSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_probe_csv(&text, path)
}

/// Error between two probe traces sampled at the same times.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `‖a − b‖ / max(‖a‖, ‖b‖)` over all steps and components.
    pub relative_rms: f64,
    pub max_abs: f64,
    pub times: Vec<f64>,
    /// `|a − b|` per step.
    pub step_error: Vec<f64>,
}

pub fn compare(a: &ProbeSeries, b: &ProbeSeries) -> Result<Comparison> {
    if a.times.len() != b.times.len() {
        return Err(Error::DimensionMismatch(format!(
            "traces have {} and {} rows",
            a.times.len(),
            b.times.len()
        )));
    }
    if let Some(k) = a
        .times
        .iter()
        .zip(&b.times)
        .position(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0))
    {
        return Err(Error::DimensionMismatch(format!(
            "row {k}: times {} and {} differ",
            a.times[k], b.times[k]
        )));
    }
    let step_error: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).collect();
    let num = step_error.iter().map(|e| e * e).sum::<f64>().sqrt();
    let na = a.values.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
    let nb = b.values.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
    let den = na.max(nb);
    Ok(Comparison {
        relative_rms: if den > 0.0 { num / den } else { 0.0 },
        max_abs: step_error.iter().copied().fold(0.0, f64::max),
        times: a.times.clone(),
        step_error,
    })
}

impl Comparison {
    pub fn csv(&self) -> String {
        let mut s = String::from("time,abs_error\n");
        for (t, e) in self.times.iter().zip(&self.step_error) {
            writeln!(s, "{t:.9e},{e:.9e}").expect("string write");
        }
        s
    }
}

/// Timing and bookkeeping of one command.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub command: String,
    pub scenario: String,
    pub steps: usize,
    pub cutbacks: usize,
    pub assembly_s: f64,
    pub solve_s: f64,
    pub advection_s: f64,
    pub total_s: f64,
    /// Reduced dimension, for ROM runs and bases.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// `"iterations" -> steps`
    pub newton_histogram: std::collections::BTreeMap<String, usize>,
    pub files: Vec<String>,
}

impl RunReport {
    pub fn from_trajectory(command: &str, scenario: &str, traj: &Trajectory) -> Self {
        RunReport {
            command: command.into(),
            scenario: scenario.into(),
            steps: traj.times.len(),
            cutbacks: traj.cutbacks,
            assembly_s: traj.timings.assembly.as_secs_f64(),
            solve_s: traj.timings.solve.as_secs_f64(),
            advection_s: traj.timings.advection.as_secs_f64(),
            total_s: traj.timings.total.as_secs_f64(),
            newton_histogram: traj
                .iteration_histogram()
                .into_iter()
                .map(|(k, n)| (k.to_string(), n))
                .collect(),
            ..Default::default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    /// Writes `report.toml` into `dir`, listing itself in the manifest.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join("report.toml");
        self.files.push(p.display().to_string());
        write_file(&p, &self.to_toml())?;
        Ok(p)
    }
}

/// Element-averaged Euler–Almansi `e_zz` for a nodal displacement field over
/// the reference mesh.
pub fn element_ezz(mesh: &Mesh, u: &[Vector3<f64>]) -> Result<Vec<f64>> {
    (0..mesh.n_elements())
        .map(|e| {
            let derivs = gauss_derivatives(&mesh.element_coords(e))?;
            let conn = &mesh.elements[e];
            let mut sum = 0.0;
            let mut vol = 0.0;
            for gd in &derivs {
                let mut f = Matrix3::identity();
                for a in 0..8 {
                    f += u[conn[a]] * gd.grad[a].transpose();
                }
                let dv = gd.weight * gd.det_j;
                sum += euler_almansi(&f)[(2, 2)] * dv;
                vol += dv;
            }
            Ok(sum / vol)
        })
        .collect()
}

/// Legacy ASCII unstructured grid with displacement point data and layer /
/// `e_zz` cell data.
pub fn vtk_string(mesh: &Mesh, u: &[Vector3<f64>], title: &str) -> Result<String> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} nodal values for {} nodes",
            u.len(),
            mesh.n_nodes()
        )));
    }
    let ezz = element_ezz(mesh, u)?;
    let ne = mesh.n_elements();
    let mut s = String::new();
    let w = &mut s;
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(w, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(w, "POINTS {} double", mesh.n_nodes()).unwrap();
    for p in &mesh.nodes {
        writeln!(w, "{:.9e} {:.9e} {:.9e}", p.x, p.y, p.z).unwrap();
    }
    writeln!(w, "CELLS {} {}", ne, 9 * ne).unwrap();
    for c in &mesh.elements {
        writeln!(w, "8 {} {} {} {} {} {} {} {}", c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]).unwrap();
    }
    writeln!(w, "CELL_TYPES {ne}").unwrap();
    for _ in 0..ne {
        writeln!(w, "12").unwrap();
    }
    writeln!(w, "CELL_DATA {ne}\nSCALARS layer int 1\nLOOKUP_TABLE default").unwrap();
    for l in &mesh.layer_of_element {
        writeln!(w, "{l}").unwrap();
    }
    writeln!(w, "SCALARS e_zz double 1\nLOOKUP_TABLE default").unwrap();
    for e in &ezz {
        writeln!(w, "{e:.9e}").unwrap();
    }
    writeln!(w, "POINT_DATA {}\nVECTORS displacement double", mesh.n_nodes()).unwrap();
    for d in u {
        writeln!(w, "{:.9e} {:.9e} {:.9e}", d.x, d.y, d.z).unwrap();
    }
    Ok(s)
}

/// Writes one `field_<t>.vtk` per dump and returns the paths.
pub fn write_field_dumps(dir: &Path, mesh: &Mesh, dumps: &[(f64, Vec<Vector3<f64>>)]) -> Result<Vec<PathBuf>> {
    dumps
        .iter()
        .map(|(t, u)| {
            let p = dir.join(format!("field_t{t:08.3}.vtk"));
            write_file(&p, &vtk_string(mesh, u, &format!("displacement at t = {t} s"))?)?;
            Ok(p)
        })
        .collect()
}
