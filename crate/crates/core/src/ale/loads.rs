//! Dead pressure loads on the top surface and body forces.

use nalgebra::Vector3;

use super::schedule::Amplitude;
use crate::element::gauss_derivatives;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Rect};

/// Uniform pressure acting downward on one or more rectangles of the top surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceLoad {
    pub rects: Vec<Rect>,
    /// Peak pressure [Pa]; scaled by the amplitude history.
    pub pressure: f64,
    pub amplitude: Amplitude,
}

impl SurfaceLoad {
    pub fn area(&self) -> f64 {
        self.rects.iter().map(Rect::area).sum()
    }

    /// Total vertical force [N] at time `t`.
    pub fn total_force(&self, t: f64) -> f64 {
        self.pressure * self.amplitude.value(t) * self.area()
    }

    /// The same load with all rectangles shifted by `(dx, dy)`.
    pub fn shifted(&self, dx: f64, dy: f64) -> SurfaceLoad {
        let rects = self
            .rects
            .iter()
            .map(|r| Rect {
                x0: r.x0 + dx,
                x1: r.x1 + dx,
                y0: r.y0 + dy,
                y1: r.y1 + dy,
            })
            .collect();
        SurfaceLoad {
            rects,
            pressure: self.pressure,
            amplitude: self.amplitude.clone(),
        }
    }
}

/// Adds the consistent nodal forces of pressure `p` (downward) on `region ∩ top surface`
/// to the full DOF vector `out`. Faces only partly covered are integrated over the
/// covered sub-rectangle with 2×2 Gauss points, exact for the bilinear face shape functions.
pub fn add_pressure(mesh: &Mesh, region: &Rect, p: f64, out: &mut [f64]) -> Result<()> {
    if mesh.layout.is_none() {
        return Err(Error::UnsupportedTopology("surface loads need a structured grid".into()));
    }
    let g = 1.0 / 3f64.sqrt();
    for e in 0..mesh.n_elements() {
        let Some(face) = mesh.top_face_rect(e) else {
            continue;
        };
        let Some(sub) = face.intersect(region) else {
            continue;
        };
        let conn = mesh.elements[e];
        let (hx, hy) = (face.x1 - face.x0, face.y1 - face.y0);
        let quarter = 0.25 * sub.area();
        for gx in [-g, g] {
            for gy in [-g, g] {
                let x = 0.5 * (sub.x0 + sub.x1) + 0.5 * gx * (sub.x1 - sub.x0);
                let y = 0.5 * (sub.y0 + sub.y1) + 0.5 * gy * (sub.y1 - sub.y0);
                let xi = 2.0 * (x - face.x0) / hx - 1.0;
                let eta = 2.0 * (y - face.y0) / hy - 1.0;
                // top-face corners are local nodes 4..7
                for (a, (sa, sb)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].into_iter().enumerate() {
                    let n = 0.25 * (1.0 + sa * xi) * (1.0 + sb * eta);
                    out[3 * conn[4 + a] + 2] -= p * n * quarter;
                }
            }
        }
    }
    Ok(())
}

/// Adds `∫ρ N_a b dV` for a uniform body acceleration `b`.
pub fn add_body_force(mesh: &Mesh, densities: &[f64], b: &Vector3<f64>, out: &mut [f64]) -> Result<()> {
    for e in 0..mesh.n_elements() {
        let conn = mesh.elements[e];
        let derivs = gauss_derivatives(&mesh.element_coords(e)).map_err(|err| match err {
            Error::DegenerateElement { det_j, .. } => Error::DegenerateElement { element: e, det_j },
            other => other,
        })?;
        let rho = densities[mesh.layer_of_element[e]];
        for gd in &derivs {
            let dv = rho * gd.weight * gd.det_j;
            for a in 0..8 {
                for i in 0..3 {
                    out[3 * conn[a] + i] += gd.values[a] * dv * b[i];
                }
            }
        }
    }
    Ok(())
}

/// Precomputed external loading of a fixed (ALE) mesh.
#[derive(Debug, Clone)]
pub struct ExternalLoads {
    unit: Vec<(Vec<f64>, Amplitude)>,
    body: Vec<f64>,
}

impl ExternalLoads {
    pub fn new(mesh: &Mesh, loads: &[SurfaceLoad], densities: &[f64], gravity: Option<Vector3<f64>>) -> Result<Self> {
        let n = mesh.n_dofs();
        let mut unit = Vec::with_capacity(loads.len());
        for l in loads {
            let mut v = vec![0.0; n];
            for r in &l.rects {
                add_pressure(mesh, r, l.pressure, &mut v)?;
            }
            unit.push((v, l.amplitude.clone()));
        }
        let mut body = vec![0.0; n];
        if let Some(g) = gravity {
            add_body_force(mesh, densities, &g, &mut body)?;
        }
        Ok(ExternalLoads { unit, body })
    }

    /// Full-length external force vector at time `t`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let mut f = self.body.clone();
        for (v, amp) in &self.unit {
            let s = amp.value(t);
            if s != 0.0 {
                for (fi, vi) in f.iter_mut().zip(v) {
                    *fi += s * vi;
                }
            }
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ale::schedule::PiecewiseLinear;
    use crate::mesh::{build_layered_grid, GridSpec};

    fn mesh() -> Mesh {
        build_layered_grid(&GridSpec::uniform_box([8.0, 4.0, 1.0], [8, 4, 2])).unwrap()
    }

    #[test]
    fn resultant_equals_pressure_times_area() {
        let m = mesh();
        // straddles element boundaries and is only partly covered
        let r = Rect::centered(4.3, 2.1, 1.7, 0.9);
        let mut f = vec![0.0; m.n_dofs()];
        add_pressure(&m, &r, 50.0, &mut f).unwrap();
        let fz: f64 = f.iter().skip(2).step_by(3).sum();
        assert!((fz + 50.0 * r.area()).abs() < 1e-12);
        assert!(f.iter().step_by(3).all(|&v| v == 0.0));
    }

    #[test]
    fn full_face_gives_quarter_loads() {
        let m = mesh();
        let face = m.top_face_rect(m.n_elements() - 1).unwrap();
        let mut f = vec![0.0; m.n_dofs()];
        add_pressure(&m, &face, 4.0, &mut f).unwrap();
        let conn = m.elements[m.n_elements() - 1];
        for a in 4..8 {
            assert!((f[3 * conn[a] + 2] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_of_partial_patch_is_exact() {
        // first moment of the nodal forces equals the moment of the pressure resultant
        let m = mesh();
        let r = Rect::centered(2.6, 1.3, 0.8, 1.1);
        let mut f = vec![0.0; m.n_dofs()];
        add_pressure(&m, &r, 1.0, &mut f).unwrap();
        let mx: f64 = (0..m.n_nodes()).map(|n| f[3 * n + 2] * m.nodes[n].x).sum();
        assert!((mx + r.area() * 2.6).abs() < 1e-12);
    }

    #[test]
    fn gravity_resultant_is_weight() {
        let m = mesh();
        let mut f = vec![0.0; m.n_dofs()];
        add_body_force(&m, &[10.0], &Vector3::new(0.0, 0.0, -9.81), &mut f).unwrap();
        let fz: f64 = f.iter().skip(2).step_by(3).sum();
        assert!((fz + 10.0 * 9.81 * 32.0).abs() < 1e-9);
    }

    #[test]
    fn amplitude_scales_loads() {
        let m = mesh();
        let load = SurfaceLoad {
            rects: vec![Rect::centered(4.0, 2.0, 1.0, 1.0)],
            pressure: 50.0,
            amplitude: Amplitude {
                base: PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap(),
                modulation: None,
            },
        };
        let ext = ExternalLoads::new(&m, &[load.clone()], &[10.0], None).unwrap();
        let fz = |t: f64| -> f64 { ext.at(t).iter().skip(2).step_by(3).sum() };
        assert!((fz(0.5) + 25.0).abs() < 1e-12);
        assert!((fz(3.0) + load.total_force(3.0)).abs() < 1e-12);
    }
}
