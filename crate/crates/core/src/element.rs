//! Trilinear 8-node hexahedron kernels.
//!
//! Local node ordering (isoparametric corners):
//!
//! ```text
//!        7-------6
//!       /|      /|
//!      / |     / |
//!     4-------5  |        ζ
//!     |  3----|--2        |  η
//!     | /     | /         | /
//!     |/      |/          |/
//!     0-------1           +---- ξ
//! ```
//!
//! Node `k` sits at `(CORNERS[k][0], CORNERS[k][1], CORNERS[k][2])`. This is
//! also the VTK hexahedron ordering, so connectivity is written out unchanged.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Isoparametric corner coordinates of the 8 local nodes.
pub const CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Local node lists of the six faces, ordered so that the right-hand rule
/// gives the outward normal. Face ids: 0 = ξ−, 1 = ξ+, 2 = η−, 3 = η+, 4 = ζ−, 5 = ζ+.
pub const FACES: [[usize; 4]; 6] = [
    [0, 4, 7, 3],
    [1, 2, 6, 5],
    [0, 1, 5, 4],
    [3, 7, 6, 2],
    [0, 3, 2, 1],
    [4, 5, 6, 7],
];

/// Containment tolerance on |ξ_i| − 1.
pub const TOL_INSIDE: f64 = 1e-8;

const MAX_NEWTON: usize = 50;

/// Shape functions and their isoparametric derivatives at one point.
#[derive(Debug, Clone)]
pub struct ShapeEval {
    pub xi: Vector3<f64>,
    pub values: [f64; 8],
    pub grad: [Vector3<f64>; 8],
    pub hess: [Matrix3<f64>; 8],
}

/// Shape function derivatives with respect to the ALE reference coordinates.
#[derive(Debug, Clone)]
pub struct GlobalDerivatives {
    pub values: [f64; 8],
    pub grad: [Vector3<f64>; 8],
    pub hess: [Matrix3<f64>; 8],
    pub det_j: f64,
    pub weight: f64,
}

pub fn shape_eval(xi: &Vector3<f64>) -> ShapeEval {
    let mut values = [0.0; 8];
    let mut grad = [Vector3::zeros(); 8];
    let mut hess = [Matrix3::zeros(); 8];
    for (k, c) in CORNERS.iter().enumerate() {
        let a = 1.0 + c[0] * xi[0];
        let b = 1.0 + c[1] * xi[1];
        let d = 1.0 + c[2] * xi[2];
        values[k] = 0.125 * a * b * d;
        grad[k] = Vector3::new(
            0.125 * c[0] * b * d,
            0.125 * a * c[1] * d,
            0.125 * a * b * c[2],
        );
        // pure second derivatives vanish for a trilinear function
        let h01 = 0.125 * c[0] * c[1] * d;
        let h02 = 0.125 * c[0] * b * c[2];
        let h12 = 0.125 * a * c[1] * c[2];
        hess[k] = Matrix3::new(0.0, h01, h02, h01, 0.0, h12, h02, h12, 0.0);
    }
    ShapeEval {
        xi: *xi,
        values,
        grad,
        hess,
    }
}

/// Forward trilinear map χ(ξ).
pub fn map_point(coords: &[Point3; 8], xi: &Vector3<f64>) -> Point3 {
    let s = shape_eval(xi);
    coords
        .iter()
        .zip(s.values.iter())
        .fold(Point3::zeros(), |acc, (x, n)| acc + x * *n)
}

fn jacobian(coords: &[Point3; 8], s: &ShapeEval) -> Matrix3<f64> {
    // J_ij = ∂χ_i/∂ξ_j
    let mut j = Matrix3::zeros();
    for (x, g) in coords.iter().zip(s.grad.iter()) {
        j += x * g.transpose();
    }
    j
}

/// Global first and second derivatives of the shape functions at `xi`,
/// including the second derivative of the geometric map.
pub fn global_derivatives(coords: &[Point3; 8], xi: &Vector3<f64>) -> Result<GlobalDerivatives> {
    global_derivatives_of(coords, &shape_eval(xi), 1.0)
}

pub(crate) fn global_derivatives_of(
    coords: &[Point3; 8],
    s: &ShapeEval,
    weight: f64,
) -> Result<GlobalDerivatives> {
    let j = jacobian(coords, s);
    let det_j = j.determinant();
    if !(det_j > 0.0) {
        return Err(Error::DegenerateElement {
            element: usize::MAX,
            det_j,
        });
    }
    let j_inv = j.try_inverse().ok_or(Error::DegenerateElement {
        element: usize::MAX,
        det_j,
    })?;
    let j_inv_t = j_inv.transpose();

    let mut grad = [Vector3::zeros(); 8];
    for k in 0..8 {
        grad[k] = j_inv_t * s.grad[k];
    }

    // ∂²χ_i/∂ξ∂ξ for each coordinate direction i
    let mut map_hess = [Matrix3::zeros(); 3];
    for (x, h) in coords.iter().zip(s.hess.iter()) {
        for i in 0..3 {
            map_hess[i] += h * x[i];
        }
    }
    let mut hess = [Matrix3::zeros(); 8];
    for k in 0..8 {
        let mut h = s.hess[k];
        for i in 0..3 {
            h -= map_hess[i] * grad[k][i];
        }
        hess[k] = j_inv_t * h * j_inv;
    }

    Ok(GlobalDerivatives {
        values: s.values,
        grad,
        hess,
        det_j,
        weight,
    })
}

/// 2×2×2 Gauss points. Point `g` has lattice offsets `(g & 1, (g >> 1) & 1, g >> 2)`
/// along (ξ, η, ζ), so `g = gi + 2 gj + 4 gk`. All weights are 1.
pub fn gauss_points() -> [Vector3<f64>; 8] {
    let a = 1.0 / 3f64.sqrt();
    let mut pts = [Vector3::zeros(); 8];
    for (g, p) in pts.iter_mut().enumerate() {
        let off = |bit: usize| if (g >> bit) & 1 == 1 { a } else { -a };
        *p = Vector3::new(off(0), off(1), off(2));
    }
    pts
}

/// Precomputed shape evaluations at the 8 Gauss points.
pub fn gauss_shape_evals() -> &'static [ShapeEval; 8] {
    use std::sync::OnceLock;
    static EVALS: OnceLock<[ShapeEval; 8]> = OnceLock::new();
    EVALS.get_or_init(|| gauss_points().map(|p| shape_eval(&p)))
}

/// Global derivatives at all 8 Gauss points of an element.
pub fn gauss_derivatives(coords: &[Point3; 8]) -> Result<[GlobalDerivatives; 8]> {
    let evals = gauss_shape_evals();
    let mut out: [Option<GlobalDerivatives>; 8] = Default::default();
    for (g, s) in evals.iter().enumerate() {
        out[g] = Some(global_derivatives_of(coords, s, 1.0)?);
    }
    Ok(out.map(|d| d.expect("filled above")))
}

/// Global coordinates of the 8 Gauss points.
pub fn gauss_coordinates(coords: &[Point3; 8]) -> [Point3; 8] {
    gauss_points().map(|p| map_point(coords, &p))
}

/// Result of inverting the trilinear map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inversion {
    Inside(Vector3<f64>),
    Outside,
}

/// Finds ξ with χ(ξ) = `point` by Newton's method, and classifies the result.
pub fn invert_isoparametric(coords: &[Point3; 8], point: &Point3) -> Inversion {
    let scale = coords
        .iter()
        .map(|x| (x - coords[0]).norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut xi = Vector3::zeros();
    for _ in 0..MAX_NEWTON {
        let s = shape_eval(&xi);
        let mut x = Point3::zeros();
        for (c, n) in coords.iter().zip(s.values.iter()) {
            x += c * *n;
        }
        let r = x - point;
        if r.norm() <= 1e-13 * scale {
            return classify(xi);
        }
        let j = jacobian(coords, &s);
        let Some(step) = j.lu().solve(&r) else {
            return Inversion::Outside;
        };
        xi -= step;
        if xi.amax() > 1e3 {
            return Inversion::Outside;
        }
        if step.amax() < 1e-15 {
            let x = map_point(coords, &xi);
            return if (x - point).norm() < 1e-10 {
                classify(xi)
            } else {
                Inversion::Outside
            };
        }
    }
    Inversion::Outside
}

fn classify(xi: Vector3<f64>) -> Inversion {
    if xi.amax() <= 1.0 + TOL_INSIDE {
        Inversion::Inside(xi)
    } else {
        Inversion::Outside
    }
}
