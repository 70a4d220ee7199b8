//! Element-level ALE inertia operators and the material element integrals.
//!
//! All inertia operators act identically on the three displacement components,
//! so they are stored as scalar 8×8 blocks `k[a][b]`; the 24×24 matrix is
//! `k ⊗ I₃` with local DOF index `3a + i`.

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};

use crate::element::{gauss_derivatives, GlobalDerivatives, Point3};
use crate::error::Result;
use crate::material::{MaterialParams, MaterialPointState, TrialState};

pub type Block8 = SMatrix<f64, 8, 8>;
pub type Mat3x24 = SMatrix<f64, 3, 24>;
pub type ElemMatrix = SMatrix<f64, 24, 24>;
pub type ElemVector = SVector<f64, 24>;
pub type NodalVectors = [Vector3<f64>; 8];

/// Velocity-independent element integrals from which every inertia operator
/// follows by contraction with `w` and `ẇ`.
#[derive(Debug, Clone)]
pub struct AleBase {
    /// `∫ρ N_a N_b`
    pub mass: Block8,
    /// `∫ρ N_a ∂N_b/∂χ_i` for i = x, y, z
    pub grad: [Block8; 3],
    /// `∫ρ N_a ∂²N_b/∂χ_i∂χ_j` in order xx, yy, zz, yz, xz, xy
    pub hess: [Block8; 6],
    /// `∫ρ N_a`
    pub lumped: [f64; 8],
}

const SYM: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

impl AleBase {
    pub fn new(derivs: &[GlobalDerivatives; 8], rho: f64) -> Self {
        let mut b = AleBase {
            mass: Block8::zeros(),
            grad: [Block8::zeros(); 3],
            hess: [Block8::zeros(); 6],
            lumped: [0.0; 8],
        };
        for gd in derivs {
            let dv = rho * gd.weight * gd.det_j;
            for a in 0..8 {
                let na = gd.values[a] * dv;
                b.lumped[a] += na;
                for c in 0..8 {
                    b.mass[(a, c)] += na * gd.values[c];
                    for i in 0..3 {
                        b.grad[i][(a, c)] += na * gd.grad[c][i];
                    }
                    for (s, &(i, j)) in SYM.iter().enumerate() {
                        b.hess[s][(a, c)] += na * gd.hess[c][(i, j)];
                    }
                }
            }
        }
        b
    }

    pub fn from_coords(coords: &[Point3; 8], rho: f64) -> Result<Self> {
        Ok(Self::new(&gauss_derivatives(coords)?, rho))
    }

    /// Contracts the stored integrals with the current guiding velocity.
    pub fn operators(&self, w: &Vector3<f64>, wdot: &Vector3<f64>) -> ElementAleOperators {
        let mut k3 = Block8::zeros();
        let mut k4 = Block8::zeros();
        for i in 0..3 {
            k3 += self.grad[i] * (2.0 * w[i]);
            k4 += self.grad[i] * wdot[i];
        }
        let mut k5 = Block8::zeros();
        for (s, &(i, j)) in SYM.iter().enumerate() {
            let f = if i == j { 1.0 } else { 2.0 };
            k5 += self.hess[s] * (f * w[i] * w[j]);
        }
        let f1 = std::array::from_fn(|a| -wdot * self.lumped[a]);
        ElementAleOperators {
            k2: self.mass,
            k3,
            k4,
            k5,
            f1,
        }
    }
}

/// Inertia tangents and the body-force term of one element at one instant.
#[derive(Debug, Clone)]
pub struct ElementAleOperators {
    pub k2: Block8,
    pub k3: Block8,
    pub k4: Block8,
    pub k5: Block8,
    pub f1: NodalVectors,
}

impl ElementAleOperators {
    /// `f₂ = k₂ · φ̈`
    pub fn f2(&self, acc: &NodalVectors) -> NodalVectors {
        apply(&self.k2, acc)
    }
    /// `f₃ = k₃ · φ̇`
    pub fn f3(&self, vel: &NodalVectors) -> NodalVectors {
        apply(&self.k3, vel)
    }
    /// `f₄ = k₄ · φ`
    pub fn f4(&self, placement: &NodalVectors) -> NodalVectors {
        apply(&self.k4, placement)
    }
    /// `f₅ = k₅ · φ`
    pub fn f5(&self, placement: &NodalVectors) -> NodalVectors {
        apply(&self.k5, placement)
    }
}

/// ALE operators for an element given by its corner coordinates.
pub fn element_ale_operators(
    coords: &[Point3; 8],
    rho: f64,
    w: &Vector3<f64>,
    wdot: &Vector3<f64>,
) -> Result<ElementAleOperators> {
    Ok(AleBase::from_coords(coords, rho)?.operators(w, wdot))
}

pub fn apply(k: &Block8, x: &NodalVectors) -> NodalVectors {
    std::array::from_fn(|a| {
        let mut s = Vector3::zeros();
        for b in 0..8 {
            s += x[b] * k[(a, b)];
        }
        s
    })
}

/// `k ⊗ I₃` as a dense 24×24 matrix.
pub fn expand(k: &Block8) -> DMatrix<f64> {
    DMatrix::from_fn(24, 24, |r, c| if r % 3 == c % 3 { k[(r / 3, c / 3)] } else { 0.0 })
}

/// Interpolation matrices at one point: `H`, `A(w)`, `A′(ẇ)`, `A″(w)`.
#[derive(Debug, Clone)]
pub struct AleInterpolation {
    pub h: Mat3x24,
    pub a: Mat3x24,
    pub a_prime: Mat3x24,
    pub a_second: Mat3x24,
}

pub fn interpolation_matrices(
    gd: &GlobalDerivatives,
    w: &Vector3<f64>,
    wdot: &Vector3<f64>,
) -> AleInterpolation {
    let mut m = AleInterpolation {
        h: Mat3x24::zeros(),
        a: Mat3x24::zeros(),
        a_prime: Mat3x24::zeros(),
        a_second: Mat3x24::zeros(),
    };
    for b in 0..8 {
        let n = gd.values[b];
        let gw = gd.grad[b].dot(w);
        let gwd = gd.grad[b].dot(wdot);
        let hww = w.dot(&(gd.hess[b] * w));
        for i in 0..3 {
            m.h[(i, 3 * b + i)] = n;
            m.a[(i, 3 * b + i)] = gw;
            m.a_prime[(i, 3 * b + i)] = gwd;
            m.a_second[(i, 3 * b + i)] = hww;
        }
    }
    m
}

/// Material stiffness, internal force and trial Gauss-point states of one element.
#[derive(Debug, Clone)]
pub struct ElementInternal {
    pub stiffness: ElemMatrix,
    pub force: ElemVector,
    pub trial: [TrialState; 8],
}

/// Deformation gradient `F = Σ_a φ_a ⊗ ∇N_a`.
pub fn deformation_gradient(gd: &GlobalDerivatives, placement: &NodalVectors) -> Matrix3<f64> {
    let mut f = Matrix3::zeros();
    for a in 0..8 {
        f += placement[a] * gd.grad[a].transpose();
    }
    f
}

/// Total-Lagrangian element stiffness and internal force.
pub fn element_internal(
    derivs: &[GlobalDerivatives; 8],
    material: &MaterialParams,
    states: &[MaterialPointState; 8],
    placement: &NodalVectors,
    dt: f64,
) -> Result<ElementInternal> {
    let mut k = ElemMatrix::zeros();
    let mut fint = ElemVector::zeros();
    let mut trial = [TrialState(MaterialPointState::virgin()); 8];
    for (g, gd) in derivs.iter().enumerate() {
        let dv = gd.weight * gd.det_j;
        let f = deformation_gradient(gd, placement);
        let (st, tr) = material.response(&f, &states[g], dt)?;
        trial[g] = tr;
        let p = st.stress;
        for a in 0..8 {
            let pa = p * gd.grad[a] * dv;
            for i in 0..3 {
                fint[3 * a + i] += pa[i];
            }
        }
        // B[3i+J][3a+i] = N_a,J ; K = Bᵀ A B
        let mut ab = SMatrix::<f64, 9, 24>::zeros();
        for b in 0..8 {
            let gb = gd.grad[b] * dv;
            for kk in 0..3 {
                let col = 3 * b + kk;
                for r in 0..9 {
                    let mut s = 0.0;
                    for l in 0..3 {
                        s += st.tangent[(r, 3 * kk + l)] * gb[l];
                    }
                    ab[(r, col)] = s;
                }
            }
        }
        for a in 0..8 {
            let ga = gd.grad[a];
            for i in 0..3 {
                let row = 3 * a + i;
                for col in 0..24 {
                    let mut s = 0.0;
                    for j in 0..3 {
                        s += ga[j] * ab[(3 * i + j, col)];
                    }
                    k[(row, col)] += s;
                }
            }
        }
    }
    Ok(ElementInternal {
        stiffness: k,
        force: fint,
        trial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{gauss_points, global_derivatives};
    use rand::{Rng, SeedableRng};

    fn box_coords(l: [f64; 3]) -> [Point3; 8] {
        std::array::from_fn(|k| {
            let c = crate::element::CORNERS[k];
            Point3::new(0.5 * (c[0] + 1.0) * l[0], 0.5 * (c[1] + 1.0) * l[1], 0.5 * (c[2] + 1.0) * l[2])
        })
    }

    fn distorted() -> [Point3; 8] {
        let mut c = box_coords([1.0, 0.8, 0.6]);
        c[6] += Point3::new(0.15, 0.1, 0.05);
        c[1] += Point3::new(0.05, -0.08, 0.02);
        c[7] += Point3::new(-0.1, 0.0, 0.07);
        c
    }

    const STVK: MaterialParams = MaterialParams::StVenantKirchhoff {
        lambda: 2500.0,
        mu: 1250.0,
        density: 10.0,
    };

    #[test]
    fn zero_velocity_leaves_only_mass() {
        let ops = element_ale_operators(&distorted(), 10.0, &Vector3::zeros(), &Vector3::zeros()).unwrap();
        assert_eq!(ops.k3, Block8::zeros());
        assert_eq!(ops.k4, Block8::zeros());
        assert_eq!(ops.k5, Block8::zeros());
        assert!(ops.f1.iter().all(|f| *f == Vector3::zeros()));
        assert!((ops.k2 - ops.k2.transpose()).amax() < 1e-14);
        assert!(ops.k2.symmetric_eigenvalues().min() > -1e-12);
    }

    #[test]
    fn mass_sums_to_three_rho_volume() {
        let l = [2.0, 0.5, 1.5];
        let ops = element_ale_operators(&box_coords(l), 7.0, &Vector3::zeros(), &Vector3::zeros()).unwrap();
        let total = expand(&ops.k2).sum();
        assert!((total - 3.0 * 7.0 * l[0] * l[1] * l[2]).abs() < 1e-12);
    }

    #[test]
    fn matrices_agree_with_direct_quadrature() {
        let coords = distorted();
        let rho = 3.0;
        let w = Vector3::new(-2.0, 0.7, 0.3);
        let wd = Vector3::new(0.5, -1.0, 0.2);
        let ops = element_ale_operators(&coords, rho, &w, &wd).unwrap();
        let mut k = [DMatrix::<f64>::zeros(24, 24), DMatrix::zeros(24, 24), DMatrix::zeros(24, 24), DMatrix::zeros(24, 24)];
        let mut f1 = DMatrix::<f64>::zeros(24, 1);
        for xi in gauss_points() {
            let gd = global_derivatives(&coords, &xi).unwrap();
            let m = interpolation_matrices(&gd, &w, &wd);
            let dv = rho * gd.det_j;
            let ht = m.h.transpose();
            k[0] += DMatrix::from_column_slice(24, 24, (ht * m.h * dv).as_slice());
            k[1] += DMatrix::from_column_slice(24, 24, (ht * m.a * (2.0 * dv)).as_slice());
            k[2] += DMatrix::from_column_slice(24, 24, (ht * m.a_prime * dv).as_slice());
            k[3] += DMatrix::from_column_slice(24, 24, (ht * m.a_second * dv).as_slice());
            f1 -= DMatrix::from_column_slice(24, 1, (ht * wd * dv).as_slice());
        }
        for (mine, direct) in [&ops.k2, &ops.k3, &ops.k4, &ops.k5].into_iter().zip(k.iter()) {
            assert!((expand(mine) - direct).amax() < 1e-12 * direct.amax().max(1.0));
        }
        for a in 0..8 {
            for i in 0..3 {
                assert!((ops.f1[a][i] - f1[3 * a + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_and_linear_fields() {
        let coords = distorted();
        let w = Vector3::new(3.0, -1.0, 0.5);
        let wd = Vector3::new(1.0, 2.0, -0.5);
        let ops = element_ale_operators(&coords, 2.0, &w, &wd).unwrap();
        let c = [Vector3::new(1.5, -2.0, 0.25); 8];
        for f in ops.f3(&c).iter().chain(ops.f4(&c).iter()).chain(ops.f5(&c).iter()) {
            assert!(f.norm() < 1e-12);
        }
        // the reference placement makes f₁ + f₄ vanish and f₅ vanish
        let f4 = ops.f4(&coords);
        let f5 = ops.f5(&coords);
        for a in 0..8 {
            assert!((f4[a] + ops.f1[a]).norm() < 1e-12);
            assert!(f5[a].norm() < 1e-12);
        }
    }

    #[test]
    fn uniform_velocity_has_no_k4() {
        let ops =
            element_ale_operators(&distorted(), 2.0, &Vector3::new(5.0, 0.0, 0.0), &Vector3::zeros()).unwrap();
        assert_eq!(ops.k4, Block8::zeros());
        assert!(ops.f1.iter().all(|f| *f == Vector3::zeros()));
    }

    #[test]
    fn internal_force_vanishes_at_reference_and_translation() {
        let coords = distorted();
        let d = gauss_derivatives(&coords).unwrap();
        let states = [MaterialPointState::virgin(); 8];
        let r = element_internal(&d, &STVK, &states, &coords, 0.05).unwrap();
        assert!(r.force.amax() < 1e-10);
        let moved = coords.map(|x| x + Vector3::new(0.3, -1.2, 4.0));
        let r2 = element_internal(&d, &STVK, &states, &moved, 0.05).unwrap();
        assert!(r2.force.amax() < 1e-10);
        assert!((r.stiffness - r2.stiffness).amax() < 1e-9);
    }

    #[test]
    fn reference_stiffness_is_linear_elastic() {
        let coords = box_coords([1.0, 1.0, 1.0]);
        let d = gauss_derivatives(&coords).unwrap();
        let k = element_internal(&d, &STVK, &[MaterialPointState::virgin(); 8], &coords, 0.05)
            .unwrap()
            .stiffness;
        // independent oracle: Bᵀ D B with Voigt matrices
        let (lam, mu) = (2500.0, 1250.0);
        let mut dmat = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                dmat[(i, j)] = lam;
            }
            dmat[(i, i)] += 2.0 * mu;
            dmat[(i + 3, i + 3)] = mu;
        }
        let mut kk = SMatrix::<f64, 24, 24>::zeros();
        for gd in &d {
            let mut b = SMatrix::<f64, 6, 24>::zeros();
            for a in 0..8 {
                let g = gd.grad[a];
                b[(0, 3 * a)] = g.x;
                b[(1, 3 * a + 1)] = g.y;
                b[(2, 3 * a + 2)] = g.z;
                b[(3, 3 * a + 1)] = g.z;
                b[(3, 3 * a + 2)] = g.y;
                b[(4, 3 * a)] = g.z;
                b[(4, 3 * a + 2)] = g.x;
                b[(5, 3 * a)] = g.y;
                b[(5, 3 * a + 1)] = g.x;
            }
            kk += b.transpose() * dmat * b * gd.det_j;
        }
        assert!((k - kk).amax() < 1e-9 * kk.amax());
    }

    #[test]
    fn stiffness_matches_finite_differences() {
        let coords = distorted();
        let d = gauss_derivatives(&coords).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let visco = MaterialParams::NeoVisco {
            kappa: 5000.0,
            mu: 1000.0,
            mu_v: 700.0,
            eta_v: 2000.0,
            density: 10.0,
        };
        for mat in [STVK, visco] {
            for _ in 0..5 {
                let phi: NodalVectors =
                    std::array::from_fn(|a| coords[a] + Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05)));
                let states = [MaterialPointState::virgin(); 8];
                let base = element_internal(&d, &mat, &states, &phi, 0.05).unwrap();
                let h = 1e-6;
                let mut fd = ElemMatrix::zeros();
                for col in 0..24 {
                    let mut p = phi;
                    let mut m = phi;
                    p[col / 3][col % 3] += h;
                    m[col / 3][col % 3] -= h;
                    let fp = element_internal(&d, &mat, &states, &p, 0.05).unwrap().force;
                    let fm = element_internal(&d, &mat, &states, &m, 0.05).unwrap().force;
                    fd.set_column(col, &((fp - fm) / (2.0 * h)));
                }
                let rel = (base.stiffness - fd).norm() / fd.norm();
                assert!(rel < 1e-6, "relative tangent error {rel}");
            }
        }
    }
}
