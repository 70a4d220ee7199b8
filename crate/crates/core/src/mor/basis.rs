use faer::Mat;

use crate::error::{Error, Result};
use crate::solver::Trajectory;

/// Free-DOF displacement snapshots, one column per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub n_free: usize,
    /// Column-major `n_free × ℓ`.
    pub data: Vec<f64>,
    pub times: Vec<f64>,
}

impl SnapshotMatrix {
    pub fn n_columns(&self) -> usize {
        self.times.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_free..(j + 1) * self.n_free]
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.n_free, self.n_columns(), |i, j| self.data[j * self.n_free + i])
    }
}

/// Collects the stored displacement snapshots of a full-order run.
pub fn build_snapshot_matrix(traj: &Trajectory) -> Result<SnapshotMatrix> {
    let first = traj.snapshots.first().ok_or(Error::EmptyTrajectory)?;
    let n_free = first.len();
    let mut data = Vec::with_capacity(n_free * traj.snapshots.len());
    for s in &traj.snapshots {
        if s.len() != n_free {
            return Err(Error::DimensionMismatch("snapshot lengths differ".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("snapshot contains non-finite values".into()));
        }
        data.extend_from_slice(s);
    }
    Ok(SnapshotMatrix {
        n_free,
        data,
        times: traj.times[..traj.snapshots.len()].to_vec(),
    })
}

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeSelection {
    /// Smallest `m` with `Σ_{j≤m} σ_j / Σ σ_j ≥ tol`.
    Energy(f64),
    Fixed(usize),
}

/// Orthonormal reduced basis with its singular-value spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub n_free: usize,
    pub m: usize,
    /// Column-major `n_free × m`.
    pub phi: Vec<f64>,
    /// All singular values of the snapshot matrix, non-increasing.
    pub sigma: Vec<f64>,
}

impl PodBasis {
    /// Energy captured by the first `m` modes.
    pub fn energy(&self) -> f64 {
        energy_ratio(&self.sigma, self.m)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.phi[j * self.n_free..(j + 1) * self.n_free]
    }

    /// `Φᵀ x`
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|j| self.column(j).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Φ q`
    pub fn reconstruct(&self, q: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_free];
        for (j, &qj) in q.iter().enumerate() {
            for (xi, p) in x.iter_mut().zip(self.column(j)) {
                *xi += qj * p;
            }
        }
        x
    }

    /// `max |ΦᵀΦ − I|`
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.m {
            for b in 0..=a {
                let d: f64 = self.column(a).iter().zip(self.column(b)).map(|(x, y)| x * y).sum();
                let e = if a == b { d - 1.0 } else { d };
                worst = worst.max(e.abs());
            }
        }
        worst
    }
}

/// `Σ_{j≤m} σ_j / Σ σ_j` (first powers).
pub fn energy_ratio(sigma: &[f64], m: usize) -> f64 {
    let total: f64 = sigma.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    sigma[..m.min(sigma.len())].iter().sum::<f64>() / total
}

/// Smallest `m` reaching the energy tolerance.
pub fn modes_for_energy(sigma: &[f64], tol: f64) -> usize {
    let total: f64 = sigma.iter().sum();
    let mut acc = 0.0;
    for (j, s) in sigma.iter().enumerate() {
        acc += s;
        if acc >= tol * total {
            return j + 1;
        }
    }
    sigma.len()
}

/// Numerical rank of a spectrum.
pub fn numerical_rank(sigma: &[f64], rows: usize, cols: usize) -> usize {
    let Some(&s0) = sigma.first() else { return 0 };
    let cut = s0 * rows.max(cols) as f64 * f64::EPSILON;
    sigma.iter().filter(|&&s| s > cut).count()
}

/// Thin SVD of the snapshot matrix and truncation.
pub fn compute_basis(d: &SnapshotMatrix, selection: ModeSelection) -> Result<PodBasis> {
    if d.n_columns() == 0 {
        return Err(Error::EmptyTrajectory);
    }
    let svd = d
        .to_mat()
        .thin_svd()
        .map_err(|e| Error::IntegrationFailure(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    let rank = numerical_rank(&sigma, d.n_free, d.n_columns());
    if rank == 0 {
        return Err(Error::NoBasis);
    }
    let mut m = match selection {
        ModeSelection::Energy(tol) => {
            if !(tol > 0.0 && tol <= 1.0) {
                return Err(Error::InvalidSpec(format!("energy tolerance must lie in (0, 1], got {tol}")));
            }
            modes_for_energy(&sigma, tol)
        }
        ModeSelection::Fixed(m) => {
            if m == 0 {
                return Err(Error::InvalidSpec("at least one mode is required".into()));
            }
            m
        }
    };
    if m > rank {
        log::warn!("requested {m} modes but the snapshot matrix has rank {rank}; keeping {rank}");
        m = rank;
    }
    let u = svd.U();
    let mut phi = Vec::with_capacity(d.n_free * m);
    for j in 0..m {
        for i in 0..d.n_free {
            phi.push(u[(i, j)]);
        }
    }
    Ok(PodBasis {
        n_free: d.n_free,
        m,
        phi,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_matrix(n: usize, l: usize, seed: u64) -> SnapshotMatrix {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        SnapshotMatrix {
            n_free: n,
            data: (0..n * l).map(|_| rng.random_range(-1.0..1.0)).collect(),
            times: (0..l).map(|k| k as f64).collect(),
        }
    }

    #[test]
    fn energy_selection_examples() {
        let s = [10.0, 1.0, 0.1];
        assert_eq!(modes_for_energy(&s, 0.90), 1);
        assert_eq!(modes_for_energy(&s, 0.999), 3);
        assert!((energy_ratio(&s, 2) - 11.0 / 11.1).abs() < 1e-15);
    }

    #[test]
    fn repeated_column_gives_one_mode() {
        let d: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
        let dm = SnapshotMatrix {
            n_free: 20,
            data: d.iter().cycle().take(20 * 6).copied().collect(),
            times: (0..6).map(|k| k as f64).collect(),
        };
        let b = compute_basis(&dm, ModeSelection::Energy(0.5)).unwrap();
        assert_eq!(b.m, 1);
        assert!((b.energy() - 1.0).abs() < 1e-12);
        let nd = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot: f64 = b.column(0).iter().zip(&d).map(|(a, x)| a * x / nd).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
        // asking for more than the rank truncates
        let b5 = compute_basis(&dm, ModeSelection::Fixed(5)).unwrap();
        assert_eq!(b5.m, 1);
    }

    #[test]
    fn zero_matrix_has_no_basis() {
        let dm = SnapshotMatrix {
            n_free: 5,
            data: vec![0.0; 15],
            times: vec![0.0, 1.0, 2.0],
        };
        assert!(matches!(compute_basis(&dm, ModeSelection::Energy(0.9)), Err(Error::NoBasis)));
    }

    #[test]
    fn orthonormal_and_reconstruction_bound() {
        let dm = random_matrix(60, 25, 3);
        for m in [1, 5, 12, 25] {
            let b = compute_basis(&dm, ModeSelection::Fixed(m)).unwrap();
            assert!(b.orthonormality_defect() < 1e-10);
            assert!(b.sigma.windows(2).all(|w| w[0] >= w[1]));
            let tail = b.sigma[m..].iter().map(|s| s * s).sum::<f64>().sqrt();
            for j in 0..dm.n_columns() {
                let c = dm.column(j);
                let r = b.reconstruct(&b.project(c));
                let err = c.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(err <= tail * (1.0 + 1e-10) + 1e-12);
            }
        }
    }
}
