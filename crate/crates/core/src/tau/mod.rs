//! Method-of-moments estimation of the isotropic error variance `τ` from two
//! replicate measurements per unit, plus spectral diagnostics.
//!
//! With `z̃ᵢ = (zᵢ₁ - zᵢ₂)/√2`, the error covariance estimate is
//! `Σ̂ₐ = Z̃'Z̃/N` and `τ̂ = tr(Σ̂ₐ)/p`, the mean eigenvalue of `Σ̂ₐ`.

mod mp;

use faer::{Mat, MatRef};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use mp::{ks_statistic, mp_moment, MpLaw};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, asymmetry, check_square};
use crate::model::Dataset;
use crate::rng;

/// Row-major `N x p` matrix of scaled replicate differences.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDiffMatrix {
    rows: Vec<f64>,
    n: usize,
    p: usize,
}

impl ReplicateDiffMatrix {
    pub fn from_rows(rows: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(invalid("rows", "need N >= 1 and p >= 1"));
        }
        if rows.len() != n * p {
            return Err(invalid("rows", format!("expected {} entries, got {}", n * p, rows.len())));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "replicate differences" });
        }
        Ok(Self { rows, n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

/// `(z1 - z2)/√2` row by row.
pub fn replicate_diff(dataset: &Dataset) -> Result<ReplicateDiffMatrix> {
    let z2 = dataset.z2().ok_or(Error::MissingReplicates)?;
    let rows = dataset
        .z1()
        .iter()
        .zip(z2)
        .map(|(a, b)| (a - b) * std::f64::consts::FRAC_1_SQRT_2)
        .collect();
    ReplicateDiffMatrix::from_rows(rows, dataset.len(), dataset.p())
}

/// `Σ̂ₐ = Z̃'Z̃/N`.
pub fn sigma_a(diff: &ReplicateDiffMatrix) -> Mat<f64> {
    linalg::gram_row_major(&diff.rows, diff.n, diff.p)
}

/// `tr(M)/p`.
pub fn tau_hat(sigma_a: MatRef<'_, f64>) -> Result<f64> {
    let p = check_square(sigma_a)?;
    if p == 0 {
        return Err(invalid("sigma_a", "empty matrix"));
    }
    let trace: f64 = (0..p).map(|j| sigma_a[(j, j)]).sum();
    Ok(trace / p as f64)
}

/// `τ̂` without forming `Σ̂ₐ`: `‖Z̃‖²_F / (N p)`.
pub fn tau_hat_from_diff(diff: &ReplicateDiffMatrix) -> f64 {
    let ss: f64 = diff.rows.iter().map(|v| v * v).sum();
    ss / (diff.n * diff.p) as f64
}

/// `τ̂` straight from a dataset with replicates.
pub fn estimate_tau(dataset: &Dataset) -> Result<f64> {
    Ok(tau_hat_from_diff(&replicate_diff(dataset)?))
}

/// Empirical spectral distribution of `Σ̂ₐ` with its `τ̂` and aspect ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub tau_hat: f64,
    pub kappa: f64,
}

impl SpectralSummary {
    /// `(1/p) Σ Λᵢᵏ`, which equals `tr(Σ̂ₐᵏ)/p`.
    pub fn moment(&self, k: u32) -> f64 {
        let p = self.eigenvalues.len() as f64;
        self.eigenvalues.iter().map(|v| v.powi(k as i32)).sum::<f64>() / p
    }

    /// MP law fitted with `(τ̂, κ)`.
    pub fn fitted_law(&self) -> Result<MpLaw> {
        MpLaw::new(self.tau_hat, self.kappa)
    }

    /// KS distance between the eigenvalues and the fitted MP law.
    pub fn ks_to_fitted(&self) -> Result<f64> {
        Ok(ks_statistic(&self.eigenvalues, &self.fitted_law()?))
    }
}

/// Eigenvalues of `Σ̂ₐ` (built from `n` rows) with `τ̂` and `κ = p/n`.
pub fn esd(sigma_a: MatRef<'_, f64>, n: usize) -> Result<SpectralSummary> {
    let p = check_square(sigma_a)?;
    if n == 0 {
        return Err(invalid("n", "sample size must be positive"));
    }
    let asym = asymmetry(sigma_a);
    if asym > 1e-8 {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let eigenvalues = linalg::sym_eigenvalues(sigma_a)?;
    Ok(SpectralSummary {
        eigenvalues,
        tau_hat: tau_hat(sigma_a)?,
        kappa: p as f64 / n as f64,
    })
}

/// Simulates `reps` replicate-difference matrices with i.i.d. `N(0, τ)`
/// entries and returns the fraction with `‖τ̂ I - Σ̂ₐ‖_op > eps`.
pub fn tau_tail_check(n: usize, p: usize, tau: f64, eps: f64, reps: usize, seed: u64) -> Result<f64> {
    if n == 0 || p == 0 || reps == 0 {
        return Err(invalid("n/p/reps", "must all be positive"));
    }
    if !(tau > 0.0) || eps < 0.0 {
        return Err(invalid("tau/eps", "tau must be positive and eps non-negative"));
    }
    let normal = Normal::new(0.0, tau.sqrt()).map_err(|e| invalid("tau", e.to_string()))?;
    let exceed = (0..reps)
        .map(|r| -> Result<bool> {
            let mut rng = rng::stream(seed, r as u64, rng::tag::TAIL_CHECK);
            let rows: Vec<f64> = (0..n * p).map(|_| normal.sample(&mut rng)).collect();
            let diff = ReplicateDiffMatrix::from_rows(rows, n, p)?;
            let s = sigma_a(&diff);
            let t = tau_hat(s.as_ref())?;
            let eig = linalg::sym_eigenvalues(s.as_ref())?;
            let dev = eig.iter().fold(0.0f64, |acc, v| acc.max((t - v).abs()));
            Ok(dev > eps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(exceed.iter().filter(|&&e| e).count() as f64 / reps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObservedSample;

    fn with_reps(z1: Vec<Vec<f64>>, z2: Vec<Vec<f64>>) -> Dataset {
        let samples: Vec<_> = z1
            .into_iter()
            .zip(z2)
            .map(|(a, b)| ObservedSample { y: 0.0, d: 1.0, z1: a, z2: Some(b) })
            .collect();
        Dataset::from_samples(&samples).unwrap()
    }

    #[test]
    fn diff_row_formula() {
        let data = with_reps(vec![vec![1.0, 1.0], vec![0.0, 0.0]], vec![vec![-1.0, 1.0], vec![0.0, 0.0]]);
        let diff = replicate_diff(&data).unwrap();
        assert!((diff.row(0)[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(diff.row(0)[1], 0.0);
    }

    #[test]
    fn identical_replicates_give_zero() {
        let rows = vec![vec![0.3, -1.0], vec![2.0, 0.5]];
        let data = with_reps(rows.clone(), rows);
        let diff = replicate_diff(&data).unwrap();
        assert!(diff.as_slice().iter().all(|&v| v == 0.0));
        let s = sigma_a(&diff);
        assert!(s.as_ref().col_iter().flat_map(|c| c.iter().copied().collect::<Vec<_>>()).all(|v| v == 0.0));
        assert_eq!(tau_hat(s.as_ref()).unwrap(), 0.0);
    }

    #[test]
    fn missing_replicates_is_an_error() {
        let samples = vec![
            ObservedSample { y: 0.0, d: 1.0, z1: vec![1.0], z2: None },
            ObservedSample { y: 0.0, d: 1.0, z1: vec![2.0], z2: None },
        ];
        let data = Dataset::from_samples(&samples).unwrap();
        assert_eq!(replicate_diff(&data).unwrap_err(), Error::MissingReplicates);
    }

    #[test]
    fn sigma_a_outer_product() {
        let diff = ReplicateDiffMatrix::from_rows(vec![2f64.sqrt(), 0.0], 1, 2).unwrap();
        let s = sigma_a(&diff);
        assert!((s[(0, 0)] - 2.0).abs() < 1e-14);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(s[(1, 1)], 0.0);
        assert!((tau_hat(s.as_ref()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tau_hat_of_scaled_identity() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.0 });
        assert_eq!(tau_hat(m.as_ref()).unwrap(), 2.0);
    }

    #[test]
    fn tau_hat_rejects_rectangular() {
        let m = Mat::<f64>::zeros(2, 3);
        assert!(matches!(tau_hat(m.as_ref()), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn esd_of_diagonal() {
        let m = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (1, 1) => 3.0,
            _ => 0.0,
        });
        let s = esd(m.as_ref(), 4).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((s.eigenvalues[1] - 3.0).abs() < 1e-14);
        assert_eq!(s.tau_hat, 2.0);
        assert_eq!(s.kappa, 0.5);
    }

    #[test]
    fn esd_rejects_asymmetric() {
        let m = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 });
        assert!(matches!(esd(m.as_ref(), 2), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn trace_shortcut_matches_matrix_route() {
        let rows: Vec<f64> = (0..12).map(|k| (k as f64 * 0.37).sin()).collect();
        let diff = ReplicateDiffMatrix::from_rows(rows, 4, 3).unwrap();
        let a = tau_hat(sigma_a(&diff).as_ref()).unwrap();
        let b = tau_hat_from_diff(&diff);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn tail_check_extremes() {
        assert_eq!(tau_tail_check(50, 10, 1.0, 100.0, 5, 1).unwrap(), 0.0);
        assert_eq!(tau_tail_check(50, 10, 1.0, 0.0, 5, 1).unwrap(), 1.0);
    }
}
