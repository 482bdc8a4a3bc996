//! K-fold cross-validation of the penalty level.
//!
//! Each fold fits the path on its training rows and scores every λ on the
//! held-out rows with the corrected quadratic loss `½ β'Σ_val β - ρ_val'β`,
//! where `Σ_val` is built from the validation rows with the same `τ`.
//! A λ at which any fold's fit fails to converge gets infinite loss.
//!
//! The grid is walked from the largest λ down with every fold in step. The
//! walk ends when a fold's path ends (see [`lasso_path`](super::lasso_path)),
//! or `CV_PATIENCE` points after the current best; points not visited keep
//! infinite loss in the curve.

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::admm::AdmmConfig;
use super::gram::{corrected_covariance, cross_moment, lambda_max, project_design};
use super::lasso::{lasso_solve_weighted, LassoFit, PATH_SATURATION};
use crate::error::{invalid, Result};
use crate::linalg::{dot, mat_vec};
use crate::rng;

pub const DEFAULT_GRID_SIZE: usize = 100;
pub const GRID_FLOOR: f64 = 1e-3;
/// Grid points evaluated past the best one before the search stops.
pub const CV_PATIENCE: usize = 10;

/// How the validation-side matrix in the CV loss is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ValidationGram {
    /// PSD projection of the validation rows' corrected covariance.
    #[default]
    Projected,
    /// The corrected covariance itself, unprojected.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    /// `(λ, mean validation loss)` in grid order.
    pub curve: Vec<(f64, f64)>,
}

/// Geometric grid from `lambda_max` down to `GRID_FLOOR · lambda_max`.
pub fn lambda_grid(lambda_max: f64, size: usize) -> Result<Vec<f64>> {
    if size == 0 {
        return Err(invalid("grid_size", "must be positive"));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(invalid("lambda_max", format!("must be positive, got {lambda_max}")));
    }
    if size == 1 {
        return Ok(vec![lambda_max]);
    }
    let step = GRID_FLOOR.ln() / (size - 1) as f64;
    Ok((0..size).map(|i| lambda_max * (step * i as f64).exp()).collect())
}

/// Random balanced assignment of `n` rows to `k` folds, as per-fold index
/// lists in ascending order.
pub fn random_folds(n: usize, k: usize, seed: u64, purpose: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(invalid("folds", "need at least 2 folds"));
    }
    if n < k {
        return Err(invalid("folds", format!("{k} folds need at least {k} rows, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, n as u64, purpose));
    let mut folds = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub(crate) fn select_rows(z: MatRef<'_, f64>, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), z.ncols(), |i, j| z[(rows[i], j)])
}

pub(crate) fn complement(n: usize, rows: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in rows {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Per-fold training and validation matrices for one design, reusable
/// across regression targets.
#[derive(Debug, Clone)]
pub struct CvPlan {
    /// Validation rows of each fold.
    pub folds: Vec<Vec<usize>>,
    /// Projected corrected covariance of each fold's training rows.
    pub train_sigma: Vec<Mat<f64>>,
    /// Validation-side matrix of each fold.
    pub val_sigma: Vec<Mat<f64>>,
    n: usize,
}

impl CvPlan {
    pub fn new(
        z: MatRef<'_, f64>,
        tau: f64,
        folds: Vec<Vec<usize>>,
        admm: &AdmmConfig,
        validation: ValidationGram,
    ) -> Result<Self> {
        let n = z.nrows();
        if folds.len() < 2 {
            return Err(invalid("folds", "need at least 2 folds"));
        }
        let built = folds
            .par_iter()
            .map(|val_rows| -> Result<(Mat<f64>, Mat<f64>)> {
                let train = select_rows(z, &complement(n, val_rows));
                let (proj, _) = project_design(train.as_ref(), tau, admm, None)?;
                let val = select_rows(z, val_rows);
                let val_sigma = match validation {
                    ValidationGram::Corrected => corrected_covariance(val.as_ref(), tau)?,
                    ValidationGram::Projected => project_design(val.as_ref(), tau, admm, None)?.0.sigma_tilde,
                };
                Ok((proj.sigma_tilde, val_sigma))
            })
            .collect::<Result<Vec<_>>>()?;
        let (train_sigma, val_sigma) = built.into_iter().unzip();
        Ok(Self { folds, train_sigma, val_sigma, n })
    }

    /// Builds a plan whose training matrices are already available (for
    /// instance the fold-complement matrices of a cross-fitting partition).
    pub fn from_parts(
        n: usize,
        folds: Vec<Vec<usize>>,
        train_sigma: Vec<Mat<f64>>,
        val_sigma: Vec<Mat<f64>>,
    ) -> Result<Self> {
        if folds.len() < 2 || folds.len() != train_sigma.len() || folds.len() != val_sigma.len() {
            return Err(invalid("folds", "need at least 2 folds with one matrix pair each"));
        }
        Ok(Self { folds, train_sigma, val_sigma, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Selects λ for `target` given the matching cross moments.
    pub fn select(&self, z: MatRef<'_, f64>, target: &[f64], grid_size: usize) -> Result<CvResult> {
        let full_rho = cross_moment(z, target)?;
        self.select_with(z, target, &full_rho, grid_size, None, |rho| rho)
    }

    /// Like [`CvPlan::select`], with the per-fold training linear term
    /// transformed by `adjust` (used when the regression target is a linear
    /// combination of observed columns).
    pub fn select_with<F>(
        &self,
        z: MatRef<'_, f64>,
        target: &[f64],
        full_rho: &[f64],
        grid_size: usize,
        weights: Option<&[f64]>,
        adjust: F,
    ) -> Result<CvResult>
    where
        F: Fn(Vec<f64>) -> Vec<f64> + Sync,
    {
        if z.nrows() != self.n || target.len() != self.n {
            return Err(invalid("target", "row count does not match the plan"));
        }
        let top = match weights {
            Some(w) => full_rho.iter().zip(w).fold(0.0f64, |a, (r, w)| a.max(r.abs() / w)),
            None => lambda_max(full_rho),
        };
        if top == 0.0 {
            // every penalty gives the zero fit
            return Ok(CvResult { lambda: 0.0, curve: vec![(0.0, 0.0)] });
        }
        let grid = lambda_grid(top, grid_size)?;
        struct FoldState {
            train_rho: Vec<f64>,
            val_rho: Vec<f64>,
            beta: Option<Vec<f64>>,
            quality: f64,
        }
        let mut states = self
            .folds
            .par_iter()
            .map(|val_rows| -> Result<FoldState> {
                let train_rows = complement(self.n, val_rows);
                let train_rho = adjust(cross_moment(
                    select_rows(z, &train_rows).as_ref(),
                    &train_rows.iter().map(|&i| target[i]).collect::<Vec<_>>(),
                )?);
                let val_rho = cross_moment(
                    select_rows(z, val_rows).as_ref(),
                    &val_rows.iter().map(|&i| target[i]).collect::<Vec<_>>(),
                )?;
                Ok(FoldState { train_rho, val_rho, beta: None, quality: 0.0 })
            })
            .collect::<Result<Vec<_>>>()?;

        let k = states.len() as f64;
        let mut curve: Vec<(f64, f64)> = grid.iter().map(|&l| (l, f64::INFINITY)).collect();
        let mut best = (grid[0], f64::INFINITY, 0);
        for (i, &lambda) in grid.iter().enumerate() {
            let steps = states
                .par_iter_mut()
                .enumerate()
                .map(|(f, st)| -> Result<(f64, bool)> {
                    let sigma = &self.train_sigma[f];
                    let fit = lasso_solve_weighted(sigma, &st.train_rho, lambda, weights, st.beta.as_deref())?;
                    let q = mat_vec(sigma.as_ref(), &fit.beta);
                    let quality = 0.5 * dot(&fit.beta, &q) - dot(&st.train_rho, &fit.beta);
                    let saturated = quality != 0.0 && (quality - st.quality).abs() < PATH_SATURATION * quality.abs();
                    st.quality = quality;
                    let loss = if fit.converged {
                        validation_loss(&self.val_sigma[f], &st.val_rho, &fit)
                    } else {
                        f64::INFINITY
                    };
                    let stop = !fit.converged || saturated;
                    st.beta = Some(fit.beta);
                    Ok((loss, stop))
                })
                .collect::<Result<Vec<_>>>()?;
            let mean = steps.iter().map(|s| s.0).sum::<f64>() / k;
            curve[i].1 = mean;
            if mean < best.1 {
                best = (lambda, mean, i);
            }
            if steps.iter().any(|s| s.1) || i >= best.2 + CV_PATIENCE {
                break;
            }
        }
        Ok(CvResult { lambda: best.0, curve })
    }
}

/// `½ β'Σβ - ρ'β`.
pub fn validation_loss(sigma: &Mat<f64>, rho: &[f64], fit: &LassoFit) -> f64 {
    if fit.beta.iter().all(|b| *b == 0.0) {
        return 0.0;
    }
    let q = mat_vec(sigma.as_ref(), &fit.beta);
    0.5 * dot(&fit.beta, &q) - dot(rho, &fit.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub grid_size: usize,
    pub admm: AdmmConfig,
    pub validation: ValidationGram,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            grid_size: DEFAULT_GRID_SIZE,
            admm: AdmmConfig::default(),
            validation: ValidationGram::Projected,
            seed: 0,
        }
    }
}

/// Cross-validated λ for regressing `target` on `z` with error variance
/// `tau`.
pub fn cross_validate_lambda(
    z: MatRef<'_, f64>,
    target: &[f64],
    tau: f64,
    config: &CvConfig,
) -> Result<CvResult> {
    let folds = random_folds(z.nrows(), config.folds, config.seed, rng::tag::CV_FOLDS)?;
    let plan = CvPlan::new(z, tau, folds, &config.admm, config.validation)?;
    plan.select(z, target, config.grid_size)
}
