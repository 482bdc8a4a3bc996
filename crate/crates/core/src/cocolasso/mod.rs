//! CoCoLASSO: LASSO on the measurement-error-corrected Gram matrix after
//! projecting it onto the PSD cone in elementwise max norm.

mod admm;
mod cv;
mod gram;
mod lasso;

use faer::MatRef;
use serde::{Deserialize, Serialize};

pub use admm::{
    l1_ball_threshold, project_l1_ball, psd_project, psd_project_warm, AdmmConfig, AdmmState,
    ProjectionStatus, PsdProjection,
};
pub use cv::{
    cross_validate_lambda, lambda_grid, random_folds, validation_loss, CvConfig, CvPlan, CvResult,
    ValidationGram, DEFAULT_GRID_SIZE, GRID_FLOOR,
};
pub(crate) use cv::{complement, select_rows};
pub use gram::{
    corrected_covariance, corrected_gram, cross_moment, project_design, CorrectedGram, ProjectedGram,
};
pub use lasso::{
    kkt_residual, lasso_path, lasso_path_weighted, lasso_solve, lasso_solve_weighted, lasso_solve_with,
    objective, LassoFit, COORDINATE_TOLERANCE, MAX_SWEEPS,
};

use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    pub cv: CvConfig,
    /// Penalise each coefficient in proportion to its column's root mean
    /// square, which is the same as fitting on unit-scale columns and mapping
    /// the coefficients back.
    pub standardize: bool,
}

#[derive(Debug, Clone)]
pub struct CocoLassoFit {
    pub fit: LassoFit,
    pub cv: CvResult,
    pub gram: CorrectedGram,
}

fn column_scales(z: MatRef<'_, f64>) -> Vec<f64> {
    let n = z.nrows() as f64;
    (0..z.ncols())
        .map(|j| {
            let s = ((0..z.nrows()).map(|i| z[(i, j)].powi(2)).sum::<f64>() / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect()
}

/// Cross-validates λ, then fits on all rows of `z`.
pub fn fit_cocolasso(z: MatRef<'_, f64>, target: &[f64], tau: f64, options: &FitOptions) -> Result<CocoLassoFit> {
    let gram = corrected_gram(z, target, tau, &options.cv.admm)?;
    let weights = options.standardize.then(|| column_scales(z));
    let folds = random_folds(z.nrows(), options.cv.folds, options.cv.seed, rng::tag::CV_FOLDS)?;
    let plan = CvPlan::new(z, tau, folds, &options.cv.admm, options.cv.validation)?;
    let cv = plan.select_with(z, target, &gram.rho, options.cv.grid_size, weights.as_deref(), |r| r)?;
    let fit = lasso_solve_weighted(&gram.sigma_tilde, &gram.rho, cv.lambda, weights.as_deref(), None)?;
    Ok(CocoLassoFit { fit, cv, gram })
}
