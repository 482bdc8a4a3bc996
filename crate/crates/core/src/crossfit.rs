//! K-fold cross-fitting of the nuisance regressions and the pooled moment
//! equation for the treatment effect.
//!
//! For each fold the nuisances are fit on the other folds and the linear
//! score parts `(a, b)` are averaged over the held-out rows. The estimate
//! solves the pooled equation `mean(a) θ + mean(b) = 0`, and the variance is
//! the sandwich `Ĵ⁻² · mean(ψ(θ̂)²)` with `Ĵ = mean(a)`.

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cocolasso::{
    complement, corrected_covariance, cross_moment, lasso_solve_weighted, project_design, random_folds,
    select_rows, AdmmConfig, CvPlan, ValidationGram, DEFAULT_GRID_SIZE,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::dot;
use crate::model::{score_parts_for, Dataset, NuisanceEstimate, ScoreKind};
use crate::rng;
use crate::tau::estimate_tau;

/// Smallest `|Ĵ|` accepted before the moment equation counts as degenerate.
pub const MIN_JACOBIAN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of every row.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// Row indices of each fold, ascending.
    pub fn folds(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &f) in self.assignments.iter().enumerate() {
            out[f].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// The same partition for rows reordered so that new row `i` is old row
    /// `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            k: self.k,
            assignments: order.iter().map(|&i| self.assignments[i]).collect(),
            seed: self.seed,
        }
    }
}

/// Uniformly random balanced partition of `0..n` into `k` folds.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(invalid("K", format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(invalid("K", format!("{k} folds exceed the {n} available rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0, rng::tag::FOLDS));
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    /// Ignores measurement error: `τ = 0` everywhere, naive score.
    Naive,
    /// True nuisances plugged in.
    Oracle,
    /// Known error variance.
    CovarianceAware,
    /// Error variance estimated from replicates.
    CovarianceOblivious,
}

impl VariantKind {
    pub fn label(self) -> &'static str {
        match self {
            VariantKind::Naive => "naive",
            VariantKind::Oracle => "oracle",
            VariantKind::CovarianceAware => "ca",
            VariantKind::CovarianceOblivious => "co",
        }
    }

    pub fn score_kind(self) -> ScoreKind {
        match self {
            VariantKind::Naive => ScoreKind::Naive,
            _ => ScoreKind::Corrected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorVariant {
    pub kind: VariantKind,
    pub known_tau: Option<f64>,
    pub true_nuisance: Option<NuisanceEstimate>,
}

impl EstimatorVariant {
    pub fn naive() -> Self {
        Self { kind: VariantKind::Naive, known_tau: None, true_nuisance: None }
    }

    pub fn oracle(truth: NuisanceEstimate) -> Self {
        Self { kind: VariantKind::Oracle, known_tau: None, true_nuisance: Some(truth) }
    }

    pub fn covariance_aware(tau: f64) -> Self {
        Self { kind: VariantKind::CovarianceAware, known_tau: Some(tau), true_nuisance: None }
    }

    pub fn covariance_oblivious() -> Self {
        Self { kind: VariantKind::CovarianceOblivious, known_tau: None, true_nuisance: None }
    }

    pub fn label(&self) -> &'static str {
        self.kind.label()
    }

    /// Checks the fields and data this variant needs.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        match self.kind {
            VariantKind::Naive => Ok(()),
            VariantKind::Oracle => {
                let truth = self.true_nuisance.as_ref().ok_or(Error::MissingPrerequisite {
                    variant: "oracle",
                    field: "true_nuisance",
                })?;
                truth.validate()?;
                if truth.p() != data.p() {
                    return Err(Error::DimensionMismatch { expected: data.p(), actual: truth.p() });
                }
                Ok(())
            }
            VariantKind::CovarianceAware => {
                let tau = self.known_tau.ok_or(Error::MissingPrerequisite {
                    variant: "ca",
                    field: "known_tau",
                })?;
                if !(tau >= 0.0 && tau.is_finite()) {
                    return Err(invalid("known_tau", format!("must be finite and >= 0, got {tau}")));
                }
                Ok(())
            }
            VariantKind::CovarianceOblivious => {
                if data.has_replicates() {
                    Ok(())
                } else {
                    Err(Error::MissingPrerequisite { variant: "co", field: "replicate measurements" })
                }
            }
        }
    }

    fn tau_for(&self, train: &Dataset) -> Result<f64> {
        match self.kind {
            VariantKind::Naive => Ok(0.0),
            VariantKind::CovarianceAware => Ok(self.known_tau.unwrap_or(0.0)),
            VariantKind::CovarianceOblivious => estimate_tau(train),
            VariantKind::Oracle => Ok(self.true_nuisance.as_ref().map_or(0.0, |t| t.tau)),
        }
    }
}

/// Where the penalty level of each nuisance regression comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSelection {
    /// Fresh K-fold CV inside every fold complement.
    #[default]
    Nested,
    /// One CV per regression over the cross-fitting partition itself: the
    /// fold-complement matrices double as CV training matrices, and the
    /// selected λ is shared by all folds.
    CrossFitFolds,
}

/// What the outcome coefficient `β` is fit to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeModel {
    /// `β` of `Y = Dθ + X'β + U`: regress `Y - θ̃D` on `Z`, where `θ̃` is a
    /// preliminary partialling-out estimate from the same training rows.
    #[default]
    Structural,
    /// Regress `Y` on `Z` directly (the reduced form `β + θγ`).
    ReducedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossFitSettings {
    pub cv_folds: usize,
    pub grid_size: usize,
    pub admm: AdmmConfig,
    pub validation: ValidationGram,
    pub lambda_selection: LambdaSelection,
    pub outcome: OutcomeModel,
    /// Coverage of the reported interval.
    pub confidence: f64,
    /// Penalise by column scale (see `cocolasso::FitOptions`).
    pub standardize: bool,
}

impl Default for CrossFitSettings {
    fn default() -> Self {
        Self {
            cv_folds: 5,
            grid_size: DEFAULT_GRID_SIZE,
            admm: AdmmConfig::default(),
            validation: ValidationGram::Projected,
            lambda_selection: LambdaSelection::Nested,
            outcome: OutcomeModel::Structural,
            confidence: 0.95,
            standardize: false,
        }
    }
}

impl CrossFitSettings {
    /// Cheaper settings for Monte Carlo work at a few hundred covariates:
    /// λ chosen over the cross-fitting partition, unprojected validation
    /// matrices, and a capped, over-relaxed projection.
    pub fn desk() -> Self {
        Self {
            lambda_selection: LambdaSelection::CrossFitFolds,
            validation: ValidationGram::Corrected,
            admm: AdmmConfig {
                penalty: 0.01,
                max_iterations: 10,
                tolerance: 1e-4,
                relaxation: 1.6,
                adaptive_penalty: false,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cv_folds < 2 {
            return Err(invalid("cv_folds", "need at least 2 folds"));
        }
        if self.grid_size == 0 {
            return Err(invalid("grid_size", "must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence", "must lie in (0, 1)"));
        }
        self.admm.validate()
    }

    /// Two-sided normal critical value; exactly 1.96 at 95%.
    pub fn critical_value(&self) -> f64 {
        if self.confidence == 0.95 {
            return 1.96;
        }
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        normal.inverse_cdf(0.5 + 0.5 * self.confidence)
    }
}

/// Fitted nuisances with the penalty levels used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFit {
    pub eta: NuisanceEstimate,
    pub lambda_gamma: f64,
    pub lambda_beta: f64,
    /// Preliminary effect used for the structural outcome regression.
    pub theta_pilot: Option<f64>,
    pub projection_gap: f64,
}

fn design(data: &Dataset) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(data.z1(), data.len(), data.p())
}

fn column_weights(z: MatRef<'_, f64>, on: bool) -> Option<Vec<f64>> {
    on.then(|| {
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
    })
}

fn residuals(z: MatRef<'_, f64>, target: &[f64], coef: &[f64]) -> Vec<f64> {
    (0..z.nrows())
        .map(|i| target[i] - (0..z.ncols()).map(|j| z[(i, j)] * coef[j]).sum::<f64>())
        .collect()
}

/// Partialling-out effect `Σ[r_Y r_D - τ ℓ'γ] / Σ[r_D² - τ γ'γ]` from
/// residuals on rows each fit did not see. `fits[k]` is `(ℓ, γ, τ)` fitted
/// without `folds[k]`. `None` when the denominator is not positive.
fn out_of_fold_pilot(
    z: MatRef<'_, f64>,
    y: &[f64],
    d: &[f64],
    folds: &[Vec<usize>],
    fits: &[(&[f64], &[f64], f64)],
) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (rows, &(ell, gamma, tau)) in folds.iter().zip(fits) {
        let zk = select_rows(z, rows);
        let yk: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let dk: Vec<f64> = rows.iter().map(|&i| d[i]).collect();
        let ry = residuals(zk.as_ref(), &yk, ell);
        let rd = residuals(zk.as_ref(), &dk, gamma);
        let m = rows.len() as f64;
        num += dot(&ry, &rd) - m * tau * dot(ell, gamma);
        den += dot(&rd, &rd) - m * tau * dot(gamma, gamma);
    }
    let n: usize = folds.iter().map(Vec::len).sum();
    (den > MIN_JACOBIAN * n as f64).then(|| num / den)
}

/// Penalised fit with a fixed λ on a given projected matrix.
fn solve_at(sigma: &Mat<f64>, rho: &[f64], lambda: f64, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    Ok(lasso_solve_weighted(sigma, rho, lambda, weights, None)?.beta)
}

/// Pilot effect from the CV folds of one training set, refitting `γ` and `ℓ`
/// at the selected λ on each fold's training rows.
fn inner_pilot(
    plan: &CvPlan,
    z: MatRef<'_, f64>,
    train: &Dataset,
    lambda_gamma: f64,
    lambda_y: f64,
    tau: f64,
    w: Option<&[f64]>,
) -> Result<Option<f64>> {
    let n = train.len();
    let fits = plan
        .folds
        .par_iter()
        .zip(&plan.train_sigma)
        .map(|(held_out, sigma)| -> Result<(Vec<f64>, Vec<f64>)> {
            let rows = complement(n, held_out);
            let zt = select_rows(z, &rows);
            let d: Vec<f64> = rows.iter().map(|&i| train.d()[i]).collect();
            let y: Vec<f64> = rows.iter().map(|&i| train.y()[i]).collect();
            let gamma = solve_at(sigma, &cross_moment(zt.as_ref(), &d)?, lambda_gamma, w)?;
            let ell = solve_at(sigma, &cross_moment(zt.as_ref(), &y)?, lambda_y, w)?;
            Ok((ell, gamma))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(&[f64], &[f64], f64)> = fits.iter().map(|(l, g)| (l.as_slice(), g.as_slice(), tau)).collect();
    Ok(out_of_fold_pilot(z, train.y(), train.d(), &plan.folds, &refs))
}

/// Nuisances `(β, γ, τ)` from one training set, with λ chosen by K-fold CV
/// inside that set.
pub fn fit_nuisance(
    train: &Dataset,
    variant: &EstimatorVariant,
    settings: &CrossFitSettings,
    seed: u64,
) -> Result<NuisanceFit> {
    settings.validate()?;
    variant.check(train)?;
    if variant.kind == VariantKind::Oracle {
        let eta = variant.true_nuisance.clone().expect("checked above");
        return Ok(NuisanceFit { eta, lambda_gamma: 0.0, lambda_beta: 0.0, theta_pilot: None, projection_gap: 0.0 });
    }
    let tau = variant.tau_for(train)?;
    let z = design(train);
    let (proj, _) = project_design(z, tau, &settings.admm, None)?;
    let folds = random_folds(train.len(), settings.cv_folds, seed, rng::tag::CV_FOLDS)?;
    let plan = CvPlan::new(z, tau, folds, &settings.admm, settings.validation)?;
    let weights = column_weights(z, settings.standardize);
    let w = weights.as_deref();

    let rho_d = cross_moment(z, train.d())?;
    let lambda_gamma = plan.select_with(z, train.d(), &rho_d, settings.grid_size, w, |r| r)?.lambda;
    let gamma = solve_at(&proj.sigma_tilde, &rho_d, lambda_gamma, w)?;

    let rho_y = cross_moment(z, train.y())?;
    let lambda_y = plan.select_with(z, train.y(), &rho_y, settings.grid_size, w, |r| r)?.lambda;
    let ell = solve_at(&proj.sigma_tilde, &rho_y, lambda_y, w)?;

    let (beta, lambda_beta, theta_pilot) = match settings.outcome {
        OutcomeModel::ReducedForm => (ell, lambda_y, None),
        OutcomeModel::Structural => match inner_pilot(&plan, z, train, lambda_gamma, lambda_y, tau, w)? {
            None => (ell, lambda_y, None),
            Some(t) => {
                let target: Vec<f64> = train.y().iter().zip(train.d()).map(|(y, d)| y - t * d).collect();
                let rho = cross_moment(z, &target)?;
                let lambda = plan.select_with(z, &target, &rho, settings.grid_size, w, |r| r)?.lambda;
                (solve_at(&proj.sigma_tilde, &rho, lambda, w)?, lambda, Some(t))
            }
        },
    };
    Ok(NuisanceFit {
        eta: NuisanceEstimate::new(beta, gamma, tau)?,
        lambda_gamma,
        lambda_beta,
        theta_pilot,
        projection_gap: proj.projection_gap,
    })
}

/// Nuisances for every fold complement with λ chosen once per regression by
/// CV over the cross-fitting partition.
fn fit_shared_lambda(
    data: &Dataset,
    variant: &EstimatorVariant,
    folds: &[Vec<usize>],
    settings: &CrossFitSettings,
) -> Result<Vec<NuisanceFit>> {
    let n = data.len();
    let z = design(data);
    struct Side {
        tau: f64,
        rows: Vec<usize>,
        sigma: Mat<f64>,
        gap: f64,
        val_sigma: Mat<f64>,
    }
    let sides = folds
        .par_iter()
        .map(|held_out| -> Result<Side> {
            let rows = complement(n, held_out);
            let train = data.subset(&rows)?;
            let tau = variant.tau_for(&train)?;
            let zt = select_rows(z, &rows);
            let (proj, _) = project_design(zt.as_ref(), tau, &settings.admm, None)?;
            let zv = select_rows(z, held_out);
            let val_sigma = match settings.validation {
                ValidationGram::Corrected => corrected_covariance(zv.as_ref(), tau)?,
                ValidationGram::Projected => project_design(zv.as_ref(), tau, &settings.admm, None)?.0.sigma_tilde,
            };
            Ok(Side { tau, rows, sigma: proj.sigma_tilde, gap: proj.projection_gap, val_sigma })
        })
        .collect::<Result<Vec<_>>>()?;

    let (train_sigma, val_sigma): (Vec<_>, Vec<_>) = sides.iter().map(|s| (s.sigma.clone(), s.val_sigma.clone())).unzip();
    let plan = CvPlan::from_parts(n, folds.to_vec(), train_sigma, val_sigma)?;
    let weights = column_weights(z, settings.standardize);
    let w = weights.as_deref();
    let pick = |target: &[f64]| -> Result<f64> {
        let rho = cross_moment(z, target)?;
        Ok(plan.select_with(z, target, &rho, settings.grid_size, w, |r| r)?.lambda)
    };
    let lambda_gamma = pick(data.d())?;
    let lambda_y = pick(data.y())?;

    struct Partial {
        gamma: Vec<f64>,
        ell: Vec<f64>,
        rho_y: Vec<f64>,
        rho_d: Vec<f64>,
    }
    let partials = sides
        .par_iter()
        .map(|side| -> Result<Partial> {
            let zt = select_rows(z, &side.rows);
            let d: Vec<f64> = side.rows.iter().map(|&i| data.d()[i]).collect();
            let y: Vec<f64> = side.rows.iter().map(|&i| data.y()[i]).collect();
            let rho_d = cross_moment(zt.as_ref(), &d)?;
            let rho_y = cross_moment(zt.as_ref(), &y)?;
            let gamma = solve_at(&side.sigma, &rho_d, lambda_gamma, w)?;
            let ell = solve_at(&side.sigma, &rho_y, lambda_y, w)?;
            Ok(Partial { gamma, ell, rho_y, rho_d })
        })
        .collect::<Result<Vec<_>>>()?;

    let pilot = match settings.outcome {
        OutcomeModel::Structural => {
            let refs: Vec<(&[f64], &[f64], f64)> = partials
                .iter()
                .zip(&sides)
                .map(|(p, side)| (p.ell.as_slice(), p.gamma.as_slice(), side.tau))
                .collect();
            out_of_fold_pilot(z, data.y(), data.d(), folds, &refs)
        }
        OutcomeModel::ReducedForm => None,
    };
    let lambda_beta = match pilot {
        Some(t) => {
            let target: Vec<f64> = data.y().iter().zip(data.d()).map(|(y, d)| y - t * d).collect();
            Some(pick(&target)?)
        }
        None => None,
    };

    sides
        .par_iter()
        .zip(partials.into_par_iter())
        .map(|(side, part)| -> Result<NuisanceFit> {
            let (beta, lambda_beta, pilot) = match (lambda_beta, pilot) {
                (Some(lb), Some(t)) => {
                    let rho: Vec<f64> = part.rho_y.iter().zip(&part.rho_d).map(|(ry, rd)| ry - t * rd).collect();
                    (solve_at(&side.sigma, &rho, lb, w)?, lb, Some(t))
                }
                _ => (part.ell, lambda_y, None),
            };
            Ok(NuisanceFit {
                eta: NuisanceEstimate::new(beta, part.gamma, side.tau)?,
                lambda_gamma,
                lambda_beta,
                theta_pilot: pilot,
                projection_gap: side.gap,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub nuisance: NuisanceFit,
    pub size: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Held-out mean of `ψ(θ̂)`.
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub theta_hat: f64,
    pub sigma2_hat: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Pooled mean of `a`.
    pub j_hat: f64,
    pub n: usize,
    pub per_fold: Vec<FoldDiagnostics>,
}

impl EffectEstimate {
    pub fn covers(&self, theta: f64) -> bool {
        self.ci_low <= theta && theta <= self.ci_high
    }

    pub fn tau_per_fold(&self) -> Vec<f64> {
        self.per_fold.iter().map(|f| f.nuisance.eta.tau).collect()
    }
}

/// Cross-fitted estimate with a fresh random partition and default settings.
pub fn estimate_effect(data: &Dataset, variant: &EstimatorVariant, k: usize, seed: u64) -> Result<EffectEstimate> {
    let plan = make_folds(data.len(), k, seed)?;
    estimate_effect_with(data, variant, &plan, &CrossFitSettings::default())
}

/// Cross-fitted estimate over a given partition.
pub fn estimate_effect_with(
    data: &Dataset,
    variant: &EstimatorVariant,
    plan: &FoldPlan,
    settings: &CrossFitSettings,
) -> Result<EffectEstimate> {
    settings.validate()?;
    variant.check(data)?;
    let n = data.len();
    if plan.n() != n {
        return Err(invalid("folds", format!("plan covers {} rows, data has {n}", plan.n())));
    }
    if plan.k < 2 || n < 2 * plan.k {
        return Err(invalid("K", format!("need 2 <= K and N >= 2K, got K = {}, N = {n}", plan.k)));
    }
    let folds = plan.folds();
    if folds.iter().any(Vec::is_empty) {
        return Err(invalid("folds", "every fold needs at least one row"));
    }

    let fits: Vec<NuisanceFit> = match (variant.kind, settings.lambda_selection) {
        (VariantKind::Oracle, _) | (_, LambdaSelection::Nested) => folds
            .par_iter()
            .enumerate()
            .map(|(k, held_out)| {
                let train = data.subset(&complement(n, held_out))?;
                fit_nuisance(&train, variant, settings, rng::derive_seed(plan.seed, k as u64))
            })
            .collect::<Result<Vec<_>>>()?,
        (_, LambdaSelection::CrossFitFolds) => fit_shared_lambda(data, variant, &folds, settings)?,
    };

    let kind = variant.kind.score_kind();
    let parts = folds
        .iter()
        .zip(&fits)
        .map(|(rows, fit)| {
            rows.iter()
                .map(|&i| score_parts_for(kind, data.sample(i), &fit.eta))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let kf = plan.k as f64;
    let fold_mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_a: Vec<f64> = parts.iter().map(|p| fold_mean(&p.iter().map(|s| s.a).collect::<Vec<_>>())).collect();
    let mean_b: Vec<f64> = parts.iter().map(|p| fold_mean(&p.iter().map(|s| s.b).collect::<Vec<_>>())).collect();
    let j_hat = mean_a.iter().sum::<f64>() / kf;
    let b_bar = mean_b.iter().sum::<f64>() / kf;
    if !(j_hat.abs() >= MIN_JACOBIAN) {
        return Err(Error::DegenerateIdentification { j_hat });
    }
    let theta_hat = -b_bar / j_hat;
    let mean_sq = parts
        .iter()
        .map(|p| fold_mean(&p.iter().map(|s| s.at(theta_hat).powi(2)).collect::<Vec<_>>()))
        .sum::<f64>()
        / kf;
    let sigma2_hat = mean_sq / (j_hat * j_hat);
    let std_error = (sigma2_hat / n as f64).sqrt();
    let half = settings.critical_value() * std_error;

    let per_fold = fits
        .into_iter()
        .zip(&parts)
        .zip(mean_a.iter().zip(&mean_b))
        .map(|((nuisance, p), (&a, &b))| FoldDiagnostics {
            nuisance,
            size: p.len(),
            mean_a: a,
            mean_b: b,
            mean_score: a * theta_hat + b,
        })
        .collect();

    Ok(EffectEstimate {
        theta_hat,
        sigma2_hat,
        std_error,
        ci_low: theta_hat - half,
        ci_high: theta_hat + half,
        j_hat,
        n,
        per_fold,
    })
}

/// Asymptotic variance of the estimator when `X ~ N(0, I)`, `U, V ~ N(0, ξ²)`
/// and the error is `N(0, τ I)`:
///
/// `[ξ⁴ + τ(‖γ‖²ξ² + ‖β‖²ξ² + τ‖β‖²‖γ‖²) + τ²(β'γ)²] / ξ⁴`.
///
/// The last term vanishes when `β ⟂ γ`.
pub fn population_sigma2(beta: &[f64], gamma: &[f64], tau: f64, xi: f64) -> f64 {
    let xi2 = xi * xi;
    let bb = dot(beta, beta);
    let gg = dot(gamma, gamma);
    let bg = dot(beta, gamma);
    (xi2 * xi2 + tau * (gg * xi2 + bb * xi2 + tau * bb * gg) + tau * tau * bg * bg) / (xi2 * xi2)
}
