//! Nearest positive semidefinite matrix in the elementwise max norm.
//!
//! Solves `min_{Σ ⪰ 0} ‖M - Σ‖_max` with ADMM on the splitting
//! `I_PSD(Σ) + ‖M - Θ‖_max` subject to `Σ = Θ`:
//!
//! * `Σ ← Π_PSD(Θ - U)` by eigenvalue clipping,
//! * `Θ ← M + prox_{‖·‖_max/μ}(Σ + U - M)`, where the prox of the max norm is
//!   obtained by Moreau decomposition from a projection onto the ℓ1 ball of
//!   radius `1/μ`,
//! * `U ← U + Σ - Θ`.
//!
//! Every `Σ` iterate is exactly PSD (up to eigensolver roundoff), so the
//! routine keeps the iterate with the smallest gap. The first iterate from a
//! cold start is the eigenvalue-clipping projection, hence the returned gap
//! never exceeds the clipping baseline.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, asymmetry, check_finite, check_square, max_abs_diff, SymEigen};

/// Inputs whose smallest eigenvalue is at least `-PSD_SLACK · max(1, ‖M‖₂)`
/// are returned unchanged.
const PSD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Augmented-Lagrangian penalty `μ`.
    pub penalty: f64,
    pub max_iterations: usize,
    /// Bound on the primal residual `‖Σ - Θ‖_max` and the dual residual
    /// `μ ‖Θ_k - Θ_{k-1}‖_max`.
    pub tolerance: f64,
    /// Over-relaxation factor in `(0, 2)`; `1.0` is plain ADMM.
    pub relaxation: f64,
    /// Residual balancing of `μ`.
    pub adaptive_penalty: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            max_iterations: 1000,
            tolerance: 1e-6,
            relaxation: 1.0,
            adaptive_penalty: false,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(invalid("penalty", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(invalid("relaxation", "must lie in (0, 2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionStatus {
    /// Input was already PSD and is returned as is.
    AlreadyPsd,
    Converged,
    /// Iteration budget exhausted; the best PSD iterate is returned.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PsdProjection {
    pub matrix: Mat<f64>,
    /// `‖M - matrix‖_max`.
    pub gap: f64,
    /// Gap of the eigenvalue-clipping projection of the same input.
    pub clip_gap: f64,
    pub iterations: usize,
    pub status: ProjectionStatus,
}

impl PsdProjection {
    pub fn converged(&self) -> bool {
        self.status != ProjectionStatus::MaxIterations
    }
}

/// ADMM iterate that can seed the projection of a nearby matrix.
#[derive(Debug, Clone)]
pub struct AdmmState {
    theta: Mat<f64>,
    dual: Mat<f64>,
    penalty: f64,
}

impl AdmmState {
    /// Shifts the stored iterate by `delta · I`, matching a change of the
    /// input from `M` to `M + delta · I`.
    pub fn shift_diagonal(&mut self, delta: f64) {
        for j in 0..self.theta.nrows() {
            self.theta[(j, j)] += delta;
        }
    }
}

/// Projection onto `{x : ‖x‖₁ ≤ radius}` of the full `p²` vector of a
/// symmetric matrix, returned as the soft-threshold level `θ` (zero when the
/// vector is already inside the ball).
///
/// Each off-diagonal value appears twice in the vectorised matrix, so the
/// sort runs over the lower triangle with weight two off the diagonal.
pub fn l1_ball_threshold(m: MatRef<'_, f64>, radius: f64, buf: &mut Vec<(f64, f64)>) -> f64 {
    let n = m.nrows();
    buf.clear();
    let mut total = 0.0;
    for j in 0..n {
        for i in j..n {
            let a = m[(i, j)].abs();
            let w = if i == j { 1.0 } else { 2.0 };
            total += w * a;
            if a > 0.0 {
                buf.push((a, w));
            }
        }
    }
    if total <= radius {
        return 0.0;
    }
    buf.sort_unstable_by(|x, y| y.0.total_cmp(&x.0));
    let mut cum = 0.0;
    let mut weight = 0.0;
    let mut threshold = 0.0;
    for &(a, w) in buf.iter() {
        let trial = (cum + w * a - radius) / (weight + w);
        if a > trial {
            cum += w * a;
            weight += w;
            threshold = trial;
        } else {
            break;
        }
    }
    threshold.max(0.0)
}

/// Plain vector version: Euclidean projection of `v` onto the ℓ1 ball.
pub fn project_l1_ball(v: &mut [f64], radius: f64) {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= radius {
        return;
    }
    let mut sorted: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut threshold = 0.0;
    for (k, &a) in sorted.iter().enumerate() {
        let trial = (cum + a - radius) / (k + 1) as f64;
        if a > trial {
            cum += a;
            threshold = trial;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - threshold).max(0.0);
    }
}

fn validate_input(m: MatRef<'_, f64>) -> Result<()> {
    check_square(m)?;
    check_finite(m, "matrix")?;
    let asym = asymmetry(m);
    let scale = 1f64.max(max_abs(m));
    if asym > 1e-8 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max(m[(i, j)].abs());
        }
    }
    worst
}

fn is_psd(eig: &SymEigen) -> bool {
    let lo = eig.values.first().copied().unwrap_or(0.0);
    let hi = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    lo >= -PSD_SLACK * hi.max(1.0)
}

/// Nearest PSD matrix in max norm, cold start.
pub fn psd_project(m: MatRef<'_, f64>, config: &AdmmConfig) -> Result<PsdProjection> {
    psd_project_warm(m, config, None).map(|(proj, _)| proj)
}

/// Nearest PSD matrix in max norm, optionally seeded with a previous ADMM
/// state. Returns the final state for further warm starts (`None` when the
/// input was already PSD).
pub fn psd_project_warm(
    m: MatRef<'_, f64>,
    config: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<(PsdProjection, Option<AdmmState>)> {
    config.validate()?;
    validate_input(m)?;
    let n = m.nrows();
    let target = linalg::symmetrize(m);
    let eig = linalg::sym_eigen(target.as_ref())?;
    if is_psd(&eig) {
        return Ok((
            PsdProjection {
                matrix: target,
                gap: 0.0,
                clip_gap: 0.0,
                iterations: 0,
                status: ProjectionStatus::AlreadyPsd,
            },
            None,
        ));
    }

    let clipped = linalg::clip_from_eigen(target.as_ref(), &eig);
    let clip_gap = max_abs_diff(clipped.as_ref(), target.as_ref());
    let mut best = clipped.clone();
    let mut best_gap = clip_gap;

    let (mut theta, mut dual, mut penalty, mut first) = match warm {
        Some(state) if state.theta.nrows() == n => {
            (state.theta.clone(), state.dual.clone(), state.penalty, None)
        }
        _ => (target.clone(), Mat::zeros(n, n), config.penalty, Some(clipped)),
    };

    let alpha = config.relaxation;
    let mut buf = Vec::with_capacity(n * (n + 1) / 2);
    let mut resid = Mat::<f64>::zeros(n, n);
    let mut iterations = 0;
    let mut status = ProjectionStatus::MaxIterations;

    for it in 0..config.max_iterations {
        iterations = it + 1;
        let sigma = match first.take() {
            Some(s) => s,
            None => {
                let shifted = &theta - &dual;
                let e = linalg::sym_eigen(shifted.as_ref())?;
                linalg::clip_from_eigen(shifted.as_ref(), &e)
            }
        };
        let gap = max_abs_diff(sigma.as_ref(), target.as_ref());
        if gap < best_gap {
            best_gap = gap;
            best.clone_from(&sigma);
        }

        for j in 0..n {
            for i in 0..n {
                let relaxed = alpha * sigma[(i, j)] + (1.0 - alpha) * theta[(i, j)];
                resid[(i, j)] = relaxed + dual[(i, j)] - target[(i, j)];
            }
        }
        let level = l1_ball_threshold(resid.as_ref(), 1.0 / penalty, &mut buf);

        let mut primal = 0.0f64;
        let mut change = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let v = resid[(i, j)];
                let clamped = if level > 0.0 { v.clamp(-level, level) } else { 0.0 };
                let new_theta = target[(i, j)] + clamped;
                let relaxed = alpha * sigma[(i, j)] + (1.0 - alpha) * theta[(i, j)];
                change = change.max((new_theta - theta[(i, j)]).abs());
                primal = primal.max((sigma[(i, j)] - new_theta).abs());
                dual[(i, j)] += relaxed - new_theta;
                theta[(i, j)] = new_theta;
            }
        }
        let dual_resid = penalty * change;
        if primal <= config.tolerance && dual_resid <= config.tolerance {
            status = ProjectionStatus::Converged;
            break;
        }
        if config.adaptive_penalty {
            let factor = if primal > 10.0 * dual_resid {
                2.0
            } else if dual_resid > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                penalty *= factor;
                for j in 0..n {
                    for i in 0..n {
                        dual[(i, j)] /= factor;
                    }
                }
            }
        }
    }

    Ok((
        PsdProjection {
            matrix: best,
            gap: best_gap,
            clip_gap,
            iterations,
            status,
        },
        Some(AdmmState { theta, dual, penalty }),
    ))
}
