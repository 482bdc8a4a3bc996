//! Coordinate descent for `½ β'Σβ - ρ'β + λ‖β‖₁` with PSD `Σ`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::gram::CorrectedGram;
use crate::error::{invalid, Error, Result};

pub const COORDINATE_TOLERANCE: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub lambda: f64,
    /// Coordinate sweeps used (full and active-set sweeps alike).
    pub iterations: usize,
    /// Largest violation of the subgradient optimality conditions.
    pub kkt_residual: f64,
    pub converged: bool,
}

impl LassoFit {
    pub fn nonzeros(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// `½ β'Σβ - ρ'β + λ‖β‖₁`.
pub fn objective(sigma: &Mat<f64>, rho: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let q = crate::linalg::mat_vec(sigma.as_ref(), beta);
    objective_from_product(&q, rho, beta, lambda, None)
}

fn objective_from_product(q: &[f64], rho: &[f64], beta: &[f64], lambda: f64, weights: Option<&[f64]>) -> f64 {
    let mut total = 0.0;
    for j in 0..beta.len() {
        let level = weights.map_or(lambda, |w| lambda * w[j]);
        total += beta[j] * (0.5 * q[j] - rho[j]) + level * beta[j].abs();
    }
    total
}

/// Largest subgradient violation: `(|g_j| - λ)₊` on zero coordinates and
/// `|g_j + λ sign β_j|` on active ones, with `g = Σβ - ρ`.
pub fn kkt_residual(sigma: &Mat<f64>, rho: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let q = crate::linalg::mat_vec(sigma.as_ref(), beta);
    kkt_from_product(&q, rho, beta, lambda, None)
}

fn kkt_from_product(q: &[f64], rho: &[f64], beta: &[f64], lambda: f64, weights: Option<&[f64]>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..beta.len() {
        let lambda = weights.map_or(lambda, |w| lambda * w[j]);
        let g = q[j] - rho[j];
        let v = if beta[j] == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g + lambda * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

struct Solver<'a> {
    sigma: &'a Mat<f64>,
    rho: &'a [f64],
    weights: Option<&'a [f64]>,
    beta: Vec<f64>,
    /// `Σβ`, updated incrementally.
    q: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let s_jj = self.sigma[(j, j)];
        let old = self.beta[j];
        let level = self.weights.map_or(lambda, |w| lambda * w[j]);
        let new = if s_jj <= 0.0 {
            0.0
        } else {
            let partial = self.rho[j] - (self.q[j] - s_jj * old);
            soft_threshold(partial, level) / s_jj
        };
        let delta = new - old;
        if delta != 0.0 {
            self.beta[j] = new;
            let col = self.sigma.col_as_slice(j);
            for (qi, &s) in self.q.iter_mut().zip(col) {
                *qi += s * delta;
            }
        }
        delta.abs()
    }

    fn sweep<I: Iterator<Item = usize>>(&mut self, coords: I, lambda: f64) -> f64 {
        let mut change = 0.0f64;
        for j in coords {
            change = change.max(self.update(j, lambda));
        }
        change
    }

    /// Full cyclic sweeps, interleaved with sweeps over the current nonzero
    /// coordinates until they settle. Stops once a full sweep moves no
    /// coordinate by more than the tolerance.
    fn run(&mut self, lambda: f64) -> (usize, bool) {
        let p = self.beta.len();
        let mut sweeps = 0;
        let mut last_obj = objective_from_product(&self.q, self.rho, &self.beta, lambda, self.weights);
        while sweeps < MAX_SWEEPS {
            let change = self.sweep(0..p, lambda);
            sweeps += 1;
            self.check_descent(&mut last_obj, lambda);
            if change <= COORDINATE_TOLERANCE {
                return (sweeps, true);
            }
            let active: Vec<usize> = (0..p).filter(|&j| self.beta[j] != 0.0).collect();
            while sweeps < MAX_SWEEPS {
                let change = self.sweep(active.iter().copied(), lambda);
                sweeps += 1;
                self.check_descent(&mut last_obj, lambda);
                if change <= COORDINATE_TOLERANCE {
                    break;
                }
            }
        }
        (sweeps, false)
    }

    #[inline]
    fn check_descent(&self, last: &mut f64, lambda: f64) {
        if cfg!(debug_assertions) {
            let obj = objective_from_product(&self.q, self.rho, &self.beta, lambda, self.weights);
            debug_assert!(
                obj <= *last + 1e-9 * (1.0 + last.abs()),
                "coordinate descent objective increased: {last} -> {obj}"
            );
            *last = obj;
        }
    }
}

fn check_problem(sigma: &Mat<f64>, rho: &[f64]) -> Result<()> {
    let p = rho.len();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: sigma.nrows(),
        });
    }
    Ok(())
}

fn check_weights(weights: Option<&[f64]>, p: usize) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != p {
            return Err(Error::DimensionMismatch { expected: p, actual: w.len() });
        }
        if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("weights", "must be positive and finite"));
        }
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    Ok(())
}

/// Solves the problem for an explicit `(Σ, ρ)`, optionally from a starting
/// point.
pub fn lasso_solve_with(
    sigma: &Mat<f64>,
    rho: &[f64],
    lambda: f64,
    start: Option<&[f64]>,
) -> Result<LassoFit> {
    lasso_solve_weighted(sigma, rho, lambda, None, start)
}

/// Penalty `λ Σ w_j |β_j|`. Weights must be positive.
pub fn lasso_solve_weighted(
    sigma: &Mat<f64>,
    rho: &[f64],
    lambda: f64,
    weights: Option<&[f64]>,
    start: Option<&[f64]>,
) -> Result<LassoFit> {
    check_problem(sigma, rho)?;
    let p = rho.len();
    // zero cross-moment: CV reports λ = 0 and the zero fit is optimal
    if lambda == 0.0 && rho.iter().all(|r| *r == 0.0) && start.map_or(true, |b| b.iter().all(|v| *v == 0.0)) {
        return Ok(LassoFit { beta: vec![0.0; p], lambda, iterations: 0, kkt_residual: 0.0, converged: true });
    }
    check_lambda(lambda)?;
    check_weights(weights, rho.len())?;
    let beta = match start {
        Some(b) if b.len() == p => b.to_vec(),
        Some(b) => {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: b.len(),
            })
        }
        None => vec![0.0; p],
    };
    let q = crate::linalg::mat_vec(sigma.as_ref(), &beta);
    let mut solver = Solver { sigma, rho, weights, beta, q };
    let (iterations, converged) = solver.run(lambda);
    let kkt = kkt_from_product(&solver.q, rho, &solver.beta, lambda, weights);
    Ok(LassoFit {
        beta: solver.beta,
        lambda,
        iterations,
        kkt_residual: kkt,
        converged,
    })
}

pub const PATH_SATURATION: f64 = 1e-5;

pub fn lasso_solve(gram: &CorrectedGram, lambda: f64) -> Result<LassoFit> {
    lasso_solve_with(&gram.sigma_tilde, &gram.rho, lambda, None)
}

/// Solutions along `lambdas` (usually decreasing), each warm started from
/// the previous one.
///
/// The path ends after the first fit that does not converge. With a singular
/// `Σ` the objective is unbounded below once λ is small enough, and every
/// smaller λ would only burn the sweep budget on a diverging iterate.
/// It also ends once the fit saturates: when the quadratic part
/// `½ β'Σβ - ρ'β` changes by less than `PATH_SATURATION` in relative terms
/// between consecutive λ.
pub fn lasso_path(sigma: &Mat<f64>, rho: &[f64], lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    lasso_path_weighted(sigma, rho, lambdas, None)
}

pub fn lasso_path_weighted(
    sigma: &Mat<f64>,
    rho: &[f64],
    lambdas: &[f64],
    weights: Option<&[f64]>,
) -> Result<Vec<LassoFit>> {
    check_problem(sigma, rho)?;
    let mut fits: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
    let mut previous = 0.0;
    for &lambda in lambdas {
        let start = fits.last().map(|f| f.beta.as_slice());
        let fit = lasso_solve_weighted(sigma, rho, lambda, weights, start)?;
        let q = crate::linalg::mat_vec(sigma.as_ref(), &fit.beta);
        let current = objective_from_product(&q, rho, &fit.beta, 0.0, None);
        let saturated = current != 0.0 && (current - previous).abs() < PATH_SATURATION * current.abs();
        previous = current;
        let stop = !fit.converged || saturated;
        fits.push(fit);
        if stop {
            break;
        }
    }
    Ok(fits)
}
