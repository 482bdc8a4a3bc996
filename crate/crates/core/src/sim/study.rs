//! Repeated generate-and-estimate runs with Table-style summaries.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, SimConfig};
use crate::crossfit::{estimate_effect_with, make_folds, EstimatorVariant, VariantKind};
use crate::error::Result;
use crate::rng;

pub const HISTOGRAM_BINS: usize = 40;

/// One successful estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub theta_hat: f64,
    pub std_error: f64,
    pub covered: bool,
    /// Mean of the per-fold `τ` used.
    pub tau_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub kind: VariantKind,
    /// `mean (θ̂ - θ₀)²`.
    pub mse: f64,
    /// `mean θ̂ - θ₀`.
    pub bias: f64,
    /// `mean (θ̂ - mean θ̂)²`, divisor `R`.
    pub variance: f64,
    pub coverage: f64,
    pub mean_std_error: f64,
    pub failures: usize,
    /// Per replication, `None` where estimation failed.
    pub draws: Vec<Option<Draw>>,
}

impl VariantSummary {
    /// `θ̂ - θ₀` over successful replications.
    pub fn errors(&self, theta0: f64) -> Vec<f64> {
        self.draws.iter().flatten().map(|d| d.theta_hat - theta0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub rows: Vec<VariantSummary>,
    /// Histogram of `θ̂ - θ₀` per variant, all on the same edges.
    pub histograms: Vec<(String, Histogram)>,
    pub failures: usize,
    /// First error message per failing `(replication, variant)`.
    pub failure_messages: Vec<String>,
    pub seed: u64,
    pub wall_time_secs: f64,
}

impl SimulationReport {
    pub fn row(&self, kind: VariantKind) -> Option<&VariantSummary> {
        self.rows.iter().find(|r| r.kind == kind)
    }
}

/// Oracle, covariance-aware, covariance-oblivious and naive; the oracle truth
/// and the known `τ` are filled in per replication.
pub fn standard_variants() -> Vec<EstimatorVariant> {
    vec![
        EstimatorVariant { kind: VariantKind::Oracle, known_tau: None, true_nuisance: None },
        EstimatorVariant { kind: VariantKind::CovarianceAware, known_tau: None, true_nuisance: None },
        EstimatorVariant::covariance_oblivious(),
        EstimatorVariant::naive(),
    ]
}

/// `bins` equal-width bins over `mean ± 4 SD` of `values`; values outside
/// the range land in the end bins.
pub fn histogram(values: &[f64], groups: &[&[f64]], bins: usize) -> Vec<Histogram> {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let half = if sd > 0.0 { 4.0 * sd } else { 0.5 };
    let (lo, hi) = (mean - half, mean + half);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    groups
        .iter()
        .map(|g| {
            let mut counts = vec![0; bins];
            for v in g.iter() {
                let b = ((v - lo) / width).floor();
                let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(bins - 1) };
                counts[b] += 1;
            }
            Histogram { edges: edges.clone(), counts }
        })
        .collect()
}

fn summarize(variant: &EstimatorVariant, draws: Vec<Option<Draw>>, theta0: f64) -> VariantSummary {
    let ok: Vec<&Draw> = draws.iter().flatten().collect();
    let r = ok.len() as f64;
    let failures = draws.len() - ok.len();
    let (mse, bias, variance, coverage, mean_se) = if ok.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mean = ok.iter().map(|d| d.theta_hat).sum::<f64>() / r;
        let variance = ok.iter().map(|d| (d.theta_hat - mean).powi(2)).sum::<f64>() / r;
        let mse = ok.iter().map(|d| (d.theta_hat - theta0).powi(2)).sum::<f64>() / r;
        let coverage = ok.iter().filter(|d| d.covered).count() as f64 / r;
        let mean_se = ok.iter().map(|d| d.std_error).sum::<f64>() / r;
        (mse, mean - theta0, variance, coverage, mean_se)
    };
    VariantSummary {
        variant: variant.label().to_string(),
        kind: variant.kind,
        mse,
        bias,
        variance,
        coverage,
        mean_std_error: mean_se,
        failures,
        draws,
    }
}

/// Runs every variant on every replication. Replications run in parallel;
/// results are assembled in replication order, so the report does not depend
/// on the thread count (apart from `wall_time_secs`).
pub fn run_study(config: &SimConfig, variants: &[EstimatorVariant]) -> Result<SimulationReport> {
    config.validate()?;
    let start = Instant::now();
    let settings = config.settings();

    let per_rep: Vec<Vec<std::result::Result<Draw, String>>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let (data, truth) = match generate(config, rep) {
                Ok(v) => v,
                Err(e) => return variants.iter().map(|_| Err(e.to_string())).collect(),
            };
            let plan = match make_folds(data.len(), config.k, rng::derive_seed(config.seed, rep)) {
                Ok(p) => p,
                Err(e) => return variants.iter().map(|_| Err(e.to_string())).collect(),
            };
            variants
                .iter()
                .map(|v| {
                    let mut v = v.clone();
                    match v.kind {
                        VariantKind::Oracle if v.true_nuisance.is_none() => v.true_nuisance = Some(truth.nuisance()),
                        VariantKind::CovarianceAware if v.known_tau.is_none() => v.known_tau = Some(truth.tau0),
                        _ => {}
                    }
                    estimate_effect_with(&data, &v, &plan, &settings)
                        .map(|est| {
                            let taus = est.tau_per_fold();
                            Draw {
                                theta_hat: est.theta_hat,
                                std_error: est.std_error,
                                covered: est.covers(truth.theta0),
                                tau_used: taus.iter().sum::<f64>() / taus.len() as f64,
                            }
                        })
                        .map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let mut failure_messages = Vec::new();
    for (rep, row) in per_rep.iter().enumerate() {
        for (v, res) in variants.iter().zip(row) {
            if let Err(msg) = res {
                failure_messages.push(format!("replication {rep}, {}: {msg}", v.label()));
            }
        }
    }
    let rows: Vec<VariantSummary> = variants
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let draws = per_rep.iter().map(|row| row[j].as_ref().ok().copied()).collect();
            summarize(v, draws, config.theta0)
        })
        .collect();

    let errors: Vec<Vec<f64>> = rows.iter().map(|r| r.errors(config.theta0)).collect();
    let pooled: Vec<f64> = errors.concat();
    let groups: Vec<&[f64]> = errors.iter().map(Vec::as_slice).collect();
    let histograms = rows
        .iter()
        .map(|r| r.variant.clone())
        .zip(histogram(&pooled, &groups, HISTOGRAM_BINS))
        .collect();

    Ok(SimulationReport {
        config: config.clone(),
        failures: rows.iter().map(|r| r.failures).sum(),
        rows,
        histograms,
        failure_messages,
        seed: config.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
