//! `Y = Dθ + X'β + U`, `D = X'γ + V`, observed `z₁ = X + A₁`, `z₂ = X + A₂`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::crossfit::CrossFitSettings;
use crate::error::{invalid, Result};
use crate::model::{Dataset, NuisanceEstimate};
use crate::rng::{self, tag};

/// How the supports of `β` and `γ` relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportDesign {
    /// Drawn independently.
    #[default]
    Independent,
    /// One support for both.
    Shared,
    /// Non-overlapping, so `β'γ = 0`.
    Disjoint,
    /// One run of `s` adjacent columns at a random offset, shared by both.
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateDesign {
    /// `X ~ N(0, I)`.
    #[default]
    Identity,
    /// `Cov(X_j, X_k) = ρ^|j-k|`.
    Toeplitz { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub theta0: f64,
    pub tau0: f64,
    pub xi: f64,
    pub coef_low: f64,
    pub coef_high: f64,
    pub replications: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub cv_folds: usize,
    pub seed: u64,
    pub support: SupportDesign,
    /// Random signs on the nonzero coefficients.
    pub random_sign: bool,
    /// Multiplies every outcome coefficient after drawing.
    pub beta_scale: f64,
    pub covariates: CovariateDesign,
    pub estimator: CrossFitSettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            p: 750,
            s: 50,
            theta0: 10.0,
            tau0: 1.0,
            xi: 1.0,
            coef_low: 0.5,
            coef_high: 1.5,
            replications: 100,
            k: 5,
            cv_folds: 5,
            seed: 42,
            support: SupportDesign::Independent,
            random_sign: true,
            beta_scale: 1.0,
            covariates: CovariateDesign::Identity,
            estimator: CrossFitSettings::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(invalid("p", "must be positive"));
        }
        if self.n < 2 {
            return Err(invalid("N", "need at least 2 samples"));
        }
        if self.s > self.p {
            return Err(invalid("s", format!("{} nonzeros do not fit in p = {}", self.s, self.p)));
        }
        if self.support == SupportDesign::Disjoint && 2 * self.s > self.p {
            return Err(invalid("s", "disjoint supports need 2s <= p"));
        }
        if !self.theta0.is_finite() {
            return Err(invalid("theta0", "must be finite"));
        }
        if !(self.tau0 >= 0.0 && self.tau0.is_finite()) {
            return Err(invalid("tau0", "must be finite and >= 0"));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(invalid("xi", "must be positive"));
        }
        if !(self.coef_low.is_finite() && self.coef_high.is_finite() && self.coef_low <= self.coef_high) {
            return Err(invalid("coef_low", "need finite coef_low <= coef_high"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if self.k < 2 || self.n < 2 * self.k {
            return Err(invalid("K", "need K >= 2 and N >= 2K"));
        }
        if self.cv_folds < 2 {
            return Err(invalid("cv_folds", "need at least 2 folds"));
        }
        if let CovariateDesign::Toeplitz { rho } = self.covariates {
            if !(rho.abs() < 1.0) {
                return Err(invalid("covariates", "Toeplitz rho must lie in (-1, 1)"));
            }
        }
        self.estimator.validate()
    }

    /// Estimator settings with this config's CV fold count.
    pub fn settings(&self) -> CrossFitSettings {
        CrossFitSettings { cv_folds: self.cv_folds, ..self.estimator }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub beta0: Vec<f64>,
    pub gamma0: Vec<f64>,
    pub theta0: f64,
    pub tau0: f64,
    pub xi: f64,
}

impl SimTruth {
    pub fn nuisance(&self) -> NuisanceEstimate {
        NuisanceEstimate {
            beta: self.beta0.clone(),
            gamma: self.gamma0.clone(),
            tau: self.tau0,
        }
    }
}

fn coefficients<R: Rng>(rng: &mut R, p: usize, support: &[usize], cfg: &SimConfig) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for &j in support {
        let magnitude = rng.gen_range(cfg.coef_low..=cfg.coef_high);
        let sign = if cfg.random_sign && rng.gen::<bool>() { -1.0 } else { 1.0 };
        out[j] = sign * magnitude;
    }
    out
}

fn truth(cfg: &SimConfig, rep: u64) -> SimTruth {
    let mut rng = rng::stream(cfg.seed, rep, tag::TRUTH);
    let (b_support, g_support) = match cfg.support {
        SupportDesign::Independent => (
            index::sample(&mut rng, cfg.p, cfg.s).into_vec(),
            index::sample(&mut rng, cfg.p, cfg.s).into_vec(),
        ),
        SupportDesign::Shared => {
            let s = index::sample(&mut rng, cfg.p, cfg.s).into_vec();
            (s.clone(), s)
        }
        SupportDesign::Disjoint => {
            let all = index::sample(&mut rng, cfg.p, 2 * cfg.s).into_vec();
            (all[..cfg.s].to_vec(), all[cfg.s..].to_vec())
        }
        SupportDesign::Block => {
            let start = rng.gen_range(0..=cfg.p - cfg.s);
            let s: Vec<usize> = (start..start + cfg.s).collect();
            (s.clone(), s)
        }
    };
    let mut beta0 = coefficients(&mut rng, cfg.p, &b_support, cfg);
    beta0.iter_mut().for_each(|b| *b *= cfg.beta_scale);
    let gamma0 = coefficients(&mut rng, cfg.p, &g_support, cfg);
    SimTruth { beta0, gamma0, theta0: cfg.theta0, tau0: cfg.tau0, xi: cfg.xi }
}

fn normals(seed: u64, rep: u64, purpose: u64, count: usize, sd: f64) -> Vec<f64> {
    let mut rng = rng::stream(seed, rep, purpose);
    (0..count)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            sd * g
        })
        .collect()
}

/// One replication's data and truth; deterministic in `(config.seed, rep)`.
pub fn generate(config: &SimConfig, rep: u64) -> Result<(Dataset, SimTruth)> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    let truth = truth(config, rep);

    let mut x = normals(config.seed, rep, tag::COVARIATES, n * p, 1.0);
    if let CovariateDesign::Toeplitz { rho } = config.covariates {
        let scale = (1.0 - rho * rho).sqrt();
        for row in x.chunks_exact_mut(p) {
            for j in 1..p {
                row[j] = rho * row[j - 1] + scale * row[j];
            }
        }
    }
    let u = normals(config.seed, rep, tag::OUTCOME_NOISE, n, config.xi);
    let v = normals(config.seed, rep, tag::TREATMENT_NOISE, n, config.xi);

    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for (i, row) in x.chunks_exact(p).enumerate() {
        let xg: f64 = row.iter().zip(&truth.gamma0).map(|(a, b)| a * b).sum();
        let xb: f64 = row.iter().zip(&truth.beta0).map(|(a, b)| a * b).sum();
        let di = xg + v[i];
        d.push(di);
        y.push(di * config.theta0 + xb + u[i]);
    }

    let (z1, z2) = if config.tau0 == 0.0 {
        (x.clone(), x)
    } else {
        let sd = config.tau0.sqrt();
        let a1 = normals(config.seed, rep, tag::ERROR_FIRST, n * p, sd);
        let a2 = normals(config.seed, rep, tag::ERROR_SECOND, n * p, sd);
        let z1 = x.iter().zip(&a1).map(|(a, b)| a + b).collect();
        let z2 = x.iter().zip(&a2).map(|(a, b)| a + b).collect();
        (z1, z2)
    };
    let data = Dataset::new(y, d, z1, Some(z2), p)?;
    Ok((data, truth))
}
