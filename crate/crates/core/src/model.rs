//! Observations, nuisance parameters and the two moment scores.
//!
//! The naive score is `(y - dθ - z'β)(d - z'γ)`. The corrected score subtracts
//! `τ β'γ`, which cancels the `E[(A'β)(A'γ)] = τ β'γ` term that isotropic
//! measurement error adds to the product of the two residuals. Both scores are
//! linear in `θ`, so `ψ = a θ + b` with `a = d (z'γ - d)`.
//!
//! Only the first replicate `z1` enters the scores; `z2` is reserved for
//! estimating `τ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::dot;

/// One unit's observation, owned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSample {
    pub y: f64,
    pub d: f64,
    pub z1: Vec<f64>,
    pub z2: Option<Vec<f64>>,
}

impl ObservedSample {
    pub fn as_sample(&self) -> Sample<'_> {
        Sample {
            y: self.y,
            d: self.d,
            z1: &self.z1,
            z2: self.z2.as_deref(),
        }
    }
}

/// Borrowed view of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub y: f64,
    pub d: f64,
    pub z1: &'a [f64],
    pub z2: Option<&'a [f64]>,
}

/// A sample of `N >= 2` observations sharing covariate dimension `p`.
///
/// Covariates are stored row-major so that each observation's replicate is a
/// contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<f64>,
    z1: Vec<f64>,
    z2: Option<Vec<f64>>,
    p: usize,
}

impl Dataset {
    /// Builds a dataset from row-major covariate blocks of shape `N x p`.
    pub fn new(
        y: Vec<f64>,
        d: Vec<f64>,
        z1: Vec<f64>,
        z2: Option<Vec<f64>>,
        p: usize,
    ) -> Result<Self> {
        let n = y.len();
        if p == 0 {
            return Err(invalid("p", "covariate dimension must be at least 1"));
        }
        if n < 2 {
            return Err(invalid("N", format!("need at least 2 samples, got {n}")));
        }
        if d.len() != n {
            return Err(invalid("d", format!("expected {n} entries, got {}", d.len())));
        }
        if z1.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: z1.len() / n,
            });
        }
        if let Some(z2) = &z2 {
            if z2.len() != n * p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: z2.len() / n,
                });
            }
        }
        if y.iter().chain(&d).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "outcome or treatment" });
        }
        if z1.iter().chain(z2.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "covariates" });
        }
        Ok(Self { y, d, z1, z2, p })
    }

    /// Builds a dataset from owned samples. Either every sample carries `z2`
    /// or none does.
    pub fn from_samples(samples: &[ObservedSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| invalid("N", "need at least 2 samples, got 0"))?;
        let p = first.z1.len();
        let with_reps = first.z2.is_some();
        let mut y = Vec::with_capacity(samples.len());
        let mut d = Vec::with_capacity(samples.len());
        let mut z1 = Vec::with_capacity(samples.len() * p);
        let mut z2 = with_reps.then(|| Vec::with_capacity(samples.len() * p));
        for s in samples {
            if s.z1.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: s.z1.len(),
                });
            }
            y.push(s.y);
            d.push(s.d);
            z1.extend_from_slice(&s.z1);
            match (&mut z2, &s.z2) {
                (Some(acc), Some(rep)) => {
                    if rep.len() != p {
                        return Err(Error::DimensionMismatch {
                            expected: p,
                            actual: rep.len(),
                        });
                    }
                    acc.extend_from_slice(rep);
                }
                (None, None) => {}
                _ => {
                    return Err(invalid(
                        "z2",
                        "replicates must be present for all samples or for none",
                    ))
                }
            }
        }
        Self::new(y, d, z1, z2, p)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn has_replicates(&self) -> bool {
        self.z2.is_some()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Row-major `N x p` first replicate.
    pub fn z1(&self) -> &[f64] {
        &self.z1
    }

    /// Row-major `N x p` second replicate, when present.
    pub fn z2(&self) -> Option<&[f64]> {
        self.z2.as_deref()
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        let p = self.p;
        Sample {
            y: self.y[i],
            d: self.d[i],
            z1: &self.z1[i * p..(i + 1) * p],
            z2: self.z2.as_ref().map(|z| &z[i * p..(i + 1) * p]),
        }
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = Sample<'_>> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    pub fn to_samples(&self) -> Vec<ObservedSample> {
        self.samples()
            .map(|s| ObservedSample {
                y: s.y,
                d: s.d,
                z1: s.z1.to_vec(),
                z2: s.z2.map(<[f64]>::to_vec),
            })
            .collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let p = self.p;
        let mut z1 = Vec::with_capacity(indices.len() * p);
        let mut z2 = self.z2.as_ref().map(|_| Vec::with_capacity(indices.len() * p));
        for &i in indices {
            z1.extend_from_slice(&self.z1[i * p..(i + 1) * p]);
            if let (Some(acc), Some(src)) = (&mut z2, &self.z2) {
                acc.extend_from_slice(&src[i * p..(i + 1) * p]);
            }
        }
        Self::new(
            indices.iter().map(|&i| self.y[i]).collect(),
            indices.iter().map(|&i| self.d[i]).collect(),
            z1,
            z2,
            p,
        )
    }

    /// Same dataset with the replicate columns dropped.
    pub fn without_replicates(&self) -> Self {
        Self {
            z2: None,
            ..self.clone()
        }
    }
}

/// Nuisance parameters `(β, γ, τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceEstimate {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau: f64,
}

impl NuisanceEstimate {
    pub fn new(beta: Vec<f64>, gamma: Vec<f64>, tau: f64) -> Result<Self> {
        let eta = Self { beta, gamma, tau };
        eta.validate()?;
        Ok(eta)
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            beta: vec![0.0; p],
            gamma: vec![0.0; p],
            tau: 0.0,
        }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.gamma.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                actual: self.gamma.len(),
            });
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", format!("must be finite and >= 0, got {}", self.tau)));
        }
        if self.beta.iter().chain(&self.gamma).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "nuisance coefficients" });
        }
        Ok(())
    }
}

/// Linear decomposition `ψ(θ) = a θ + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParts {
    pub a: f64,
    pub b: f64,
}

impl ScoreParts {
    pub fn at(&self, theta: f64) -> f64 {
        self.a * theta + self.b
    }
}

/// Which moment function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    /// `(y - dθ - z'β)(d - z'γ)`, ignores `τ`.
    Naive,
    /// Naive score minus `τ β'γ`.
    Corrected,
}

fn check_dims(sample: &Sample<'_>, eta: &NuisanceEstimate) -> Result<()> {
    let p = sample.z1.len();
    for len in [eta.beta.len(), eta.gamma.len()] {
        if len != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: len,
            });
        }
    }
    Ok(())
}

pub fn score_naive(sample: Sample<'_>, theta: f64, eta: &NuisanceEstimate) -> Result<f64> {
    check_dims(&sample, eta)?;
    let outcome_resid = sample.y - sample.d * theta - dot(sample.z1, &eta.beta);
    let treat_resid = sample.d - dot(sample.z1, &eta.gamma);
    Ok(outcome_resid * treat_resid)
}

pub fn score_corrected(sample: Sample<'_>, theta: f64, eta: &NuisanceEstimate) -> Result<f64> {
    let naive = score_naive(sample, theta, eta)?;
    Ok(naive - eta.tau * dot(&eta.beta, &eta.gamma))
}

/// `(a, b)` of the corrected score.
pub fn score_parts(sample: Sample<'_>, eta: &NuisanceEstimate) -> Result<ScoreParts> {
    score_parts_for(ScoreKind::Corrected, sample, eta)
}

/// `(a, b)` of either score; the naive score drops the `τ β'γ` term from `b`.
pub fn score_parts_for(
    kind: ScoreKind,
    sample: Sample<'_>,
    eta: &NuisanceEstimate,
) -> Result<ScoreParts> {
    check_dims(&sample, eta)?;
    let fitted_d = dot(sample.z1, &eta.gamma);
    let treat_resid = sample.d - fitted_d;
    let a = sample.d * (fitted_d - sample.d);
    let mut b = (sample.y - dot(sample.z1, &eta.beta)) * treat_resid;
    if kind == ScoreKind::Corrected {
        b -= eta.tau * dot(&eta.beta, &eta.gamma);
    }
    Ok(ScoreParts { a, b })
}

pub fn score(kind: ScoreKind, sample: Sample<'_>, theta: f64, eta: &NuisanceEstimate) -> Result<f64> {
    match kind {
        ScoreKind::Naive => score_naive(sample, theta, eta),
        ScoreKind::Corrected => score_corrected(sample, theta, eta),
    }
}

/// Sample mean and standard deviation (divisor `N - 1`) of a score over a
/// dataset.
pub fn score_moments(
    kind: ScoreKind,
    data: &Dataset,
    theta: f64,
    eta: &NuisanceEstimate,
) -> Result<(f64, f64)> {
    let values = data
        .samples()
        .map(|s| score(kind, s, theta, eta))
        .collect::<Result<Vec<_>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}
