//! Treatment-effect estimation in sparse high-dimensional linear models whose
//! covariates are observed with additive isotropic measurement error.
//!
//! The estimator cross-fits CoCoLASSO nuisance regressions and solves a
//! measurement-error-corrected orthogonal moment for the effect. The error
//! variance can be supplied or estimated from two replicate measurements.

pub mod cocolasso;
pub mod crossfit;
pub mod error;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod tau;

pub use faer;

pub use error::{Error, Result};
pub use model::{
    score, score_corrected, score_moments, score_naive, score_parts, score_parts_for, Dataset,
    NuisanceEstimate, ObservedSample, Sample, ScoreKind, ScoreParts,
};
