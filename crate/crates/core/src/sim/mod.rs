//! Synthetic data with replicate measurements and the Monte Carlo comparison
//! of the four estimators.

mod dgp;
mod study;

pub use dgp::{generate, CovariateDesign, SimConfig, SimTruth, SupportDesign};
pub use study::{histogram, run_study, standard_variants, Draw, Histogram, SimulationReport, VariantSummary};
