mod io;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use decoco::cocolasso::{psd_project, AdmmConfig};
use decoco::crossfit::{estimate_effect_with, make_folds, CrossFitSettings, EstimatorVariant};
use decoco::sim::{generate, run_study, standard_variants, SimConfig, SimulationReport};
use decoco::tau::{esd, replicate_diff, sigma_a};
use serde::Serialize;

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<decoco::Error> for CliError {
    fn from(e: decoco::Error) -> Self {
        use decoco::Error as E;
        match e {
            E::MissingPrerequisite { .. } | E::MissingReplicates => CliError::Precondition(e.to_string()),
            E::DegenerateIdentification { .. } | E::EigenFailure => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "decoco", version, about = "Treatment effects under covariate measurement error")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Naive,
    Ca,
    Co,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Nested CV in every fold complement.
    Default,
    /// Shared λ across folds and a capped projection; much faster for large p.
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-fitted effect estimate from a CSV dataset.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        variant: Variant,
        /// Known error variance (required for `ca`).
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 5)]
        cv_folds: usize,
        /// Defaults to $DECOCO_SEED, then 42.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo comparison of the four estimators.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Also write every replication's dataset into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Error-variance estimate and spectrum of the replicate differences.
    Tau {
        #[arg(long)]
        data: PathBuf,
        /// Add the KS distance to the fitted Marchenko-Pastur law.
        #[arg(long)]
        ks: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nearest PSD matrix in max norm.
    ProjectPsd {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("DECOCO_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Input(format!("DECOCO_SEED must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

#[derive(Serialize)]
struct EstimateReport {
    theta_hat: f64,
    sigma2_hat: f64,
    std_error: f64,
    ci: [f64; 2],
    variant: &'static str,
    folds: usize,
    tau_hat_per_fold: Vec<f64>,
    seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    data: &Path,
    variant: Variant,
    tau: Option<f64>,
    folds: usize,
    cv_folds: usize,
    seed: Option<u64>,
    preset: Preset,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let data = io::read_dataset(data)?;
    let variant = match variant {
        Variant::Naive => EstimatorVariant::naive(),
        Variant::Co => EstimatorVariant::covariance_oblivious(),
        Variant::Ca => match tau {
            Some(t) => EstimatorVariant::covariance_aware(t),
            None => return Err(CliError::Precondition("variant ca requires --tau".into())),
        },
    };
    let seed = match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(DEFAULT_SEED),
    };
    let base = match preset {
        Preset::Default => CrossFitSettings::default(),
        Preset::Desk => CrossFitSettings::desk(),
    };
    let settings = CrossFitSettings { cv_folds, ..base };
    variant.check(&data)?;
    let plan = make_folds(data.len(), folds, seed)?;
    let est = estimate_effect_with(&data, &variant, &plan, &settings)?;

    let report = EstimateReport {
        theta_hat: est.theta_hat,
        sigma2_hat: est.sigma2_hat,
        std_error: est.std_error,
        ci: [est.ci_low, est.ci_high],
        variant: variant.label(),
        folds,
        tau_hat_per_fold: est.tau_per_fold(),
        seed,
    };
    let line = format!(
        "theta_hat = {:.6} ± {:.6}  [{:.6}, {:.6}]",
        est.theta_hat,
        settings.critical_value() * est.std_error,
        est.ci_low,
        est.ci_high
    );
    emit_summary(out.is_some(), &line);
    io::write_output(out, &io::to_json(&report)?)
}

/// Goes to stdout unless stdout carries the JSON report.
fn emit_summary(report_to_file: bool, text: &str) {
    if report_to_file {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
}

#[derive(Serialize)]
struct Row<'a> {
    variant: &'a str,
    mse: f64,
    bias: f64,
    variance: f64,
}

#[derive(Serialize)]
struct HistogramOut<'a> {
    edges: &'a [f64],
    counts: &'a [usize],
}

#[derive(Serialize)]
struct SimulationOut<'a> {
    config: &'a SimConfig,
    rows: Vec<Row<'a>>,
    histograms: BTreeMap<&'a str, HistogramOut<'a>>,
}

fn table(report: &SimulationReport) -> String {
    let mut out = format!("{:<8} {:>14} {:>14} {:>14}\n", "variant", "MSE", "bias", "variance");
    for r in &report.rows {
        out.push_str(&format!("{:<8} {:>14.6} {:>14.6} {:>14.6}\n", r.variant, r.mse, r.bias, r.variance));
    }
    out
}

fn read_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let has_seed = value.get("seed").is_some();
    let mut config: SimConfig =
        serde_json::from_value(value).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if !has_seed {
        if let Some(s) = env_seed()? {
            config.seed = s;
        }
    }
    config.validate()?;
    Ok(config)
}

fn simulate(config: &Path, out: Option<&Path>, threads: Option<usize>, export: Option<&Path>) -> Result<(), CliError> {
    let config = read_config(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    let report = pool.install(|| run_study(&config, &standard_variants()))?;

    if let Some(dir) = export {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        for rep in 0..config.replications as u64 {
            let (data, _) = generate(&config, rep)?;
            io::write_dataset(&dir.join(format!("replication_{rep}.csv")), &data)?;
        }
    }

    let body = SimulationOut {
        config: &report.config,
        rows: report
            .rows
            .iter()
            .map(|r| Row { variant: &r.variant, mse: r.mse, bias: r.bias, variance: r.variance })
            .collect(),
        histograms: report
            .histograms
            .iter()
            .map(|(name, h)| (name.as_str(), HistogramOut { edges: &h.edges, counts: &h.counts }))
            .collect(),
    };
    emit_summary(out.is_some(), table(&report).trim_end());
    for msg in &report.failure_messages {
        eprintln!("failed: {msg}");
    }
    eprintln!(
        "{} replications, {} failures, {:.1} s",
        config.replications, report.failures, report.wall_time_secs
    );
    io::write_output(out, &io::to_json(&body)?)
}

#[derive(Serialize)]
struct TauReport {
    tau_hat: f64,
    kappa: f64,
    eigenvalues: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ks_statistic: Option<f64>,
}

fn tau(data: &Path, ks: bool, out: Option<&Path>) -> Result<(), CliError> {
    let data = io::read_dataset(data)?;
    if !data.has_replicates() {
        return Err(CliError::Precondition("tau needs replicate columns z2_1..z2_p".into()));
    }
    let diff = replicate_diff(&data)?;
    let spectrum = esd(sigma_a(&diff).as_ref(), data.len())?;
    let ks_statistic = if ks { Some(spectrum.ks_to_fitted()?) } else { None };
    let report = TauReport {
        tau_hat: spectrum.tau_hat,
        kappa: spectrum.kappa,
        eigenvalues: spectrum.eigenvalues,
        ks_statistic,
    };
    io::write_output(out, &io::to_json(&report)?)
}

fn project(matrix: &Path, mu: f64, tol: f64, out: Option<&Path>) -> Result<(), CliError> {
    let m = io::read_matrix(matrix)?;
    let config = AdmmConfig { penalty: mu, tolerance: tol, ..AdmmConfig::default() };
    config.validate()?;
    let proj = psd_project(m.as_ref(), &config)?;
    io::write_output(out, &io::matrix_csv(&proj.matrix))?;
    eprintln!("gap {}", io::fmt_real(proj.gap));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate { data, variant, tau, folds, cv_folds, seed, preset, out } => {
            estimate(&data, variant, tau, folds, cv_folds, seed, preset, out.as_deref())
        }
        Command::Simulate { config, out, threads, export } => {
            simulate(&config, out.as_deref(), threads, export.as_deref())
        }
        Command::Tau { data, ks, out } => tau(&data, ks, out.as_deref()),
        Command::ProjectPsd { matrix, mu, tol, out } => project(&matrix, mu, tol, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
