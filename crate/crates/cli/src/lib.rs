//! Config-driven experiments on top of `ridgeapprox`: error-vs-rank curves,
//! projector-quality audits, spectra with mode exports, and Sobol' reports.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] ridgeapprox::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 for configuration and I/O problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Curve,
    Audit,
    Spectrum,
    Sobol,
}

pub fn run(experiment: Experiment, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    match experiment {
        Experiment::Curve => experiments::run_error_curve(cfg, out),
        Experiment::Audit => experiments::run_projector_audit(cfg, out),
        Experiment::Spectrum => experiments::run_spectrum(cfg, out),
        Experiment::Sobol => experiments::run_sobol(cfg, out),
    }
}
