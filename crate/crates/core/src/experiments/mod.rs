//! Experiment harness: law-of-large-numbers sweeps, single-loop
//! concentration checks and distributional tests of the last landlord
//! notice. Independent runs execute on the rayon pool; results are
//! reduced in a fixed order so every report is reproducible.

mod concentration;
mod kappa;
mod lln;
pub mod stats;

use thiserror::Error;

use crate::limit::LimitError;
use crate::model::{ModelError, ModelParams, SpectralError};
use crate::simulator::SimError;

pub use concentration::{
    concentration_bounds, run_concentration, ConcentrationConfig, ConcentrationReport,
};
pub use kappa::{
    run_conditional_mean, run_kappa_equivalence, ConditionalMeanConfig, ConditionalMeanReport,
    Coupling, InfluxBin, KappaConfig, KappaReport, KappaVillage,
};
pub use lln::{run_lln, LlnConfig, LlnReport, LlnRow, RunSummary, SummaryRow};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not enough trials: {0}")]
    InsufficientTrials(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

/// The two-village benchmark instance used by the default sweeps:
/// `P = [[0, 0.5], [0.4, 0]]`, `λ = (1, 1)`, `σ = (0.2, 0.3)`,
/// `ν = (0.5, 0.3)`.
pub fn default_instance() -> ModelParams {
    ModelParams::new(
        vec![vec![0.0, 0.5], vec![0.4, 0.0]],
        vec![1.0, 1.0],
        vec![0.2, 0.3],
        vec![0.5, 0.3],
    )
    .expect("default instance is well formed")
}

fn format_u64s(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}
