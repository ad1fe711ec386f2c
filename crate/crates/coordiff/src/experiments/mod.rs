//! Monte-Carlo harness: ensembles of runs, learning curves, steady-state and
//! convergence-time estimates, presets and comparison reports.

mod analysis;
mod ensemble;
pub mod presets;
mod report;
mod scenario;

use coordiff_core::diffusion::DiffusionError;
use coordiff_core::network::NetworkError;
use coordiff_core::risks::RiskError;
use coordiff_core::theory::TheoryError;
use thiserror::Error;

use crate::cli::config::ConfigError;

pub use analysis::{
    convergence_time_of, decay_rate, horizon, measure_convergence_time, settling_iterations, steady_state,
    steady_state_of, DecayFit, SteadyState, CONVERGENCE_WINDOW, DEFAULT_BAND_DB,
};
pub use ensemble::{monte_carlo, DirectErCheck, EnsembleOptions, LearningCurve};
pub use presets::ReferenceValues;
pub use report::{
    compare, reproduce, theory_json, CompareOptions, Comparison, ComparisonReport, ConvergenceSummary, DecaySummary,
    DirectErSummary, MetricSummary, SimulatedSummary, VariantSummary, Verdict,
};
pub use scenario::{Built, Regressors, RiskScenario, Scenario};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("run {run} failed at iteration {iteration}: {source}")]
    Run {
        run: u64,
        iteration: u64,
        #[source]
        source: DiffusionError,
    },
    #[error(
        "{metric} curve has not converged: drift of {drift_db:.4} dB over the final {window} iterations exceeds \
         {allowed_db:.4} dB; try a longer horizon"
    )]
    NotConverged { metric: &'static str, drift_db: f64, allowed_db: f64, window: usize },
    #[error("{0} curve was not recorded")]
    MissingMetric(&'static str),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
}
