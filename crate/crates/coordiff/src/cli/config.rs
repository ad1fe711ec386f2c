//! Scenario documents.
//!
//! A scenario is a TOML document. Numeric parameters accept a scalar, a list
//! with one value per agent, or `{ uniform = [lo, hi] }` to draw each value
//! when the scenario is materialized. See the README for the full grammar.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid { field: field.into(), message: message.into() }
    }
}

/// A numeric parameter: fixed, per-agent, per-agent rows, or drawn uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    List(Vec<f64>),
    Rows(Vec<Vec<f64>>),
    Uniform(UniformRange),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub uniform: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Msd,
    Er,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    Complete,
    Path,
    Ring,
    ErdosRenyi { probability: f64 },
    Edges { edges: Vec<[usize; 2]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Identity,
    Averaging,
    Metropolis,
}

/// A combination rule by name, or an explicit left-stochastic matrix given by rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CombinationConfig {
    Rule(RuleName),
    Matrix(Vec<Vec<f64>>),
}

/// How drawn step-sizes and missing probabilities are matched to agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    Independent,
    /// Larger step-sizes get smaller missing probabilities.
    Concordant,
    /// Larger step-sizes get larger missing probabilities.
    Discordant,
}

fn default_a1() -> CombinationConfig {
    CombinationConfig::Rule(RuleName::Identity)
}

fn default_a2() -> CombinationConfig {
    CombinationConfig::Rule(RuleName::Metropolis)
}

fn is_default_pairing(p: &Pairing) -> bool {
    *p == Pairing::Independent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub agents: usize,
    pub topology: TopologyConfig,
    #[serde(default = "default_a1")]
    pub a1: CombinationConfig,
    #[serde(default = "default_a2")]
    pub a2: CombinationConfig,
    pub step_sizes: Param,
    pub missing: Param,
    #[serde(default, skip_serializing_if = "is_default_pairing")]
    pub pairing: Pairing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorConfig {
    /// Unit-variance AR(1) regressors with one coefficient per agent.
    Ar1 { pi: Param },
    /// Independent entries; `power` holds one row of `dim` variances per agent.
    White { power: Param },
    /// `R_u = [[|π|, π], [π, 1]]` per agent (`dim = 2`).
    Corner { pi: Param },
    /// One covariance matrix per agent, given by rows.
    Explicit { matrices: Vec<Vec<Vec<f64>>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingConfig {
    #[default]
    Dataset,
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskConfig {
    Mse {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_star: Option<Vec<f64>>,
        regressors: RegressorConfig,
        noise_variance: Param,
    },
    Logistic {
        dim: usize,
        rho: f64,
        samples: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_weights: Option<Vec<f64>>,
        #[serde(default)]
        sampling: SamplingConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_seed: Option<u64>,
    },
}

/// Per-entry gradient cost for the complexity section of theory reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub c_m: u32,
    pub c_a: u32,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { c_m: 2, c_a: 1 }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_runs() -> usize {
    200
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Msd]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Seeds both the scenario draws and, unless overridden, the runs.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Iterations per run; chosen from the theoretical rates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub costs: CostConfig,
    pub network: NetworkConfig,
    pub risk: RiskConfig,
}

impl Config {
    /// Parses a TOML document; syntax errors carry line and column.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(format_toml_error(text, &e)))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }
}

fn format_toml_error(text: &str, e: &toml::de::Error) -> String {
    let message = e.message().trim_end();
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {column}: {message}")
        }
        None => message.to_string(),
    }
}
