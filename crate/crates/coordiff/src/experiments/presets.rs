//! Built-in scenarios.
//!
//! Each preset is stored with every random draw written out, so loading one
//! never re-rolls scenario randomness. The recipes they were drawn from live
//! next to them and are rematerialized by the `gen_presets` example.

use super::{ExperimentError, Scenario};
use crate::cli::config::Config;

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        pub const PRESET_NAMES: &[&str] = &[$($name),*];

        /// Materialized document of a preset.
        pub fn preset_toml(name: &str) -> Option<&'static str> {
            match name {
                $($name => Some(include_str!(concat!("../../presets/", $name, ".toml"))),)*
                _ => None,
            }
        }

        /// Recipe a preset was materialized from.
        pub fn recipe_toml(name: &str) -> Option<&'static str> {
            match name {
                $($name => Some(include_str!(concat!("../../presets/recipes/", $name, ".toml"))),)*
                _ => None,
            }
        }
    };
}

presets!(
    "mse_n100_smallr",
    "mse_white",
    "two_agent_a",
    "two_agent_b",
    "logistic_uniform",
    "logistic_theta_neg",
    "logistic_theta_pos",
);

pub fn load(name: &str) -> Result<Scenario, ExperimentError> {
    let text = preset_toml(name).ok_or_else(|| ExperimentError::UnknownPreset(name.to_string()))?;
    Ok(Scenario::materialize(&Config::from_toml(text)?)?)
}

/// Published reference values for presets whose parameters are fully known.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ReferenceValues {
    /// Theoretical `MSD_coor − MSD_grad` in dB.
    pub msd_gap_db: f64,
    /// Published simulated gap, in dB.
    pub simulated_msd_gap_db: f64,
}

pub fn reference_values(name: &str) -> Option<ReferenceValues> {
    match name {
        "two_agent_a" => Some(ReferenceValues { msd_gap_db: -0.41, simulated_msd_gap_db: -0.32 }),
        "two_agent_b" => Some(ReferenceValues { msd_gap_db: 1.49, simulated_msd_gap_db: 1.71 }),
        _ => None,
    }
}

/// Preset-specific tolerances on top of the checks every comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Expectations {
    /// Simulated MSD gap must be within this many dB of the theory gap.
    pub msd_gap_tolerance: Option<f64>,
    /// Theory MSD gap magnitude must not exceed this many dB.
    pub max_theory_gap_db: Option<f64>,
    /// Measure `T_coor / T_grad` and compare with the theory ratio.
    pub time_ratio: bool,
    /// Fit the transient decay and compare with `α_coor`.
    pub decay_rate: bool,
}

pub fn expectations(name: &str) -> Expectations {
    match name {
        "two_agent_a" => Expectations { msd_gap_tolerance: Some(0.3), ..Default::default() },
        "two_agent_b" => Expectations { msd_gap_tolerance: Some(0.4), ..Default::default() },
        "mse_n100_smallr" => Expectations { max_theory_gap_db: Some(0.3), ..Default::default() },
        "mse_white" => Expectations { time_ratio: true, decay_rate: true, ..Default::default() },
        _ => Expectations::default(),
    }
}
