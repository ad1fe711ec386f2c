use std::collections::BTreeMap;

use coordiff_core::diffusion::Masking;
use coordiff_core::theory::{theory_report, TheoryReport};
use coordiff_core::{from_db, to_db};
use serde::Serialize;
use serde_json::{json, Value};

use super::analysis::{decay_rate, horizon, measure_convergence_time, steady_state, DEFAULT_BAND_DB};
use super::presets::{self, Expectations, ReferenceValues};
use super::{monte_carlo, EnsembleOptions, ExperimentError, LearningCurve, Scenario};
use crate::cli::config::Metric;

/// Agreement required between simulated and theoretical steady states.
const THEORY_TOLERANCE_DB: f64 = 0.5;
/// Agreement required between the two variants when theory says they coincide.
const EQUAL_MSD_TOLERANCE_DB: f64 = 0.3;
const EQUAL_ER_TOLERANCE_DB: f64 = 0.2;
const ER_GAP_TOLERANCE_DB: f64 = 0.3;
const REFERENCE_TOLERANCE_DB: f64 = 0.02;
const TIME_RATIO_TOLERANCE: f64 = 0.2;
const DECAY_TOLERANCE: f64 = 0.15;
const DIRECT_ER_TOLERANCE_DB: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
}

impl Verdict {
    fn within(value: f64, target: f64, tolerance: f64) -> Self {
        Self { pass: (value - target).abs() <= tolerance, value, target, tolerance }
    }

    fn relative(value: f64, target: f64, tolerance: f64) -> Self {
        Self { pass: ((value - target) / target).abs() <= tolerance, value, target, tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub steady_db: f64,
    pub se_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub coor: VariantSummary,
    pub grad: VariantSummary,
    pub gap_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedSummary {
    pub runs: usize,
    pub horizon: usize,
    pub scenario_hash: String,
    pub msd: Option<MetricSummary>,
    pub er: Option<MetricSummary>,
    pub convergence_time: Option<ConvergenceSummary>,
    pub decay: Option<DecaySummary>,
    pub direct_er: Option<DirectErSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub band_db: f64,
    pub coor: usize,
    pub grad: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecaySummary {
    pub fitted_rate: f64,
    pub alpha_coor: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectErSummary {
    pub direct_db: f64,
    pub weighted_db: f64,
    pub samples: usize,
}

/// Simulation against theory, with one verdict per checked tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub preset: String,
    pub seed: u64,
    pub theory: Value,
    pub simulated: SimulatedSummary,
    pub verdicts: BTreeMap<String, Verdict>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.verdicts.values().all(|v| v.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.verdicts.iter().filter(|(_, v)| !v.pass).map(|(k, _)| k.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"
    }
}

/// A report together with the two learning curves it was computed from.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub coor: LearningCurve,
    pub grad: LearningCurve,
}

/// Overrides applied on top of the scenario's own settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompareOptions {
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub threads: Option<usize>,
    /// Cross-check the weighted-norm excess risk against the risk functions.
    pub direct_er: bool,
}

fn db_pair(linear: f64) -> Value {
    json!({ "linear": linear, "db": to_db(linear) })
}

/// Structured form of a theory report.
pub fn theory_json(report: &TheoryReport) -> Value {
    let d = &report.diagnostics;
    json!({
        "msd": {
            "coor": db_pair(report.msd.coor),
            "grad": db_pair(report.msd.grad),
            "gap": report.msd.gap,
            "gap_db": report.msd.gap_db(),
            "gap_closed_form": report.msd.gap_closed_form,
        },
        "er": {
            "coor": db_pair(report.er.coor),
            "grad": db_pair(report.er.grad),
            "gap": report.er.gap,
            "gap_db": report.er.gap_db(),
            "lyapunov_residual": report.er.residual,
        },
        "rates": {
            "alpha_coor": report.rates.alpha_coor,
            "alpha_grad": report.rates.alpha_grad,
            "time_ratio": report.rates.time_ratio,
            "time_ratio_uniform_approx": report.rates.time_ratio_uniform_approx,
        },
        "complexity": report.complexity.iter().map(|c| json!({
            "mult_grad": c.mult_grad,
            "mult_coor": c.mult_coor,
            "add_grad": c.add_grad,
            "add_coor": c.add_coor,
            "mult_total_ratio": c.mult_total_ratio,
            "add_total_ratio": c.add_total_ratio,
        })).collect::<Vec<_>>(),
        "diagnostics": {
            "alpha": d.alpha,
            "theta": d.theta,
            "uniform_costs": d.uniform_costs,
            "diagonal": d.diagonal,
            "regime": d.regime.map(|r| r.label()),
            "er_gap_uniform_costs": d.er_gap_uniform_costs,
            "checks": d.checks.iter().map(|c| json!({
                "name": c.name,
                "lower": c.lower,
                "upper": c.upper,
                "value": c.value,
                "holds": c.holds,
            })).collect::<Vec<_>>(),
        },
    })
}

fn summarize(coor: &LearningCurve, grad: &LearningCurve, metric: Metric) -> Result<MetricSummary, ExperimentError> {
    let (c, g) = (steady_state(coor, metric)?, steady_state(grad, metric)?);
    Ok(MetricSummary {
        coor: VariantSummary { steady_db: c.db, se_db: c.se_db },
        grad: VariantSummary { steady_db: g.db, se_db: g.se_db },
        gap_db: c.db - g.db,
    })
}

/// Simulates both variants of `scenario` and checks them against theory.
pub fn compare(
    scenario: &Scenario,
    options: &CompareOptions,
    expect: Expectations,
    reference: Option<ReferenceValues>,
) -> Result<Comparison, ExperimentError> {
    let built = scenario.build()?;
    let theory = theory_report(&built.theory, &built.context, Some(&built.costs))?;
    let horizon = match options.horizon.or(scenario.horizon) {
        Some(h) => h,
        None => horizon(&built)?,
    };
    let seed = options.seed.unwrap_or(scenario.seed);
    let hash = scenario.hash();
    let ensemble = |masking| EnsembleOptions {
        masking,
        runs: options.runs.unwrap_or(scenario.runs),
        seed,
        horizon,
        er: scenario.wants(Metric::Er),
        direct_er: options.direct_er,
        threads: options.threads,
    };
    let coor = monte_carlo(&built.problem, &ensemble(Masking::Coordinate), &hash)?;
    let grad = monte_carlo(&built.problem, &ensemble(Masking::FullGradient), &hash)?;

    let mut verdicts = BTreeMap::new();
    let mut verdict = |name: &str, v: Verdict| {
        verdicts.insert(name.to_string(), v);
    };
    verdict(
        "theory_diagnostics",
        Verdict { pass: theory.diagnostics.all_hold(), value: theory.diagnostics.checks.len() as f64, target: 0.0, tolerance: 0.0 },
    );

    let msd = if scenario.wants(Metric::Msd) {
        let s = summarize(&coor, &grad, Metric::Msd)?;
        verdict("msd_coor_vs_theory", Verdict::within(s.coor.steady_db, theory.msd.coor_db(), THEORY_TOLERANCE_DB));
        verdict("msd_grad_vs_theory", Verdict::within(s.grad.steady_db, theory.msd.grad_db(), THEORY_TOLERANCE_DB));
        if theory.diagnostics.diagonal && built.theory.uniform_r().is_some() {
            verdict("msd_coor_vs_grad", Verdict::within(s.gap_db, 0.0, EQUAL_MSD_TOLERANCE_DB));
        }
        if let Some(tol) = expect.msd_gap_tolerance {
            verdict("msd_gap_vs_theory", Verdict::within(s.gap_db, theory.msd.gap_db(), tol));
        }
        Some(s)
    } else {
        None
    };
    if let Some(max) = expect.max_theory_gap_db {
        verdict("theory_gap_magnitude", Verdict::within(theory.msd.gap_db(), 0.0, max));
    }
    if let Some(p) = reference {
        verdict("theory_gap_vs_reference", Verdict::within(theory.msd.gap_db(), p.msd_gap_db, REFERENCE_TOLERANCE_DB));
    }

    let er = if scenario.wants(Metric::Er) {
        let s = summarize(&coor, &grad, Metric::Er)?;
        verdict("er_coor_vs_theory", Verdict::within(s.coor.steady_db, theory.er.coor_db(), THEORY_TOLERANCE_DB));
        verdict("er_grad_vs_theory", Verdict::within(s.grad.steady_db, theory.er.grad_db(), THEORY_TOLERANCE_DB));
        let target = theory.er.gap_db();
        let tol = if target.abs() < 1e-6 { EQUAL_ER_TOLERANCE_DB } else { ER_GAP_TOLERANCE_DB };
        verdict("er_gap_vs_theory", Verdict::within(s.gap_db, target, tol));
        Some(s)
    } else {
        None
    };

    let convergence_time = if expect.time_ratio {
        let t_coor = measure_convergence_time(&coor, Metric::Msd, DEFAULT_BAND_DB)?;
        let t_grad = measure_convergence_time(&grad, Metric::Msd, DEFAULT_BAND_DB)?;
        let ratio = t_coor as f64 / t_grad as f64;
        verdict("time_ratio", Verdict::relative(ratio, theory.rates.time_ratio, TIME_RATIO_TOLERANCE));
        Some(ConvergenceSummary { band_db: DEFAULT_BAND_DB, coor: t_coor, grad: t_grad, ratio })
    } else {
        None
    };

    let decay = if expect.decay_rate {
        let ss = from_db(steady_state(&coor, Metric::Msd)?.db);
        let alpha = theory.rates.alpha_coor;
        match decay_rate(&coor.msd_linear, ss, 100.0, 1.0) {
            Some(fit) => {
                verdict("decay_rate", Verdict::relative(fit.rate.ln(), alpha.ln(), DECAY_TOLERANCE));
                Some(DecaySummary { fitted_rate: fit.rate, alpha_coor: alpha, from: fit.from, to: fit.to })
            }
            None => {
                verdict("decay_rate", Verdict { pass: false, value: f64::NAN, target: alpha.ln(), tolerance: DECAY_TOLERANCE });
                None
            }
        }
    } else {
        None
    };

    let direct_er = coor.direct_er.map(|d| {
        verdict("direct_er_vs_weighted", Verdict::within(d.difference_db(), 0.0, DIRECT_ER_TOLERANCE_DB));
        DirectErSummary { direct_db: to_db(d.direct), weighted_db: to_db(d.weighted), samples: d.samples }
    });

    let mut theory_value = theory_json(&theory);
    if let Some(p) = reference {
        theory_value["reference"] = serde_json::to_value(p).expect("reference values serialize");
    }
    let report = ComparisonReport {
        preset: scenario.name.clone(),
        seed,
        theory: theory_value,
        simulated: SimulatedSummary {
            runs: coor.runs,
            horizon,
            scenario_hash: hash,
            msd,
            er,
            convergence_time,
            decay,
            direct_er,
        },
        verdicts,
    };
    Ok(Comparison { report, coor, grad })
}

/// Runs a preset end to end with its own tolerances and published reference values where available.
pub fn reproduce(preset: &str, options: &CompareOptions) -> Result<Comparison, ExperimentError> {
    let scenario = presets::load(preset)?;
    compare(&scenario, options, presets::expectations(preset), presets::reference_values(preset))
}
