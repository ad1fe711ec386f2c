use std::fmt::Write as _;

use coordiff_core::diffusion::{DiffusionError, DiffusionProblem, DiffusionState, Masking};
use coordiff_core::to_db;
use rayon::prelude::*;

use super::ExperimentError;

const RUNS_PER_CHUNK: usize = 4;
const CHUNKS_PER_GROUP: usize = 16;
/// Number of iterations sampled for the direct excess-risk cross-check.
const DIRECT_ER_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOptions {
    pub masking: Masking,
    pub runs: usize,
    pub seed: u64,
    pub horizon: usize,
    /// Record the weighted-norm excess-risk curve.
    pub er: bool,
    /// Also evaluate the excess risk through the risk functions on a sample of
    /// iterations in the final window.
    pub direct_er: bool,
    /// Worker cap; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// Direct excess-risk evaluation against the weighted norm, both averaged over
/// the same sampled iterations of every run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectErCheck {
    pub direct: f64,
    pub weighted: f64,
    pub samples: usize,
}

impl DirectErCheck {
    pub fn difference_db(&self) -> f64 {
        to_db(self.direct) - to_db(self.weighted)
    }
}

/// Ensemble-average network MSD (and ER) after each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub masking: Masking,
    pub scenario_hash: String,
    pub runs: usize,
    pub seed: u64,
    pub msd_linear: Vec<f64>,
    pub msd_db: Vec<f64>,
    /// Standard error of the ensemble mean, linear scale.
    pub msd_se: Vec<f64>,
    pub er_linear: Option<Vec<f64>>,
    pub er_db: Option<Vec<f64>>,
    pub er_se: Option<Vec<f64>>,
    /// Length of the final window used for steady-state estimates.
    pub window: usize,
    /// Per-run means over the final window, linear scale.
    pub msd_run_means: Vec<f64>,
    pub er_run_means: Option<Vec<f64>>,
    /// Per-run least-squares slopes over the final window, linear scale per
    /// iteration.
    pub msd_run_slopes: Vec<f64>,
    pub er_run_slopes: Option<Vec<f64>>,
    pub direct_er: Option<DirectErCheck>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.msd_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msd_db.is_empty()
    }

    /// CSV with header `iteration,msd_db,er_db`; the ER column only when recorded.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 40);
        match &self.er_db {
            Some(er) => {
                out.push_str("iteration,msd_db,er_db\n");
                for (i, (m, e)) in self.msd_db.iter().zip(er).enumerate() {
                    let _ = writeln!(out, "{i},{m},{e}");
                }
            }
            None => {
                out.push_str("iteration,msd_db\n");
                for (i, m) in self.msd_db.iter().enumerate() {
                    let _ = writeln!(out, "{i},{m}");
                }
            }
        }
        out
    }
}

/// Window length for steady-state estimates: the final 10% of the horizon.
pub(crate) fn window_len(horizon: usize) -> usize {
    (horizon / 10).max(1)
}

#[derive(Debug)]
struct Sums {
    msd: Vec<f64>,
    msd_sq: Vec<f64>,
    er: Vec<f64>,
    er_sq: Vec<f64>,
    msd_run_means: Vec<f64>,
    er_run_means: Vec<f64>,
    msd_run_slopes: Vec<f64>,
    er_run_slopes: Vec<f64>,
    direct: f64,
    direct_weighted: f64,
    direct_samples: usize,
}

impl Sums {
    fn new(horizon: usize, er: bool) -> Self {
        let er_len = if er { horizon } else { 0 };
        Self {
            msd: vec![0.0; horizon],
            msd_sq: vec![0.0; horizon],
            er: vec![0.0; er_len],
            er_sq: vec![0.0; er_len],
            msd_run_means: Vec::new(),
            er_run_means: Vec::new(),
            msd_run_slopes: Vec::new(),
            er_run_slopes: Vec::new(),
            direct: 0.0,
            direct_weighted: 0.0,
            direct_samples: 0,
        }
    }

    fn absorb(&mut self, other: Sums) {
        for (a, b) in [(&mut self.msd, &other.msd), (&mut self.msd_sq, &other.msd_sq), (&mut self.er, &other.er), (&mut self.er_sq, &other.er_sq)] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.msd_run_means.extend(other.msd_run_means);
        self.er_run_means.extend(other.er_run_means);
        self.msd_run_slopes.extend(other.msd_run_slopes);
        self.er_run_slopes.extend(other.er_run_slopes);
        self.direct += other.direct;
        self.direct_weighted += other.direct_weighted;
        self.direct_samples += other.direct_samples;
    }
}

fn run_chunk(problem: &DiffusionProblem, options: &EnsembleOptions, runs: std::ops::Range<usize>) -> Result<Sums, ExperimentError> {
    let horizon = options.horizon;
    let window = window_len(horizon);
    let start = horizon - window;
    let stride = (window / DIRECT_ER_SAMPLES).max(1);
    let centre = (window as f64 - 1.0) / 2.0;
    let sxx: f64 = (0..window).map(|j| (j as f64 - centre).powi(2)).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut sums = Sums::new(horizon, options.er);
    for run in runs {
        let run = run as u64;
        let mut state = DiffusionState::new(problem, options.masking, options.seed, run);
        let (mut msd_window, mut er_window) = (0.0, 0.0);
        let (mut msd_trend, mut er_trend) = (0.0, 0.0);
        for i in 0..horizon {
            state.step(problem).map_err(|source| {
                let iteration = match source {
                    DiffusionError::Diverged { iteration, .. } => iteration,
                    _ => state.iteration(),
                };
                ExperimentError::Run { run, iteration, source }
            })?;
            let (msd, er) = state.network_errors(problem, options.er);
            sums.msd[i] += msd;
            sums.msd_sq[i] += msd * msd;
            if options.er {
                sums.er[i] += er;
                sums.er_sq[i] += er * er;
            }
            if i >= start {
                let dx = (i - start) as f64 - centre;
                msd_window += msd;
                er_window += er;
                msd_trend += dx * msd;
                er_trend += dx * er;
                if options.direct_er && (i - start) % stride == 0 {
                    sums.direct += state.network_excess_risk(problem);
                    sums.direct_weighted += if options.er { er } else { state.network_errors(problem, true).1 };
                    sums.direct_samples += 1;
                }
            }
        }
        sums.msd_run_means.push(msd_window / window as f64);
        sums.msd_run_slopes.push(msd_trend / sxx);
        if options.er {
            sums.er_run_means.push(er_window / window as f64);
            sums.er_run_slopes.push(er_trend / sxx);
        }
    }
    Ok(sums)
}

fn ensemble_sums(problem: &DiffusionProblem, options: &EnsembleOptions) -> Result<Sums, ExperimentError> {
    let chunks: Vec<std::ops::Range<usize>> = (0..options.runs)
        .step_by(RUNS_PER_CHUNK)
        .map(|s| s..(s + RUNS_PER_CHUNK).min(options.runs))
        .collect();
    let mut total = Sums::new(options.horizon, options.er);
    for group in chunks.chunks(CHUNKS_PER_GROUP) {
        let partial: Vec<Result<Sums, ExperimentError>> =
            group.par_iter().map(|runs| run_chunk(problem, options, runs.clone())).collect();
        for sums in partial {
            total.absorb(sums?);
        }
    }
    Ok(total)
}

fn finish(sum: &[f64], sum_sq: &[f64], runs: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let r = runs as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let se = sum
        .iter()
        .zip(sum_sq)
        .map(|(s, sq)| if runs > 1 { ((sq - s * s / r).max(0.0) / (r - 1.0) / r).sqrt() } else { 0.0 })
        .collect();
    let db = mean.iter().map(|&m| to_db(m)).collect();
    (mean, db, se)
}

/// Runs `options.runs` independent runs on disjoint substreams and averages them.
///
/// Runs are grouped in fixed chunks and reduced in run order, so the result does
/// not depend on the number of workers.
pub fn monte_carlo(problem: &DiffusionProblem, options: &EnsembleOptions, scenario_hash: &str) -> Result<LearningCurve, ExperimentError> {
    if options.runs == 0 || options.horizon == 0 {
        return Err(crate::cli::config::ConfigError::invalid(
            if options.runs == 0 { "runs" } else { "horizon" },
            "must be at least 1",
        )
        .into());
    }
    let sums = match options.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?
            .install(|| ensemble_sums(problem, options))?,
        None => ensemble_sums(problem, options)?,
    };
    let (msd_linear, msd_db, msd_se) = finish(&sums.msd, &sums.msd_sq, options.runs);
    let (er_linear, er_db, er_se) = if options.er {
        let (l, d, s) = finish(&sums.er, &sums.er_sq, options.runs);
        (Some(l), Some(d), Some(s))
    } else {
        (None, None, None)
    };
    let direct_er = (options.direct_er && sums.direct_samples > 0).then(|| DirectErCheck {
        direct: sums.direct / sums.direct_samples as f64,
        weighted: sums.direct_weighted / sums.direct_samples as f64,
        samples: sums.direct_samples,
    });
    Ok(LearningCurve {
        masking: options.masking,
        scenario_hash: scenario_hash.to_string(),
        runs: options.runs,
        seed: options.seed,
        msd_linear,
        msd_db,
        msd_se,
        er_linear,
        er_db,
        er_se,
        window: window_len(options.horizon),
        msd_run_means: sums.msd_run_means,
        er_run_means: options.er.then_some(sums.er_run_means),
        msd_run_slopes: sums.msd_run_slopes,
        er_run_slopes: options.er.then_some(sums.er_run_slopes),
        direct_er,
    })
}
