use coordiff_core::linalg;
use coordiff_core::theory::{er_theory, msd_theory, rates, TheoryInputs};

use super::ensemble::window_len;
use super::{Built, ExperimentError, LearningCurve};
use crate::cli::config::Metric;

/// Moving-average window used to smooth curves before timing convergence.
pub const CONVERGENCE_WINDOW: usize = 50;
pub const DEFAULT_BAND_DB: f64 = 1.0;
/// Largest tolerated trend over the final window, in dB per 1000 iterations.
const FLAT_DB_PER_1000: f64 = 0.01;
/// Statistical allowance for the trend, in standard errors of the fitted drift.
const FLAT_SE_MULTIPLE: f64 = 3.0;
const DB_PER_NEPER: f64 = 10.0 / std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// Mean of the dB curve over the final window.
    pub db: f64,
    /// Standard error of the estimate from the spread of per-run window means.
    pub se_db: Option<f64>,
    pub slope_db_per_1000: f64,
    pub window: usize,
}

fn metric_name(metric: Metric) -> &'static str {
    match metric {
        Metric::Msd => "MSD",
        Metric::Er => "ER",
    }
}

fn regression_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (v - y_mean);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Steady state of a dB curve: the mean over its final 10%.
///
/// The curve counts as flat when the fitted trend over the window moves it by
/// at most `0.01 dB` per 1000 iterations, or by at most three times
/// `drift_se_db`, the standard error of that movement when the curve is a
/// noisy ensemble average.
pub fn steady_state_of(values_db: &[f64], drift_se_db: Option<f64>, metric: Metric) -> Result<SteadyState, ExperimentError> {
    let window = window_len(values_db.len());
    let tail = &values_db[values_db.len() - window..];
    let slope = regression_slope(tail);
    let drift = slope.abs() * window as f64;
    let mut allowed = FLAT_DB_PER_1000 * window as f64 / 1000.0;
    if let Some(se) = drift_se_db {
        allowed = allowed.max(FLAT_SE_MULTIPLE * se);
    }
    if !(drift <= allowed) {
        return Err(ExperimentError::NotConverged { metric: metric_name(metric), drift_db: drift, allowed_db: allowed, window });
    }
    Ok(SteadyState {
        db: tail.iter().sum::<f64>() / window as f64,
        se_db: None,
        slope_db_per_1000: slope * 1000.0,
        window,
    })
}

fn mean_and_se(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

fn relative_se_db(values: &[f64]) -> Option<f64> {
    mean_and_se(values).map(|(mean, se)| DB_PER_NEPER * se / mean)
}

type CurveParts<'a> = (&'a [f64], &'a [f64], &'a [f64]);

fn curve_parts(curve: &LearningCurve, metric: Metric) -> Result<CurveParts<'_>, ExperimentError> {
    match metric {
        Metric::Msd => Ok((&curve.msd_db, &curve.msd_run_means, &curve.msd_run_slopes)),
        Metric::Er => match (&curve.er_db, &curve.er_run_means, &curve.er_run_slopes) {
            (Some(d), Some(m), Some(s)) => Ok((d, m, s)),
            _ => Err(ExperimentError::MissingMetric("ER")),
        },
    }
}

/// Steady state of an ensemble curve. The flatness allowance comes from the
/// spread of the per-run window slopes, converted to dB at the window mean.
pub fn steady_state(curve: &LearningCurve, metric: Metric) -> Result<SteadyState, ExperimentError> {
    let (db, run_means, run_slopes) = curve_parts(curve, metric)?;
    let drift_se_db = match (mean_and_se(run_means), mean_and_se(run_slopes)) {
        (Some((mean, _)), Some((_, slope_se))) => Some(DB_PER_NEPER * slope_se * curve.window as f64 / mean),
        _ => None,
    };
    let mut ss = steady_state_of(db, drift_se_db, metric)?;
    ss.se_db = relative_se_db(run_means);
    Ok(ss)
}

/// First iteration after which the trailing moving average (window
/// [`CONVERGENCE_WINDOW`]) stays within `band_db` of `steady_db`.
pub fn convergence_time_of(values_db: &[f64], steady_db: f64, band_db: f64) -> usize {
    let mut sum = 0.0;
    let mut last_outside = None;
    for (i, v) in values_db.iter().enumerate() {
        sum += v;
        if i >= CONVERGENCE_WINDOW {
            sum -= values_db[i - CONVERGENCE_WINDOW];
        }
        let smoothed = sum / (i + 1).min(CONVERGENCE_WINDOW) as f64;
        if !((smoothed - steady_db).abs() <= band_db) {
            last_outside = Some(i);
        }
    }
    last_outside.map_or(0, |i| i + 1)
}

pub fn measure_convergence_time(curve: &LearningCurve, metric: Metric, band_db: f64) -> Result<usize, ExperimentError> {
    if !(band_db > 0.0) {
        return Err(crate::cli::config::ConfigError::invalid("band_db", format!("{band_db} must be positive")).into());
    }
    let ss = steady_state(curve, metric)?;
    let (db, _, _) = curve_parts(curve, metric)?;
    Ok(convergence_time_of(db, ss.db, band_db))
}

/// Smallest `i` with `‖(I − D)^i x‖² ≤ target`, where `D` is symmetric with
/// eigenvalues in `(0, 2)`.
fn decay_iterations(eigenvalues: &[f64], c: &[f64], target: f64) -> Option<usize> {
    let factors: Vec<f64> = eigenvalues.iter().map(|l| (1.0 - l).abs()).collect();
    let rho = factors.iter().cloned().fold(0.0, f64::max);
    if !(rho < 1.0) {
        return None;
    }
    let norm = |i: usize| -> f64 { c.iter().zip(&factors).map(|(cj, f)| cj * cj * f.powi(2 * i as i32)).sum() };
    let total = norm(0);
    if total <= target {
        return Some(0);
    }
    let mut hi = ((target / total).ln() / (2.0 * rho.ln())).ceil().max(1.0) as usize;
    while norm(hi) > target {
        hi *= 2;
    }
    let mut lo = 0;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if norm(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Iterations for the mean error `(I − Σ q(1−r)H)^i w°`, started from zero
/// iterates, to fall to 1% of the steady-state MSD and ER.
pub fn settling_iterations(theory: &TheoryInputs, w_star: &[f64], msd: f64, er: f64) -> Option<usize> {
    let eigen = linalg::sym_eigen(&theory.weighted_hessian());
    let c = eigen.eigenvectors.transpose() * linalg::vector(w_star);
    let (lambda, c) = (eigen.eigenvalues.as_slice(), c.as_slice());
    let msd_time = decay_iterations(lambda, c, 0.01 * msd)?;
    let half_max = 0.5 * linalg::max_eigenvalue(&theory.hbar());
    let er_time = decay_iterations(lambda, c, 0.01 * er / half_max)?;
    Some(msd_time.max(er_time))
}

/// Iteration horizon: `ceil(8 / (1 − α_coor))`, extended so that the mean
/// error has settled before the final 10% window.
pub fn horizon(built: &Built) -> Result<usize, ExperimentError> {
    let theory = &built.theory;
    let alpha = rates(theory)?.alpha_coor;
    let base = (8.0 / (1.0 - alpha)).ceil() as usize;
    let msd = msd_theory(theory)?.coor;
    let er = er_theory(theory)?.coor;
    let settle = settling_iterations(theory, built.problem.w_star(), msd, er)
        .ok_or(ExperimentError::Theory(coordiff_core::theory::TheoryError::Unstable { which: "alpha_coor", alpha }))?;
    Ok(base.max((settle as f64 / 0.9).ceil() as usize))
}

/// Geometric decay fitted to the excess of a linear curve over its steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Fitted per-iteration factor.
    pub rate: f64,
    pub from: usize,
    pub to: usize,
}

/// Fits `ln(v_i − steady)` by least squares over the stretch where the excess
/// first falls from `upper` to `lower` times the steady-state value.
pub fn decay_rate(linear: &[f64], steady: f64, upper: f64, lower: f64) -> Option<DecayFit> {
    let from = linear.iter().position(|v| v - steady <= upper * steady)?;
    let to = from + linear[from..].iter().position(|v| v - steady <= lower * steady)?;
    if to < from + 2 {
        return None;
    }
    let logs: Vec<f64> = linear[from..to].iter().map(|v| (v - steady).ln()).collect();
    Some(DecayFit { rate: regression_slope(&logs).exp(), from, to })
}
