//! Closed-form steady-state performance of masked and full-gradient diffusion.
//!
//! All expressions are first order in the step-sizes. With
//! `A = Σ q_k (1 − r_k) H_k` and `G'_k` the masked noise covariance,
//!
//! ```text
//! MSD_coor = ½ Tr(A⁻¹ Σ q_k² G'_k)
//! ER_coor  = ½ Tr(X Σ q_k² G'_k),   X A + A X = H̄
//! α_coor   = 1 − 2 λ_min(A)
//! ```
//!
//! and the full-gradient values are the same expressions at `r = 0`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // float math is only inherent in `core` on recent toolchains
use num_traits::Float;
use thiserror::Error;

use crate::diffusion::DiffusionProblem;
use crate::linalg;
use crate::network::uniform_value;
use crate::to_db;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("q[{agent}] = {value} must be positive")]
    NonPositiveWeight { agent: usize, value: f64 },
    #[error("r[{agent}] = {value} violates 0 <= r < 1")]
    MissingProbability { agent: usize, value: f64 },
    #[error("{what} of agent {agent} is not symmetric")]
    NotSymmetric { what: &'static str, agent: usize },
    #[error("Hessian of agent {agent} is not positive-definite")]
    HessianNotPositiveDefinite { agent: usize },
    #[error("noise covariance of agent {agent} is not positive-semidefinite")]
    NoiseNotPsd { agent: usize },
    #[error("Hessian bounds nu = {nu}, delta = {delta} do not enclose the Hessian spectra")]
    HessianBounds { nu: f64, delta: f64 },
    #[error("weighted Hessian sum is singular")]
    Singular,
    #[error("{which} = {alpha} is outside (0, 1); step-sizes are outside the stability range")]
    Unstable { which: &'static str, alpha: f64 },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Everything the closed-form expressions need.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryInputs {
    q: Vec<f64>,
    r: Vec<f64>,
    hessians: Vec<DMatrix<f64>>,
    noise: Vec<DMatrix<f64>>,
    nu: f64,
    delta: f64,
}

impl TheoryInputs {
    /// Validates the inputs; `ν` and `δ` are the extreme eigenvalues over all Hessians.
    pub fn new(
        q: Vec<f64>,
        r: Vec<f64>,
        hessians: Vec<DMatrix<f64>>,
        noise: Vec<DMatrix<f64>>,
    ) -> Result<Self, TheoryError> {
        let n = q.len();
        if n == 0 {
            return Err(TheoryError::Dimension { what: "agents", expected: 1, found: 0 });
        }
        for (what, found) in [("r", r.len()), ("Hessians", hessians.len()), ("noise covariances", noise.len())] {
            if found != n {
                return Err(TheoryError::Dimension { what, expected: n, found });
            }
        }
        let m = hessians[0].nrows();
        let mut nu = f64::INFINITY;
        let mut delta = 0.0_f64;
        for k in 0..n {
            if !(q[k] > 0.0) || !q[k].is_finite() {
                return Err(TheoryError::NonPositiveWeight { agent: k, value: q[k] });
            }
            if !(0.0..1.0).contains(&r[k]) {
                return Err(TheoryError::MissingProbability { agent: k, value: r[k] });
            }
            for (what, mat) in [("Hessian", &hessians[k]), ("noise covariance", &noise[k])] {
                if mat.nrows() != m || mat.ncols() != m {
                    return Err(TheoryError::Dimension { what, expected: m, found: mat.nrows() });
                }
                if !linalg::is_symmetric(mat, SYMMETRY_TOL) {
                    return Err(TheoryError::NotSymmetric { what, agent: k });
                }
            }
            let eig = linalg::sym_eigen(&hessians[k]).eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 0.0) {
                return Err(TheoryError::HessianNotPositiveDefinite { agent: k });
            }
            nu = nu.min(lo);
            delta = delta.max(hi);
            let g_min = linalg::min_eigenvalue(&noise[k]);
            if g_min < -PSD_TOL * linalg::max_abs(&noise[k]).max(1.0) {
                return Err(TheoryError::NoiseNotPsd { agent: k });
            }
        }
        Ok(Self { q, r, hessians, noise, nu, delta })
    }

    /// Inputs of a configured learning problem, using each model's `H_k` and `G_k`.
    pub fn from_problem(problem: &DiffusionProblem) -> Result<Self, TheoryError> {
        let an = problem.analysis();
        let (hessians, noise) = problem
            .models()
            .iter()
            .map(|m| {
                let mom = m.moments();
                (mom.hessian, mom.noise_covariance)
            })
            .unzip();
        Self::new(an.q.as_slice().to_vec(), an.r.as_slice().to_vec(), hessians, noise)
    }

    /// Replaces the computed Hessian bounds by looser user-supplied ones.
    pub fn with_bounds(mut self, nu: f64, delta: f64) -> Result<Self, TheoryError> {
        if !(nu > 0.0) || nu > self.nu * (1.0 + 1e-12) || delta < self.delta * (1.0 - 1e-12) {
            return Err(TheoryError::HessianBounds { nu, delta });
        }
        self.nu = nu;
        self.delta = delta;
        Ok(self)
    }

    /// Same network with different missing probabilities.
    pub fn with_r(&self, r: Vec<f64>) -> Result<Self, TheoryError> {
        if r.len() != self.q.len() {
            return Err(TheoryError::Dimension { what: "r", expected: self.q.len(), found: r.len() });
        }
        if let Some((k, &value)) = r.iter().enumerate().find(|(_, v)| !(0.0..1.0).contains(*v)) {
            return Err(TheoryError::MissingProbability { agent: k, value });
        }
        Ok(Self { r, ..self.clone() })
    }

    /// Full-gradient counterpart (`r = 0`).
    pub fn full_gradient(&self) -> Self {
        Self { r: vec![0.0; self.q.len()], ..self.clone() }
    }

    /// Every `q_k` multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self, TheoryError> {
        if !(c > 0.0) {
            return Err(TheoryError::InvalidParameter { name: "scale", value: c });
        }
        Ok(Self { q: self.q.iter().map(|q| q * c).collect(), ..self.clone() })
    }

    pub fn agent_count(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.hessians[0].nrows()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn hessians(&self) -> &[DMatrix<f64>] {
        &self.hessians
    }

    pub fn noise(&self) -> &[DMatrix<f64>] {
        &self.noise
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn uniform_r(&self) -> Option<f64> {
        uniform_value(&self.r)
    }

    /// `Σ q_k (1 − r_k) H_k`.
    pub fn weighted_hessian(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut a = DMatrix::zeros(m, m);
        for k in 0..self.q.len() {
            a += &self.hessians[k] * (self.q[k] * (1.0 - self.r[k]));
        }
        linalg::symmetrize(&a)
    }

    /// `H̄ = (Σ q_k)⁻¹ Σ q_k H_k`.
    pub fn hbar(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut h = DMatrix::zeros(m, m);
        for k in 0..self.q.len() {
            h += &self.hessians[k] * self.q[k];
        }
        linalg::symmetrize(&(h / self.q.iter().sum::<f64>()))
    }

    /// `Σ q_k² G'_k`.
    pub fn weighted_noise(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut g = DMatrix::zeros(m, m);
        for k in 0..self.q.len() {
            g += masked_noise_cov(&self.noise[k], self.r[k]) * (self.q[k] * self.q[k]);
        }
        g
    }

    fn uniform_costs(&self) -> bool {
        let same = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            (a - b).amax() <= 1e-12 * linalg::max_abs(a).max(f64::MIN_POSITIVE)
        };
        self.hessians.iter().all(|h| same(&self.hessians[0], h)) && self.noise.iter().all(|g| same(&self.noise[0], g))
    }
}

/// Noise covariance seen through a random mask: off-diagonal entries scaled by
/// `(1 − r)²`, diagonal entries by `(1 − r)`.
pub fn masked_noise_cov(g: &DMatrix<f64>, r: f64) -> DMatrix<f64> {
    let keep = 1.0 - r;
    let off = keep * keep;
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| if i == j { keep * g[(i, j)] } else { off * g[(i, j)] })
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0))
}

fn msd_value(inputs: &TheoryInputs) -> Result<f64, TheoryError> {
    let trace = linalg::trace_solve_spd(&inputs.weighted_hessian(), &inputs.weighted_noise()).ok_or(TheoryError::Singular)?;
    Ok(0.5 * trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdResult {
    pub coor: f64,
    pub grad: f64,
    /// `coor − grad`. For uniform `r` this is the closed form below, which
    /// does not lose digits to cancellation when the two values are close.
    pub gap: f64,
    /// `(r/2) Tr((Σ q H)⁻¹ Σ q² (diag G − G))`, available for uniform `r`.
    pub gap_closed_form: Option<f64>,
}

impl MsdResult {
    pub fn coor_db(&self) -> f64 {
        to_db(self.coor)
    }

    pub fn grad_db(&self) -> f64 {
        to_db(self.grad)
    }

    pub fn gap_db(&self) -> f64 {
        to_db(self.coor) - to_db(self.grad)
    }
}

/// Steady-state network MSD with and without masking.
pub fn msd_theory(inputs: &TheoryInputs) -> Result<MsdResult, TheoryError> {
    let coor = msd_value(inputs)?;
    let grad = msd_value(&inputs.full_gradient())?;
    let gap_closed_form = match inputs.uniform_r() {
        Some(r) => {
            let full = inputs.full_gradient();
            let m = inputs.dim();
            let mut check = DMatrix::zeros(m, m);
            for k in 0..inputs.q.len() {
                let g = &inputs.noise[k];
                check += (linalg::diag_part(g) - g) * (inputs.q[k] * inputs.q[k]);
            }
            let trace = linalg::trace_solve_spd(&full.weighted_hessian(), &check).ok_or(TheoryError::Singular)?;
            Some(0.5 * r * trace)
        }
        None => None,
    };
    Ok(MsdResult { coor, grad, gap: gap_closed_form.unwrap_or(coor - grad), gap_closed_form })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErResult {
    pub coor: f64,
    pub grad: f64,
    pub gap: f64,
    /// Solution of `X A + A X = H̄` for the masked `A`.
    pub x: DMatrix<f64>,
    /// `‖X A + A X − H̄‖_F`.
    pub residual: f64,
}

impl ErResult {
    pub fn coor_db(&self) -> f64 {
        to_db(self.coor)
    }

    pub fn grad_db(&self) -> f64 {
        to_db(self.grad)
    }

    pub fn gap_db(&self) -> f64 {
        to_db(self.coor) - to_db(self.grad)
    }
}

fn er_value(inputs: &TheoryInputs) -> Result<(f64, DMatrix<f64>, f64), TheoryError> {
    let a = inputs.weighted_hessian();
    let hbar = inputs.hbar();
    let x = linalg::solve_lyapunov_spd(&a, &hbar).ok_or(TheoryError::Singular)?;
    let residual = (&x * &a + &a * &x - &hbar).norm();
    let er = 0.5 * linalg::trace_product(&x, &inputs.weighted_noise());
    Ok((er, x, residual))
}

/// Steady-state network excess risk with and without masking.
pub fn er_theory(inputs: &TheoryInputs) -> Result<ErResult, TheoryError> {
    let (coor, x, residual) = er_value(inputs)?;
    let (grad, _, _) = er_value(&inputs.full_gradient())?;
    Ok(ErResult { coor, grad, gap: coor - grad, x, residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub alpha_coor: f64,
    pub alpha_grad: f64,
    /// `ln α_grad / ln α_coor`.
    pub time_ratio: f64,
    /// `1 / (1 − r)`, reported for uniform `r` only.
    pub time_ratio_uniform_approx: Option<f64>,
}

fn alpha(inputs: &TheoryInputs, which: &'static str) -> Result<f64, TheoryError> {
    let a = 1.0 - 2.0 * linalg::min_eigenvalue(&inputs.weighted_hessian());
    if !(a > 0.0 && a < 1.0) {
        return Err(TheoryError::Unstable { which, alpha: a });
    }
    Ok(a)
}

/// Leading-order convergence factors of the error variances. The
/// higher-order correction in the step-size has no closed form and is omitted.
pub fn rates(inputs: &TheoryInputs) -> Result<Rates, TheoryError> {
    let alpha_coor = alpha(inputs, "alpha_coor")?;
    let alpha_grad = alpha(&inputs.full_gradient(), "alpha_grad")?;
    Ok(Rates {
        alpha_coor,
        alpha_grad,
        time_ratio: alpha_grad.ln() / alpha_coor.ln(),
        time_ratio_uniform_approx: inputs.uniform_r().map(|r| 1.0 / (1.0 - r)),
    })
}

/// Per-agent, per-iteration operation counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complexity {
    pub mult_grad: f64,
    pub mult_coor: f64,
    pub add_grad: f64,
    pub add_coor: f64,
    /// Multiplications until convergence, masked over full-gradient.
    pub mult_total_ratio: f64,
    /// Additions until convergence, masked over full-gradient.
    pub add_total_ratio: f64,
}

/// Operation counts for an agent with `n_k` neighbors, gradient entries costing
/// `c_m` multiplications and `c_a` additions each.
pub fn complexity(c_m: u32, c_a: u32, n_k: u32, m: u32, r: f64) -> Result<Complexity, TheoryError> {
    if n_k == 0 {
        return Err(TheoryError::InvalidParameter { name: "n_k", value: 0.0 });
    }
    if !(0.0..1.0).contains(&r) {
        return Err(TheoryError::MissingProbability { agent: 0, value: r });
    }
    let (cm, ca, nk, m) = (c_m as f64, c_a as f64, n_k as f64, m as f64);
    let mult_grad = (cm + nk + 1.0) * m;
    let add_grad = (ca + nk) * m;
    Ok(Complexity {
        mult_grad,
        mult_coor: mult_grad - (cm + 1.0) * m * r,
        add_grad,
        add_coor: add_grad - (ca + 1.0) * m * r,
        mult_total_ratio: (1.0 - (cm + 1.0) * r / (cm + nk + 1.0)) / (1.0 - r),
        add_total_ratio: (1.0 - (ca + 1.0) * r / (ca + nk)) / (1.0 - r),
    })
}

/// Which case of the uniform-cost comparison applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `α ≥ 0`: masking can only hurt the MSD.
    A,
    /// `α < 0`, `θ ≥ (1 − δ/ν) α`: masking can only hurt.
    B,
    /// `α < 0`, `θ ≤ (1 − ν/δ) α`: masking can only help.
    C,
    Indeterminate,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::A => "a",
            Regime::B => "b",
            Regime::C => "c",
            Regime::Indeterminate => "indeterminate",
        }
    }
}

/// `α` and `θ` of the uniform-cost comparison.
pub fn alpha_theta(q: &[f64], r: &[f64]) -> (f64, f64) {
    let mut s = [0.0_f64; 5];
    for (&qk, &rk) in q.iter().zip(r) {
        let keep = 1.0 - rk;
        s[0] += qk * qk * keep * keep;
        s[1] += qk * keep;
        s[2] += qk * qk * keep;
        s[3] += qk * qk;
        s[4] += qk;
    }
    let base = s[3] / s[4];
    (s[0] / s[1] - base, s[2] / s[1] - base)
}

/// Regime label and the implied `[lo, hi]` interval for the MSD gap.
pub fn regime(alpha: f64, theta: f64, nu: f64, delta: f64, trace_g: f64) -> (Regime, Option<(f64, f64)>) {
    if alpha >= 0.0 {
        (Regime::A, Some((0.0, 0.5 * theta / nu * trace_g)))
    } else if theta >= (1.0 - delta / nu) * alpha {
        (Regime::B, Some((0.0, 0.5 * (theta / nu + (1.0 / delta - 1.0 / nu) * alpha) * trace_g)))
    } else if theta <= (1.0 - nu / delta) * alpha {
        (Regime::C, Some((0.5 * (theta / delta + (1.0 / nu - 1.0 / delta) * alpha) * trace_g, 0.0)))
    } else {
        (Regime::Indeterminate, None)
    }
}

/// One inequality checked against the computed gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
    pub holds: bool,
}

/// Extra facts about the setting that unlock specialized bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsContext {
    /// Uniform step-size `μ` and Perron entries `p` when `q = μ p`.
    pub uniform_step: Option<(f64, Vec<f64>)>,
    /// Noise variances `σ²_k` for MSE agents sharing one regressor covariance.
    pub mse_noise_variances: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub alpha: f64,
    pub theta: f64,
    pub uniform_costs: bool,
    /// All `H_k` or all `G_k` diagonal; with uniform `r` the MSD gap then vanishes.
    pub diagonal: bool,
    pub regime: Option<Regime>,
    /// `(θ/4) Tr G` for uniform costs.
    pub er_gap_uniform_costs: Option<f64>,
    pub checks: Vec<BoundCheck>,
}

impl Diagnostics {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Evaluates every comparison bound that applies to `inputs` against the computed gaps.
pub fn comparison_diagnostics(
    inputs: &TheoryInputs,
    ctx: &DiagnosticsContext,
) -> Result<Diagnostics, TheoryError> {
    let msd = msd_theory(inputs)?;
    let er = er_theory(inputs)?;
    let (alpha, theta) = alpha_theta(&inputs.q, &inputs.r);
    let (nu, delta) = (inputs.nu, inputs.delta);
    let q_sum: f64 = inputs.q.iter().sum();
    let slack = 1e-9 * msd.coor.abs().max(msd.grad.abs()).max(f64::MIN_POSITIVE);
    let check = |name, lower: f64, upper: f64, value: f64| BoundCheck {
        name,
        lower,
        upper,
        value,
        holds: value >= lower - slack && value <= upper + slack,
    };
    let mut checks = Vec::new();

    let diagonal = inputs.hessians.iter().all(is_diagonal) || inputs.noise.iter().all(is_diagonal);

    if let Some(r) = inputs.uniform_r() {
        if diagonal {
            checks.push(check("diagonal_equality", 0.0, 0.0, msd.gap));
        }
        let weighted_trace: f64 = inputs.q.iter().zip(&inputs.noise).map(|(q, g)| q * q * g.trace()).sum();
        let bound = 0.5 * r / q_sum * (1.0 / nu - 1.0 / delta) * weighted_trace;
        checks.push(check("upper_bound", -bound, bound, msd.gap));

        if let Some((mu, p)) = &ctx.uniform_step {
            let weighted: f64 = p.iter().zip(&inputs.noise).map(|(p, g)| p * p * g.trace()).sum();
            let bound = 0.5 * r * mu * (1.0 / nu - 1.0 / delta) * weighted;
            checks.push(check("uniform_step_bound", -bound, bound, msd.gap));
        }
        if let Some(sigma2) = &ctx.mse_noise_variances {
            if sigma2.len() != inputs.q.len() {
                return Err(TheoryError::Dimension { what: "noise variances", expected: inputs.q.len(), found: sigma2.len() });
            }
            let weighted: f64 = inputs.q.iter().zip(sigma2).map(|(q, s)| q * q * s).sum();
            let bound = r / q_sum * weighted * (delta / nu - 1.0) * inputs.dim() as f64;
            checks.push(check("mse_bound", 0.0, bound, msd.gap));
        }
        checks.push(check("er_uniform_r", 0.0, 0.0, er.gap));
    }

    let uniform_costs = inputs.uniform_costs();
    let (regime_label, er_gap_uniform_costs) = if uniform_costs {
        let trace_g = inputs.noise[0].trace();
        let (label, interval) = regime(alpha, theta, nu, delta, trace_g);
        if let Some((lo, hi)) = interval {
            checks.push(check("regime_interval", lo, hi, msd.gap));
        }
        let er_gap = 0.25 * theta * trace_g;
        let er_slack = 1e-9 * er.coor.abs().max(er.grad.abs());
        checks.push(BoundCheck {
            name: "er_gap_uniform_costs",
            lower: er_gap,
            upper: er_gap,
            value: er.gap,
            holds: (er.gap - er_gap).abs() <= er_slack,
        });
        (Some(label), Some(er_gap))
    } else {
        (None, None)
    };

    Ok(Diagnostics {
        alpha,
        theta,
        uniform_costs,
        diagonal,
        regime: regime_label,
        er_gap_uniform_costs,
        checks,
    })
}

/// Everything the closed form says about one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub msd: MsdResult,
    pub er: ErResult,
    pub rates: Rates,
    pub complexity: Vec<Complexity>,
    pub diagnostics: Diagnostics,
}

/// Cost model for the complexity section of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub c_m: u32,
    pub c_a: u32,
    /// Neighborhood size of every agent.
    pub neighbors: Vec<u32>,
}

pub fn theory_report(
    inputs: &TheoryInputs,
    ctx: &DiagnosticsContext,
    costs: Option<&CostModel>,
) -> Result<TheoryReport, TheoryError> {
    let complexity = match costs {
        Some(c) => c
            .neighbors
            .iter()
            .zip(&inputs.r)
            .map(|(&n_k, &r)| complexity(c.c_m, c.c_a, n_k, inputs.dim() as u32, r))
            .collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    Ok(TheoryReport {
        msd: msd_theory(inputs)?,
        er: er_theory(inputs)?,
        rates: rates(inputs)?,
        complexity,
        diagnostics: comparison_diagnostics(inputs, ctx)?,
    })
}

/// Which algorithm has the lower MSD in the two-agent example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoAgentRegime {
    CoordinateBetter,
    FullGradientBetterOrEqual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoAgentGap {
    pub gap: f64,
    pub regime: TwoAgentRegime,
}

fn check_pi(name: &'static str, pi: f64) -> Result<(), TheoryError> {
    if !(pi.abs() < 1.0) {
        return Err(TheoryError::InvalidParameter { name, value: pi });
    }
    Ok(())
}

/// Regressor covariance `[[|π|, π], [π, 1]]` of the two-agent example.
pub fn two_agent_covariance(pi: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[pi.abs(), pi, pi, 1.0])
}

/// Closed-form MSD gap for two MSE agents with covariances [`two_agent_covariance`],
/// common `q` and uniform `r`.
pub fn two_agent_gap(pi1: f64, pi2: f64, sigma1_sq: f64, sigma2_sq: f64, q: f64, r: f64) -> Result<TwoAgentGap, TheoryError> {
    check_pi("pi1", pi1)?;
    check_pi("pi2", pi2)?;
    for (name, v) in [("sigma1_sq", sigma1_sq), ("sigma2_sq", sigma2_sq), ("q", q)] {
        if !(v > 0.0) {
            return Err(TheoryError::InvalidParameter { name, value: v });
        }
    }
    if !(0.0..1.0).contains(&r) {
        return Err(TheoryError::MissingProbability { agent: 0, value: r });
    }
    let s = pi1 + pi2;
    let denom = 2.0 * (pi1.abs() + pi2.abs()) - s * s;
    if !(denom > 0.0) {
        return Err(TheoryError::Singular);
    }
    let product = s * (pi1 * sigma1_sq + pi2 * sigma2_sq);
    let regime = if product < 0.0 { TwoAgentRegime::CoordinateBetter } else { TwoAgentRegime::FullGradientBetterOrEqual };
    Ok(TwoAgentGap { gap: 2.0 * r * q * product / denom, regime })
}

/// Parameter regions where masking lowers the two-agent MSD; requires `σ₁² > σ₂²`.
pub fn two_agent_in_region(pi1: f64, pi2: f64, sigma1_sq: f64, sigma2_sq: f64) -> Result<bool, TheoryError> {
    check_pi("pi1", pi1)?;
    check_pi("pi2", pi2)?;
    if !(sigma1_sq > sigma2_sq && sigma2_sq > 0.0) {
        return Err(TheoryError::InvalidParameter { name: "sigma1_sq", value: sigma1_sq });
    }
    let ratio = sigma2_sq / sigma1_sq;
    Ok((pi2 > 0.0 && -pi2 < pi1 && pi1 < -ratio * pi2) || (pi2 < 0.0 && -ratio * pi2 < pi1 && pi1 < -pi2))
}

/// General inputs for the two-agent example: `H_k = 2R_k`, `G_k = 4σ_k² R_k`.
pub fn two_agent_inputs(pi1: f64, pi2: f64, sigma1_sq: f64, sigma2_sq: f64, q: f64, r: f64) -> Result<TheoryInputs, TheoryError> {
    check_pi("pi1", pi1)?;
    check_pi("pi2", pi2)?;
    let (r1, r2) = (two_agent_covariance(pi1), two_agent_covariance(pi2));
    TheoryInputs::new(
        vec![q, q],
        vec![r, r],
        vec![&r1 * 2.0, &r2 * 2.0],
        vec![&r1 * (4.0 * sigma1_sq), &r2 * (4.0 * sigma2_sq)],
    )
}
