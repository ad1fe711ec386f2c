//! Per-agent risk models.
//!
//! Two families are supported:
//!
//! - mean-square error with linear data `d = u·w° + v`, where the regressor
//!   row `u` is Gaussian with covariance `R_u` and `v` is white noise with
//!   variance `σ²_v`; then `H = 2 R_u` and `G = 4 σ²_v R_u`;
//! - regularized logistic regression `ρ/2 ‖w‖² + E ln(1 + exp(−γ hᵀw))`,
//!   whose minimizer, Hessian and gradient-noise covariance are calibrated by a
//!   full-batch Newton solve over a fixed dataset.
//!
//! Sampling always goes through a caller-owned random stream, so concurrent
//! simulations can use disjoint streams over the same immutable model.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // float math is only inherent in `core` on recent toolchains
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("regressor covariance is not symmetric")]
    NotSymmetric,
    #[error("regressor covariance is not positive-definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("noise variance must be finite and nonnegative, got {0}")]
    NoiseVariance(f64),
    #[error("AR(1) coefficient must lie in (-1, 1), got {0}")]
    Ar1Coefficient(f64),
    #[error("regularization must be positive, got {0}")]
    Regularization(f64),
    #[error("calibration dataset has {size} samples, at least {min} required")]
    DatasetTooSmall { size: usize, min: usize },
    #[error("Newton solve stopped after {iterations} iterations with gradient norm {gradient_norm:e}")]
    NewtonDidNotConverge {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("{0} requires a quadratic (MSE) risk")]
    Unsupported(&'static str),
}

/// One streamed sample: a feature (regressor) row and a scalar target or label.
#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    pub features: Vec<f64>,
    pub target: f64,
}

impl Datum {
    pub fn zeros(dim: usize) -> Self {
        Self { features: vec![0.0; dim], target: 0.0 }
    }
}

/// Hessian and gradient-noise covariance at the minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentMoments {
    pub hessian: DMatrix<f64>,
    pub noise_covariance: DMatrix<f64>,
}

/// Regressor covariance specification.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorCovariance {
    /// Unit-variance AR(1) across entries: `R_u(m, n) = π^|m−n|`.
    Ar1 { pi: f64 },
    Explicit(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
enum RegressorSampler {
    Ar1 { pi: f64, innovation: f64 },
    Diagonal(Vec<f64>),
    /// Row-major symmetric square root of `R_u`.
    Dense(Vec<f64>),
}

/// Linear-regression agent with Gaussian regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct MseAgentModel {
    w_star: Vec<f64>,
    covariance: RegressorCovariance,
    r_u: DMatrix<f64>,
    sampler: RegressorSampler,
    sigma_v2: f64,
    sigma_v: f64,
}

impl MseAgentModel {
    pub fn new(
        w_star: Vec<f64>,
        covariance: RegressorCovariance,
        sigma_v2: f64,
    ) -> Result<Self, RiskError> {
        let m = w_star.len();
        if !(sigma_v2 >= 0.0 && sigma_v2.is_finite()) {
            return Err(RiskError::NoiseVariance(sigma_v2));
        }
        let (r_u, sampler) = match &covariance {
            RegressorCovariance::Ar1 { pi } => {
                if !(pi.abs() < 1.0) {
                    return Err(RiskError::Ar1Coefficient(*pi));
                }
                let r = DMatrix::from_fn(m, m, |i, j| pi.powi(i.abs_diff(j) as i32));
                let sampler = RegressorSampler::Ar1 { pi: *pi, innovation: (1.0 - pi * pi).sqrt() };
                (r, sampler)
            }
            RegressorCovariance::Explicit(r) => {
                if r.nrows() != m || r.ncols() != m {
                    return Err(RiskError::Dimension { expected: m, found: r.nrows() });
                }
                if !linalg::is_symmetric(r, 1e-12) {
                    return Err(RiskError::NotSymmetric);
                }
                let lmin = linalg::min_eigenvalue(r);
                if !(lmin > 0.0) {
                    return Err(RiskError::NotPositiveDefinite(lmin));
                }
                let is_diagonal = (0..m).all(|i| (0..m).all(|j| i == j || r[(i, j)] == 0.0));
                let sampler = if is_diagonal {
                    RegressorSampler::Diagonal(r.diagonal().iter().map(|v| v.sqrt()).collect())
                } else {
                    let f = linalg::sym_sqrt(r);
                    RegressorSampler::Dense((0..m * m).map(|idx| f[(idx / m, idx % m)]).collect())
                };
                (r.clone(), sampler)
            }
        };
        Ok(Self { w_star, covariance, r_u, sampler, sigma_v2, sigma_v: sigma_v2.sqrt() })
    }

    pub fn ar1(w_star: Vec<f64>, pi: f64, sigma_v2: f64) -> Result<Self, RiskError> {
        Self::new(w_star, RegressorCovariance::Ar1 { pi }, sigma_v2)
    }

    pub fn explicit(w_star: Vec<f64>, r_u: DMatrix<f64>, sigma_v2: f64) -> Result<Self, RiskError> {
        Self::new(w_star, RegressorCovariance::Explicit(r_u), sigma_v2)
    }

    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn covariance(&self) -> &RegressorCovariance {
        &self.covariance
    }

    pub fn regressor_covariance(&self) -> &DMatrix<f64> {
        &self.r_u
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma_v2
    }

    /// `(ν_d, δ_d) = (2 λ_min(R_u), 2 λ_max(R_u))`.
    pub fn hessian_bounds(&self) -> (f64, f64) {
        let eig = linalg::sym_eigen(&self.r_u).eigenvalues;
        (2.0 * eig.min(), 2.0 * eig.max())
    }

    /// Draws `u ~ N(0, R_u)` and `d = u·w° + v`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, datum: &mut Datum) {
        let m = self.dim();
        let u = &mut datum.features;
        match &self.sampler {
            RegressorSampler::Ar1 { pi, innovation } => {
                let mut prev: f64 = rng.sample(StandardNormal);
                u[0] = prev;
                for slot in u.iter_mut().take(m).skip(1) {
                    let t: f64 = rng.sample(StandardNormal);
                    prev = pi * prev + innovation * t;
                    *slot = prev;
                }
            }
            RegressorSampler::Diagonal(sd) => {
                for (slot, s) in u.iter_mut().zip(sd) {
                    let z: f64 = rng.sample(StandardNormal);
                    *slot = s * z;
                }
            }
            RegressorSampler::Dense(f) => {
                let mut z = [0.0_f64; 64];
                let mut heap;
                let z: &mut [f64] = if m <= z.len() {
                    &mut z[..m]
                } else {
                    heap = vec![0.0; m];
                    &mut heap
                };
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for (i, slot) in u.iter_mut().enumerate() {
                    *slot = f[i * m..(i + 1) * m].iter().zip(z.iter()).map(|(a, b)| a * b).sum();
                }
            }
        }
        let noise = if self.sigma_v > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            self.sigma_v * z
        } else {
            0.0
        };
        datum.target = dot(u, &self.w_star) + noise;
    }

    /// Instantaneous gradient `2 uᵀ(u w − d)`.
    pub fn gradient_into(&self, w: &[f64], datum: &Datum, out: &mut [f64]) {
        let residual = 2.0 * (dot(&datum.features, w) - datum.target);
        for (o, u) in out.iter_mut().zip(&datum.features) {
            *o = residual * u;
        }
    }

    /// True gradient `2 R_u (w − w°)`.
    pub fn true_gradient_into(&self, w: &[f64], out: &mut [f64]) {
        let m = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            *o = 2.0 * (0..m).map(|j| self.r_u[(i, j)] * (w[j] - self.w_star[j])).sum::<f64>();
        }
    }

    /// `J(w) − J(w°) = (w − w°)ᵀ R_u (w − w°)`.
    pub fn excess_risk(&self, w: &[f64]) -> f64 {
        let diff: Vec<f64> = w.iter().zip(&self.w_star).map(|(a, b)| a - b).collect();
        linalg::weighted_sq_norm(&diff, &self.r_u)
    }
}

/// `H = 2 R_u`, `G = 4 σ²_v R_u`.
pub fn mse_moments(model: &MseAgentModel) -> AgentMoments {
    AgentMoments {
        hessian: &model.r_u * 2.0,
        noise_covariance: &model.r_u * (4.0 * model.sigma_v2),
    }
}

/// A fixed logistic dataset: `features` is row-major `len × dim`, labels are ±1.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticData {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl LogisticData {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self, RiskError> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(RiskError::Dimension { expected: dim * labels.len(), found: features.len() });
        }
        Ok(Self { dim, features, labels })
    }

    /// Draws `len` samples with i.i.d. standard-normal features and labels
    /// `γ = +1` with probability `sigmoid(hᵀ label_weights)`, else `−1`.
    pub fn generate<R: Rng + ?Sized>(len: usize, label_weights: &[f64], rng: &mut R) -> Self {
        let dim = label_weights.len();
        let mut features = Vec::with_capacity(len * dim);
        let mut labels = Vec::with_capacity(len);
        let mut h = vec![0.0; dim];
        for _ in 0..len {
            let label = draw_logistic_sample(label_weights, &mut h, rng);
            features.extend_from_slice(&h);
            labels.push(label);
        }
        Self { dim, features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }
}

fn draw_logistic_sample<R: Rng + ?Sized>(label_weights: &[f64], h: &mut [f64], rng: &mut R) -> f64 {
    for x in h.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
    let p = sigmoid(dot(h, label_weights));
    if rng.random::<f64>() < p {
        1.0
    } else {
        -1.0
    }
}

/// Where the streamed logistic samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum LogisticSampling {
    /// Uniform resampling of the calibration dataset; the calibrated `w°`, `H`
    /// and `G` are then exact for the streamed data.
    Dataset,
    /// Fresh draws from the generating law with the given label weights.
    Fresh { label_weights: Vec<f64> },
}

/// Newton-solver settings for logistic calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub gradient_tol: f64,
    pub max_iterations: usize,
    pub min_dataset_size: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { gradient_tol: 1e-10, max_iterations: 100, min_dataset_size: 10_000 }
    }
}

/// Calibrated logistic agent shared by all agents of a uniform-cost network.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticAgentModel {
    rho: f64,
    data: LogisticData,
    sampling: LogisticSampling,
    w_star: Vec<f64>,
    moments: AgentMoments,
    gradient_norm: f64,
    newton_iterations: usize,
}

impl LogisticAgentModel {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn moments(&self) -> &AgentMoments {
        &self.moments
    }

    pub fn data(&self) -> &LogisticData {
        &self.data
    }

    pub fn sampling(&self) -> &LogisticSampling {
        &self.sampling
    }

    /// Gradient norm of the empirical risk at the calibrated minimizer.
    pub fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, datum: &mut Datum) {
        match &self.sampling {
            LogisticSampling::Dataset => {
                let i = rng.random_range(0..self.data.len());
                datum.features.copy_from_slice(self.data.row(i));
                datum.target = self.data.label(i);
            }
            LogisticSampling::Fresh { label_weights } => {
                datum.target = draw_logistic_sample(label_weights, &mut datum.features, rng);
            }
        }
    }

    /// Per-sample gradient `ρ w − γ h / (1 + exp(γ hᵀw))`.
    pub fn gradient_into(&self, w: &[f64], datum: &Datum, out: &mut [f64]) {
        let gamma = datum.target;
        let scale = gamma * sigmoid(-gamma * dot(&datum.features, w));
        for ((o, wi), h) in out.iter_mut().zip(w).zip(&datum.features) {
            *o = self.rho * wi - scale * h;
        }
    }

    /// Empirical risk `ρ/2 ‖w‖² + mean ln(1 + exp(−γ hᵀw))` over the dataset.
    pub fn empirical_risk(&self, w: &[f64]) -> f64 {
        empirical_risk(&self.data, self.rho, w)
    }

    /// Full-dataset gradient.
    pub fn empirical_gradient(&self, w: &[f64]) -> Vec<f64> {
        newton_pass(&self.data, self.rho, w, false).0
    }
}

/// Finds the regularized empirical-risk minimizer of `data` by damped Newton
/// iterations, then forms `H` (empirical Hessian) and `G` (second moment of
/// per-sample gradients) at that point.
pub fn logistic_calibrate(
    rho: f64,
    data: LogisticData,
    sampling: LogisticSampling,
    options: NewtonOptions,
) -> Result<LogisticAgentModel, RiskError> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(RiskError::Regularization(rho));
    }
    if data.len() < options.min_dataset_size.max(1) {
        return Err(RiskError::DatasetTooSmall { size: data.len(), min: options.min_dataset_size.max(1) });
    }
    if let LogisticSampling::Fresh { label_weights } = &sampling {
        if label_weights.len() != data.dim {
            return Err(RiskError::Dimension { expected: data.dim, found: label_weights.len() });
        }
    }
    let m = data.dim;
    let mut w = vec![0.0; m];
    let mut iterations = 0;
    let mut risk = empirical_risk(&data, rho, &w);
    let gradient_norm = loop {
        let (g, h) = newton_pass(&data, rho, &w, true);
        let gnorm = linalg::sq_norm(&g).sqrt();
        if gnorm <= options.gradient_tol {
            break gnorm;
        }
        if iterations >= options.max_iterations {
            return Err(RiskError::NewtonDidNotConverge { iterations, gradient_norm: gnorm });
        }
        iterations += 1;
        let step = match h.cholesky() {
            Some(c) => c.solve(&nalgebra::DVector::from_column_slice(&g)),
            None => return Err(RiskError::NewtonDidNotConverge { iterations, gradient_norm: gnorm }),
        };
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(wi, si)| wi - t * si).collect();
            let trial_risk = empirical_risk(&data, rho, &trial);
            if trial_risk <= risk + 1e-15 * risk.abs() || t < 1e-12 {
                w = trial;
                risk = trial_risk;
                break;
            }
            t *= 0.5;
        }
    };

    let mut hessian = newton_pass(&data, rho, &w, true).1;
    hessian = linalg::symmetrize(&hessian);
    let mut noise = DMatrix::zeros(m, m);
    let mut g = vec![0.0; m];
    for i in 0..data.len() {
        let h = data.row(i);
        let gamma = data.label(i);
        let scale = gamma * sigmoid(-gamma * dot(h, &w));
        for j in 0..m {
            g[j] = rho * w[j] - scale * h[j];
        }
        for a in 0..m {
            for b in a..m {
                noise[(a, b)] += g[a] * g[b];
            }
        }
    }
    let n = data.len() as f64;
    for a in 0..m {
        for b in a..m {
            let v = noise[(a, b)] / n;
            noise[(a, b)] = v;
            noise[(b, a)] = v;
        }
    }
    Ok(LogisticAgentModel {
        rho,
        data,
        sampling,
        w_star: w,
        moments: AgentMoments { hessian, noise_covariance: noise },
        gradient_norm,
        newton_iterations: iterations,
    })
}

fn empirical_risk(data: &LogisticData, rho: f64, w: &[f64]) -> f64 {
    let loss: f64 = (0..data.len())
        .map(|i| softplus(-data.label(i) * dot(data.row(i), w)))
        .sum();
    0.5 * rho * linalg::sq_norm(w) + loss / data.len() as f64
}

/// Mean gradient and (optionally) Hessian of the empirical risk at `w`.
fn newton_pass(data: &LogisticData, rho: f64, w: &[f64], with_hessian: bool) -> (Vec<f64>, DMatrix<f64>) {
    let m = data.dim;
    let mut g = vec![0.0; m];
    let mut h = DMatrix::zeros(if with_hessian { m } else { 0 }, if with_hessian { m } else { 0 });
    for i in 0..data.len() {
        let x = data.row(i);
        let gamma = data.label(i);
        let z = gamma * dot(x, w);
        let s = sigmoid(-z);
        for j in 0..m {
            g[j] -= gamma * s * x[j];
        }
        if with_hessian {
            let c = s * sigmoid(z);
            for a in 0..m {
                let ca = c * x[a];
                for b in a..m {
                    h[(a, b)] += ca * x[b];
                }
            }
        }
    }
    let n = data.len() as f64;
    for j in 0..m {
        g[j] = g[j] / n + rho * w[j];
    }
    if with_hessian {
        for a in 0..m {
            for b in a..m {
                let v = h[(a, b)] / n + if a == b { rho } else { 0.0 };
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
    }
    (g, h)
}

/// Risk attached to one agent.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskModel {
    Mse(MseAgentModel),
    Logistic(Arc<LogisticAgentModel>),
}

impl RiskModel {
    pub fn dim(&self) -> usize {
        match self {
            Self::Mse(m) => m.dim(),
            Self::Logistic(m) => m.dim(),
        }
    }

    pub fn minimizer(&self) -> &[f64] {
        match self {
            Self::Mse(m) => m.w_star(),
            Self::Logistic(m) => m.w_star(),
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Self::Mse(_))
    }

    pub fn moments(&self) -> AgentMoments {
        match self {
            Self::Mse(m) => mse_moments(m),
            Self::Logistic(m) => m.moments().clone(),
        }
    }

    /// Draws one datum into `datum` (whose feature buffer must have length `dim`).
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, datum: &mut Datum) {
        match self {
            Self::Mse(m) => m.sample(rng, datum),
            Self::Logistic(m) => m.sample(rng, datum),
        }
    }

    /// Unchecked stochastic gradient into `out`.
    #[inline]
    pub fn gradient_into(&self, w: &[f64], datum: &Datum, out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.dim());
        match self {
            Self::Mse(m) => m.gradient_into(w, datum, out),
            Self::Logistic(m) => m.gradient_into(w, datum, out),
        }
    }

    /// Stochastic gradient at `w` for `datum`, with dimension checks.
    pub fn stochastic_gradient(&self, w: &[f64], datum: &Datum) -> Result<Vec<f64>, RiskError> {
        let m = self.dim();
        for found in [w.len(), datum.features.len()] {
            if found != m {
                return Err(RiskError::Dimension { expected: m, found });
            }
        }
        let mut out = vec![0.0; m];
        self.gradient_into(w, datum, &mut out);
        Ok(out)
    }

    /// Exact gradient of the agent risk; only available for quadratic risks.
    pub fn true_gradient_into(&self, w: &[f64], out: &mut [f64]) -> Result<(), RiskError> {
        match self {
            Self::Mse(m) => {
                m.true_gradient_into(w, out);
                Ok(())
            }
            Self::Logistic(_) => Err(RiskError::Unsupported("exact gradient")),
        }
    }

    /// `J(w) − J(w°)` evaluated through the risk itself.
    pub fn excess_risk(&self, w: &[f64]) -> f64 {
        match self {
            Self::Mse(m) => m.excess_risk(w),
            Self::Logistic(m) => m.empirical_risk(w) - m.empirical_risk(m.w_star()),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
