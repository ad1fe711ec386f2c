//! The masked diffusion engine.
//!
//! One iteration for every agent `k`:
//!
//! ```text
//! φ_k = Σ_l a1[l,k] w_l              (pre-combination)
//! ψ_k = φ_k − μ_k Γ_k ĝ_k(φ_k)       (masked adaptation)
//! w_k = Σ_l a2[l,k] ψ_l              (post-combination)
//! ```
//!
//! `Γ_k` is a fresh diagonal 0/1 mask whose entries are zero independently
//! with probability `r_k`. Entries with a zero mask are copied from `φ_k`
//! unchanged.
//!
//! # Random streams
//!
//! Every run owns two ChaCha8 streams per agent, one for data and one for
//! masks. The key is derived from the master seed with
//! `ChaCha8Rng::seed_from_u64(seed)`, and the 64-bit stream id is
//! `run << 32 | agent << 1 | kind` (kind 0 = data, 1 = mask). Streams with the
//! top bit set are reserved for [`auxiliary_stream`]. Full-gradient runs never
//! touch the mask streams, so a masked run with `r = 0` reproduces the
//! full-gradient run bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // float math is only inherent in `core` on recent toolchains
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg;
use crate::network::NetworkAnalysis;
use crate::risks::{Datum, RiskError, RiskModel};

/// Iterates with a norm beyond this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("missing probability must satisfy 0 <= r < 1, got {0}")]
    MissingProbability(f64),
    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("agent {agent} has a different minimizer from agent 0")]
    MinimizerMismatch { agent: usize },
    #[error("iterate of agent {agent} diverged at iteration {iteration}; step-sizes are outside the stability range")]
    Diverged { iteration: u64, agent: usize },
    #[error("weighted Hessian is not positive-definite")]
    HessianNotPositiveDefinite,
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// Whether the adaptation step uses the full gradient or a random subset of entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Masking {
    FullGradient,
    Coordinate,
}

/// Diagonal of one `Γ_k,i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    indicator: Vec<bool>,
}

impl Mask {
    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn ones(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.indicator.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Draws `dim` independent entries, each zero with probability `r`.
pub fn sample_mask<R: Rng + ?Sized>(r: f64, dim: usize, rng: &mut R) -> Result<Mask, DiffusionError> {
    if !(0.0..1.0).contains(&r) {
        return Err(DiffusionError::MissingProbability(r));
    }
    let mut indicator = vec![false; dim];
    fill_mask(r, &mut indicator, rng);
    Ok(Mask { indicator })
}

#[inline]
fn fill_mask<R: Rng + ?Sized>(r: f64, out: &mut [bool], rng: &mut R) {
    for slot in out {
        *slot = rng.random::<f64>() >= r;
    }
}

/// Which per-agent stream to open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Data = 0,
    Mask = 1,
}

/// Per-(run, agent, kind) substream of the master seed.
pub fn substream(seed: u64, run: u64, agent: usize, kind: StreamKind) -> ChaCha8Rng {
    assert!(run < (1 << 31), "run index out of range");
    assert!(agent < (1 << 31), "agent index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((run << 32) | ((agent as u64) << 1) | kind as u64);
    rng
}

/// Stream for scenario-level draws that must not collide with run streams.
pub fn auxiliary_stream(seed: u64, tag: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 63) | tag as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
struct SparseColumns {
    identity: bool,
    /// For column `k`, `entries[start[k]..start[k+1]]` holds `(l, a_lk)`.
    start: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl SparseColumns {
    fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let identity = *a == DMatrix::identity(n, n);
        let mut start = Vec::with_capacity(n + 1);
        let mut entries = Vec::new();
        start.push(0);
        for k in 0..n {
            for l in 0..n {
                if a[(l, k)] != 0.0 {
                    entries.push((l, a[(l, k)]));
                }
            }
            start.push(entries.len());
        }
        Self { identity, start, entries }
    }

    /// `out_k = Σ_l a[l,k] x_l` for every agent, blocks of length `m`.
    #[inline]
    fn combine(&self, x: &[f64], out: &mut [f64], m: usize) {
        if self.identity {
            out.copy_from_slice(x);
            return;
        }
        for (k, block) in out.chunks_exact_mut(m).enumerate() {
            block.fill(0.0);
            for &(l, a) in &self.entries[self.start[k]..self.start[k + 1]] {
                for (o, v) in block.iter_mut().zip(&x[l * m..(l + 1) * m]) {
                    *o += a * v;
                }
            }
        }
    }
}

/// Immutable description of one learning problem: network, agents and the
/// quantities needed to score errors.
#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    analysis: NetworkAnalysis,
    models: Vec<RiskModel>,
    w_star: Vec<f64>,
    hbar: DMatrix<f64>,
    /// Row-major upper Cholesky factor `U` of `H̄ = UᵀU`.
    hbar_factor: Vec<f64>,
    a1: SparseColumns,
    a2: SparseColumns,
}

impl DiffusionProblem {
    pub fn new(analysis: NetworkAnalysis, models: Vec<RiskModel>) -> Result<Self, DiffusionError> {
        let n = analysis.agent_count();
        if models.len() != n {
            return Err(DiffusionError::Dimension { what: "agent models", expected: n, found: models.len() });
        }
        let m = models[0].dim();
        let w_star = models[0].minimizer().to_vec();
        let scale = linalg::sq_norm(&w_star).sqrt().max(1.0);
        for (k, model) in models.iter().enumerate() {
            if model.dim() != m {
                return Err(DiffusionError::Dimension { what: "model dimension", expected: m, found: model.dim() });
            }
            let gap = model.minimizer().iter().zip(&w_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap > 1e-12 * scale {
                return Err(DiffusionError::MinimizerMismatch { agent: k });
            }
        }
        let q_sum: f64 = analysis.q.sum();
        let mut hbar = DMatrix::zeros(m, m);
        for (k, model) in models.iter().enumerate() {
            hbar += model.moments().hessian * analysis.q[k];
        }
        hbar /= q_sum;
        let hbar = linalg::symmetrize(&hbar);
        let chol = hbar.clone().cholesky().ok_or(DiffusionError::HessianNotPositiveDefinite)?;
        let lt = chol.l().transpose();
        let hbar_factor = (0..m * m).map(|idx| lt[(idx / m, idx % m)]).collect();
        let a1 = SparseColumns::new(&analysis.a1);
        let a2 = SparseColumns::new(&analysis.a2);
        Ok(Self { analysis, models, w_star, hbar, hbar_factor, a1, a2 })
    }

    pub fn analysis(&self) -> &NetworkAnalysis {
        &self.analysis
    }

    pub fn models(&self) -> &[RiskModel] {
        &self.models
    }

    pub fn agent_count(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    /// `H̄ = (Σ q_k)⁻¹ Σ q_k H_k`.
    pub fn hbar(&self) -> &DMatrix<f64> {
        &self.hbar
    }

    /// `½ ‖x‖²_H̄` through the Cholesky factor.
    #[inline]
    pub fn half_hbar_norm(&self, x: &[f64]) -> f64 {
        let m = x.len();
        let mut acc = 0.0;
        for i in 0..m {
            let row = &self.hbar_factor[i * m..(i + 1) * m];
            let mut v = 0.0;
            for j in i..m {
                v += row[j] * x[j];
            }
            acc += v * v;
        }
        0.5 * acc
    }
}

/// Per-step record of intermediate quantities, filled by [`DiffusionState::step_traced`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepTrace {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// `N × M` mask entries, agent-major.
    pub masks: Vec<bool>,
    /// Gradient noise `ĝ_k(φ_k) − ∇J_k(φ_k)`; only filled for quadratic risks.
    pub noise: Option<Vec<f64>>,
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct DiffusionState {
    masking: Masking,
    n: usize,
    m: usize,
    w: Vec<f64>,
    phi: Vec<f64>,
    psi: Vec<f64>,
    grad: Vec<f64>,
    mask: Vec<bool>,
    datum: Datum,
    iteration: u64,
    data_rngs: Vec<ChaCha8Rng>,
    mask_rngs: Vec<ChaCha8Rng>,
}

impl DiffusionState {
    /// Fresh run with `w_{k,−1} = 0` for every agent.
    pub fn new(problem: &DiffusionProblem, masking: Masking, seed: u64, run: u64) -> Self {
        let n = problem.agent_count();
        let m = problem.dim();
        Self {
            masking,
            n,
            m,
            w: vec![0.0; n * m],
            phi: vec![0.0; n * m],
            psi: vec![0.0; n * m],
            grad: vec![0.0; m],
            mask: vec![true; m],
            datum: Datum::zeros(m),
            iteration: 0,
            data_rngs: (0..n).map(|k| substream(seed, run, k, StreamKind::Data)).collect(),
            mask_rngs: (0..n).map(|k| substream(seed, run, k, StreamKind::Mask)).collect(),
        }
    }

    pub fn masking(&self) -> Masking {
        self.masking
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// All iterates, agent-major `N × M`.
    pub fn iterates(&self) -> &[f64] {
        &self.w
    }

    pub fn iterate(&self, k: usize) -> &[f64] {
        &self.w[k * self.m..(k + 1) * self.m]
    }

    /// Network error vector `w° − w_k` stacked over agents.
    pub fn error_vector(&self, problem: &DiffusionProblem) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w.len());
        for k in 0..self.n {
            out.extend(problem.w_star.iter().zip(self.iterate(k)).map(|(a, b)| a - b));
        }
        out
    }

    pub fn step(&mut self, problem: &DiffusionProblem) -> Result<(), DiffusionError> {
        self.advance(problem, None)
    }

    pub fn step_traced(&mut self, problem: &DiffusionProblem, trace: &mut StepTrace) -> Result<(), DiffusionError> {
        self.advance(problem, Some(trace))
    }

    fn advance(&mut self, problem: &DiffusionProblem, mut trace: Option<&mut StepTrace>) -> Result<(), DiffusionError> {
        let (n, m) = (self.n, self.m);
        let r = problem.analysis.r.as_slice();
        let mu = problem.analysis.mu.as_slice();
        if let Some(t) = trace.as_deref_mut() {
            t.masks.clear();
            t.noise = problem.models.iter().all(RiskModel::is_quadratic).then(|| Vec::with_capacity(n * m));
        }

        problem.a1.combine(&self.w, &mut self.phi, m);

        for k in 0..n {
            let model = &problem.models[k];
            model.sample(&mut self.data_rngs[k], &mut self.datum);
            if self.masking == Masking::Coordinate {
                fill_mask(r[k], &mut self.mask, &mut self.mask_rngs[k]);
            }
            let phi_k = &self.phi[k * m..(k + 1) * m];
            model.gradient_into(phi_k, &self.datum, &mut self.grad);
            let psi_k = &mut self.psi[k * m..(k + 1) * m];
            for j in 0..m {
                psi_k[j] = if self.mask[j] { phi_k[j] - mu[k] * self.grad[j] } else { phi_k[j] };
            }
            if let Some(t) = trace.as_deref_mut() {
                t.masks.extend_from_slice(&self.mask);
                if let Some(noise) = t.noise.as_mut() {
                    let mut exact = vec![0.0; m];
                    model.true_gradient_into(phi_k, &mut exact)?;
                    noise.extend(self.grad.iter().zip(&exact).map(|(g, e)| g - e));
                }
            }
        }

        problem.a2.combine(&self.psi, &mut self.w, m);

        if let Some(t) = trace {
            t.phi.clone_from(&self.phi);
            t.psi.clone_from(&self.psi);
        }
        let limit = DIVERGENCE_LIMIT * DIVERGENCE_LIMIT;
        for (k, block) in self.w.chunks_exact(m).enumerate() {
            let norm = linalg::sq_norm(block);
            if !(norm <= limit) {
                return Err(DiffusionError::Diverged { iteration: self.iteration, agent: k });
            }
        }
        self.iteration += 1;
        Ok(())
    }

    /// Per-agent `‖w° − w_k‖²` and `½‖w° − w_k‖²_H̄` into the two output slices.
    pub fn agent_errors(&self, problem: &DiffusionProblem, squared: &mut [f64], weighted: &mut [f64]) {
        let mut diff = vec![0.0; self.m];
        for k in 0..self.n {
            for (d, (a, b)) in diff.iter_mut().zip(problem.w_star.iter().zip(self.iterate(k))) {
                *d = a - b;
            }
            squared[k] = linalg::sq_norm(&diff);
            weighted[k] = problem.half_hbar_norm(&diff);
        }
    }

    /// Network averages `(1/N) Σ ‖w̃_k‖²` and, when requested, `(1/N) Σ ½‖w̃_k‖²_H̄`.
    #[inline]
    pub fn network_errors(&self, problem: &DiffusionProblem, with_er: bool) -> (f64, f64) {
        let mut msd = 0.0;
        let mut er = 0.0;
        let mut diff = [0.0_f64; 64];
        let mut heap;
        let diff: &mut [f64] = if self.m <= diff.len() {
            &mut diff[..self.m]
        } else {
            heap = vec![0.0; self.m];
            &mut heap
        };
        for block in self.w.chunks_exact(self.m) {
            for (d, (a, b)) in diff.iter_mut().zip(problem.w_star.iter().zip(block)) {
                *d = a - b;
            }
            msd += linalg::sq_norm(diff);
            if with_er {
                er += problem.half_hbar_norm(diff);
            }
        }
        let n = self.n as f64;
        (msd / n, er / n)
    }

    /// Network-average excess risk evaluated through each agent's risk function:
    /// `(1/N) Σ_k [J̄(w_k) − J̄(w°)]` with `J̄ = (Σ q)⁻¹ Σ q_l J_l`.
    pub fn network_excess_risk(&self, problem: &DiffusionProblem) -> f64 {
        let q = &problem.analysis.q;
        let q_sum = q.sum();
        let mut total = 0.0;
        for k in 0..self.n {
            let w = self.iterate(k);
            let jbar: f64 = problem.models.iter().zip(q.iter()).map(|(model, ql)| ql * model.excess_risk(w)).sum();
            total += jbar / q_sum;
        }
        total / self.n as f64
    }
}

/// Per-iteration, per-agent error records of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub agents: usize,
    /// `T × N`, iteration-major: `‖w° − w_k,i‖²`.
    pub squared_error: Vec<f64>,
    /// `T × N`: `½‖w° − w_k,i‖²_H̄`.
    pub weighted_error: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.squared_error.len() / self.agents
    }

    pub fn is_empty(&self) -> bool {
        self.squared_error.is_empty()
    }

    pub fn squared(&self, i: usize) -> &[f64] {
        &self.squared_error[i * self.agents..(i + 1) * self.agents]
    }

    pub fn weighted(&self, i: usize) -> &[f64] {
        &self.weighted_error[i * self.agents..(i + 1) * self.agents]
    }

    pub fn msd_average(&self, i: usize) -> f64 {
        self.squared(i).iter().sum::<f64>() / self.agents as f64
    }

    pub fn er_average(&self, i: usize) -> f64 {
        self.weighted(i).iter().sum::<f64>() / self.agents as f64
    }
}

/// Runs `iterations` steps from zero and records the errors after each step.
pub fn run_trajectory(
    problem: &DiffusionProblem,
    masking: Masking,
    iterations: usize,
    seed: u64,
    run: u64,
) -> Result<Trajectory, DiffusionError> {
    let n = problem.agent_count();
    let mut state = DiffusionState::new(problem, masking, seed, run);
    let mut squared_error = vec![0.0; iterations * n];
    let mut weighted_error = vec![0.0; iterations * n];
    for i in 0..iterations {
        state.step(problem)?;
        state.agent_errors(
            problem,
            &mut squared_error[i * n..(i + 1) * n],
            &mut weighted_error[i * n..(i + 1) * n],
        );
    }
    Ok(Trajectory { agents: n, squared_error, weighted_error })
}

/// One step of the linear error recursion
/// `w̃_i = 𝓐2ᵀ (I − 𝓜 Γ_i 𝓗) 𝓐1ᵀ w̃_{i−1} + 𝓐2ᵀ 𝓜 Γ_i s_i`,
/// assembled with explicit Kronecker products. Exact for quadratic risks,
/// whose Hessians do not depend on the evaluation point.
pub fn error_recursion(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    mu: &[f64],
    hessians: &[DMatrix<f64>],
    prev_error: &[f64],
    masks: &[bool],
    noise: &[f64],
) -> Result<Vec<f64>, DiffusionError> {
    let n = mu.len();
    let m = hessians.first().map_or(0, DMatrix::nrows);
    let nm = n * m;
    for (what, found) in [
        ("Hessian blocks", hessians.len() * m),
        ("previous error", prev_error.len()),
        ("masks", masks.len()),
        ("noise", noise.len()),
    ] {
        if found != nm {
            return Err(DiffusionError::Dimension { what, expected: nm, found });
        }
    }
    let eye = DMatrix::<f64>::identity(m, m);
    let big_a1 = a1.kronecker(&eye);
    let big_a2 = a2.kronecker(&eye);
    let step = DMatrix::from_diagonal(&DVector::from_fn(nm, |idx, _| mu[idx / m]));
    let gamma = DMatrix::from_diagonal(&DVector::from_fn(nm, |idx, _| if masks[idx] { 1.0 } else { 0.0 }));
    let mut big_h = DMatrix::zeros(nm, nm);
    for (k, h) in hessians.iter().enumerate() {
        big_h.view_mut((k * m, k * m), (m, m)).copy_from(h);
    }
    let coupling = &big_a2.transpose()
        * (DMatrix::identity(nm, nm) - &step * &gamma * &big_h)
        * big_a1.transpose();
    let driven = big_a2.transpose() * &step * &gamma * DVector::from_column_slice(noise);
    let next = coupling * DVector::from_column_slice(prev_error) + driven;
    Ok(next.as_slice().to_vec())
}

/// [`error_recursion`] with the network and Hessians of `problem`; quadratic risks only.
pub fn error_recursion_reference(
    problem: &DiffusionProblem,
    prev_error: &[f64],
    masks: &[bool],
    noise: &[f64],
) -> Result<Vec<f64>, DiffusionError> {
    if !problem.models.iter().all(RiskModel::is_quadratic) {
        return Err(RiskError::Unsupported("error recursion reference").into());
    }
    let hessians: Vec<_> = problem.models.iter().map(|m| m.moments().hessian).collect();
    error_recursion(
        &problem.analysis.a1,
        &problem.analysis.a2,
        problem.analysis.mu.as_slice(),
        &hessians,
        prev_error,
        masks,
        noise,
    )
}
