//! Network topologies, combination matrices and the Perron/weight vectors.
//!
//! Combination matrices are left-stochastic: entry `(l, k)` is the weight agent
//! `k` places on neighbor `l`, every column sums to one, and entries outside
//! the neighborhood of `k` are zero. For `P = A1·A2` primitive, the Perron
//! vector `p` solves `P p = p` with unit sum and strictly positive entries, and
//! the agent weights are `q = diag(mu)·A2·p`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

/// Column-sum tolerance for left-stochastic checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Residual bound on `‖P p − p‖∞`.
pub const PERRON_TOL: f64 = 1e-10;

const POWER_ITERATION_TOL: f64 = 1e-12;
const POWER_ITERATION_CAP: usize = 1_000_000;
const DIRECT_SOLVE_MAX_AGENTS: usize = 1000;
const CONNECT_RETRIES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no agents")]
    Empty,
    #[error("agent {agent} out of range for a network of {agents} agents")]
    AgentOutOfRange { agent: usize, agents: usize },
    #[error("agent {agent} is missing from its own neighborhood")]
    MissingSelfLoop { agent: usize },
    #[error("agent {to} lists {from} as neighbor but not the other way round")]
    Asymmetric { from: usize, to: usize },
    #[error("topology is not connected")]
    Disconnected,
    #[error("could not draw a connected random topology after {0} attempts")]
    RetriesExhausted(usize),
    #[error("connection probability {0} is outside (0, 1]")]
    InvalidProbability(f64),
    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("entry ({row}, {col}) = {value} is negative or not finite")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("column {col} sums to {sum}, not 1")]
    ColumnSum { col: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is nonzero but agent {row} is not a neighbor of agent {col}")]
    OutsideNeighborhood { row: usize, col: usize, value: f64 },
    #[error("P = A1·A2 is not primitive; steady-state formulas are undefined")]
    NotPrimitive,
    #[error("Perron vector did not converge (residual {residual:e})")]
    PerronFailed { residual: f64 },
    #[error("step-size of agent {agent} must be positive and finite, got {value}")]
    StepSize { agent: usize, value: f64 },
    #[error("missing probability of agent {agent} must satisfy 0 <= r < 1, got {value}")]
    MissingProbability { agent: usize, value: f64 },
}

/// Undirected topology with self-loops; neighborhoods include the agent itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighborhoods: Vec<Vec<usize>>,
}

impl Topology {
    /// Validates explicit neighborhoods: self-loops, symmetry and connectivity.
    pub fn new(mut neighborhoods: Vec<Vec<usize>>) -> Result<Self, NetworkError> {
        let n = neighborhoods.len();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        for (k, hood) in neighborhoods.iter_mut().enumerate() {
            hood.sort_unstable();
            hood.dedup();
            if let Some(&bad) = hood.iter().find(|&&l| l >= n) {
                return Err(NetworkError::AgentOutOfRange { agent: bad, agents: n });
            }
            if hood.binary_search(&k).is_err() {
                return Err(NetworkError::MissingSelfLoop { agent: k });
            }
        }
        for k in 0..n {
            for &l in &neighborhoods[k] {
                if neighborhoods[l].binary_search(&k).is_err() {
                    return Err(NetworkError::Asymmetric { from: l, to: k });
                }
            }
        }
        let topology = Self { neighborhoods };
        if !topology.is_connected() {
            return Err(NetworkError::Disconnected);
        }
        Ok(topology)
    }

    /// Builds a topology from undirected edges; self-loops are always added.
    pub fn from_edges(agents: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        if agents == 0 {
            return Err(NetworkError::Empty);
        }
        let mut hoods: Vec<Vec<usize>> = (0..agents).map(|k| vec![k]).collect();
        for &(a, b) in edges {
            for x in [a, b] {
                if x >= agents {
                    return Err(NetworkError::AgentOutOfRange { agent: x, agents });
                }
            }
            hoods[a].push(b);
            hoods[b].push(a);
        }
        Self::new(hoods)
    }

    pub fn complete(agents: usize) -> Result<Self, NetworkError> {
        Self::new((0..agents).map(|_| (0..agents).collect()).collect())
    }

    pub fn path(agents: usize) -> Result<Self, NetworkError> {
        let edges: Vec<_> = (1..agents).map(|k| (k - 1, k)).collect();
        Self::from_edges(agents, &edges)
    }

    pub fn ring(agents: usize) -> Result<Self, NetworkError> {
        let mut edges: Vec<_> = (1..agents).map(|k| (k - 1, k)).collect();
        if agents > 2 {
            edges.push((agents - 1, 0));
        }
        Self::from_edges(agents, &edges)
    }

    /// Erdős–Rényi graph: every pair is linked with probability `probability`;
    /// redrawn until connected.
    pub fn erdos_renyi<R: Rng + ?Sized>(
        agents: usize,
        probability: f64,
        rng: &mut R,
    ) -> Result<Self, NetworkError> {
        if agents == 0 {
            return Err(NetworkError::Empty);
        }
        if !(probability > 0.0 && probability <= 1.0) {
            return Err(NetworkError::InvalidProbability(probability));
        }
        for _ in 0..CONNECT_RETRIES {
            let mut edges = Vec::new();
            for a in 0..agents {
                for b in (a + 1)..agents {
                    if rng.random::<f64>() < probability {
                        edges.push((a, b));
                    }
                }
            }
            match Self::from_edges(agents, &edges) {
                Ok(t) => return Ok(t),
                Err(NetworkError::Disconnected) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(NetworkError::RetriesExhausted(CONNECT_RETRIES))
    }

    pub fn agent_count(&self) -> usize {
        self.neighborhoods.len()
    }

    /// Sorted neighborhood of `k`, including `k`.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighborhoods[k]
    }

    /// `n_k = |N_k|`, self included.
    pub fn degree(&self, k: usize) -> usize {
        self.neighborhoods[k].len()
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.neighborhoods[a].binary_search(&b).is_ok()
    }

    /// Undirected edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, hood) in self.neighborhoods.iter().enumerate() {
            out.extend(hood.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    fn is_connected(&self) -> bool {
        let n = self.agent_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighborhoods[k] {
                if !seen[l] {
                    seen[l] = true;
                    queue.push_back(l);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// How combination weights are assigned over a topology.
#[derive(Debug, Clone, PartialEq)]
pub enum CombinationRule {
    Identity,
    /// `a_lk = 1/n_k` for every `l` in `N_k`.
    Averaging,
    /// `a_lk = 1/max(n_k, n_l)` for neighbors `l ≠ k`; the diagonal fills the column.
    Metropolis,
    Custom(DMatrix<f64>),
}

/// Builds an `N×N` left-stochastic combination matrix supported on `topology`.
pub fn build_combination_matrix(
    topology: &Topology,
    rule: &CombinationRule,
) -> Result<DMatrix<f64>, NetworkError> {
    let n = topology.agent_count();
    match rule {
        CombinationRule::Identity => Ok(DMatrix::identity(n, n)),
        CombinationRule::Averaging => {
            let mut a = DMatrix::zeros(n, n);
            for k in 0..n {
                let w = 1.0 / topology.degree(k) as f64;
                for &l in topology.neighbors(k) {
                    a[(l, k)] = w;
                }
            }
            Ok(a)
        }
        CombinationRule::Metropolis => {
            let mut a = DMatrix::zeros(n, n);
            for k in 0..n {
                let mut off = 0.0;
                for &l in topology.neighbors(k).iter().filter(|&&l| l != k) {
                    let w = 1.0 / topology.degree(k).max(topology.degree(l)) as f64;
                    a[(l, k)] = w;
                    off += w;
                }
                a[(k, k)] = 1.0 - off;
            }
            Ok(a)
        }
        CombinationRule::Custom(m) => {
            validate_left_stochastic(m)?;
            if m.nrows() != n {
                return Err(NetworkError::Dimension {
                    what: "custom combination matrix size",
                    expected: n,
                    found: m.nrows(),
                });
            }
            for k in 0..n {
                for l in 0..n {
                    if m[(l, k)] != 0.0 && !topology.are_neighbors(l, k) {
                        return Err(NetworkError::OutsideNeighborhood {
                            row: l,
                            col: k,
                            value: m[(l, k)],
                        });
                    }
                }
            }
            Ok(m.clone())
        }
    }
}

/// Checks nonnegativity and unit column sums.
pub fn validate_left_stochastic(m: &DMatrix<f64>) -> Result<(), NetworkError> {
    if !m.is_square() {
        return Err(NetworkError::Dimension {
            what: "combination matrix columns",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(NetworkError::Empty);
    }
    for k in 0..m.ncols() {
        let mut sum = 0.0;
        for l in 0..m.nrows() {
            let v = m[(l, k)];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(NetworkError::NegativeEntry { row: l, col: k, value: v });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(NetworkError::ColumnSum { col: k, sum });
        }
    }
    Ok(())
}

/// Primitivity of a nonnegative matrix: the boolean power at Wielandt's bound
/// `(N−1)² + 1` must be entrywise positive.
pub fn is_primitive(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let base: Vec<bool> = (0..n * n).map(|idx| p[(idx / n, idx % n)] > 0.0).collect();
    let mut exponent = (n - 1) * (n - 1) + 1;
    let mut result: Option<Vec<bool>> = None;
    let mut square = base;
    while exponent > 0 {
        if exponent & 1 == 1 {
            result = Some(match result {
                None => square.clone(),
                Some(r) => bool_mul(&r, &square, n),
            });
        }
        exponent >>= 1;
        if exponent > 0 {
            square = bool_mul(&square, &square, n);
        }
    }
    result.is_some_and(|r| r.into_iter().all(|b| b))
}

fn bool_mul(a: &[bool], b: &[bool], n: usize) -> Vec<bool> {
    let mut out = vec![false; n * n];
    for i in 0..n {
        for k in 0..n {
            if a[i * n + k] {
                for j in 0..n {
                    out[i * n + j] |= b[k * n + j];
                }
            }
        }
    }
    out
}

/// Unit-sum right eigenvector of a primitive left-stochastic `P` at eigenvalue one.
///
/// Solves `(P − I) p = 0` with the last equation replaced by `1ᵀp = 1`; power
/// iteration is used for very large networks or if the direct solve fails.
pub fn perron_vector(p: &DMatrix<f64>) -> Result<DVector<f64>, NetworkError> {
    let n = p.nrows();
    if n <= DIRECT_SOLVE_MAX_AGENTS {
        let mut system = p - DMatrix::identity(n, n);
        for j in 0..n {
            system[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        if let Some(sol) = system.lu().solve(&rhs) {
            if perron_residual(p, &sol) <= PERRON_TOL && sol.iter().all(|&v| v > 0.0) {
                return Ok(sol);
            }
        }
    }
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_ITERATION_CAP {
        let mut next = p * &v;
        let s = next.sum();
        next /= s;
        let delta = (&next - &v).amax();
        v = next;
        if delta <= POWER_ITERATION_TOL {
            break;
        }
    }
    let residual = perron_residual(p, &v);
    if residual <= PERRON_TOL && v.iter().all(|&x| x > 0.0) {
        Ok(v)
    } else {
        Err(NetworkError::PerronFailed { residual })
    }
}

/// `‖P p − p‖∞`.
pub fn perron_residual(p: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (p * v - v).amax()
}

/// Everything the steady-state formulas need from the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkAnalysis {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// `P = A1·A2`.
    pub p_matrix: DMatrix<f64>,
    pub primitive: bool,
    /// Perron vector of `P`.
    pub perron: DVector<f64>,
    /// `q = diag(mu)·A2·p`.
    pub q: DVector<f64>,
    pub mu: DVector<f64>,
    pub mu_max: f64,
    pub r: DVector<f64>,
}

impl NetworkAnalysis {
    pub fn agent_count(&self) -> usize {
        self.mu.len()
    }

    /// True when all missing probabilities are equal.
    pub fn uniform_r(&self) -> Option<f64> {
        uniform_value(self.r.as_slice())
    }
}

pub(crate) fn uniform_value(xs: &[f64]) -> Option<f64> {
    let first = *xs.first()?;
    xs.iter().all(|&x| x == first).then_some(first)
}

/// Validates the combination matrices, step-sizes and missing probabilities,
/// then computes `P`, the Perron vector and `q`.
pub fn analyze_network(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    mu: &[f64],
    r: &[f64],
) -> Result<NetworkAnalysis, NetworkError> {
    validate_left_stochastic(a1)?;
    validate_left_stochastic(a2)?;
    let n = a1.nrows();
    for (what, found) in [
        ("A2 size", a2.nrows()),
        ("step-size count", mu.len()),
        ("missing-probability count", r.len()),
    ] {
        if found != n {
            return Err(NetworkError::Dimension { what, expected: n, found });
        }
    }
    validate_step_sizes(mu)?;
    validate_missing_probabilities(r)?;

    let p_matrix = a1 * a2;
    let primitive = is_primitive(&p_matrix);
    if !primitive {
        return Err(NetworkError::NotPrimitive);
    }
    let perron = perron_vector(&p_matrix)?;
    let mu = DVector::from_column_slice(mu);
    let q = weight_vector(a2, &mu, &perron);
    let mu_max = mu.max();
    Ok(NetworkAnalysis {
        a1: a1.clone(),
        a2: a2.clone(),
        p_matrix,
        primitive,
        perron,
        q,
        mu,
        mu_max,
        r: DVector::from_column_slice(r),
    })
}

/// `q = diag(mu)·A2·p`.
pub fn weight_vector(a2: &DMatrix<f64>, mu: &DVector<f64>, perron: &DVector<f64>) -> DVector<f64> {
    (a2 * perron).component_mul(mu)
}

pub fn validate_step_sizes(mu: &[f64]) -> Result<(), NetworkError> {
    match mu.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
        Some(agent) => Err(NetworkError::StepSize { agent, value: mu[agent] }),
        None => Ok(()),
    }
}

pub fn validate_missing_probabilities(r: &[f64]) -> Result<(), NetworkError> {
    match r.iter().position(|&x| !(0.0..1.0).contains(&x)) {
        Some(agent) => Err(NetworkError::MissingProbability { agent, value: r[agent] }),
        None => Ok(()),
    }
}
