//! Turning a [`Config`] into a fully explicit [`Scenario`] and a runnable problem.

use std::sync::Arc;

use coordiff_core::diffusion::{auxiliary_stream, DiffusionProblem};
use coordiff_core::network::{analyze_network, build_combination_matrix, CombinationRule, Topology};
use coordiff_core::risks::{
    logistic_calibrate, LogisticData, LogisticSampling, MseAgentModel, NewtonOptions, RegressorCovariance, RiskModel,
};
use coordiff_core::theory::{two_agent_covariance, CostModel, DiagnosticsContext, TheoryInputs};
use coordiff_core::{linalg, DMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::cli::config::{
    CombinationConfig, Config, ConfigError, CostConfig, Metric, NetworkConfig, Pairing, Param, RegressorConfig,
    RiskConfig, RuleName, SamplingConfig, TopologyConfig, UniformRange,
};

const TAG_TOPOLOGY: u32 = 1;
const TAG_STEP_SIZES: u32 = 2;
const TAG_MISSING: u32 = 3;
const TAG_W_STAR: u32 = 4;
const TAG_REGRESSORS: u32 = 5;
const TAG_NOISE: u32 = 6;
const TAG_LABEL_WEIGHTS: u32 = 7;
const TAG_DATA_SEED: u32 = 8;

/// Per-agent regressor statistics after all draws.
#[derive(Debug, Clone, PartialEq)]
pub enum Regressors {
    Ar1(Vec<f64>),
    White(Vec<Vec<f64>>),
    Corner(Vec<f64>),
    Explicit(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RiskScenario {
    Mse {
        w_star: Vec<f64>,
        regressors: Regressors,
        noise_variance: Vec<f64>,
    },
    Logistic {
        rho: f64,
        samples: usize,
        label_weights: Vec<f64>,
        sampling: SamplingConfig,
        data_seed: u64,
    },
}

/// A scenario with every random parameter drawn and recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub runs: usize,
    pub horizon: Option<usize>,
    pub metrics: Vec<Metric>,
    pub costs: CostConfig,
    pub topology: TopologyConfig,
    pub a1: CombinationConfig,
    pub a2: CombinationConfig,
    pub mu: Vec<f64>,
    pub r: Vec<f64>,
    pub pairing: Pairing,
    pub risk: RiskScenario,
}

/// A scenario ready to simulate, with its theory inputs.
#[derive(Debug, Clone)]
pub struct Built {
    pub problem: DiffusionProblem,
    pub theory: TheoryInputs,
    pub context: DiagnosticsContext,
    pub costs: CostModel,
}

fn resolve_agents(
    field: &str,
    param: &Param,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, ConfigError> {
    match param {
        Param::Scalar(v) => Ok(vec![*v; n]),
        Param::List(v) if v.len() == n => Ok(v.clone()),
        Param::List(v) => Err(ConfigError::invalid(field, format!("expected {n} values, found {}", v.len()))),
        Param::Rows(_) => Err(ConfigError::invalid(field, "expected a scalar, a list or a uniform range")),
        Param::Uniform(range) => {
            let [lo, hi] = check_range(field, range)?;
            Ok((0..n).map(|_| rng.random_range(lo..hi)).collect())
        }
    }
}

fn resolve_rows(
    field: &str,
    param: &Param,
    n: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>, ConfigError> {
    match param {
        Param::Scalar(v) => Ok(vec![vec![*v; m]; n]),
        Param::List(row) if row.len() == m => Ok(vec![row.clone(); n]),
        Param::List(row) => Err(ConfigError::invalid(field, format!("expected {m} values, found {}", row.len()))),
        Param::Rows(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != m) {
                return Err(ConfigError::invalid(field, format!("expected {n} rows of {m} values")));
            }
            Ok(rows.clone())
        }
        Param::Uniform(range) => {
            let [lo, hi] = check_range(field, range)?;
            Ok((0..n).map(|_| (0..m).map(|_| rng.random_range(lo..hi)).collect()).collect())
        }
    }
}

fn check_range(field: &str, range: &UniformRange) -> Result<[f64; 2], ConfigError> {
    let [lo, hi] = range.uniform;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(ConfigError::invalid(field, format!("uniform range [{lo}, {hi}] must satisfy lo < hi")));
    }
    Ok([lo, hi])
}

fn require_positive(field: &str, values: &[f64]) -> Result<(), ConfigError> {
    match values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        Some(k) => Err(ConfigError::invalid(format!("{field}[{k}]"), format!("{} must be positive", values[k]))),
        None => Ok(()),
    }
}

fn require_probability(field: &str, values: &[f64]) -> Result<(), ConfigError> {
    match values.iter().position(|v| !(0.0..1.0).contains(v)) {
        Some(k) => Err(ConfigError::invalid(
            format!("{field}[{k}]"),
            format!("r_k = {} violates the constraint 0 <= r_k < 1", values[k]),
        )),
        None => Ok(()),
    }
}

fn require_coefficients(field: &str, values: &[f64]) -> Result<(), ConfigError> {
    match values.iter().position(|v| !(v.abs() < 1.0)) {
        Some(k) => Err(ConfigError::invalid(format!("{field}[{k}]"), format!("|{}| must be below 1", values[k]))),
        None => Ok(()),
    }
}

fn gaussian_vector(m: usize, std_dev: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| std_dev * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Ranks `values` so that position `i` holds the element of rank `order[i]`.
fn pair(mu: &[f64], r: &mut [f64], pairing: Pairing) {
    if pairing == Pairing::Independent {
        return;
    }
    let mut by_mu: Vec<usize> = (0..mu.len()).collect();
    by_mu.sort_by(|&a, &b| mu[a].total_cmp(&mu[b]).then(a.cmp(&b)));
    let mut sorted = r.to_vec();
    sorted.sort_by(f64::total_cmp);
    if pairing == Pairing::Concordant {
        sorted.reverse();
    }
    for (rank, &agent) in by_mu.iter().enumerate() {
        r[agent] = sorted[rank];
    }
}

fn topology_of(config: &TopologyConfig, n: usize) -> Result<Topology, ConfigError> {
    let built = match config {
        TopologyConfig::Complete => Topology::complete(n),
        TopologyConfig::Path => Topology::path(n),
        TopologyConfig::Ring => Topology::ring(n),
        TopologyConfig::Edges { edges } => {
            let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
            Topology::from_edges(n, &pairs)
        }
        TopologyConfig::ErdosRenyi { .. } => unreachable!("drawn before use"),
    };
    built.map_err(|e| ConfigError::invalid("network.topology", e.to_string()))
}

fn combination_matrix(field: &str, config: &CombinationConfig, topology: &Topology) -> Result<DMatrix<f64>, ConfigError> {
    let rule = match config {
        CombinationConfig::Rule(RuleName::Identity) => CombinationRule::Identity,
        CombinationConfig::Rule(RuleName::Averaging) => CombinationRule::Averaging,
        CombinationConfig::Rule(RuleName::Metropolis) => CombinationRule::Metropolis,
        CombinationConfig::Matrix(rows) => {
            let n = topology.agent_count();
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(ConfigError::invalid(field, format!("expected a {n}x{n} matrix")));
            }
            CombinationRule::Custom(linalg::from_rows(rows))
        }
    };
    build_combination_matrix(topology, &rule).map_err(|e| ConfigError::invalid(field, e.to_string()))
}

impl Scenario {
    /// Validates `config` and draws every random parameter from streams of `config.seed`.
    pub fn materialize(config: &Config) -> Result<Self, ConfigError> {
        let seed = config.seed;
        let net = &config.network;
        let n = net.agents;
        if n == 0 {
            return Err(ConfigError::invalid("network.agents", "must be at least 1"));
        }
        if config.runs == 0 {
            return Err(ConfigError::invalid("runs", "must be at least 1"));
        }
        if config.horizon == Some(0) {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        if config.metrics.is_empty() {
            return Err(ConfigError::invalid("metrics", "at least one metric is required"));
        }

        let topology = match &net.topology {
            TopologyConfig::ErdosRenyi { probability } => {
                let t = Topology::erdos_renyi(n, *probability, &mut auxiliary_stream(seed, TAG_TOPOLOGY))
                    .map_err(|e| ConfigError::invalid("network.topology.probability", e.to_string()))?;
                TopologyConfig::Edges { edges: t.edges().into_iter().map(|(a, b)| [a, b]).collect() }
            }
            other => other.clone(),
        };
        let t = topology_of(&topology, n)?;
        combination_matrix("network.a1", &net.a1, &t)?;
        combination_matrix("network.a2", &net.a2, &t)?;

        let mu = resolve_agents("network.step_sizes", &net.step_sizes, n, &mut auxiliary_stream(seed, TAG_STEP_SIZES))?;
        require_positive("network.step_sizes", &mu)?;
        let mut r = resolve_agents("network.missing", &net.missing, n, &mut auxiliary_stream(seed, TAG_MISSING))?;
        require_probability("network.missing", &r)?;
        pair(&mu, &mut r, net.pairing);

        let risk = match &config.risk {
            RiskConfig::Mse { dim, w_star, regressors, noise_variance } => {
                let m = *dim;
                if m == 0 {
                    return Err(ConfigError::invalid("risk.dim", "must be at least 1"));
                }
                let w_star = match w_star {
                    Some(w) if w.len() == m => w.clone(),
                    Some(w) => return Err(ConfigError::invalid("risk.w_star", format!("expected {m} values, found {}", w.len()))),
                    None => gaussian_vector(m, (1.0 / m as f64).sqrt(), &mut auxiliary_stream(seed, TAG_W_STAR)),
                };
                let rng = &mut auxiliary_stream(seed, TAG_REGRESSORS);
                let regressors = match regressors {
                    RegressorConfig::Ar1 { pi } => {
                        let pi = resolve_agents("risk.regressors.pi", pi, n, rng)?;
                        require_coefficients("risk.regressors.pi", &pi)?;
                        Regressors::Ar1(pi)
                    }
                    RegressorConfig::Corner { pi } => {
                        if m != 2 {
                            return Err(ConfigError::invalid("risk.regressors", "corner covariances need dim = 2"));
                        }
                        let pi = resolve_agents("risk.regressors.pi", pi, n, rng)?;
                        require_coefficients("risk.regressors.pi", &pi)?;
                        if let Some(k) = pi.iter().position(|p| *p == 0.0) {
                            return Err(ConfigError::invalid(format!("risk.regressors.pi[{k}]"), "must be nonzero"));
                        }
                        Regressors::Corner(pi)
                    }
                    RegressorConfig::White { power } => {
                        let rows = resolve_rows("risk.regressors.power", power, n, m, rng)?;
                        for (k, row) in rows.iter().enumerate() {
                            require_positive(&format!("risk.regressors.power[{k}]"), row)?;
                        }
                        Regressors::White(rows)
                    }
                    RegressorConfig::Explicit { matrices } => {
                        if matrices.len() != n {
                            return Err(ConfigError::invalid("risk.regressors.matrices", format!("expected {n} matrices")));
                        }
                        Regressors::Explicit(matrices.clone())
                    }
                };
                let noise_variance =
                    resolve_agents("risk.noise_variance", noise_variance, n, &mut auxiliary_stream(seed, TAG_NOISE))?;
                require_positive("risk.noise_variance", &noise_variance)?;
                RiskScenario::Mse { w_star, regressors, noise_variance }
            }
            RiskConfig::Logistic { dim, rho, samples, label_weights, sampling, data_seed } => {
                let m = *dim;
                if m == 0 {
                    return Err(ConfigError::invalid("risk.dim", "must be at least 1"));
                }
                require_positive("risk.rho", &[*rho])?;
                let min = NewtonOptions::default().min_dataset_size;
                if *samples < min {
                    return Err(ConfigError::invalid("risk.samples", format!("{samples} is below the minimum of {min}")));
                }
                let label_weights = match label_weights {
                    Some(w) if w.len() == m => w.clone(),
                    Some(w) => {
                        return Err(ConfigError::invalid("risk.label_weights", format!("expected {m} values, found {}", w.len())))
                    }
                    None => gaussian_vector(m, 1.0, &mut auxiliary_stream(seed, TAG_LABEL_WEIGHTS)),
                };
                let data_seed = data_seed.unwrap_or_else(|| auxiliary_stream(seed, TAG_DATA_SEED).random::<u64>() >> 1);
                RiskScenario::Logistic { rho: *rho, samples: *samples, label_weights, sampling: *sampling, data_seed }
            }
        };

        Ok(Self {
            name: config.name.clone().unwrap_or_else(|| "custom".to_string()),
            seed,
            runs: config.runs,
            horizon: config.horizon,
            metrics: config.metrics.clone(),
            costs: config.costs,
            topology,
            a1: net.a1.clone(),
            a2: net.a2.clone(),
            mu,
            r,
            pairing: net.pairing,
            risk,
        })
    }

    /// Explicit configuration that materializes back to `self`.
    pub fn to_config(&self) -> Config {
        let risk = match &self.risk {
            RiskScenario::Mse { w_star, regressors, noise_variance } => RiskConfig::Mse {
                dim: w_star.len(),
                w_star: Some(w_star.clone()),
                regressors: match regressors {
                    Regressors::Ar1(pi) => RegressorConfig::Ar1 { pi: Param::List(pi.clone()) },
                    Regressors::Corner(pi) => RegressorConfig::Corner { pi: Param::List(pi.clone()) },
                    Regressors::White(rows) => RegressorConfig::White { power: Param::Rows(rows.clone()) },
                    Regressors::Explicit(m) => RegressorConfig::Explicit { matrices: m.clone() },
                },
                noise_variance: Param::List(noise_variance.clone()),
            },
            RiskScenario::Logistic { rho, samples, label_weights, sampling, data_seed } => RiskConfig::Logistic {
                dim: label_weights.len(),
                rho: *rho,
                samples: *samples,
                label_weights: Some(label_weights.clone()),
                sampling: *sampling,
                data_seed: Some(*data_seed),
            },
        };
        Config {
            name: Some(self.name.clone()),
            seed: self.seed,
            runs: self.runs,
            horizon: self.horizon,
            metrics: self.metrics.clone(),
            costs: self.costs,
            network: NetworkConfig {
                agents: self.mu.len(),
                topology: self.topology.clone(),
                a1: self.a1.clone(),
                a2: self.a2.clone(),
                step_sizes: Param::List(self.mu.clone()),
                missing: Param::List(self.r.clone()),
                pairing: self.pairing,
            },
            risk,
        }
    }

    pub fn to_toml(&self) -> String {
        self.to_config().to_toml()
    }

    /// Short content hash of the explicit configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn agent_count(&self) -> usize {
        self.mu.len()
    }

    pub fn wants(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }

    /// Same scenario with every step-size multiplied by `factor`.
    pub fn scale_step_sizes(&self, factor: f64) -> Self {
        Self { mu: self.mu.iter().map(|m| m * factor).collect(), ..self.clone() }
    }

    /// Same scenario with every missing probability replaced by `r`.
    pub fn with_missing(&self, r: f64) -> Self {
        Self { r: vec![r; self.mu.len()], ..self.clone() }
    }

    /// Builds the network, agents and theory inputs.
    pub fn build(&self) -> Result<Built, ExperimentError> {
        let n = self.agent_count();
        let topology = topology_of(&self.topology, n)?;
        let a1 = combination_matrix("network.a1", &self.a1, &topology)?;
        let a2 = combination_matrix("network.a2", &self.a2, &topology)?;
        let analysis = analyze_network(&a1, &a2, &self.mu, &self.r)?;

        let mut mse_sigma = None;
        let models: Vec<RiskModel> = match &self.risk {
            RiskScenario::Mse { w_star, regressors, noise_variance } => {
                let m = w_star.len();
                let covariances: Vec<RegressorCovariance> = match regressors {
                    Regressors::Ar1(pi) => pi.iter().map(|&pi| RegressorCovariance::Ar1 { pi }).collect(),
                    Regressors::Corner(pi) => {
                        pi.iter().map(|&p| RegressorCovariance::Explicit(two_agent_covariance(p))).collect()
                    }
                    Regressors::White(rows) => rows
                        .iter()
                        .map(|row| RegressorCovariance::Explicit(DMatrix::from_diagonal(&linalg::vector(row))))
                        .collect(),
                    Regressors::Explicit(mats) => mats
                        .iter()
                        .enumerate()
                        .map(|(k, rows)| {
                            if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                                return Err(ConfigError::invalid(
                                    format!("risk.regressors.matrices[{k}]"),
                                    format!("expected a {m}x{m} matrix"),
                                ));
                            }
                            Ok(RegressorCovariance::Explicit(linalg::from_rows(rows)))
                        })
                        .collect::<Result<_, _>>()?,
                };
                if covariances.windows(2).all(|w| w[0] == w[1]) {
                    mse_sigma = Some(noise_variance.clone());
                }
                covariances
                    .into_iter()
                    .zip(noise_variance)
                    .enumerate()
                    .map(|(k, (cov, &s))| {
                        MseAgentModel::new(w_star.clone(), cov, s)
                            .map(RiskModel::Mse)
                            .map_err(|e| ConfigError::invalid(format!("risk.regressors[{k}]"), e.to_string()))
                    })
                    .collect::<Result<_, _>>()?
            }
            RiskScenario::Logistic { rho, samples, label_weights, sampling, data_seed } => {
                let data = LogisticData::generate(*samples, label_weights, &mut auxiliary_stream(*data_seed, 0));
                let sampling = match sampling {
                    SamplingConfig::Dataset => LogisticSampling::Dataset,
                    SamplingConfig::Fresh => LogisticSampling::Fresh { label_weights: label_weights.clone() },
                };
                let model = Arc::new(logistic_calibrate(*rho, data, sampling, NewtonOptions::default())?);
                vec![RiskModel::Logistic(model); n]
            }
        };

        let uniform_mu = self.mu.windows(2).all(|w| w[0] == w[1]);
        let atc_or_cta = a1 == DMatrix::identity(n, n) || a2 == DMatrix::identity(n, n);
        let context = DiagnosticsContext {
            uniform_step: (uniform_mu && atc_or_cta).then(|| (self.mu[0], analysis.perron.as_slice().to_vec())),
            mse_noise_variances: mse_sigma,
        };
        let costs = CostModel {
            c_m: self.costs.c_m,
            c_a: self.costs.c_a,
            neighbors: (0..n).map(|k| topology.degree(k) as u32).collect(),
        };
        let problem = DiffusionProblem::new(analysis, models)?;
        let theory = TheoryInputs::from_problem(&problem)?;
        Ok(Built { problem, theory, context, costs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Config {
        Config::from_toml(
            r#"
seed = 5
[network]
agents = 6
topology = { kind = "erdos_renyi", probability = 0.5 }
step_sizes = { uniform = [0.001, 0.01] }
missing = { uniform = [0.0, 1.0] }

[risk]
kind = "mse"
dim = 3
regressors = { kind = "ar1", pi = { uniform = [-1.0, 1.0] } }
noise_variance = { uniform = [0.001, 0.1] }
"#,
        )
        .unwrap()
    }

    #[test]
    fn materialization_is_deterministic_and_round_trips() {
        let a = Scenario::materialize(&base()).unwrap();
        let b = Scenario::materialize(&base()).unwrap();
        assert_eq!(a, b);
        let again = Scenario::materialize(&Config::from_toml(&a.to_toml()).unwrap()).unwrap();
        assert_eq!(again, a);
        assert!(matches!(a.topology, TopologyConfig::Edges { .. }));
        a.build().unwrap();
    }

    #[test]
    fn pairing_orders_probabilities() {
        let mut c = base();
        c.network.pairing = Pairing::Concordant;
        let s = Scenario::materialize(&c).unwrap();
        let mut idx: Vec<usize> = (0..6).collect();
        idx.sort_by(|&a, &b| s.mu[a].total_cmp(&s.mu[b]));
        assert!(idx.windows(2).all(|w| s.r[w[0]] >= s.r[w[1]]));
        c.network.pairing = Pairing::Discordant;
        let s = Scenario::materialize(&c).unwrap();
        assert!(idx.windows(2).all(|w| s.r[w[0]] <= s.r[w[1]]));
    }

    #[test]
    fn probability_one_is_rejected() {
        let mut c = base();
        c.network.missing = Param::List(vec![0.1, 0.2, 1.0, 0.0, 0.0, 0.0]);
        let err = Scenario::materialize(&c).unwrap_err().to_string();
        assert!(err.contains("network.missing[2]") && err.contains("0 <= r_k < 1"), "{err}");
    }

    #[test]
    fn variances_must_be_positive() {
        let mut c = base();
        c.risk = RiskConfig::Mse {
            dim: 3,
            w_star: None,
            regressors: RegressorConfig::Ar1 { pi: Param::Scalar(0.2) },
            noise_variance: Param::Scalar(0.0),
        };
        assert!(Scenario::materialize(&c).unwrap_err().to_string().contains("risk.noise_variance"));
    }
}
