use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{Algorithm, MetricsRecord};
use crate::agents::{
    dp_solve, dqn_train, tabular_train, AgentError, DqnHyper, DqnPolicy, HeuristicPolicy, Policy, TabularHyper,
    ThroughputExpectation, TrainingEpisode, DEFAULT_STATE_CAP,
};
use crate::env::{
    perturb_transitions, ConfigError, EnergyModel, EnvError, Episode, NetworkChoice, ScenarioConfig, TransitionMatrix,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("policy chose infeasible action {choice} at slot {slot}")]
    ContractViolation { choice: NetworkChoice, slot: u32 },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{} run(s) failed: {}", .0.len(), describe_failures(.0))]
    Runs(Vec<(u32, String)>),
}

fn describe_failures(failures: &[(u32, String)]) -> String {
    failures
        .iter()
        .map(|(id, msg)| format!("run {id}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Infeasible { choice, slot } => HarnessError::ContractViolation { choice, slot },
            other => HarnessError::Agent(other.into()),
        }
    }
}

const AP_STREAM: u64 = 0x6170;
const EVAL_STREAM: u64 = 0x6576;
const TRAIN_STREAM: u64 = 0x7472;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parts` into `master` to seed an independent generator.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

pub fn derived_rng(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}

/// Access points for replicate `seed`: the first `n_aps` cells of a seeded
/// permutation, so placements for growing counts are nested.
pub fn place_aps(master_seed: u64, seed: u64, n_aps: usize, num_locations: usize) -> Vec<usize> {
    let mut cells: Vec<usize> = (0..num_locations).collect();
    cells.shuffle(&mut derived_rng(master_seed, &[AP_STREAM, seed]));
    let mut chosen: Vec<usize> = cells.into_iter().take(n_aps).collect();
    chosen.sort_unstable();
    chosen
}

/// Settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub base: ScenarioConfig,
    pub master_seed: u64,
    pub n_eval_episodes: usize,
    /// Mixing weight of the transition noise for `dp-noisy`.
    pub eta: f64,
    pub dqn: DqnHyper,
    pub tabular: TabularHyper,
    pub dp_state_cap: u64,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            base: ScenarioConfig::default(),
            master_seed: 0,
            n_eval_episodes: 20,
            eta: 0.3,
            dqn: DqnHyper::default(),
            tabular: TabularHyper::default(),
            dp_state_cap: DEFAULT_STATE_CAP,
        }
    }
}

/// One point of a sweep: an algorithm on one scenario variant and replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: u32,
    pub algorithm: Algorithm,
    pub n_flows: usize,
    pub n_aps: usize,
    pub theta: f64,
    pub energy_model: EnergyModel,
    pub seed: u64,
}

/// Cartesian sweep; runs are numbered algorithm-major, seed-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub algorithms: Vec<Algorithm>,
    pub n_flows: Vec<usize>,
    pub n_aps: Vec<usize>,
    pub thetas: Vec<f64>,
    pub energy_models: Vec<EnergyModel>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// A single point built from the experiment's base scenario.
    pub fn single(exp: &Experiment, algorithm: Algorithm, seeds: Vec<u64>) -> Self {
        Self {
            algorithms: vec![algorithm],
            n_flows: vec![exp.base.num_flows()],
            n_aps: vec![exp.base.ap_cells.len()],
            thetas: vec![exp.base.theta],
            energy_models: vec![exp.base.energy_model],
            seeds,
        }
    }

    pub fn expand(&self, exp: &Experiment) -> Result<Vec<RunSpec>, ConfigError> {
        let lists = [
            ("algorithms", self.algorithms.is_empty()),
            ("n_flows", self.n_flows.is_empty()),
            ("n_aps", self.n_aps.is_empty()),
            ("thetas", self.thetas.is_empty()),
            ("energy_models", self.energy_models.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((key, _)) = lists.iter().find(|(_, empty)| *empty) {
            return Err(ConfigError::new(*key, "sweep list must not be empty"));
        }
        let max_flows = exp.base.num_flows();
        if let Some(n) = self.n_flows.iter().find(|&&n| n == 0 || n > max_flows) {
            return Err(ConfigError::new("n_flows", format!("{n} is outside 1..={max_flows}")));
        }
        let l = exp.base.num_locations();
        if let Some(n) = self.n_aps.iter().find(|&&n| n > l) {
            return Err(ConfigError::new("n_aps", format!("{n} exceeds the {l} grid locations")));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(ConfigError::new("theta", format!("{t} is not a non-negative number")));
        }
        let mut specs = Vec::new();
        for &algorithm in &self.algorithms {
            for &n_flows in &self.n_flows {
                for &n_aps in &self.n_aps {
                    for &theta in &self.thetas {
                        for &energy_model in &self.energy_models {
                            for &seed in &self.seeds {
                                specs.push(RunSpec {
                                    run_id: specs.len() as u32,
                                    algorithm,
                                    n_flows,
                                    n_aps,
                                    theta,
                                    energy_model,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(specs)
    }
}

/// Concrete scenario for `spec`, with access points re-drawn for its seed.
pub fn scenario_for(exp: &Experiment, spec: &RunSpec) -> ScenarioConfig {
    let mut cfg = exp.base.clone().with_flows(spec.n_flows);
    cfg.ap_cells = place_aps(exp.master_seed, spec.seed, spec.n_aps, cfg.num_locations());
    cfg.theta = spec.theta;
    cfg.energy_model = spec.energy_model;
    cfg
}

/// Component sums of one simulated episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeMetrics {
    pub monetary: f64,
    pub energy_joule: f64,
    pub weighted_energy: f64,
    pub penalty: f64,
    pub delivered: f64,
    pub wall_slots: u32,
}

impl EpisodeMetrics {
    pub fn total_cost(&self) -> f64 {
        self.monetary + self.weighted_energy + self.penalty
    }

    pub fn completion_ratio(&self, cfg: &ScenarioConfig) -> f64 {
        let total: f64 = cfg.flow_sizes.iter().sum();
        if total > 0.0 {
            (self.delivered / total).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

impl From<&TrainingEpisode> for EpisodeMetrics {
    fn from(t: &TrainingEpisode) -> Self {
        Self {
            monetary: t.monetary,
            energy_joule: t.energy_joule,
            weighted_energy: t.energy_weighted,
            penalty: t.penalty,
            delivered: t.delivered,
            wall_slots: t.slots,
        }
    }
}

/// Simulates one episode from a uniform start until it terminates.
pub fn run_episode<P, R>(policy: &mut P, cfg: &ScenarioConfig, rng: &mut R) -> Result<EpisodeMetrics, HarnessError>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut ep = Episode::start(cfg, rng);
    let mut m = EpisodeMetrics::default();
    while let Some(channel) = ep.channel().copied() {
        let choice = policy.decide(ep.state(), &channel, cfg);
        let out = ep.advance(choice, rng)?;
        m.monetary += out.monetary;
        m.energy_joule += out.energy_joule;
        m.weighted_energy += out.energy_weighted;
        m.penalty += out.penalty;
        m.delivered += out.delivered.iter().sum::<f64>();
        m.wall_slots += 1;
    }
    Ok(m)
}

fn record(spec: &RunSpec, cfg: &ScenarioConfig, episode: u32, m: &EpisodeMetrics) -> MetricsRecord {
    MetricsRecord {
        run_id: spec.run_id,
        seed: spec.seed,
        algorithm: spec.algorithm,
        n_flows: spec.n_flows,
        n_aps: spec.n_aps,
        energy_model: spec.energy_model,
        theta: spec.theta,
        episode,
        monetary_yen: m.monetary,
        energy_joule: m.energy_joule,
        weighted_energy: m.weighted_energy,
        penalty_yen: m.penalty,
        total_cost: m.total_cost(),
        completion_ratio: m.completion_ratio(cfg),
        wall_slots: m.wall_slots,
    }
}

/// Evaluation records plus, for learning agents, one record per training episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub learning_curve: Vec<MetricsRecord>,
}

/// Builds (and trains, if needed) the policy for `spec`, then evaluates it
/// greedily. Evaluation episode `e` of replicate `seed` uses the same
/// generator for every algorithm.
pub fn evaluate_run(exp: &Experiment, spec: &RunSpec) -> Result<RunOutput, HarnessError> {
    let cfg = scenario_for(exp, spec);
    cfg.validate()?;
    let mut train_rng = derived_rng(exp.master_seed, &[TRAIN_STREAM, spec.run_id as u64]);
    let mut training: Vec<TrainingEpisode> = Vec::new();
    let mut policy: Box<dyn Policy> = match spec.algorithm {
        Algorithm::Heuristic => Box::new(HeuristicPolicy::new(&cfg)),
        Algorithm::Dp | Algorithm::DpNoisy => {
            let exact = TransitionMatrix::from_config(&cfg);
            let model = if spec.algorithm == Algorithm::DpNoisy {
                if !(0.0..=1.0).contains(&exp.eta) {
                    return Err(ConfigError::new("eta", "must lie in [0, 1]").into());
                }
                perturb_transitions(&exact, cfg.grid_width, cfg.grid_height, exp.eta)
            } else {
                exact
            };
            let table = dp_solve(&cfg, &model, &ThroughputExpectation::from_config(&cfg), exp.dp_state_cap)
                .map_err(AgentError::from)?;
            Box::new(table)
        }
        Algorithm::Dqn => {
            let out = dqn_train(&cfg, &exp.dqn, &mut train_rng)?;
            training = out.episodes;
            Box::new(DqnPolicy { net: out.net })
        }
        Algorithm::TabularQ => {
            let (policy, log) = tabular_train(&cfg, &exp.tabular, &mut train_rng)?;
            training = log;
            Box::new(policy)
        }
    };

    let mut records = Vec::with_capacity(exp.n_eval_episodes);
    for e in 0..exp.n_eval_episodes {
        let mut env_rng = derived_rng(exp.master_seed, &[EVAL_STREAM, spec.seed, e as u64]);
        let m = run_episode(policy.as_mut(), &cfg, &mut env_rng)?;
        records.push(record(spec, &cfg, e as u32, &m));
    }
    let learning_curve = training
        .iter()
        .enumerate()
        .map(|(i, t)| record(spec, &cfg, i as u32, &EpisodeMetrics::from(t)))
        .collect();
    Ok(RunOutput {
        records,
        learning_curve,
    })
}

/// Runs every grid point on a pool of `parallelism` threads. Output is sorted
/// by `(run_id, episode)` and does not depend on the thread count.
pub fn run_sweep(exp: &Experiment, grid: &SweepGrid, parallelism: usize) -> Result<RunOutput, HarnessError> {
    let specs = grid.expand(exp)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ConfigError::new("parallelism", e.to_string()))?;
    let results: Vec<(u32, Result<RunOutput, HarnessError>)> =
        pool.install(|| specs.par_iter().map(|s| (s.run_id, evaluate_run(exp, s))).collect());

    let mut out = RunOutput::default();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(run) => {
                out.records.extend(run.records);
                out.learning_curve.extend(run.learning_curve);
            }
            Err(e) => failures.push((id, e.to_string())),
        }
    }
    if !failures.is_empty() {
        failures.sort_by_key(|(id, _)| *id);
        return Err(HarnessError::Runs(failures));
    }
    out.records.sort_by_key(|r| (r.run_id, r.episode));
    out.learning_curve.sort_by_key(|r| (r.run_id, r.episode));
    Ok(out)
}
