//! Deep Q-learning with experience replay and a periodically synced target network.
//!
//! Q-values are expected costs-to-go, so both action selection and the
//! bootstrapped target use a minimum over the feasible actions. Costs are
//! divided by `cost_scale` before entering the replay memory; this is a
//! positive rescaling and leaves every argmin unchanged.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::{Experience, ReplayMemory};
use super::{masked_argmin, AgentError, Policy};
use crate::env::{feasible_actions, ActionMask, ChannelSample, Episode, NetworkChoice, ScenarioConfig, State};
use crate::nn::{GradientSet, NnError, QNetwork, Scratch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnHyper {
    pub epsilon: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Environment steps between target-network syncs.
    pub target_sync: u64,
    pub alpha: f64,
    pub replay_capacity: usize,
    pub train_episodes: usize,
    pub hidden: Vec<usize>,
    /// Divisor applied to costs before learning; `None` derives one from the scenario.
    pub cost_scale: Option<f64>,
    /// Optional cap on environment steps across all training episodes.
    pub max_steps: Option<u64>,
}

impl Default for DqnHyper {
    fn default() -> Self {
        Self {
            epsilon: 0.08,
            gamma: 0.999,
            batch_size: 32,
            target_sync: 200,
            alpha: 1e-3,
            replay_capacity: 10_000,
            train_episodes: 30,
            hidden: vec![64, 64],
            cost_scale: None,
            max_steps: None,
        }
    }
}

impl DqnHyper {
    pub fn validate(&self) -> Result<(), crate::env::ConfigError> {
        use crate::env::ConfigError as E;
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(E::new("epsilon", "must lie in [0, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(E::new("gamma", "must lie in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(E::new("batch_size", "must be positive"));
        }
        if self.target_sync == 0 {
            return Err(E::new("target_sync", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(E::new("alpha", "must lie in (0, 1)"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(E::new("replay_capacity", "must hold at least one batch"));
        }
        if self.hidden.contains(&0) {
            return Err(E::new("hidden", "layer widths must be positive"));
        }
        if let Some(s) = self.cost_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(E::new("cost_scale", "must be positive"));
            }
        }
        Ok(())
    }

    /// Penalty for ten slots' worth of data at the top WLAN rate.
    pub fn resolved_cost_scale(&self, cfg: &ScenarioConfig) -> f64 {
        self.cost_scale
            .unwrap_or_else(|| (10.0 * cfg.penalty_coeff * cfg.volume_mb(cfg.wlan_hi)).max(1e-6))
    }
}

pub fn encoding_dim(cfg: &ScenarioConfig) -> usize {
    cfg.num_locations() + 2 * cfg.num_flows() + 3
}

/// Network input: one-hot location, remaining fraction per flow, normalised
/// time-to-deadline per flow, WLAN flag and normalised realised rates.
pub fn encode_state(state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> Vec<f64> {
    let mut x = Vec::with_capacity(encoding_dim(cfg));
    let l = cfg.num_locations();
    x.extend((0..l).map(|i| if i == state.location { 1.0 } else { 0.0 }));
    for (b, size) in state.remaining.iter().zip(&cfg.flow_sizes) {
        x.push(if *size > 0.0 { b / size } else { 0.0 });
    }
    let horizon = cfg.horizon().max(1) as f64;
    for &t in &cfg.flow_deadlines {
        x.push(t.saturating_sub(state.slot) as f64 / horizon);
    }
    x.push(if channel.wlan_available() { 1.0 } else { 0.0 });
    x.push(channel.cell_rate / cfg.cell_hi);
    x.push(channel.wlan_rate / cfg.wlan_hi);
    x
}

/// ε-greedy over the feasible actions; the greedy branch is a masked argmin.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    encoding: &[f64],
    mask: ActionMask,
    epsilon: f64,
    rng: &mut R,
) -> Result<NetworkChoice, AgentError> {
    if mask.is_empty() {
        return Err(AgentError::EmptyMask);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let options: Vec<NetworkChoice> = mask.iter().collect();
        return Ok(options[rng.random_range(0..options.len())]);
    }
    let q = net.forward(encoding)?;
    Ok(masked_argmin(&q, mask).expect("non-empty mask"))
}

/// `z = r` for terminal transitions, else `r + γ min_a' Q̄(s', a')` over feasible `a'`.
pub fn td_target(exp: &Experience, target_net: &QNetwork, gamma: f64) -> Result<f64, NnError> {
    if exp.terminal || gamma == 0.0 || exp.next_feasible.is_empty() {
        return Ok(exp.cost);
    }
    let q = target_net.forward(&exp.next_encoding)?;
    let best = exp
        .next_feasible
        .iter()
        .map(|c| q[c.index()])
        .fold(f64::INFINITY, f64::min);
    Ok(exp.cost + gamma * best)
}

/// Realised costs of one training episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingEpisode {
    pub monetary: f64,
    pub energy_joule: f64,
    pub energy_weighted: f64,
    pub penalty: f64,
    /// Megabytes delivered across all flows.
    pub delivered: f64,
    pub slots: u32,
}

impl TrainingEpisode {
    pub fn total(&self) -> f64 {
        self.monetary + self.energy_weighted + self.penalty
    }
}

#[derive(Debug, Clone)]
pub struct DqnOutcome {
    pub net: QNetwork,
    pub episodes: Vec<TrainingEpisode>,
    pub steps: u64,
}

struct Learner<'h> {
    hyper: &'h DqnHyper,
    memory: ReplayMemory,
    target: QNetwork,
    grads: GradientSet,
    scratch: Scratch,
}

impl Learner<'_> {
    fn train_step<R: Rng + ?Sized>(&mut self, online: &mut QNetwork, rng: &mut R) -> Result<(), AgentError> {
        let Ok(batch) = self.memory.sample(self.hyper.batch_size, rng) else {
            return Ok(());
        };
        self.grads.reset();
        let weight = 1.0 / batch.len() as f64;
        for exp in batch {
            let z = td_target(exp, &self.target, self.hyper.gamma)?;
            online.accumulate_gradient(
                &exp.state_encoding,
                exp.action,
                z,
                weight,
                &mut self.grads,
                &mut self.scratch,
            )?;
        }
        online.sgd_step(&self.grads, self.hyper.alpha)?;
        Ok(())
    }
}

/// Trains a Q-network on `cfg` following the replay/target-network loop.
pub fn dqn_train<R: Rng + ?Sized>(cfg: &ScenarioConfig, hyper: &DqnHyper, rng: &mut R) -> Result<DqnOutcome, AgentError> {
    cfg.validate()?;
    hyper.validate()?;
    let mut dims = vec![encoding_dim(cfg)];
    dims.extend(&hyper.hidden);
    dims.push(NetworkChoice::COUNT);
    let mut online = QNetwork::init(&dims, rng)?;
    let scale = hyper.resolved_cost_scale(cfg);
    let mut learner = Learner {
        hyper,
        memory: ReplayMemory::new(hyper.replay_capacity),
        target: online.clone_parameters(),
        grads: GradientSet::zeros_like(&online),
        scratch: Scratch::default(),
    };

    let mut steps: u64 = 0;
    let mut episodes = Vec::with_capacity(hyper.train_episodes);
    'outer: for _ in 0..hyper.train_episodes {
        let mut ep = Episode::start(cfg, rng);
        let mut log = TrainingEpisode::default();
        while let Some(channel) = ep.channel().copied() {
            if hyper.max_steps.is_some_and(|cap| steps >= cap) {
                episodes.push(log);
                break 'outer;
            }
            let state = ep.state().clone();
            let encoding = encode_state(&state, &channel, cfg);
            let mask = feasible_actions(&state, &channel, cfg);
            let choice = select_action(&online, &encoding, mask, hyper.epsilon, rng)?;
            let out = ep.advance(choice, rng)?;
            log.monetary += out.monetary;
            log.energy_joule += out.energy_joule;
            log.energy_weighted += out.energy_weighted;
            log.penalty += out.penalty;
            log.delivered += out.delivered.iter().sum::<f64>();
            log.slots += 1;

            let (next_encoding, next_feasible) = match ep.channel() {
                Some(next_channel) => (
                    encode_state(ep.state(), next_channel, cfg),
                    feasible_actions(ep.state(), next_channel, cfg),
                ),
                None => (vec![0.0; encoding.len()], ActionMask::default()),
            };
            learner.memory.push(Experience {
                state_encoding: encoding,
                action: choice.index(),
                cost: out.total_cost / scale,
                next_encoding,
                next_feasible,
                terminal: out.terminal,
            });
            learner.train_step(&mut online, rng)?;
            steps += 1;
            if steps % hyper.target_sync == 0 {
                learner.target = online.clone_parameters();
            }
        }
        episodes.push(log);
    }
    Ok(DqnOutcome {
        net: online,
        episodes,
        steps,
    })
}

/// Greedy (ε = 0) policy backed by a trained network.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    pub net: QNetwork,
}

impl Policy for DqnPolicy {
    fn decide(&mut self, state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> NetworkChoice {
        let encoding = encode_state(state, channel, cfg);
        let mask = feasible_actions(state, channel, cfg);
        let q = self.net.forward(&encoding).expect("network input matches the scenario encoding");
        masked_argmin(&q, mask).unwrap_or(NetworkChoice::Idle)
    }
}
