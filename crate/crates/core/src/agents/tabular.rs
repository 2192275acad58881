use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dqn::TrainingEpisode;
use super::{masked_argmin, AgentError, Policy};
use crate::env::{feasible_actions, ActionMask, ChannelSample, ConfigError, Episode, NetworkChoice, ScenarioConfig, State};

/// Slot bucket, location and per-flow remaining volume in σ units (rounded up).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TabKey {
    pub slot_bucket: u32,
    pub location: u32,
    pub remaining: Vec<u32>,
}

impl TabKey {
    pub fn new(state: &State, bucket_width: u32, sigma: f64) -> Self {
        Self {
            slot_bucket: state.slot / bucket_width.max(1),
            location: state.location as u32,
            remaining: state
                .remaining
                .iter()
                .map(|b| (b / sigma - 1e-9).ceil().max(0.0) as u32)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularHyper {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub train_episodes: usize,
    pub bucket_width: u32,
    /// Remaining-volume unit in MB; `None` uses the scenario's σ.
    pub sigma: Option<f64>,
}

impl Default for TabularHyper {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.999,
            epsilon: 0.08,
            train_episodes: 1000,
            bucket_width: 100,
            sigma: Some(100.0),
        }
    }
}

impl TabularHyper {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ConfigError::new("tabular_alpha", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(ConfigError::new("tabular_gamma", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(ConfigError::new("tabular_epsilon", "must lie in [0, 1]"));
        }
        if self.bucket_width == 0 {
            return Err(ConfigError::new("tabular_bucket", "must be positive"));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ConfigError::new("tabular_sigma", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Action-value table; entries never written read as zero.
#[derive(Debug, Clone, Default)]
pub struct TabularQ {
    entries: HashMap<TabKey, [f64; 3]>,
}

impl TabularQ {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &TabKey) -> [f64; 3] {
        self.entries.get(key).copied().unwrap_or([0.0; 3])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn entry(&mut self, key: &TabKey) -> &mut [f64; 3] {
        if !self.entries.contains_key(key) {
            self.entries.insert(key.clone(), [0.0; 3]);
        }
        self.entries.get_mut(key).expect("just inserted")
    }
}

/// `Q ← Q + α(z − Q)` with `z = cost` when `next` is `None` (terminal) or
/// `z = cost + γ min_{a'} Q(next, a')` over the feasible `a'` otherwise.
pub fn tabular_q_update(
    table: &mut TabularQ,
    key: &TabKey,
    action: NetworkChoice,
    cost: f64,
    next: Option<(&TabKey, ActionMask)>,
    alpha: f64,
    gamma: f64,
) {
    let bootstrap = match next {
        Some((nk, mask)) if !mask.is_empty() && gamma != 0.0 => {
            let q = table.get(nk);
            gamma * mask.iter().map(|c| q[c.index()]).fold(f64::INFINITY, f64::min)
        }
        _ => 0.0,
    };
    let z = cost + bootstrap;
    if alpha == 0.0 {
        return;
    }
    let q = &mut table.entry(key)[action.index()];
    *q += alpha * (z - *q);
}

#[derive(Debug, Clone)]
pub struct TabularPolicy {
    pub table: TabularQ,
    pub bucket_width: u32,
    pub sigma: f64,
}

impl TabularPolicy {
    fn key(&self, state: &State) -> TabKey {
        TabKey::new(state, self.bucket_width, self.sigma)
    }
}

impl Policy for TabularPolicy {
    fn decide(&mut self, state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> NetworkChoice {
        let mask = feasible_actions(state, channel, cfg);
        masked_argmin(&self.table.get(&self.key(state)), mask).unwrap_or(NetworkChoice::Idle)
    }
}

/// ε-greedy tabular Q-learning on raw (unscaled) costs.
pub fn tabular_train<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    hyper: &TabularHyper,
    rng: &mut R,
) -> Result<(TabularPolicy, Vec<TrainingEpisode>), AgentError> {
    cfg.validate()?;
    hyper.validate()?;
    let mut policy = TabularPolicy {
        table: TabularQ::new(),
        bucket_width: hyper.bucket_width,
        sigma: hyper.sigma.unwrap_or(cfg.granularity_sigma),
    };
    let mut log = Vec::with_capacity(hyper.train_episodes);
    for _ in 0..hyper.train_episodes {
        let mut ep = Episode::start(cfg, rng);
        let mut stats = TrainingEpisode::default();
        while let Some(channel) = ep.channel().copied() {
            let state = ep.state().clone();
            let key = policy.key(&state);
            let mask = feasible_actions(&state, &channel, cfg);
            let choice = if hyper.epsilon > 0.0 && rng.random::<f64>() < hyper.epsilon {
                let options: Vec<NetworkChoice> = mask.iter().collect();
                options[rng.random_range(0..options.len())]
            } else {
                masked_argmin(&policy.table.get(&key), mask).ok_or(AgentError::EmptyMask)?
            };
            let out = ep.advance(choice, rng)?;
            stats.monetary += out.monetary;
            stats.energy_joule += out.energy_joule;
            stats.energy_weighted += out.energy_weighted;
            stats.penalty += out.penalty;
            stats.delivered += out.delivered.iter().sum::<f64>();
            stats.slots += 1;
            let next = ep
                .channel()
                .map(|ch| (policy.key(ep.state()), feasible_actions(ep.state(), ch, cfg)));
            tabular_q_update(
                &mut policy.table,
                &key,
                choice,
                out.total_cost,
                next.as_ref().map(|(k, m)| (k, *m)),
                hyper.alpha,
                hyper.gamma,
            );
        }
        log.push(stats);
    }
    Ok((policy, log))
}
