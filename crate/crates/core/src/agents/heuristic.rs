use super::Policy;
use crate::env::{cell_distribution, ChannelSample, NetworkChoice, ScenarioConfig, State};

/// Fraction of the expected cellular volume counted on when judging slack.
pub const SLACK_SAFETY: f64 = 0.9;

/// Rule-based baseline: take WLAN whenever it is offered, otherwise pay for
/// cellular only when some flow can no longer finish on time without it.
pub fn heuristic_decide(state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> NetworkChoice {
    let per_slot = cfg.volume_mb(cell_distribution(cfg).expectation());
    decide_with(state, channel, cfg, per_slot)
}

fn decide_with(state: &State, channel: &ChannelSample, cfg: &ScenarioConfig, cell_mb_per_slot: f64) -> NetworkChoice {
    if !state.any_active(cfg) {
        return NetworkChoice::Idle;
    }
    if channel.wlan_available() {
        return NetworkChoice::Wlan;
    }
    let critical = (0..state.remaining.len()).filter(|&j| state.flow_active(j, cfg)).any(|j| {
        let slots_left = cfg.flow_deadlines[j].saturating_sub(state.slot) as f64;
        state.remaining[j] > slots_left * cell_mb_per_slot * SLACK_SAFETY
    });
    if critical {
        NetworkChoice::Cellular
    } else {
        NetworkChoice::Idle
    }
}

/// [`heuristic_decide`] with the expected cellular volume computed once.
#[derive(Debug, Clone)]
pub struct HeuristicPolicy {
    cell_mb_per_slot: f64,
}

impl HeuristicPolicy {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            cell_mb_per_slot: cfg.volume_mb(cell_distribution(cfg).expectation()),
        }
    }
}

impl Policy for HeuristicPolicy {
    fn decide(&mut self, state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> NetworkChoice {
        decide_with(state, channel, cfg, self.cell_mb_per_slot)
    }
}
