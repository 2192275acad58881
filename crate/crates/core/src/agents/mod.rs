//! Decision makers: the deep Q-network agent and the baselines it is compared with.

mod dp;
mod dqn;
mod heuristic;
mod replay;
mod tabular;

pub use dp::{dp_solve, state_count, DpError, DpPolicy, DpTable, ThroughputExpectation, DEFAULT_STATE_CAP};
pub use dqn::{
    dqn_train, encode_state, encoding_dim, select_action, td_target, DqnHyper, DqnOutcome, DqnPolicy,
    TrainingEpisode,
};
pub use heuristic::{heuristic_decide, HeuristicPolicy, SLACK_SAFETY};
pub use replay::{Experience, NotReady, ReplayMemory};
pub use tabular::{tabular_q_update, tabular_train, TabKey, TabularHyper, TabularPolicy, TabularQ};

use crate::env::{ActionMask, ChannelSample, ConfigError, EnvError, NetworkChoice, ScenarioConfig, State};
use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("no feasible action to choose from")]
    EmptyMask,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dp(#[from] DpError),
}

/// Anything that picks a network for the upcoming slot.
pub trait Policy {
    fn decide(&mut self, state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> NetworkChoice;
}

impl<F> Policy for F
where
    F: FnMut(&State, &ChannelSample, &ScenarioConfig) -> NetworkChoice,
{
    fn decide(&mut self, state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> NetworkChoice {
        self(state, channel, cfg)
    }
}

/// Lowest-index minimiser of `values` restricted to `mask`.
pub fn masked_argmin(values: &[f64], mask: ActionMask) -> Option<NetworkChoice> {
    let mut best: Option<(NetworkChoice, f64)> = None;
    for choice in mask.iter() {
        let v = values[choice.index()];
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((choice, v));
        }
    }
    best.map(|(c, _)| c)
}
