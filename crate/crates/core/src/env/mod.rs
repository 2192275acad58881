//! The offloading MDP: state, actions, per-slot costs and the one-slot transition.

mod channel;
mod config;
mod episode;
mod mobility;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use channel::{
    cell_distribution, energy_rate, sample_throughputs, wlan_distribution, ChannelSample, TruncatedNormal,
};
pub use config::{ConfigError, EnergyModel, ScenarioConfig};
pub use episode::Episode;
pub use mobility::{neighbors, perturb_transitions, sample_next_location, TransitionMatrix};

/// Remaining volumes below this many megabytes count as delivered.
pub const VOLUME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("energy rate is undefined for throughput {0} Mbps")]
    Domain(f64),
    #[error("{choice} is not feasible at slot {slot}")]
    Infeasible { choice: NetworkChoice, slot: u32 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Which radio the user transmits on during a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkChoice {
    Idle = 0,
    Cellular = 1,
    Wlan = 2,
}

impl NetworkChoice {
    pub const ALL: [NetworkChoice; 3] = [NetworkChoice::Idle, NetworkChoice::Cellular, NetworkChoice::Wlan];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for NetworkChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkChoice::Idle => "idle",
            NetworkChoice::Cellular => "cellular",
            NetworkChoice::Wlan => "wlan",
        })
    }
}

/// Feasibility mask indexed by [`NetworkChoice::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionMask(pub [bool; NetworkChoice::COUNT]);

impl ActionMask {
    pub const ALL: ActionMask = ActionMask([true; 3]);

    pub fn contains(&self, choice: NetworkChoice) -> bool {
        self.0[choice.index()]
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = NetworkChoice> + '_ {
        NetworkChoice::ALL.into_iter().filter(|c| self.contains(*c))
    }
}

/// Location, per-flow remaining megabytes and the 1-based slot index.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub location: usize,
    pub remaining: Vec<f64>,
    pub slot: u32,
}

impl State {
    pub fn initial(cfg: &ScenarioConfig, location: usize) -> Self {
        Self {
            location,
            remaining: cfg.flow_sizes.clone(),
            slot: 1,
        }
    }

    /// A flow is active while its deadline has not passed and data remains.
    pub fn flow_active(&self, j: usize, cfg: &ScenarioConfig) -> bool {
        self.slot <= cfg.flow_deadlines[j] && self.remaining[j] > VOLUME_EPS
    }

    pub fn any_active(&self, cfg: &ScenarioConfig) -> bool {
        (0..self.remaining.len()).any(|j| self.flow_active(j, cfg))
    }

    pub fn is_terminal(&self, cfg: &ScenarioConfig) -> bool {
        self.slot > cfg.horizon() || !self.any_active(cfg)
    }
}

/// Network choice plus the per-flow rates (Mbps) on each radio.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub network: NetworkChoice,
    pub alloc_cell: Vec<f64>,
    pub alloc_wlan: Vec<f64>,
}

impl Action {
    pub fn idle(num_flows: usize) -> Self {
        Self {
            network: NetworkChoice::Idle,
            alloc_cell: vec![0.0; num_flows],
            alloc_wlan: vec![0.0; num_flows],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub next_state: State,
    pub action: Action,
    pub monetary: f64,
    /// Unweighted joules spent on the radio this slot.
    pub energy_joule: f64,
    pub energy_weighted: f64,
    pub penalty: f64,
    pub total_cost: f64,
    pub delivered: Vec<f64>,
    pub terminal: bool,
}

/// Earliest-deadline-first split of `network_rate` across the active flows.
///
/// Each flow gets at most the rate that would finish it within this slot.
pub fn allocate_rate(state: &State, network_rate: f64, cfg: &ScenarioConfig) -> Vec<f64> {
    let m = state.remaining.len();
    let mut alloc = vec![0.0; m];
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&j| cfg.flow_deadlines[j]);
    let mut left = network_rate.max(0.0);
    for j in order {
        if left <= 0.0 {
            break;
        }
        if !state.flow_active(j, cfg) {
            continue;
        }
        let need = cfg.rate_for_volume(state.remaining[j]);
        let give = need.min(left);
        alloc[j] = give;
        left -= give;
    }
    alloc
}

fn clamped_volume(state: &State, alloc: &[f64], cfg: &ScenarioConfig) -> f64 {
    state
        .remaining
        .iter()
        .zip(alloc)
        .map(|(&b, &a)| b.min(cfg.volume_mb(a)))
        .sum()
}

/// Yen paid for the cellular volume; WLAN is free.
pub fn monetary_cost(state: &State, action: &Action, cfg: &ScenarioConfig) -> f64 {
    cfg.price_cellular * clamped_volume(state, &action.alloc_cell, cfg)
}

/// Joules spent transmitting, before the energy-preference weight.
pub fn energy_joules(state: &State, action: &Action, channel: &ChannelSample, cfg: &ScenarioConfig) -> f64 {
    let cell_mb = clamped_volume(state, &action.alloc_cell, cfg);
    let wlan_mb = clamped_volume(state, &action.alloc_wlan, cfg);
    let mut joules = 0.0;
    if cell_mb > 0.0 {
        joules += channel.eps_cell * cell_mb * 8.0;
    }
    if wlan_mb > 0.0 {
        joules += channel.eps_wlan * wlan_mb * 8.0;
    }
    joules
}

/// θ-weighted energy cost.
pub fn energy_cost(state: &State, action: &Action, channel: &ChannelSample, cfg: &ScenarioConfig) -> f64 {
    cfg.theta * energy_joules(state, action, channel, cfg)
}

/// Penalty for flows whose deadline was the slot just completed.
///
/// Only flows with `deadline + 1 == state_after.slot` are charged, so every
/// flow is charged at most once over an episode.
pub fn penalty_due(state_after: &State, cfg: &ScenarioConfig) -> f64 {
    cfg.flow_deadlines
        .iter()
        .zip(&state_after.remaining)
        .filter(|(&t, _)| t + 1 == state_after.slot)
        .map(|(_, &b)| cfg.penalty_coeff * b)
        .sum()
}

pub fn feasible_actions(state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> ActionMask {
    if !state.any_active(cfg) {
        return ActionMask([true, false, false]);
    }
    ActionMask([true, true, channel.wlan_available()])
}

/// Advances one slot: allocates the chosen radio, charges costs, moves the user.
pub fn step<R: Rng + ?Sized>(
    state: &State,
    choice: NetworkChoice,
    channel: &ChannelSample,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<SlotOutcome, EnvError> {
    if !feasible_actions(state, channel, cfg).contains(choice) {
        return Err(EnvError::Infeasible {
            choice,
            slot: state.slot,
        });
    }
    let m = state.remaining.len();
    let mut action = Action::idle(m);
    action.network = choice;
    match choice {
        NetworkChoice::Idle => {}
        NetworkChoice::Cellular => action.alloc_cell = allocate_rate(state, channel.cell_rate, cfg),
        NetworkChoice::Wlan => action.alloc_wlan = allocate_rate(state, channel.wlan_rate, cfg),
    }

    let monetary = monetary_cost(state, &action, cfg);
    let energy_joule = energy_joules(state, &action, channel, cfg);
    let energy_weighted = cfg.theta * energy_joule;

    let mut delivered = vec![0.0; m];
    let mut remaining = state.remaining.clone();
    for j in 0..m {
        let sent = cfg.volume_mb(action.alloc_cell[j]) + cfg.volume_mb(action.alloc_wlan[j]);
        delivered[j] = state.remaining[j].min(sent);
        let left = state.remaining[j] - delivered[j];
        remaining[j] = if left < VOLUME_EPS { 0.0 } else { left };
    }

    let next_state = State {
        location: sample_next_location(state.location, cfg, rng),
        remaining,
        slot: state.slot + 1,
    };
    let penalty = penalty_due(&next_state, cfg);
    let terminal = next_state.is_terminal(cfg);
    Ok(SlotOutcome {
        total_cost: monetary + energy_weighted + penalty,
        next_state,
        action,
        monetary,
        energy_joule,
        energy_weighted,
        penalty,
        delivered,
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_flow(size: f64, deadline: u32) -> ScenarioConfig {
        ScenarioConfig {
            flow_sizes: vec![size],
            flow_deadlines: vec![deadline],
            slot_seconds: 10.0,
            ..Default::default()
        }
    }

    fn state(remaining: Vec<f64>, slot: u32) -> State {
        State {
            location: 0,
            remaining,
            slot,
        }
    }

    #[test]
    fn edf_split() {
        let cfg = ScenarioConfig {
            flow_sizes: vec![15.0, 50.0],
            flow_deadlines: vec![10, 20],
            slot_seconds: 10.0,
            ..Default::default()
        };
        let alloc = allocate_rate(&state(vec![15.0, 50.0], 1), 16.0, &cfg);
        assert!((alloc[0] - 12.0).abs() < 1e-12);
        assert!((alloc[1] - 4.0).abs() < 1e-12);
        assert!((cfg.volume_mb(alloc[1]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn edf_serves_earlier_deadline_first_regardless_of_index() {
        let cfg = ScenarioConfig {
            flow_sizes: vec![50.0, 15.0],
            flow_deadlines: vec![20, 20],
            slot_seconds: 10.0,
            ..Default::default()
        };
        let alloc = allocate_rate(&state(vec![50.0, 15.0], 1), 16.0, &cfg);
        assert_eq!(alloc, vec![16.0, 0.0]);
    }

    #[test]
    fn finished_flows_get_nothing() {
        let cfg = ScenarioConfig::default();
        let alloc = allocate_rate(&state(vec![0.0; 4], 3), 20.0, &cfg);
        assert_eq!(alloc, vec![0.0; 4]);
    }

    #[test]
    fn last_megabyte_clamp() {
        let cfg = one_flow(400.0, 400);
        let alloc = allocate_rate(&state(vec![1.0], 5), 10.0, &cfg);
        assert!((alloc[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn expired_flow_is_not_served() {
        let cfg = ScenarioConfig {
            flow_sizes: vec![10.0, 10.0],
            flow_deadlines: vec![2, 5],
            slot_seconds: 10.0,
            ..Default::default()
        };
        let alloc = allocate_rate(&state(vec![10.0, 10.0], 3), 8.0, &cfg);
        assert_eq!(alloc[0], 0.0);
        assert_eq!(alloc[1], 8.0);
    }

    #[test]
    fn monetary_examples() {
        let cfg = one_flow(400.0, 400);
        let s = state(vec![400.0], 1);
        let mut a = Action::idle(1);
        a.network = NetworkChoice::Cellular;
        a.alloc_cell = vec![10.0];
        assert!((monetary_cost(&s, &a, &cfg) - 18.75).abs() < 1e-12);
        let s5 = state(vec![5.0], 1);
        a.alloc_cell = vec![8.0];
        assert!((monetary_cost(&s5, &a, &cfg) - 7.5).abs() < 1e-12);
        let mut w = Action::idle(1);
        w.network = NetworkChoice::Wlan;
        w.alloc_wlan = vec![21.0];
        assert_eq!(monetary_cost(&s, &w, &cfg), 0.0);
    }

    #[test]
    fn energy_examples() {
        let cfg = ScenarioConfig {
            theta: 1.0,
            ..one_flow(400.0, 400)
        };
        let s = state(vec![400.0], 1);
        let ch = ChannelSample::from_rates(10.0, 15.0, EnergyModel::F1).unwrap();
        let mut w = Action::idle(1);
        w.network = NetworkChoice::Wlan;
        w.alloc_wlan = vec![15.0];
        // 18.75 MB = 150 Mb at f1(15) J/Mb.
        let expect = 150.0 * 1.4274 * (-0.063f64 * 15.0).exp();
        assert!((energy_cost(&s, &w, &ch, &cfg) - expect).abs() < 1e-9);
        assert!((expect - 83.22).abs() < 0.01);
        assert_eq!(energy_cost(&s, &Action::idle(1), &ch, &cfg), 0.0);
        let zero = ScenarioConfig { theta: 0.0, ..cfg };
        assert_eq!(energy_cost(&s, &w, &ch, &zero), 0.0);
    }

    #[test]
    fn penalty_charged_once_at_boundary() {
        let cfg = ScenarioConfig {
            flow_sizes: vec![10.0, 10.0],
            flow_deadlines: vec![5, 5],
            ..Default::default()
        };
        assert_eq!(penalty_due(&state(vec![10.0, 0.0], 6), &cfg), 20.0);
        assert_eq!(penalty_due(&state(vec![0.0, 0.0], 6), &cfg), 0.0);
        assert_eq!(penalty_due(&state(vec![10.0, 0.0], 7), &cfg), 0.0);
        assert_eq!(penalty_due(&state(vec![10.0, 0.0], 5), &cfg), 0.0);
    }

    #[test]
    fn feasibility_sets() {
        let cfg = ScenarioConfig::default();
        let with_ap = ChannelSample::from_rates(10.0, 15.0, EnergyModel::F1).unwrap();
        let no_ap = ChannelSample::from_rates(10.0, 0.0, EnergyModel::F1).unwrap();
        let s = State::initial(&cfg, 0);
        assert_eq!(feasible_actions(&s, &with_ap, &cfg).len(), 3);
        assert_eq!(feasible_actions(&s, &no_ap, &cfg), ActionMask([true, true, false]));
        let done = state(vec![0.0; 4], 10);
        assert_eq!(feasible_actions(&done, &with_ap, &cfg), ActionMask([true, false, false]));
    }

    #[test]
    fn infeasible_choice_is_rejected() {
        let cfg = ScenarioConfig::default();
        let no_ap = ChannelSample::from_rates(10.0, 0.0, EnergyModel::F1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = step(&State::initial(&cfg, 1), NetworkChoice::Wlan, &no_ap, &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, EnvError::Infeasible { .. }));
    }

    #[test]
    fn idle_step_costs_nothing_before_deadline() {
        let cfg = ScenarioConfig {
            theta: 1.0,
            ..ScenarioConfig::default()
        };
        let ch = ChannelSample::from_rates(10.0, 15.0, EnergyModel::F1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(&State::initial(&cfg, 0), NetworkChoice::Idle, &ch, &cfg, &mut rng).unwrap();
        assert_eq!((out.monetary, out.energy_weighted, out.penalty), (0.0, 0.0, 0.0));
        assert_eq!(out.next_state.remaining, cfg.flow_sizes);
        assert_eq!(out.next_state.slot, 2);
    }

    #[test]
    fn idle_at_deadline_charges_residual() {
        let cfg = one_flow(40.0, 1);
        let ch = ChannelSample::from_rates(10.0, 0.0, EnergyModel::F1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(&State::initial(&cfg, 1), NetworkChoice::Idle, &ch, &cfg, &mut rng).unwrap();
        assert_eq!(out.penalty, 80.0);
        assert!(out.terminal);
    }

    #[test]
    fn finished_flow_is_terminal_and_free() {
        let cfg = one_flow(0.0, 10);
        let s = State::initial(&cfg, 0);
        assert!(s.is_terminal(&cfg));
        let ch = ChannelSample::from_rates(10.0, 15.0, EnergyModel::F1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(&s, NetworkChoice::Idle, &ch, &cfg, &mut rng).unwrap();
        assert_eq!(out.total_cost, 0.0);
        assert!(out.terminal);
    }

    #[test]
    fn scripted_two_slot_episode_matches_hand_sum() {
        // One flow of 30 MB due at slot 2, theta = 1, f1.
        // Slot 1: cellular at 8 Mbps -> 10 MB, 15 yen, 80 Mb * f1(8) J.
        // Slot 2: WLAN at 12 Mbps -> 15 MB, 0 yen, 120 Mb * f1(12) J.
        // Residual 5 MB charged 2 * 5 = 10 after slot 2.
        let cfg = ScenarioConfig {
            theta: 1.0,
            ap_cells: (0..16).collect(),
            stay_prob: 1.0,
            ..one_flow(30.0, 2)
        };
        let f1 = |x: f64| 1.4274 * (-0.063 * x).exp();
        let hand = 15.0 + 80.0 * f1(8.0) + 120.0 * f1(12.0) + 10.0;

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s1 = State::initial(&cfg, 3);
        let c1 = ChannelSample::from_rates(8.0, 15.0, EnergyModel::F1).unwrap();
        let o1 = step(&s1, NetworkChoice::Cellular, &c1, &cfg, &mut rng).unwrap();
        let c2 = ChannelSample::from_rates(10.0, 12.0, EnergyModel::F1).unwrap();
        let o2 = step(&o1.next_state, NetworkChoice::Wlan, &c2, &cfg, &mut rng).unwrap();
        assert!(o2.terminal);
        assert_eq!(o2.next_state.remaining, vec![5.0]);
        let total = o1.total_cost + o2.total_cost;
        assert!((total - hand).abs() < 1e-9, "{total} vs {hand}");
        assert_eq!(o1.penalty, 0.0);
        assert_eq!(o2.penalty, 10.0);
    }
}
