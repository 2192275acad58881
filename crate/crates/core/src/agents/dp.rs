//! Backward induction over the σ-discretised offloading MDP.
//!
//! Throughputs are replaced by their expectations, so each network choice
//! delivers a fixed number of σ units per slot. Under earliest-deadline-first
//! allocation the remaining vector of the flows still in play is always
//! "suffix full": earlier flows drain first and later flows are untouched
//! until their predecessors finish. The vector is therefore determined by its
//! total, and the table is indexed by `(slot, location, total units)`.

use std::io::Write;

use super::Policy;
use crate::env::{
    cell_distribution, energy_rate, feasible_actions, wlan_distribution, ChannelSample, ConfigError, NetworkChoice,
    ScenarioConfig, State, TransitionMatrix,
};

/// Tables above this many `(slot, location, units)` entries are refused.
pub const DEFAULT_STATE_CAP: u64 = 80_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DpError {
    #[error("state space too large: {states} states exceeds the cap of {cap}")]
    TooLarge { states: u64, cap: u64 },
    #[error("transition matrix has {got} locations, scenario has {expected}")]
    MatrixSize { expected: usize, got: usize },
    #[error("transition matrix rows must sum to 1")]
    NotStochastic,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Mean throughput per network used in place of the random draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputExpectation {
    pub cell_mbps: f64,
    /// Per location; zero where there is no access point.
    pub wlan_mbps: Vec<f64>,
}

impl ThroughputExpectation {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let cell = cell_distribution(cfg).expectation();
        let wlan = wlan_distribution(cfg).expectation();
        Self {
            cell_mbps: cell,
            wlan_mbps: (0..cfg.num_locations())
                .map(|l| if cfg.has_ap(l) { wlan } else { 0.0 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    /// Units held by flows still transmittable at this slot.
    serve_cap: u32,
    /// Units held by flows not yet charged their penalty.
    key_cap: u32,
    /// Cost-to-go after this slot's penalty, `[location][0..=serve_cap]`.
    serve_values: Vec<f32>,
    policy: Vec<u8>,
}

impl Layer {
    fn idx(&self, l: usize, r: u32) -> usize {
        l * (self.serve_cap as usize + 1) + r as usize
    }
}

#[derive(Debug, Clone)]
pub struct DpTable {
    sigma: f64,
    penalty_coeff: f64,
    sizes_units: Vec<u32>,
    deadlines: Vec<u32>,
    /// Index 0 is slot 1; the last entry is slot `T^M + 1`.
    layers: Vec<Layer>,
    start_values: Vec<f64>,
    num_locations: usize,
}

fn units(mb: f64, sigma: f64) -> u32 {
    (mb / sigma - 1e-9).ceil().max(0.0) as u32
}

fn units_floor(mb: f64, sigma: f64) -> u32 {
    (mb / sigma + 1e-9).floor().max(0.0) as u32
}

/// Sum of unit sizes of flows whose deadline is at least `from`.
fn cap_from(sizes: &[u32], deadlines: &[u32], from: u32) -> u32 {
    sizes.iter().zip(deadlines).filter(|(_, &t)| t >= from).map(|(s, _)| s).sum()
}

fn key_cap(sizes: &[u32], deadlines: &[u32], slot: u32) -> u32 {
    cap_from(sizes, deadlines, slot.saturating_sub(1))
}

/// Logical number of `(slot, location, units)` entries for `cfg`.
pub fn state_count(cfg: &ScenarioConfig) -> u64 {
    let sizes: Vec<u32> = cfg.flow_sizes.iter().map(|&b| units(b, cfg.granularity_sigma)).collect();
    (1..=cfg.horizon() + 1)
        .map(|t| cfg.num_locations() as u64 * (key_cap(&sizes, &cfg.flow_deadlines, t) as u64 + 1))
        .sum()
}

struct Model {
    d_cell: u32,
    cost_cell: f64,
    d_wlan: Vec<u32>,
    cost_wlan: Vec<f64>,
    has_ap: Vec<bool>,
}

impl Model {
    fn new(cfg: &ScenarioConfig, tp: &ThroughputExpectation) -> Result<Self, ConfigError> {
        let sigma = cfg.granularity_sigma;
        let eps = |rate: f64| energy_rate(rate, cfg.energy_model).map_err(|e| ConfigError::new("throughput", e.to_string()));
        let d_cell = units_floor(cfg.volume_mb(tp.cell_mbps), sigma);
        let unit_mb = sigma;
        let cost_cell = cfg.price_cellular * unit_mb + cfg.theta * eps(tp.cell_mbps)? * unit_mb * 8.0;
        let mut d_wlan = Vec::with_capacity(tp.wlan_mbps.len());
        let mut cost_wlan = Vec::with_capacity(tp.wlan_mbps.len());
        let mut has_ap = Vec::with_capacity(tp.wlan_mbps.len());
        for &w in &tp.wlan_mbps {
            if w > 0.0 {
                d_wlan.push(units_floor(cfg.volume_mb(w), sigma));
                cost_wlan.push(cfg.theta * eps(w)? * unit_mb * 8.0);
                has_ap.push(true);
            } else {
                d_wlan.push(0);
                cost_wlan.push(0.0);
                has_ap.push(false);
            }
        }
        Ok(Self {
            d_cell,
            cost_cell,
            d_wlan,
            cost_wlan,
            has_ap,
        })
    }
}

/// Solves the finite-horizon Bellman recursion (undiscounted) for `cfg`.
pub fn dp_solve(
    cfg: &ScenarioConfig,
    transitions: &TransitionMatrix,
    throughput: &ThroughputExpectation,
    state_cap: u64,
) -> Result<DpTable, DpError> {
    cfg.validate()?;
    let n = cfg.num_locations();
    if transitions.len() != n {
        return Err(DpError::MatrixSize {
            expected: n,
            got: transitions.len(),
        });
    }
    if throughput.wlan_mbps.len() != n {
        return Err(ConfigError::new("throughput", "one WLAN expectation per location required").into());
    }
    if !transitions.is_stochastic(1e-9) {
        return Err(DpError::NotStochastic);
    }
    let states = state_count(cfg);
    if states > state_cap {
        return Err(DpError::TooLarge { states, cap: state_cap });
    }

    let sigma = cfg.granularity_sigma;
    let coeff = cfg.penalty_coeff * sigma;
    let model = Model::new(cfg, throughput)?;
    let sizes: Vec<u32> = cfg.flow_sizes.iter().map(|&b| units(b, sigma)).collect();
    let deadlines = cfg.flow_deadlines.clone();
    let horizon = cfg.horizon();
    let successors: Vec<Vec<(usize, f64)>> = (0..n).map(|l| transitions.successors(l)).collect();

    let mut layers: Vec<Layer> = Vec::with_capacity(horizon as usize + 1);
    let terminal_key = key_cap(&sizes, &deadlines, horizon + 1);
    layers.push(Layer {
        serve_cap: 0,
        key_cap: terminal_key,
        serve_values: vec![0.0; n],
        policy: vec![0; n],
    });

    // Exact values of the layer after the current one, `[location][0..=key_cap]`.
    let mut next_key = terminal_key;
    let mut next: Vec<f64> = (0..n)
        .flat_map(|_| (0..=terminal_key).map(|r| coeff * r as f64))
        .collect();
    let mut ev: Vec<f64> = Vec::new();

    for t in (1..=horizon).rev() {
        let serve = cap_from(&sizes, &deadlines, t);
        debug_assert_eq!(serve, next_key);
        let width = serve as usize + 1;
        ev.clear();
        ev.resize(n * width, 0.0);
        for l in 0..n {
            let row = &mut ev[l * width..(l + 1) * width];
            for &(m, p) in &successors[l] {
                let src = &next[m * width..(m + 1) * width];
                for (e, v) in row.iter_mut().zip(src) {
                    *e += p * v;
                }
            }
        }

        let key = key_cap(&sizes, &deadlines, t);
        let mut serve_values = vec![0f32; n * width];
        let mut policy = vec![0u8; n * width];
        let mut values = vec![0f64; n * (key as usize + 1)];
        for l in 0..n {
            let row = &ev[l * width..(l + 1) * width];
            let w = &mut values[l * (key as usize + 1)..(l + 1) * (key as usize + 1)];
            for r in 0..=serve {
                let (best, choice) = if r == 0 {
                    (0.0, NetworkChoice::Idle)
                } else {
                    let ri = r as usize;
                    let mut best = (row[ri], NetworkChoice::Idle);
                    let dc = model.d_cell.min(r);
                    let vc = model.cost_cell * dc as f64 + row[ri - dc as usize];
                    if vc < best.0 {
                        best = (vc, NetworkChoice::Cellular);
                    }
                    if model.has_ap[l] {
                        let dw = model.d_wlan[l].min(r);
                        let vw = model.cost_wlan[l] * dw as f64 + row[ri - dw as usize];
                        if vw < best.0 {
                            best = (vw, NetworkChoice::Wlan);
                        }
                    }
                    best
                };
                w[r as usize] = best;
                serve_values[l * width + r as usize] = best as f32;
                policy[l * width + r as usize] = choice as u8;
            }
            for r in serve + 1..=key {
                w[r as usize] = coeff * (r - serve) as f64 + w[serve as usize];
            }
        }
        layers.push(Layer {
            serve_cap: serve,
            key_cap: key,
            serve_values,
            policy,
        });
        next = values;
        next_key = key;
    }
    layers.reverse();

    let start_cap = layers[0].key_cap as usize;
    let start_values = (0..n).map(|l| next[l * (start_cap + 1) + start_cap]).collect();
    Ok(DpTable {
        sigma,
        penalty_coeff: cfg.penalty_coeff,
        sizes_units: sizes,
        deadlines,
        layers,
        start_values,
        num_locations: n,
    })
}

impl DpTable {
    pub fn horizon(&self) -> u32 {
        self.layers.len() as u32 - 1
    }

    pub fn num_locations(&self) -> usize {
        self.num_locations
    }

    /// Number of `(slot, location, units)` entries represented.
    pub fn state_count(&self) -> u64 {
        self.layers
            .iter()
            .map(|ly| self.num_locations as u64 * (ly.key_cap as u64 + 1))
            .sum()
    }

    /// Exact expected cost from slot 1 with every flow at full size.
    pub fn start_value(&self, location: usize) -> f64 {
        self.start_values[location]
    }

    fn layer(&self, slot: u32) -> Option<&Layer> {
        slot.checked_sub(1).and_then(|i| self.layers.get(i as usize))
    }

    /// Units counted for `slot`: flows whose penalty is still outstanding.
    pub fn key_units(&self, slot: u32, remaining: &[f64]) -> u32 {
        let from = slot.saturating_sub(1);
        let mb: f64 = remaining
            .iter()
            .zip(&self.deadlines)
            .filter(|(_, &t)| t >= from)
            .map(|(b, _)| b)
            .sum();
        units(mb, self.sigma)
    }

    fn serve_units(&self, slot: u32, remaining: &[f64]) -> u32 {
        let mb: f64 = remaining
            .iter()
            .zip(&self.deadlines)
            .filter(|(_, &t)| t >= slot)
            .map(|(b, _)| b)
            .sum();
        units(mb, self.sigma)
    }

    /// Cost-to-go at `(slot, location, R)` where `R` counts units of flows
    /// whose penalty is still outstanding (deadline ≥ slot − 1).
    pub fn value_units(&self, slot: u32, location: usize, units: u32) -> Option<f64> {
        let ly = self.layer(slot)?;
        if location >= self.num_locations || units > ly.key_cap {
            return None;
        }
        let served = units.min(ly.serve_cap);
        let excess = (units - served) as f64;
        if slot as usize == self.layers.len() {
            return Some(self.penalty_coeff * self.sigma * units as f64);
        }
        Some(self.penalty_coeff * self.sigma * excess + ly.serve_values[ly.idx(location, served)] as f64)
    }

    /// Cost-to-go for a remaining vector (megabytes, one entry per flow).
    pub fn value(&self, slot: u32, location: usize, remaining: &[f64]) -> Option<f64> {
        self.value_units(slot, location, self.key_units(slot, remaining))
    }

    pub fn action_units(&self, slot: u32, location: usize, units: u32) -> Option<NetworkChoice> {
        let ly = self.layer(slot)?;
        if location >= self.num_locations || units > ly.key_cap {
            return None;
        }
        let served = units.min(ly.serve_cap);
        NetworkChoice::from_index(ly.policy[ly.idx(location, served)] as usize)
    }

    /// Greedy choice for a live state; remaining volumes are rounded up to σ.
    pub fn action(&self, state: &State) -> NetworkChoice {
        let Some(ly) = self.layer(state.slot) else {
            return NetworkChoice::Idle;
        };
        if state.location >= self.num_locations {
            return NetworkChoice::Idle;
        }
        let r = self.serve_units(state.slot, &state.remaining).min(ly.serve_cap);
        NetworkChoice::from_index(ly.policy[ly.idx(state.location, r)] as usize).unwrap_or(NetworkChoice::Idle)
    }

    /// Suffix-full remaining vector (units) holding `total` units of the
    /// flows whose deadline is at least `from`.
    pub fn remaining_vector(&self, from: u32, total: u32) -> Vec<u32> {
        let mut out = vec![0u32; self.sizes_units.len()];
        let mut left = total;
        for j in (0..self.sizes_units.len()).rev() {
            if self.deadlines[j] < from {
                continue;
            }
            let take = left.min(self.sizes_units[j]);
            out[j] = take;
            left -= take;
        }
        out
    }

    /// Writes `slot,location,remaining,value,action` rows; `remaining` lists
    /// per-flow megabytes separated by `;`.
    pub fn write_csv<W: Write>(&self, mut out: W, max_slot: Option<u32>) -> std::io::Result<()> {
        writeln!(out, "slot,location,remaining,value,action")?;
        let last = max_slot.unwrap_or(u32::MAX).min(self.horizon() + 1);
        for slot in 1..=last {
            let ly = &self.layers[slot as usize - 1];
            for l in 0..self.num_locations {
                for r in 0..=ly.key_cap {
                    let vec = self.remaining_vector(slot.saturating_sub(1), r);
                    let rem: Vec<String> = vec.iter().map(|u| (*u as f64 * self.sigma).to_string()).collect();
                    let value = self.value_units(slot, l, r).unwrap_or(f64::NAN);
                    let action = self.action_units(slot, l, r).unwrap_or(NetworkChoice::Idle);
                    writeln!(out, "{slot},{l},{},{value},{action}", rem.join(";"))?;
                }
            }
        }
        Ok(())
    }
}

/// Executes the table's greedy policy, falling back to Idle when the choice
/// is unavailable in the realised channel.
#[derive(Debug, Clone)]
pub struct DpPolicy<'a> {
    pub table: &'a DpTable,
}

impl Policy for DpPolicy<'_> {
    fn decide(&mut self, state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> NetworkChoice {
        let choice = self.table.action(state);
        if feasible_actions(state, channel, cfg).contains(choice) {
            choice
        } else {
            NetworkChoice::Idle
        }
    }
}

impl Policy for DpTable {
    fn decide(&mut self, state: &State, channel: &ChannelSample, cfg: &ScenarioConfig) -> NetworkChoice {
        DpPolicy { table: self }.decide(state, channel, cfg)
    }
}
