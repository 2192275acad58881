#![allow(dead_code)]

use offload_core::env::{energy_rate, EnergyModel, NetworkChoice, ScenarioConfig};
use rand::Rng;

/// One flow, deterministic rates of 1 MB (cellular) and 2 MB (WLAN) per slot,
/// σ = 1 MB, so every delivered volume is a whole number of units.
pub fn unit_instance<R: Rng>(rng: &mut R, max_width: usize, max_size: u32, max_deadline: u32) -> ScenarioConfig {
    let width = rng.random_range(1..=max_width);
    let height = if width <= 2 { rng.random_range(1..=2) } else { 1 };
    let l = width * height;
    let ap_cells: Vec<usize> = (0..l).filter(|_| rng.random_bool(0.5)).collect();
    ScenarioConfig {
        grid_width: width,
        grid_height: height,
        ap_cells,
        flow_sizes: vec![rng.random_range(0..=max_size) as f64],
        flow_deadlines: vec![rng.random_range(1..=max_deadline)],
        price_cellular: rng.random_range(0.5..3.0),
        theta: rng.random_range(0.0..1.0),
        slot_seconds: 1.0,
        stay_prob: rng.random_range(0.1..=1.0),
        cell_mean: 8.0,
        cell_std: 0.0,
        wlan_mean: 16.0,
        wlan_std: 0.0,
        energy_model: if rng.random_bool(0.5) { EnergyModel::F1 } else { EnergyModel::F2 },
        penalty_coeff: rng.random_range(0.5..4.0),
        granularity_sigma: 1.0,
        ..ScenarioConfig::default()
    }
}

/// Megabytes sent and immediate cost (penalty excluded) of `choice` with
/// `left` MB outstanding, or `None` when WLAN is unavailable at `loc`.
pub fn slot_cost(cfg: &ScenarioConfig, loc: usize, left: f64, choice: NetworkChoice) -> Option<(f64, f64)> {
    let per_joule = |rate: f64| cfg.theta * energy_rate(rate, cfg.energy_model).unwrap() * 8.0;
    match choice {
        NetworkChoice::Idle => Some((0.0, 0.0)),
        NetworkChoice::Cellular => {
            let sent = (cfg.cell_mean * cfg.slot_seconds / 8.0).min(left);
            Some((sent, cfg.price_cellular * sent + per_joule(cfg.cell_mean) * sent))
        }
        NetworkChoice::Wlan => cfg.ap_cells.contains(&loc).then(|| {
            let sent = (cfg.wlan_mean * cfg.slot_seconds / 8.0).min(left);
            (sent, per_joule(cfg.wlan_mean) * sent)
        }),
    }
}

pub const CHOICES: [NetworkChoice; 3] = [NetworkChoice::Idle, NetworkChoice::Cellular, NetworkChoice::Wlan];
