use serde::{Deserialize, Serialize};
use std::fmt;

/// Exponential energy-throughput fit used to derive joule-per-megabit rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyModel {
    F1,
    F2,
}

impl EnergyModel {
    pub fn as_str(self) -> &'static str {
        match self {
            EnergyModel::F1 => "f1",
            EnergyModel::F2 => "f2",
        }
    }
}

impl fmt::Display for EnergyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnergyModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f1" => Ok(EnergyModel::F1),
            "f2" => Ok(EnergyModel::F2),
            other => Err(format!("unknown energy model `{other}` (expected f1 or f2)")),
        }
    }
}

/// A configuration value that failed validation, tagged with its key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

/// Full description of one offloading scenario.
///
/// Rates are in Mbps, volumes in megabytes, prices in yen per megabyte and
/// slots are 1-based decision epochs of `slot_seconds` each. The defaults
/// reproduce the reference simulation setup (4x4 grid, 8 access points,
/// four flows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub grid_width: usize,
    pub grid_height: usize,
    pub ap_cells: Vec<usize>,
    pub flow_sizes: Vec<f64>,
    pub flow_deadlines: Vec<u32>,
    pub price_cellular: f64,
    pub theta: f64,
    pub slot_seconds: f64,
    pub stay_prob: f64,
    pub cell_mean: f64,
    pub cell_std: f64,
    pub cell_lo: f64,
    pub cell_hi: f64,
    pub wlan_mean: f64,
    pub wlan_std: f64,
    pub wlan_lo: f64,
    pub wlan_hi: f64,
    pub energy_model: EnergyModel,
    pub penalty_coeff: f64,
    pub granularity_sigma: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            grid_width: 4,
            grid_height: 4,
            ap_cells: vec![0, 2, 5, 7, 8, 10, 13, 15],
            flow_sizes: vec![400.0, 600.0, 800.0, 1000.0],
            flow_deadlines: vec![400, 800, 1200, 1600],
            price_cellular: 1.5,
            theta: 0.05,
            slot_seconds: 1.0,
            stay_prob: 0.6,
            cell_mean: 10.0,
            cell_std: 5.0,
            cell_lo: 5.0,
            cell_hi: 15.0,
            wlan_mean: 15.0,
            wlan_std: 6.0,
            wlan_lo: 9.0,
            wlan_hi: 21.0,
            energy_model: EnergyModel::F1,
            penalty_coeff: 2.0,
            granularity_sigma: 1.0,
        }
    }
}

fn check(ok: bool, key: &str, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(key, reason))
    }
}

fn check_band(prefix: &str, mean: f64, std: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
    let key = |s: &str| format!("{prefix}_{s}");
    check(lo.is_finite() && lo > 0.0, &key("lo"), "must be a positive rate")?;
    check(hi.is_finite() && lo < hi, &key("hi"), "must exceed the lower bound")?;
    check(std.is_finite() && std >= 0.0, &key("std"), "must be non-negative")?;
    check(
        mean.is_finite() && (lo..=hi).contains(&mean),
        &key("mean"),
        "must lie within [lo, hi]",
    )
}

impl ScenarioConfig {
    pub fn num_locations(&self) -> usize {
        self.grid_width * self.grid_height
    }

    pub fn num_flows(&self) -> usize {
        self.flow_sizes.len()
    }

    /// Last deadline, i.e. the horizon length in slots.
    pub fn horizon(&self) -> u32 {
        self.flow_deadlines.iter().copied().max().unwrap_or(0)
    }

    pub fn has_ap(&self, loc: usize) -> bool {
        self.ap_cells.contains(&loc)
    }

    /// Megabytes moved in one slot at `rate_mbps`.
    pub fn volume_mb(&self, rate_mbps: f64) -> f64 {
        rate_mbps * self.slot_seconds / 8.0
    }

    /// Rate in Mbps that moves `volume` megabytes in one slot.
    pub fn rate_for_volume(&self, volume_mb: f64) -> f64 {
        volume_mb * 8.0 / self.slot_seconds
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.grid_width > 0, "grid_width", "must be positive")?;
        check(self.grid_height > 0, "grid_height", "must be positive")?;
        let l = self.num_locations();
        let mut seen = vec![false; l];
        for &cell in &self.ap_cells {
            check(cell < l, "ap_cells", "location index outside the grid")?;
            check(!seen[cell], "ap_cells", "duplicate location")?;
            seen[cell] = true;
        }
        check(!self.flow_sizes.is_empty(), "flow_sizes", "at least one flow is required")?;
        check(
            self.flow_sizes.iter().all(|b| b.is_finite() && *b >= 0.0),
            "flow_sizes",
            "sizes must be finite and non-negative",
        )?;
        check(
            self.flow_deadlines.len() == self.flow_sizes.len(),
            "flow_deadlines",
            "one deadline per flow is required",
        )?;
        check(
            self.flow_deadlines.iter().all(|&t| t >= 1),
            "flow_deadlines",
            "deadlines are 1-based slot indices",
        )?;
        check(
            self.flow_deadlines.windows(2).all(|w| w[0] <= w[1]),
            "flow_deadlines",
            "deadlines must be non-decreasing",
        )?;
        check(
            self.price_cellular.is_finite() && self.price_cellular >= 0.0,
            "price_cellular",
            "must be non-negative",
        )?;
        check(self.theta.is_finite() && self.theta >= 0.0, "theta", "must be non-negative")?;
        check(
            self.slot_seconds.is_finite() && self.slot_seconds > 0.0,
            "slot_seconds",
            "must be positive",
        )?;
        check(
            self.stay_prob > 0.0 && self.stay_prob <= 1.0,
            "stay_prob",
            "must lie in (0, 1]",
        )?;
        check_band("cell", self.cell_mean, self.cell_std, self.cell_lo, self.cell_hi)?;
        check_band("wlan", self.wlan_mean, self.wlan_std, self.wlan_lo, self.wlan_hi)?;
        check(
            self.penalty_coeff.is_finite() && self.penalty_coeff >= 0.0,
            "penalty_coeff",
            "must be non-negative",
        )?;
        check(
            self.granularity_sigma.is_finite() && self.granularity_sigma > 0.0,
            "granularity_sigma",
            "must be positive",
        )
    }

    /// Keeps the first `n` flows of the configured size/deadline vectors.
    pub fn with_flows(mut self, n: usize) -> Self {
        self.flow_sizes.truncate(n);
        self.flow_deadlines.truncate(n);
        self
    }
}
