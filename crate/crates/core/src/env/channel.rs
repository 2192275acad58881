use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Continuous, ContinuousCDF};

use super::{EnergyModel, EnvError, ScenarioConfig};

/// Joules per megabit at `throughput_mbps` under the selected exponential fit.
pub fn energy_rate(throughput_mbps: f64, model: EnergyModel) -> Result<f64, EnvError> {
    if !(throughput_mbps > 0.0) || !throughput_mbps.is_finite() {
        return Err(EnvError::Domain(throughput_mbps));
    }
    Ok(match model {
        EnergyModel::F1 => 1.4274 * (-0.063 * throughput_mbps).exp(),
        EnergyModel::F2 => 1.4 * (-0.09 * throughput_mbps).exp(),
    })
}

/// Normal distribution restricted to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64, lo: f64, hi: f64) -> Self {
        Self { mean, std, lo, hi }
    }

    /// Rejection sampling from the untruncated normal. A zero deviation is a
    /// point mass at the mean.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        let normal = Normal::new(self.mean, self.std).expect("finite positive deviation");
        loop {
            let x = normal.sample(rng);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
    }

    /// Mean of the truncated distribution.
    pub fn expectation(&self) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        let std_normal = statrs::distribution::Normal::standard();
        let a = (self.lo - self.mean) / self.std;
        let b = (self.hi - self.mean) / self.std;
        let mass = std_normal.cdf(b) - std_normal.cdf(a);
        self.mean + self.std * (std_normal.pdf(a) - std_normal.pdf(b)) / mass
    }
}

/// Throughputs realised at one location for the current slot, together with
/// the energy rates they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub cell_rate: f64,
    /// Zero when the location has no access point.
    pub wlan_rate: f64,
    pub eps_cell: f64,
    /// Zero when the location has no access point.
    pub eps_wlan: f64,
}

impl ChannelSample {
    /// Builds a sample from given rates; a zero WLAN rate means no coverage.
    pub fn from_rates(cell_rate: f64, wlan_rate: f64, model: EnergyModel) -> Result<Self, EnvError> {
        let eps_cell = energy_rate(cell_rate, model)?;
        let eps_wlan = if wlan_rate > 0.0 {
            energy_rate(wlan_rate, model)?
        } else {
            0.0
        };
        Ok(Self {
            cell_rate,
            wlan_rate: wlan_rate.max(0.0),
            eps_cell,
            eps_wlan,
        })
    }

    pub fn wlan_available(&self) -> bool {
        self.wlan_rate > 0.0
    }
}

pub fn cell_distribution(cfg: &ScenarioConfig) -> TruncatedNormal {
    TruncatedNormal::new(cfg.cell_mean, cfg.cell_std, cfg.cell_lo, cfg.cell_hi)
}

pub fn wlan_distribution(cfg: &ScenarioConfig) -> TruncatedNormal {
    TruncatedNormal::new(cfg.wlan_mean, cfg.wlan_std, cfg.wlan_lo, cfg.wlan_hi)
}

/// Draws the cellular rate and, if `loc` hosts an access point, the WLAN rate.
pub fn sample_throughputs<R: Rng + ?Sized>(loc: usize, cfg: &ScenarioConfig, rng: &mut R) -> ChannelSample {
    let cell = cell_distribution(cfg).sample(rng);
    let wlan = if cfg.has_ap(loc) {
        wlan_distribution(cfg).sample(rng)
    } else {
        0.0
    };
    // Validated configs keep both bands strictly positive.
    ChannelSample::from_rates(cell, wlan, cfg.energy_model).expect("validated rate bands are positive")
}
