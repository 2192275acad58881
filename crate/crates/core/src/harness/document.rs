use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::metrics::Algorithm;
use super::sweep::{Experiment, SweepGrid};
use crate::agents::{DqnHyper, TabularHyper, DEFAULT_STATE_CAP};
use crate::env::{ConfigError, EnergyModel, ScenarioConfig};

/// Flat key/value configuration: scenario parameters, run defaults and
/// learning hyper-parameters side by side. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigDocument {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    pub algorithm: Algorithm,
    pub n_flows: usize,
    pub n_aps: usize,
    pub eta: f64,
    /// Master seed from which every generator is derived.
    pub seed: u64,
    /// Replicates; each re-draws the access-point placement.
    pub seeds: Vec<u64>,
    pub n_eval_episodes: usize,
    pub parallelism: usize,
    #[serde(flatten)]
    pub dqn: DqnHyper,
    pub tabular_alpha: f64,
    pub tabular_gamma: f64,
    pub tabular_epsilon: f64,
    pub tabular_episodes: usize,
    pub tabular_bucket: u32,
    pub tabular_sigma: Option<f64>,
    pub dp_state_cap: u64,
    pub sweep_algorithms: Vec<Algorithm>,
    /// `None` sweeps every flow-count prefix of the scenario.
    pub sweep_flows: Option<Vec<usize>>,
    pub sweep_aps: Vec<usize>,
    /// `None` sweeps only `theta`.
    pub sweep_thetas: Option<Vec<f64>>,
    /// `None` sweeps only `energy_model`.
    pub sweep_energy_models: Option<Vec<EnergyModel>>,
}

impl Default for ConfigDocument {
    fn default() -> Self {
        let tab = TabularHyper::default();
        Self {
            scenario: ScenarioConfig::default(),
            algorithm: Algorithm::Dqn,
            n_flows: 4,
            n_aps: 8,
            eta: 0.3,
            seed: 0,
            seeds: (0..10).collect(),
            n_eval_episodes: 20,
            parallelism: 1,
            dqn: DqnHyper::default(),
            tabular_alpha: tab.alpha,
            tabular_gamma: tab.gamma,
            tabular_epsilon: tab.epsilon,
            tabular_episodes: tab.train_episodes,
            tabular_bucket: tab.bucket_width,
            tabular_sigma: tab.sigma,
            dp_state_cap: DEFAULT_STATE_CAP,
            sweep_algorithms: Algorithm::ALL.to_vec(),
            sweep_flows: None,
            sweep_aps: vec![8],
            sweep_thetas: None,
            sweep_energy_models: None,
        }
    }
}

/// Keys reserved for the command line; accepted from the environment but not
/// part of the document.
const COMMAND_LINE_ONLY: [&str; 2] = ["config", "out"];

impl ConfigDocument {
    pub fn tabular(&self) -> TabularHyper {
        TabularHyper {
            alpha: self.tabular_alpha,
            gamma: self.tabular_gamma,
            epsilon: self.tabular_epsilon,
            train_episodes: self.tabular_episodes,
            bucket_width: self.tabular_bucket,
            sigma: self.tabular_sigma,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        self.dqn.validate()?;
        self.tabular().validate()?;
        let max_flows = self.scenario.num_flows();
        if self.n_flows == 0 || self.n_flows > max_flows {
            return Err(ConfigError::new("n_flows", format!("must lie in 1..={max_flows}")));
        }
        let l = self.scenario.num_locations();
        if self.n_aps > l {
            return Err(ConfigError::new("n_aps", format!("at most {l} locations")));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ConfigError::new("eta", "must lie in [0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::new("seeds", "at least one replicate is required"));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::new("parallelism", "must be positive"));
        }
        if self.sweep_flows.iter().flatten().any(|&n| n == 0 || n > max_flows) {
            return Err(ConfigError::new("sweep_flows", format!("entries must lie in 1..={max_flows}")));
        }
        if self.sweep_aps.iter().any(|&n| n > l) {
            return Err(ConfigError::new("sweep_aps", format!("entries must not exceed {l}")));
        }
        if let Some(ts) = &self.sweep_thetas {
            if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(ConfigError::new("sweep_thetas", "entries must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            base: self.scenario.clone(),
            master_seed: self.seed,
            n_eval_episodes: self.n_eval_episodes,
            eta: self.eta,
            dqn: self.dqn.clone(),
            tabular: self.tabular(),
            dp_state_cap: self.dp_state_cap,
        }
    }

    /// The configured sweep over algorithms, flow counts, AP counts,
    /// energy preferences and energy models.
    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            algorithms: self.sweep_algorithms.clone(),
            n_flows: self
                .sweep_flows
                .clone()
                .unwrap_or_else(|| (1..=self.scenario.num_flows()).collect()),
            n_aps: self.sweep_aps.clone(),
            thetas: self.sweep_thetas.clone().unwrap_or_else(|| vec![self.scenario.theta]),
            energy_models: self
                .sweep_energy_models
                .clone()
                .unwrap_or_else(|| vec![self.scenario.energy_model]),
            seeds: self.seeds.clone(),
        }
    }

    /// A one-point grid for `algorithm`, `n_flows` and `n_aps`.
    pub fn single_grid(&self) -> SweepGrid {
        SweepGrid {
            algorithms: vec![self.algorithm],
            n_flows: vec![self.n_flows],
            n_aps: vec![self.n_aps],
            thetas: vec![self.scenario.theta],
            energy_models: vec![self.scenario.energy_model],
            seeds: self.seeds.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serialises")
    }

    /// Fills missing keys from the defaults, rejecting unknown keys and
    /// reporting the first offending key.
    pub fn from_map(input: &Map<String, Value>) -> Result<Self, ConfigError> {
        let defaults = match serde_json::to_value(ConfigDocument::default()).expect("defaults serialise") {
            Value::Object(m) => m,
            _ => unreachable!("document serialises to an object"),
        };
        let mut merged = defaults.clone();
        let mut keys: Vec<&String> = input.keys().collect();
        keys.sort();
        for key in keys {
            if !defaults.contains_key(key) {
                return Err(ConfigError::new(key.as_str(), "unknown key"));
            }
            let mut trial = defaults.clone();
            trial.insert(key.clone(), input[key].clone());
            if let Err(e) = serde_json::from_value::<ConfigDocument>(Value::Object(trial)) {
                return Err(ConfigError::new(key.as_str(), e.to_string()));
            }
            merged.insert(key.clone(), input[key].clone());
        }
        let doc: ConfigDocument =
            serde_json::from_value(Value::Object(merged)).map_err(|e| ConfigError::new("document", e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }
}

/// Parses JSON text into the raw key/value map.
pub fn document_map(text: &str) -> Result<Map<String, Value>, ConfigError> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ConfigError::new("document", "expected a JSON object")),
        Err(e) => Err(ConfigError::new("document", e.to_string())),
    }
}

pub fn parse_config_str(text: &str) -> Result<ConfigDocument, ConfigError> {
    ConfigDocument::from_map(&document_map(text)?)
}

pub fn parse_config(path: &Path) -> Result<ConfigDocument, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Applies `OFFLOAD_<KEY>` variables (key lower-cased) on top of `map`.
/// Values are read as JSON when they parse, otherwise as plain strings.
pub fn apply_env_overrides<I>(map: &mut Map<String, Value>, vars: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let known = match serde_json::to_value(ConfigDocument::default()).expect("defaults serialise") {
        Value::Object(m) => m,
        _ => unreachable!("document serialises to an object"),
    };
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with("OFFLOAD_")).collect();
    vars.sort();
    for (name, raw) in vars {
        let key = name["OFFLOAD_".len()..].to_ascii_lowercase();
        if COMMAND_LINE_ONLY.contains(&key.as_str()) {
            continue;
        }
        if !known.contains_key(&key) {
            return Err(ConfigError::new(key, format!("unknown key from environment variable {name}")));
        }
        let value = serde_json::from_str::<Value>(&raw).unwrap_or(Value::String(raw));
        map.insert(key, value);
    }
    Ok(())
}
