use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::EnergyModel;

/// Policy under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "dqn")]
    Dqn,
    #[serde(rename = "dp")]
    Dp,
    #[serde(rename = "dp-noisy")]
    DpNoisy,
    #[serde(rename = "heuristic")]
    Heuristic,
    #[serde(rename = "tabular-q")]
    TabularQ,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Dqn,
        Algorithm::Dp,
        Algorithm::DpNoisy,
        Algorithm::Heuristic,
        Algorithm::TabularQ,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Dp => "dp",
            Algorithm::DpNoisy => "dp-noisy",
            Algorithm::Heuristic => "heuristic",
            Algorithm::TabularQ => "tabular-q",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected dqn, dp, dp-noisy, heuristic or tabular-q)"))
    }
}

/// One evaluated (or training) episode of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: u32,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub n_flows: usize,
    pub n_aps: usize,
    pub energy_model: EnergyModel,
    pub theta: f64,
    pub episode: u32,
    pub monetary_yen: f64,
    /// Joules before the energy-preference weight.
    pub energy_joule: f64,
    pub weighted_energy: f64,
    pub penalty_yen: f64,
    /// `monetary_yen + weighted_energy + penalty_yen`.
    pub total_cost: f64,
    /// Delivered over total megabytes; 0 when there was nothing to send.
    pub completion_ratio: f64,
    pub wall_slots: u32,
}

pub const RECORD_HEADER: [&str; 15] = [
    "run_id",
    "seed",
    "algorithm",
    "n_flows",
    "n_aps",
    "energy_model",
    "theta",
    "episode",
    "monetary_yen",
    "energy_joule",
    "weighted_energy",
    "penalty_yen",
    "total_cost",
    "completion_ratio",
    "wall_slots",
];

/// Metric columns summarised by [`aggregate`].
pub const METRICS: [&str; 7] = [
    "monetary_yen",
    "energy_joule",
    "weighted_energy",
    "penalty_yen",
    "total_cost",
    "completion_ratio",
    "wall_slots",
];

impl MetricsRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "monetary_yen" => self.monetary_yen,
            "energy_joule" => self.energy_joule,
            "weighted_energy" => self.weighted_energy,
            "penalty_yen" => self.penalty_yen,
            "total_cost" => self.total_cost,
            "completion_ratio" => self.completion_ratio,
            "wall_slots" => self.wall_slots as f64,
            _ => return None,
        })
    }

    fn to_row(&self) -> [String; 15] {
        [
            self.run_id.to_string(),
            self.seed.to_string(),
            self.algorithm.to_string(),
            self.n_flows.to_string(),
            self.n_aps.to_string(),
            self.energy_model.to_string(),
            fmt_sig6(self.theta),
            self.episode.to_string(),
            fmt_sig6(self.monetary_yen),
            fmt_sig6(self.energy_joule),
            fmt_sig6(self.weighted_energy),
            fmt_sig6(self.penalty_yen),
            fmt_sig6(self.total_cost),
            fmt_sig6(self.completion_ratio),
            self.wall_slots.to_string(),
        ]
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self, CsvError> {
        let field = |i: usize| row.get(i).ok_or_else(|| CsvError::Parse(format!("missing column {}", RECORD_HEADER[i])));
        fn num<T: FromStr>(s: &str, col: &str) -> Result<T, CsvError> {
            s.parse().map_err(|_| CsvError::Parse(format!("bad value `{s}` in column {col}")))
        }
        Ok(Self {
            run_id: num(field(0)?, "run_id")?,
            seed: num(field(1)?, "seed")?,
            algorithm: field(2)?.parse().map_err(CsvError::Parse)?,
            n_flows: num(field(3)?, "n_flows")?,
            n_aps: num(field(4)?, "n_aps")?,
            energy_model: field(5)?.parse().map_err(CsvError::Parse)?,
            theta: num(field(6)?, "theta")?,
            episode: num(field(7)?, "episode")?,
            monetary_yen: num(field(8)?, "monetary_yen")?,
            energy_joule: num(field(9)?, "energy_joule")?,
            weighted_energy: num(field(10)?, "weighted_energy")?,
            penalty_yen: num(field(11)?, "penalty_yen")?,
            total_cost: num(field(12)?, "total_cost")?,
            completion_ratio: num(field(13)?, "completion_ratio")?,
            wall_slots: num(field(14)?, "wall_slots")?,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Parse(String),
}

/// Decimal rendering rounded to six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("scientific notation parses");
    rounded.to_string()
}

pub fn write_records<W: io::Write>(records: &[MetricsRecord], out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_file(records: &[MetricsRecord], path: &Path) -> Result<(), CsvError> {
    write_records(records, std::fs::File::create(path)?)
}

pub fn read_records<R: io::Read>(input: R) -> Result<Vec<MetricsRecord>, CsvError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(CsvError::Parse("header does not match the metrics schema".into()));
    }
    rd.records().map(|row| MetricsRecord::from_row(&row?)).collect()
}

/// Column a summary can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Algorithm,
    NFlows,
    NAps,
    EnergyModel,
    Theta,
    Seed,
}

impl GroupKey {
    pub fn column(self) -> &'static str {
        match self {
            GroupKey::Algorithm => "algorithm",
            GroupKey::NFlows => "n_flows",
            GroupKey::NAps => "n_aps",
            GroupKey::EnergyModel => "energy_model",
            GroupKey::Theta => "theta",
            GroupKey::Seed => "seed",
        }
    }

    fn value(self, r: &MetricsRecord) -> String {
        match self {
            GroupKey::Algorithm => r.algorithm.to_string(),
            GroupKey::NFlows => r.n_flows.to_string(),
            GroupKey::NAps => r.n_aps.to_string(),
            GroupKey::EnergyModel => r.energy_model.to_string(),
            GroupKey::Theta => fmt_sig6(r.theta),
            GroupKey::Seed => r.seed.to_string(),
        }
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            GroupKey::Algorithm,
            GroupKey::NFlows,
            GroupKey::NAps,
            GroupKey::EnergyModel,
            GroupKey::Theta,
            GroupKey::Seed,
        ]
        .into_iter()
        .find(|k| k.column() == s)
        .ok_or_else(|| format!("cannot group by `{s}`"))
    }
}

/// Mean and population standard deviation of every metric within one group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: Vec<(String, String)>,
    pub count: usize,
    /// Indexed like [`METRICS`].
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SummaryRow {
    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        METRICS.iter().position(|m| *m == metric).map(|i| self.mean[i])
    }

    pub fn std_of(&self, metric: &str) -> Option<f64> {
        METRICS.iter().position(|m| *m == metric).map(|i| self.std[i])
    }

    pub fn group_value(&self, column: &str) -> Option<&str> {
        self.group.iter().find(|(k, _)| k == column).map(|(_, v)| v.as_str())
    }
}

/// Groups in order of first appearance.
pub fn aggregate(records: &[MetricsRecord], keys: &[GroupKey]) -> Vec<SummaryRow> {
    let mut groups: Vec<(Vec<String>, Vec<&MetricsRecord>)> = Vec::new();
    for r in records {
        let values: Vec<String> = keys.iter().map(|k| k.value(r)).collect();
        match groups.iter_mut().find(|(v, _)| *v == values) {
            Some((_, members)) => members.push(r),
            None => groups.push((values, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(values, members)| {
            let n = members.len() as f64;
            let mut mean = Vec::with_capacity(METRICS.len());
            let mut std = Vec::with_capacity(METRICS.len());
            for m in METRICS {
                let xs: Vec<f64> = members.iter().map(|r| r.metric(m).expect("known metric")).collect();
                let mu = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
                mean.push(mu);
                std.push(var.sqrt());
            }
            SummaryRow {
                group: keys.iter().map(|k| k.column().to_string()).zip(values).collect(),
                count: members.len(),
                mean,
                std,
            }
        })
        .collect()
}

pub fn summary_header(keys: &[GroupKey]) -> Vec<String> {
    let mut h: Vec<String> = keys.iter().map(|k| k.column().to_string()).collect();
    h.push("count".into());
    for m in METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_std"));
    }
    h
}

pub fn write_summary<W: io::Write>(rows: &[SummaryRow], keys: &[GroupKey], out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(summary_header(keys))?;
    for row in rows {
        let mut fields: Vec<String> = row.group.iter().map(|(_, v)| v.clone()).collect();
        fields.push(row.count.to_string());
        for (m, s) in row.mean.iter().zip(&row.std) {
            fields.push(fmt_sig6(*m));
            fields.push(fmt_sig6(*s));
        }
        w.write_record(fields)?;
    }
    w.flush()?;
    Ok(())
}
