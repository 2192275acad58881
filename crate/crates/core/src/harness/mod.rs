//! Seeded experiment orchestration: sweeps, evaluation, aggregation, output.

mod chart;
mod document;
mod metrics;
mod sweep;

pub use chart::{emit_chart, render_chart, ChartError};
pub use document::{apply_env_overrides, document_map, parse_config, parse_config_str, ConfigDocument};
pub use metrics::{
    aggregate, fmt_sig6, read_records, summary_header, write_records, write_records_file, write_summary, Algorithm,
    CsvError, GroupKey, MetricsRecord, SummaryRow, METRICS, RECORD_HEADER,
};
pub use sweep::{
    derive_seed, derived_rng, evaluate_run, place_aps, run_episode, run_sweep, scenario_for, EpisodeMetrics,
    Experiment, HarnessError, RunOutput, RunSpec, SweepGrid,
};
