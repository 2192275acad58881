//! Command-line front end: configuration loading, subcommand dispatch and
//! chart emission.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use offload_core::agents::{dp_solve, dqn_train, tabular_train, ThroughputExpectation};
use offload_core::env::{perturb_transitions, EnergyModel, TransitionMatrix};
use offload_core::harness::{
    aggregate, apply_env_overrides, derived_rng, document_map, emit_chart, render_chart, run_sweep, scenario_for,
    write_records, write_summary, Algorithm, ConfigDocument, GroupKey, MetricsRecord, RunSpec, SweepGrid,
};

#[derive(Debug, Parser)]
#[command(name = "offload", about = "Mobile data offloading experiments", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a learning agent on one scenario and write its learning curve.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also write the trained network (DQN only) as JSON.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train if needed, then evaluate one algorithm over the configured seeds.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured grid; writes records, summary, learning curves and a chart.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the finite-horizon program and optionally export the table.
    DpSolve {
        #[command(flatten)]
        common: Common,
        /// Limit the exported table to slots up to this value.
        #[arg(long)]
        max_slot: Option<u32>,
    },
    /// Draw an SVG line chart from a summary CSV.
    Chart {
        /// Summary CSV produced by `sweep` or `evaluate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "n_flows")]
        x: String,
        #[arg(long, default_value = "monetary_yen")]
        y: String,
        #[arg(long, default_value = "algorithm")]
        series: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat JSON configuration document.
    #[arg(long, env = "OFFLOAD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path.
    #[arg(long, env = "OFFLOAD_OUT")]
    pub out: Option<PathBuf>,
    /// dqn | dp | dp-noisy | heuristic | tabular-q
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub flows: Option<usize>,
    #[arg(long)]
    pub aps: Option<usize>,
    /// Transition noise weight for dp-noisy.
    #[arg(long)]
    pub eta: Option<f64>,
    /// f1 | f2
    #[arg(long)]
    pub energy_model: Option<EnergyModel>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug)]
pub struct CliError(String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CliError {}

fn fail(msg: impl fmt::Display) -> CliError {
    CliError(msg.to_string())
}

impl Common {
    /// Document from the config file, then `OFFLOAD_*` variables, then flags.
    pub fn document<I>(&self, vars: I, sweep: bool) -> Result<ConfigDocument, CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut map = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| fail(format!("config {}: {e}", path.display())))?;
                document_map(&text).map_err(|e| fail(format!("config: {e}")))?
            }
            None => Map::new(),
        };
        apply_env_overrides(&mut map, vars).map_err(|e| fail(format!("config: {e}")))?;
        let mut set = |key: &str, v: Value| {
            map.insert(key.to_string(), v);
        };
        if let Some(s) = self.seed {
            set("seed", s.into());
        }
        if let Some(a) = self.algorithm {
            set("algorithm", a.as_str().into());
            if sweep {
                set("sweep_algorithms", vec![Value::from(a.as_str())].into());
            }
        }
        if let Some(n) = self.flows {
            set("n_flows", n.into());
            if sweep {
                set("sweep_flows", vec![n].into());
            }
        }
        if let Some(n) = self.aps {
            set("n_aps", n.into());
            if sweep {
                set("sweep_aps", vec![n].into());
            }
        }
        if let Some(e) = self.eta {
            set("eta", e.into());
        }
        if let Some(m) = self.energy_model {
            set("energy_model", m.to_string().into());
            if sweep {
                set("sweep_energy_models", vec![Value::from(m.to_string())].into());
            }
        }
        if let Some(p) = self.parallelism {
            set("parallelism", p.into());
        }
        ConfigDocument::from_map(&map).map_err(|e| fail(format!("config: {e}")))
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

/// `base` with its extension replaced by `suffix` appended to the stem.
fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    base.with_file_name(format!("{stem}{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn write_records_to(records: &[MetricsRecord], path: &Path) -> Result<(), CliError> {
    write_records(records, create(path)?).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn write_summary_to(records: &[MetricsRecord], keys: &[GroupKey], path: &Path) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_summary(&aggregate(records, keys), keys, &mut buf).map_err(|e| fail(e.to_string()))?;
    std::fs::write(path, &buf).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn summary_keys(grid: &SweepGrid) -> Vec<GroupKey> {
    let mut keys = vec![GroupKey::Algorithm, GroupKey::NFlows, GroupKey::NAps];
    if grid.thetas.len() > 1 {
        keys.push(GroupKey::Theta);
    }
    if grid.energy_models.len() > 1 {
        keys.push(GroupKey::EnergyModel);
    }
    keys
}

/// The swept dimension with the most points, used as the chart's x axis.
fn chart_axis(grid: &SweepGrid) -> GroupKey {
    [
        (GroupKey::NFlows, grid.n_flows.len()),
        (GroupKey::NAps, grid.n_aps.len()),
        (GroupKey::Theta, grid.thetas.len()),
        (GroupKey::EnergyModel, grid.energy_models.len()),
    ]
    .into_iter()
    .fold((GroupKey::NFlows, 1), |best, cur| if cur.1 > best.1 { cur } else { best })
    .0
}

fn run_grid(doc: &ConfigDocument, grid: &SweepGrid, out: &Path, chart: bool) -> Result<(), CliError> {
    let exp = doc.experiment();
    let result = run_sweep(&exp, grid, doc.parallelism).map_err(fail)?;
    write_records_to(&result.records, out)?;
    let summary = write_summary_to(&result.records, &summary_keys(grid), &sibling(out, "_summary.csv"))?;
    print!("{summary}");
    if !result.learning_curve.is_empty() {
        write_records_to(&result.learning_curve, &sibling(out, "_curve.csv"))?;
    }
    if chart {
        let axis = chart_axis(grid);
        if axis == GroupKey::EnergyModel {
            return Ok(());
        }
        let keys = [GroupKey::Algorithm, axis];
        let mut buf = Vec::new();
        write_summary(&aggregate(&result.records, &keys), &keys, &mut buf).map_err(|e| fail(e.to_string()))?;
        let text = String::from_utf8(buf).expect("csv output is utf-8");
        let svg = render_chart(&text, axis.column(), "monetary_yen", "algorithm").map_err(fail)?;
        let path = sibling(out, ".svg");
        std::fs::write(&path, svg).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn train(doc: &ConfigDocument, out: &Path, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let exp = doc.experiment();
    let seed = doc.seeds[0];
    let spec = RunSpec {
        run_id: 0,
        algorithm: doc.algorithm,
        n_flows: doc.n_flows,
        n_aps: doc.n_aps,
        theta: doc.scenario.theta,
        energy_model: doc.scenario.energy_model,
        seed,
    };
    let cfg = scenario_for(&exp, &spec);
    let mut rng = derived_rng(doc.seed, &[seed]);
    let (episodes, net) = match doc.algorithm {
        Algorithm::Dqn => {
            let o = dqn_train(&cfg, &exp.dqn, &mut rng).map_err(fail)?;
            (o.episodes, Some((o.net, o.steps)))
        }
        Algorithm::TabularQ => (tabular_train(&cfg, &exp.tabular, &mut rng).map_err(fail)?.1, None),
        other => return Err(fail(format!("algorithm {other} has no training phase"))),
    };
    let mut w = create(out)?;
    writeln!(w, "episode,monetary_yen,energy_joule,weighted_energy,penalty_yen,total_cost,wall_slots")
        .and_then(|_| {
            episodes.iter().enumerate().try_for_each(|(i, e)| {
                writeln!(
                    w,
                    "{i},{},{},{},{},{},{}",
                    e.monetary,
                    e.energy_joule,
                    e.energy_weighted,
                    e.penalty,
                    e.total(),
                    e.slots
                )
            })
        })
        .and_then(|_| w.flush())
        .map_err(|e| fail(format!("{}: {e}", out.display())))?;
    if let (Some(path), Some((net, steps))) = (checkpoint, net) {
        std::fs::write(path, net.to_checkpoint(steps).to_json()).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    }
    if let Some(last) = episodes.last() {
        println!("trained {} episodes; final episode cost {:.3}", episodes.len(), last.total());
    }
    Ok(())
}

fn dp(doc: &ConfigDocument, out: Option<&Path>, max_slot: Option<u32>) -> Result<(), CliError> {
    let exp = doc.experiment();
    let spec = RunSpec {
        run_id: 0,
        algorithm: doc.algorithm,
        n_flows: doc.n_flows,
        n_aps: doc.n_aps,
        theta: doc.scenario.theta,
        energy_model: doc.scenario.energy_model,
        seed: doc.seeds[0],
    };
    let cfg = scenario_for(&exp, &spec);
    let exact = TransitionMatrix::from_config(&cfg);
    let model = if doc.algorithm == Algorithm::DpNoisy {
        perturb_transitions(&exact, cfg.grid_width, cfg.grid_height, doc.eta)
    } else {
        exact
    };
    let table = dp_solve(&cfg, &model, &ThroughputExpectation::from_config(&cfg), doc.dp_state_cap).map_err(fail)?;
    println!("states {}; access points {:?}", table.state_count(), cfg.ap_cells);
    for l in 0..table.num_locations() {
        println!("location {l}: expected cost {:.6}", table.start_value(l));
    }
    if let Some(path) = out {
        let mut w = create(path)?;
        table
            .write_csv(&mut w, max_slot)
            .and_then(|_| w.flush())
            .map_err(|e| fail(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Executes one parsed command with the given environment variables.
pub fn execute<I>(command: Command, vars: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    match command {
        Command::Train { common, checkpoint } => {
            let doc = common.document(vars, false)?;
            train(&doc, &common.out_or("curve.csv"), checkpoint.as_deref())
        }
        Command::Evaluate { common } => {
            let doc = common.document(vars, false)?;
            run_grid(&doc, &doc.single_grid(), &common.out_or("evaluation.csv"), false)
        }
        Command::Sweep { common } => {
            let doc = common.document(vars, true)?;
            run_grid(&doc, &doc.sweep_grid(), &common.out_or("sweep.csv"), true)
        }
        Command::DpSolve { common, max_slot } => {
            let doc = common.document(vars, false)?;
            dp(&doc, common.out.as_deref(), max_slot)
        }
        Command::Chart {
            input,
            x,
            y,
            series,
            out,
        } => emit_chart(&input, &x, &y, &series, &out).map_err(|e| fail(format!("chart: {e}"))),
    }
}

/// Parses `argv` (program name first) and runs it; returns the exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command, std::env::vars()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
