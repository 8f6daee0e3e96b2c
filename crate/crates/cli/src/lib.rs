//! Library side of the `sbomp` command-line tool.
//!
//! Each subcommand is a plain function here so tests can drive it without
//! spawning a process; `main.rs` only parses flags and maps errors to exit
//! codes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sbomp::dataset::{self, derive_seed, split_dataset, DatasetError};
use sbomp::heuristics::{DpHeuristic, EpsilonBand, Heuristic, HeuristicError, MlHeuristic, ZeroHeuristic};
use sbomp::lattice::{
    build_occupancy_grid, random_scenario, LatticeError, LatticeParams, Node, OccupancyGrid, Scenario, State,
};
use sbomp::mlmodel::{self, build_samples, mse, MlpModel, ModelError, TrainConfig, TrainError};
use sbomp::search::{plan, SearchError, SearchStats};

pub mod bench;
pub mod drive;

pub use bench::{cmd_bench, BenchmarkReport};
pub use drive::{cmd_drive, DriveOptions, RecedingHorizonRun};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NoSolution(_) => 2,
            CliError::Usage(_) | CliError::Validation(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::NoSolution { .. } => CliError::NoSolution(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { path, source } => CliError::Io {
                path: path.into(),
                source,
            },
            DatasetError::Search(s) => s.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { path, message } => CliError::Io {
                path: path.into(),
                source: io::Error::other(message),
            },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<HeuristicError> for CliError {
    fn from(e: HeuristicError) -> Self {
        match e {
            HeuristicError::Model(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Lattice parameters from a JSON file; missing fields take defaults.
pub fn load_params(path: Option<&Path>) -> Result<LatticeParams> {
    let params = match path {
        Some(p) => read_json_file(p)?,
        None => LatticeParams::default(),
    };
    params.validate()?;
    Ok(params)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let scenario: Scenario = read_json_file(path)?;
    scenario.validate()?;
    Ok(scenario)
}

/// Which heuristic guides the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicKind {
    Zero,
    Dp,
    Ml,
}

impl HeuristicKind {
    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::Zero => "zero",
            HeuristicKind::Dp => "dp",
            HeuristicKind::Ml => "ml",
        }
    }
}

/// A heuristic chosen at run time.
pub enum AnyHeuristic<'m> {
    Zero(ZeroHeuristic),
    Dp(DpHeuristic),
    Ml(MlHeuristic<'m>),
}

impl<'m> AnyHeuristic<'m> {
    /// `model` must be present iff `kind` is ml.
    pub fn new(kind: HeuristicKind, model: Option<&'m MlpModel>, epsilon: f64, params: &LatticeParams) -> Result<Self> {
        match (kind, model) {
            (HeuristicKind::Zero, None) => Ok(AnyHeuristic::Zero(ZeroHeuristic)),
            (HeuristicKind::Dp, None) => Ok(AnyHeuristic::Dp(DpHeuristic::new(params))),
            (HeuristicKind::Ml, Some(m)) => Ok(AnyHeuristic::Ml(MlHeuristic::new(
                m,
                params,
                EpsilonBand::new(epsilon)?,
            )?)),
            (HeuristicKind::Ml, None) => Err(CliError::Usage("heuristic ml requires --model".into())),
            (k, Some(_)) => Err(CliError::Usage(format!(
                "--model only applies to heuristic ml, not {}",
                k.name()
            ))),
        }
    }
}

impl Heuristic for AnyHeuristic<'_> {
    fn estimate(&self, state: &State, grid: &OccupancyGrid) -> f64 {
        match self {
            AnyHeuristic::Zero(h) => h.estimate(state, grid),
            AnyHeuristic::Dp(h) => h.estimate(state, grid),
            AnyHeuristic::Ml(h) => h.estimate(state, grid),
        }
    }

    fn name(&self) -> String {
        match self {
            AnyHeuristic::Zero(h) => h.name(),
            AnyHeuristic::Dp(h) => h.name(),
            AnyHeuristic::Ml(h) => h.name(),
        }
    }
}

pub fn load_model_for(kind: HeuristicKind, path: Option<&Path>) -> Result<Option<MlpModel>> {
    match (kind, path) {
        (HeuristicKind::Ml, None) => Err(CliError::Usage("heuristic ml requires --model".into())),
        (HeuristicKind::Ml, Some(p)) => Ok(Some(mlmodel::load_model(p)?)),
        (_, Some(_)) => Err(CliError::Usage("--model only applies to heuristic ml".into())),
        (_, None) => Ok(None),
    }
}

/// Writes `count` random scenarios as `<id>.json` into `out_dir`.
pub fn cmd_scenarios(params: &LatticeParams, count: usize, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let scenario = random_scenario(params, derive_seed(seed, i as u64));
        let path = out_dir.join(format!("{}.json", scenario.id));
        write_json(&path, &scenario)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub nodes_explored: usize,
    pub open_peak: usize,
    pub expansions: usize,
    pub wall_time: f64,
}

impl From<SearchStats> for StatsReport {
    fn from(s: SearchStats) -> Self {
        Self {
            nodes_explored: s.nodes_explored,
            open_peak: s.open_peak,
            expansions: s.expansions,
            wall_time: s.wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub l: usize,
    pub ks: usize,
    pub kt: usize,
    pub kv: usize,
    pub g: f64,
    /// Action that produced this node; absent on the start node.
    pub a: Option<i8>,
    pub dl: Option<i8>,
}

impl From<&Node> for ChainStep {
    fn from(n: &Node) -> Self {
        Self {
            l: n.state.l,
            ks: n.state.ks,
            kt: n.state.kt,
            kv: n.state.kv,
            g: n.g,
            a: n.action.map(|m| m.a),
            dl: n.action.map(|m| m.dl),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub scenario_id: String,
    pub heuristic: HeuristicKind,
    pub epsilon: f64,
    pub cost: f64,
    pub chain: Vec<ChainStep>,
    pub stats: StatsReport,
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub heuristic: HeuristicKind,
    pub model: Option<PathBuf>,
    pub epsilon: f64,
    pub start_lane: usize,
    pub start_kv: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            heuristic: HeuristicKind::Dp,
            model: None,
            epsilon: 1.5,
            start_lane: 0,
            start_kv: 0,
        }
    }
}

/// Plans once from `(start_lane, 0, 0, start_kv)` and optionally writes the report.
pub fn cmd_plan(scenario_path: &Path, opts: &PlanOptions, out: Option<&Path>) -> Result<PlanReport> {
    let scenario = load_scenario(scenario_path)?;
    let model = load_model_for(opts.heuristic, opts.model.as_deref())?;
    let params = scenario.params;
    let heuristic = AnyHeuristic::new(opts.heuristic, model.as_ref(), opts.epsilon, &params)?;
    let start = State::new(opts.start_lane, 0, 0, opts.start_kv);
    if !params.contains(&start) {
        return Err(CliError::Validation(format!(
            "start state {start:?} is outside the lattice"
        )));
    }
    let grid = build_occupancy_grid(&scenario)?;
    let result = plan(&Node::root(start), &grid, &params, &heuristic)?;
    let report = PlanReport {
        scenario_id: scenario.id,
        heuristic: opts.heuristic,
        epsilon: if opts.heuristic == HeuristicKind::Ml {
            opts.epsilon
        } else {
            1.0
        },
        cost: result.cost,
        chain: result.solution.iter().map(ChainStep::from).collect(),
        stats: result.stats.into(),
    };
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub scenarios: usize,
    pub records: usize,
    pub dead_ends: usize,
}

/// Runs the generation loop and writes JSONL (gzip when `out` ends in `.gz`).
pub fn cmd_dataset(params: &LatticeParams, k_max: usize, seed: u64, out: &Path) -> Result<DatasetSummary> {
    let ds = dataset::generate_dataset(k_max, params, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    dataset::save_dataset(&ds, out)?;
    Ok(DatasetSummary {
        scenarios: ds.scenarios.len(),
        records: ds.records.len(),
        dead_ends: ds.dead_end_count(),
    })
}

/// Contents of the `--config` file for `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSetup {
    pub hidden: Vec<usize>,
    pub epsilon: f64,
    /// Train/validation/test fractions, split by scenario.
    pub split: (f64, f64, f64),
    pub train: TrainConfig,
}

impl Default for TrainSetup {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            epsilon: 1.5,
            split: (0.8, 0.1, 0.1),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub train_records: usize,
    pub final_train_mse: f64,
    pub final_val_mse: f64,
    pub test_mse: Option<f64>,
    pub test_scenarios: Vec<String>,
}

/// Log path used when none is given: `model.json` -> `model.log.csv`.
pub fn default_log_path(out_model: &Path) -> PathBuf {
    out_model.with_extension("log.csv")
}

/// Trains a fresh model. `seed` drives init, split and shuffling.
pub fn cmd_train(
    dataset_path: &Path,
    setup: &TrainSetup,
    seed: u64,
    out_model: &Path,
    log_path: Option<&Path>,
) -> Result<TrainSummary> {
    let ds = dataset::load_dataset(dataset_path)?;
    let params = ds.meta.params;
    let band = EpsilonBand::new(setup.epsilon)?;
    let (train_set, val_set, test_set) = split_dataset(&ds, setup.split, derive_seed(seed, 0))?;
    let table = sbomp::heuristics::build_dp_table(&params);
    let model = MlpModel::for_lattice(&params, &setup.hidden, derive_seed(seed, 1));
    let cfg = TrainConfig {
        seed: derive_seed(seed, 2),
        ..setup.train.clone()
    };
    let (trained, log) = mlmodel::train(&model, &train_set, &val_set, &cfg, &table, band)?;
    let test_samples = build_samples(&test_set, &table, band, cfg.label_cap_mode)?;
    let test_mse = (!test_samples.is_empty()).then(|| mse(&trained, &test_samples));

    if let Some(dir) = out_model.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    mlmodel::save_model(&trained, out_model)?;
    let log_path = log_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_log_path(out_model));
    let mut buf = Vec::new();
    log.write_csv(&mut buf).map_err(|e| CliError::io(&log_path, e))?;
    write_bytes(&log_path, &buf)?;

    let last = log.epochs.last().expect("epochs >= 1");
    Ok(TrainSummary {
        epochs: log.epochs.len(),
        train_records: train_set.records.len(),
        final_train_mse: last.train_mse,
        final_val_mse: last.val_mse,
        test_mse,
        test_scenarios: test_set.scenarios.iter().map(|s| s.id.clone()).collect(),
    })
}

/// Prints a serializable summary as one JSON line.
pub fn print_summary<T: Serialize>(mut w: impl Write, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut w, value)?;
    writeln!(w)
}

// The guide's benchmarking chapter runs as a doctest here, since it needs
// this crate.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/benchmarking.md")]
mod book_benchmarking {}
