use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sbomp_cli::{
    cmd_bench, cmd_dataset, cmd_drive, cmd_plan, cmd_scenarios, cmd_train, load_params, print_summary, read_json_file,
    CliError, DriveOptions, HeuristicKind, PlanOptions, TrainSetup,
};

#[derive(Parser)]
#[command(name = "sbomp", version, about = "Lattice motion planning with learned heuristics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lattice parameters as JSON; defaults apply to missing fields.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct HeuristicArgs {
    #[arg(long, value_enum, default_value_t = HeuristicKind::Dp)]
    heuristic: HeuristicKind,
    /// Model file, required for `--heuristic ml`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    start_lane: usize,
    #[arg(long, default_value_t = 0)]
    start_kv: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write random scenarios as JSON files.
    Scenarios {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan once on a scenario.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        h: HeuristicArgs,
        /// Plan JSON; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled dataset (JSONL, gzip if the name ends in .gz).
    Dataset {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Training setup JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model file.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV; defaults to the model path with `.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compare heuristics by nodes explored.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Directory of scenario JSON files.
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1.0,1.5,2.0")]
        epsilons: Vec<f64>,
        /// Add a wall_time column. Makes the CSV differ between runs.
        #[arg(long)]
        timing: bool,
        /// Output directory for bench.csv, bench_aggregate.csv and bench.md.
        #[arg(long)]
        out: PathBuf,
    },
    /// Receding-horizon closed-loop run.
    Drive {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        h: HeuristicArgs,
        #[arg(long, default_value_t = 3)]
        commit_steps: usize,
        #[arg(long, default_value_t = 3)]
        route_multiple: usize,
        /// Global step budget.
        #[arg(long)]
        time_budget: Option<usize>,
        /// Trace JSON; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn plan_options(h: HeuristicArgs) -> PlanOptions {
    PlanOptions {
        heuristic: h.heuristic,
        model: h.model,
        epsilon: h.epsilon,
        start_lane: h.start_lane,
        start_kv: h.start_kv,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scenarios { common, count, out } => {
            let params = load_params(common.params.as_deref())?;
            let paths = cmd_scenarios(&params, count, common.seed, &out)?;
            print(&serde_json::json!({ "scenarios": paths.len(), "dir": out }))
        }
        Command::Plan {
            common: _,
            scenario,
            h,
            out,
        } => {
            let report = cmd_plan(&scenario, &plan_options(h), out.as_deref())?;
            if out.is_some() {
                print(&serde_json::json!({ "cost": report.cost, "stats": report.stats }))
            } else {
                print(&report)
            }
        }
        Command::Dataset { common, k_max, out } => {
            let params = load_params(common.params.as_deref())?;
            print(&cmd_dataset(&params, k_max, common.seed, &out)?)
        }
        Command::Train {
            common,
            dataset,
            config,
            out,
            log,
        } => {
            let setup: TrainSetup = match config {
                Some(path) => read_json_file(&path)?,
                None => TrainSetup::default(),
            };
            print(&cmd_train(&dataset, &setup, common.seed, &out, log.as_deref())?)
        }
        Command::Bench {
            common: _,
            scenarios,
            model,
            epsilons,
            timing,
            out,
        } => {
            let report = cmd_bench(&scenarios, model.as_deref(), &epsilons, &out, timing)?;
            print(&report.aggregates)
        }
        Command::Drive {
            common: _,
            scenario,
            h,
            commit_steps,
            route_multiple,
            time_budget,
            out,
        } => {
            let opts = DriveOptions {
                heuristic: h.heuristic,
                model: h.model,
                epsilon: h.epsilon,
                commit_steps,
                route_multiple,
                time_budget,
                start_lane: h.start_lane,
                start_kv: h.start_kv,
            };
            let run = cmd_drive(&scenario, &opts, out.as_deref())?;
            if out.is_some() {
                print(&serde_json::json!({
                    "outcome": run.outcome,
                    "total_cost": run.total_cost,
                    "replans": run.instances.len(),
                    "steps": run.trajectory.len() - 1,
                }))
            } else {
                print(&run)
            }
        }
    }
}

fn print<T: Serialize>(value: &T) -> Result<(), CliError> {
    print_summary(io::stdout().lock(), value).map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
