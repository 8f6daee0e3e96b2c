//! Heuristic comparison by nodes explored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use sbomp::heuristics::EpsilonBand;
use sbomp::lattice::{build_occupancy_grid, Node, Scenario, State};
use sbomp::mlmodel::{self, MlpModel};
use sbomp::search::{plan, SearchError};

use crate::{load_scenario, write_bytes, AnyHeuristic, CliError, HeuristicKind, Result};

/// One planner run on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub scenario_id: String,
    pub has_dynamic_obstacles: bool,
    pub heuristic: HeuristicKind,
    /// 1 for zero and dp.
    pub epsilon: f64,
    pub nodes_explored: usize,
    /// `None` when the search exhausted Open.
    pub cost: Option<f64>,
    /// Cost found by the zero heuristic on the same scenario.
    pub optimal_cost: Option<f64>,
    pub cost_ratio: Option<f64>,
    pub no_solution: bool,
    pub wall_time: f64,
}

/// Node counts for one heuristic setting over a dynamic or static subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub heuristic: HeuristicKind,
    pub epsilon: f64,
    pub dynamic: bool,
    pub instances: usize,
    pub solved: usize,
    pub median_nodes: f64,
    pub mean_nodes: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BenchmarkReport {
    /// Sorted by `(scenario_id, heuristic, epsilon)`.
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<AggregateRow>,
}

const ROW_HEADER: [&str; 9] = [
    "scenario_id",
    "has_dynamic_obstacles",
    "heuristic",
    "epsilon",
    "nodes_explored",
    "cost",
    "optimal_cost",
    "cost_ratio",
    "no_solution",
];

const AGGREGATE_HEADER: [&str; 7] = [
    "heuristic",
    "epsilon",
    "dynamic",
    "instances",
    "solved",
    "median_nodes",
    "mean_nodes",
];

fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

impl BenchRow {
    fn fields(&self, timing: bool) -> Vec<String> {
        let mut f = vec![
            self.scenario_id.clone(),
            self.has_dynamic_obstacles.to_string(),
            self.heuristic.name().to_string(),
            self.epsilon.to_string(),
            self.nodes_explored.to_string(),
            num(self.cost),
            num(self.optimal_cost),
            num(self.cost_ratio),
            self.no_solution.to_string(),
        ];
        if timing {
            f.push(self.wall_time.to_string());
        }
        f
    }
}

impl AggregateRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.heuristic.name().to_string(),
            self.epsilon.to_string(),
            self.dynamic.to_string(),
            self.instances.to_string(),
            self.solved.to_string(),
            self.median_nodes.to_string(),
            self.mean_nodes.to_string(),
        ]
    }
}

impl BenchmarkReport {
    /// Sorts `rows` and recomputes the aggregate table.
    pub fn from_rows(mut rows: Vec<BenchRow>) -> Self {
        rows.sort_by(|a, b| {
            (a.scenario_id.as_str(), a.heuristic)
                .cmp(&(b.scenario_id.as_str(), b.heuristic))
                .then(a.epsilon.total_cmp(&b.epsilon))
        });
        // Keyed by (heuristic, epsilon bits, dynamic); value is (epsilon, nodes, solved).
        type Group = (f64, Vec<usize>, usize);
        let mut groups: BTreeMap<(HeuristicKind, u64, bool), Group> = BTreeMap::new();
        for r in &rows {
            let g = groups
                .entry((r.heuristic, r.epsilon.to_bits(), r.has_dynamic_obstacles))
                .or_insert((r.epsilon, Vec::new(), 0));
            g.1.push(r.nodes_explored);
            g.2 += usize::from(!r.no_solution);
        }
        let mut aggregates: Vec<AggregateRow> = groups
            .into_iter()
            .map(|((heuristic, _, dynamic), (epsilon, mut nodes, solved))| {
                nodes.sort_unstable();
                AggregateRow {
                    heuristic,
                    epsilon,
                    dynamic,
                    instances: nodes.len(),
                    solved,
                    median_nodes: median(&nodes),
                    mean_nodes: nodes.iter().sum::<usize>() as f64 / nodes.len() as f64,
                }
            })
            .collect();
        aggregates.sort_by(|a, b| {
            (a.heuristic, a.dynamic)
                .cmp(&(b.heuristic, b.dynamic))
                .then(a.epsilon.total_cmp(&b.epsilon))
        });
        Self { rows, aggregates }
    }

    pub fn aggregate(&self, heuristic: HeuristicKind, epsilon: f64, dynamic: bool) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.heuristic == heuristic && a.epsilon == epsilon && a.dynamic == dynamic)
    }

    /// Per-instance CSV. Wall time is only included with `timing`, so the
    /// default output is reproducible byte for byte.
    pub fn write_csv<W: io::Write>(&self, w: W, timing: bool) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = ROW_HEADER.to_vec();
        if timing {
            header.push("wall_time");
        }
        out.write_record(&header)?;
        for r in &self.rows {
            out.write_record(r.fields(timing))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_aggregate_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(AGGREGATE_HEADER)?;
        for a in &self.aggregates {
            out.write_record(a.fields())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_markdown(&self, timing: bool) -> String {
        fn table(out: &mut String, header: &[&str], rows: impl Iterator<Item = Vec<String>>) {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for r in rows {
                let cells: Vec<String> = r.into_iter().map(|c| c.replace('|', "\\|")).collect();
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
        }
        let mut out = String::from("# Benchmark\n\n## Nodes explored by dynamic-obstacle presence\n\n");
        table(
            &mut out,
            &AGGREGATE_HEADER,
            self.aggregates.iter().map(AggregateRow::fields),
        );
        let unsolved: Vec<&str> = self
            .rows
            .iter()
            .filter(|r| r.no_solution && r.heuristic == HeuristicKind::Zero)
            .map(|r| r.scenario_id.as_str())
            .collect();
        if !unsolved.is_empty() {
            let _ = writeln!(out, "\nNo solution: {}", unsolved.join(", "));
        }
        out.push_str("\n## Instances\n\n");
        let mut header: Vec<&str> = ROW_HEADER.to_vec();
        if timing {
            header.push("wall_time");
        }
        table(&mut out, &header, self.rows.iter().map(|r| r.fields(timing)));
        out
    }
}

fn run_one(
    scenario: &Scenario,
    kind: HeuristicKind,
    model: Option<&MlpModel>,
    epsilon: f64,
) -> Result<(usize, Option<f64>, f64)> {
    let params = scenario.params;
    let grid = build_occupancy_grid(scenario)?;
    let h = AnyHeuristic::new(kind, model, epsilon, &params)?;
    match plan(&Node::root(State::new(0, 0, 0, 0)), &grid, &params, &h) {
        Ok(r) => Ok((r.stats.nodes_explored, Some(r.cost), r.stats.wall_time)),
        Err(SearchError::NoSolution { stats }) => Ok((stats.nodes_explored, None, stats.wall_time)),
        Err(e) => Err(CliError::Validation(format!("scenario {}: {e}", scenario.id))),
    }
}

fn scenario_rows(scenario: &Scenario, model: Option<&MlpModel>, epsilons: &[f64]) -> Result<Vec<BenchRow>> {
    let dynamic = scenario.has_dynamic_obstacles();
    let (zero_nodes, optimal, zero_time) = run_one(scenario, HeuristicKind::Zero, None, 1.0)?;
    let row = |heuristic, epsilon, (nodes, cost, wall_time): (usize, Option<f64>, f64)| BenchRow {
        scenario_id: scenario.id.clone(),
        has_dynamic_obstacles: dynamic,
        heuristic,
        epsilon,
        nodes_explored: nodes,
        cost,
        optimal_cost: optimal,
        cost_ratio: match (cost, optimal) {
            (Some(c), Some(o)) if o > 0.0 => Some(c / o),
            (Some(_), Some(_)) => Some(1.0),
            _ => None,
        },
        no_solution: cost.is_none(),
        wall_time,
    };
    let mut rows = vec![
        row(HeuristicKind::Zero, 1.0, (zero_nodes, optimal, zero_time)),
        row(HeuristicKind::Dp, 1.0, run_one(scenario, HeuristicKind::Dp, None, 1.0)?),
    ];
    if let Some(m) = model {
        for &eps in epsilons {
            rows.push(row(
                HeuristicKind::Ml,
                eps,
                run_one(scenario, HeuristicKind::Ml, Some(m), eps)?,
            ));
        }
    }
    Ok(rows)
}

/// Runs zero, dp and (given a model) ml at every epsilon on every scenario.
pub fn run_benchmark(scenarios: &[Scenario], model: Option<&MlpModel>, epsilons: &[f64]) -> Result<BenchmarkReport> {
    for &eps in epsilons {
        EpsilonBand::new(eps)?;
    }
    if let Some(m) = model {
        for s in scenarios {
            m.check_input_dim(&s.params)?;
        }
    }
    let rows: Vec<Vec<BenchRow>> = scenarios
        .par_iter()
        .map(|s| scenario_rows(s, model, epsilons))
        .collect::<Result<_>>()?;
    Ok(BenchmarkReport::from_rows(rows.into_iter().flatten().collect()))
}

/// Every `*.json` file in `dir`, in file-name order.
pub fn load_scenario_dir(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
    paths.sort();
    paths.iter().map(|p| load_scenario(p)).collect()
}

/// Writes `bench.csv`, `bench_aggregate.csv` and `bench.md` into `out_dir`.
pub fn cmd_bench(
    scenario_dir: &Path,
    model_path: Option<&Path>,
    epsilons: &[f64],
    out_dir: &Path,
    timing: bool,
) -> Result<BenchmarkReport> {
    let scenarios = load_scenario_dir(scenario_dir)?;
    let model = model_path.map(mlmodel::load_model).transpose()?;
    let report = run_benchmark(&scenarios, model.as_ref(), epsilons)?;

    let mut rows = Vec::new();
    report
        .write_csv(&mut rows, timing)
        .map_err(|e| CliError::io(out_dir, io::Error::other(e)))?;
    write_bytes(&out_dir.join("bench.csv"), &rows)?;
    let mut agg = Vec::new();
    report
        .write_aggregate_csv(&mut agg)
        .map_err(|e| CliError::io(out_dir, io::Error::other(e)))?;
    write_bytes(&out_dir.join("bench_aggregate.csv"), &agg)?;
    write_bytes(&out_dir.join("bench.md"), report.to_markdown(timing).as_bytes())?;
    Ok(report)
}
