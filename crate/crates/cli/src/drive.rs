//! Closed-loop receding-horizon runs.
//!
//! The scenario is read as a world in global cell coordinates whose window
//! at origin `(0, 0)` is the scenario grid itself. Vehicles keep driving at
//! constant speed, light phases repeat every `n_kt` steps and
//! forbidden-lane-change bands stay where they are. Each replan renders the
//! window at the ego's current `(s, t)`, plans, commits a prefix of the
//! chain, then shifts the window.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sbomp::heuristics::Heuristic;
use sbomp::lattice::{
    CellCode, GridBuilder, LatticeParams, MotionPrimitive, Node, Obstacle, OccupancyGrid, Scenario, State,
};
use sbomp::search::{plan, SearchError};

use crate::{load_model_for, load_scenario, write_json, AnyHeuristic, CliError, HeuristicKind, Result, StatsReport};

/// Ground truth over unbounded global `s` and `t`.
#[derive(Debug, Clone)]
pub struct World {
    scenario: Scenario,
}

impl World {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario }
    }

    pub fn params(&self) -> &LatticeParams {
        &self.scenario.params
    }

    pub fn code(&self, s: usize, t: usize, l: usize) -> CellCode {
        let p = &self.scenario.params;
        let mut red = false;
        let mut no_lc = false;
        for o in &self.scenario.obstacles {
            match *o {
                Obstacle::MovingVehicle { lane, s0, v } => {
                    if lane == l && s0 + v * t == s {
                        return CellCode::Vehicle;
                    }
                }
                Obstacle::TrafficLight { s_tl, ref phase } => {
                    red |= s_tl == s && phase[t % p.n_kt];
                }
                Obstacle::ForbiddenLaneChange {
                    s_from,
                    s_to,
                    lane_pair,
                } => {
                    no_lc |= lane_pair.0 == l && (s_from..=s_to).contains(&s);
                }
            }
        }
        if red {
            CellCode::RedLight
        } else if no_lc {
            CellCode::LcForbidden
        } else {
            CellCode::Free
        }
    }

    /// The planning grid for a window whose cell `(0, 0)` sits at `(s, t)`.
    pub fn window(&self, s: usize, t: usize) -> OccupancyGrid {
        let p = self.scenario.params;
        let mut b = GridBuilder::new(&p);
        for ks in 0..p.n_ks {
            for kt in 0..p.n_kt {
                for l in 0..p.n_kl {
                    let code = self.code(s + ks, t + kt, l);
                    if code != CellCode::Free {
                        b.mark(ks, kt, l, code);
                    }
                }
            }
        }
        b.finish()
    }

    /// True if the move from `from` with `action` hits something, using the
    /// same swept-cell rule as the planner but without a window edge.
    pub fn step_blocked(&self, from: &GlobalState, action: MotionPrimitive) -> bool {
        let kv = (from.kv as isize + action.a as isize) as usize;
        let l = (from.l as isize + action.dl as isize) as usize;
        let t = from.t + 1;
        let swept = if kv == 0 {
            from.s..=from.s
        } else {
            from.s + 1..=from.s + kv
        };
        swept.into_iter().any(|s| {
            matches!(self.code(s, t, l), CellCode::Vehicle | CellCode::RedLight)
                || (action.dl != 0 && self.code(s, t, from.l) == CellCode::LcForbidden)
        })
    }
}

/// Ego state in global cells, with the action that led to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalState {
    pub l: usize,
    pub s: usize,
    pub t: usize,
    pub kv: usize,
    pub a: Option<i8>,
    pub dl: Option<i8>,
}

impl GlobalState {
    fn step(&self, action: MotionPrimitive) -> Self {
        let kv = (self.kv as isize + action.a as isize) as usize;
        Self {
            l: (self.l as isize + action.dl as isize) as usize,
            s: self.s + kv,
            t: self.t + 1,
            kv,
            a: Some(action.a),
            dl: Some(action.dl),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanInstance {
    /// Where the window origin was placed.
    pub origin: GlobalState,
    pub plan_cost: Option<f64>,
    pub plan_length: usize,
    /// Actions actually committed from this plan.
    pub executed: usize,
    pub stats: StatsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveOutcome {
    RouteEnd,
    TimeBudget,
    NoSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecedingHorizonRun {
    pub scenario_id: String,
    pub heuristic: HeuristicKind,
    pub epsilon: f64,
    pub commit_steps: usize,
    /// Global s-cell that ends the route.
    pub route_end: usize,
    /// Global step count that ends the run.
    pub time_budget: usize,
    pub instances: Vec<ReplanInstance>,
    /// Executed states, starting with the initial one.
    pub trajectory: Vec<GlobalState>,
    pub total_cost: f64,
    pub outcome: DriveOutcome,
    /// Index into `trajectory` of the first step that hits the ground truth.
    pub first_collision: Option<usize>,
}

impl RecedingHorizonRun {
    pub fn verified(&self) -> bool {
        self.first_collision.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct DriveOptions {
    pub heuristic: HeuristicKind,
    pub model: Option<PathBuf>,
    pub epsilon: f64,
    pub commit_steps: usize,
    /// Route length in window lengths, so the route ends at `m · (n_ks − 1)`.
    pub route_multiple: usize,
    /// Global steps; defaults to `4 · route_multiple · (n_kt − 1)`.
    pub time_budget: Option<usize>,
    pub start_lane: usize,
    pub start_kv: usize,
}

impl Default for DriveOptions {
    fn default() -> Self {
        Self {
            heuristic: HeuristicKind::Dp,
            model: None,
            epsilon: 1.5,
            commit_steps: 3,
            route_multiple: 3,
            time_budget: None,
            start_lane: 0,
            start_kv: 0,
        }
    }
}

/// Runs the replanning loop. A search that drains Open ends the run with
/// `DriveOutcome::NoSolution` and the trace so far.
pub fn drive<H: Heuristic>(world: &World, heuristic: H, opts: &DriveOptions) -> Result<RecedingHorizonRun> {
    let p = *world.params();
    if opts.commit_steps == 0 {
        return Err(CliError::Validation("commit-steps must be at least 1".into()));
    }
    if opts.route_multiple == 0 {
        return Err(CliError::Validation("route-multiple must be at least 1".into()));
    }
    let start = State::new(opts.start_lane, 0, 0, opts.start_kv);
    if !p.contains(&start) {
        return Err(CliError::Validation(format!(
            "start state {start:?} is outside the lattice"
        )));
    }
    let route_end = opts.route_multiple * (p.n_ks - 1);
    let time_budget = opts.time_budget.unwrap_or(4 * opts.route_multiple * (p.n_kt - 1));

    let mut ego = GlobalState {
        l: start.l,
        s: 0,
        t: 0,
        kv: start.kv,
        a: None,
        dl: None,
    };
    let mut run = RecedingHorizonRun {
        scenario_id: world.scenario.id.clone(),
        heuristic: opts.heuristic,
        epsilon: if opts.heuristic == HeuristicKind::Ml {
            opts.epsilon
        } else {
            1.0
        },
        commit_steps: opts.commit_steps,
        route_end,
        time_budget,
        instances: Vec::new(),
        trajectory: vec![ego],
        total_cost: 0.0,
        outcome: DriveOutcome::RouteEnd,
        first_collision: None,
    };

    loop {
        if ego.s >= route_end {
            run.outcome = DriveOutcome::RouteEnd;
            break;
        }
        if ego.t >= time_budget {
            run.outcome = DriveOutcome::TimeBudget;
            break;
        }
        let grid = world.window(ego.s, ego.t);
        let root = Node::root(State::new(ego.l, 0, 0, ego.kv));
        let result = match plan(&root, &grid, &p, &heuristic) {
            Ok(r) => r,
            Err(SearchError::NoSolution { stats }) => {
                run.instances.push(ReplanInstance {
                    origin: ego,
                    plan_cost: None,
                    plan_length: 0,
                    executed: 0,
                    stats: stats.into(),
                });
                run.outcome = DriveOutcome::NoSolution;
                break;
            }
            Err(e) => return Err(e.into()),
        };

        let chain = &result.solution;
        let mut executed = 0;
        for (i, pair) in chain.windows(2).enumerate().take(opts.commit_steps) {
            let (prev, next) = (&pair[0].state, &pair[1]);
            let action = next.action.expect("non-root nodes carry their action");
            // A step clamped onto the window edge moved less than its
            // velocity; its real extent was never checked, so replan first.
            if i > 0 && next.state.ks != prev.ks + next.state.kv {
                break;
            }
            if run.first_collision.is_none() && world.step_blocked(&ego, action) {
                run.first_collision = Some(run.trajectory.len());
            }
            ego = ego.step(action);
            run.trajectory.push(ego);
            run.total_cost += p.step_cost(action);
            executed += 1;
            if ego.s >= route_end || ego.t >= time_budget {
                break;
            }
        }
        run.instances.push(ReplanInstance {
            origin: run.trajectory[run.trajectory.len() - 1 - executed],
            plan_cost: Some(result.cost),
            plan_length: chain.len() - 1,
            executed,
            stats: result.stats.into(),
        });
    }
    Ok(run)
}

/// `drive` on a scenario file; the trace is written before any error is
/// returned so a NoSolution run still leaves its partial trace.
pub fn cmd_drive(scenario_path: &Path, opts: &DriveOptions, out: Option<&Path>) -> Result<RecedingHorizonRun> {
    let scenario = load_scenario(scenario_path)?;
    let model = load_model_for(opts.heuristic, opts.model.as_deref())?;
    let params = scenario.params;
    let heuristic = AnyHeuristic::new(opts.heuristic, model.as_ref(), opts.epsilon, &params)?;
    let run = drive(&World::new(scenario), &heuristic, opts)?;
    if let Some(out) = out {
        write_json(out, &run)?;
    }
    if let Some(i) = run.first_collision {
        return Err(CliError::Validation(format!(
            "executed step {i} collides with the ground-truth scenario"
        )));
    }
    if run.outcome == DriveOutcome::NoSolution {
        return Err(CliError::NoSolution(format!(
            "replanning failed after {} executed steps",
            run.trajectory.len() - 1
        )));
    }
    Ok(run)
}
