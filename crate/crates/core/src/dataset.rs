//! Training data from exhaustive searches.
//!
//! For each of `k_max` random (scenario, start pose) pairs, the Open list is
//! drained with `h_dp`. Branches are then walked backwards from every horizon
//! node, earliest extraction first; each Closed node on a branch is labeled
//! with its cost-to-horizon `n_h.g − n.g` and removed from Closed, so a node
//! is labeled by the first (cheapest) branch that reaches it.
//!
//! A node can be cut off from the final parent tree even though one of its
//! successors reaches a horizon, because that successor kept a parent with a
//! lower `g`. Such nodes are labeled in a second pass from their expanded
//! edges: `step + label(successor)`, the cost of a real path. Whatever is left
//! cannot reach either horizon and is labeled dead end.
//!
//! Files are JSON Lines: one meta object, one `{"scenario": …}` line per
//! scenario, then one line per record. A `.gz` suffix selects gzip.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristics::{DpHeuristic, DpTable};
use crate::lattice::{
    build_occupancy_grid, random_scenario, state_is_free, LatticeError, LatticeParams, Node, NodeId, OccupancyGrid,
    Scenario, State,
};
use crate::search::{exhaustive_search, ClosedSet, ExhaustiveResult, SearchError, SearchTree};

pub const DATASET_FORMAT_VERSION: &str = "sbomp-dataset/1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("duplicate scenario id {0:?}")]
    DuplicateScenario(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    /// Cost from the node to the end of its branch.
    Cost(f64),
    DeadEnd,
}

impl Label {
    pub fn cost(self) -> Option<f64> {
        match self {
            Label::Cost(c) => Some(c),
            Label::DeadEnd => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub scenario_id: String,
    pub state: State,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub k_max: usize,
    pub master_seed: u64,
    pub params: LatticeParams,
}

impl DatasetMeta {
    pub fn new(params: LatticeParams, k_max: usize, master_seed: u64) -> Self {
        Self {
            generator: DATASET_FORMAT_VERSION.into(),
            k_max,
            master_seed,
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub scenarios: Vec<Scenario>,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn scenario(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn dead_end_count(&self) -> usize {
        self.records.iter().filter(|r| r.label == Label::DeadEnd).count()
    }
}

/// SplitMix64 finalizer; decorrelates per-iteration seeds.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random `(l, kv)` at `ks = 0, kt = 0`, redrawn while the cell is blocked.
pub fn random_start(grid: &OccupancyGrid, params: &LatticeParams, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kv = 0;
    for _ in 0..64 {
        let l = rng.gen_range(0..params.n_kl);
        kv = rng.gen_range(0..params.n_kv);
        let s = State::new(l, 0, 0, kv);
        if state_is_free(&s, grid) {
            return s;
        }
    }
    State::new(0, 0, 0, kv)
}

/// Walks parent links from the horizon node `n_h`, removing every node
/// still in `closed` and pairing it with `n_h.g − n.g`. Nodes consumed by an
/// earlier branch are skipped, but the walk continues through them.
fn walk_branch(n_h: NodeId, tree: &SearchTree, closed: &mut ClosedSet) -> Vec<(NodeId, f64)> {
    let end_g = tree.get(n_h).g;
    let mut out = Vec::new();
    let mut cur = Some(n_h);
    let mut steps = 0;
    while let Some(id) = cur {
        let node = tree.get(id);
        if closed.remove(id) {
            out.push((id, end_g - node.g));
        }
        cur = node.parent;
        steps += 1;
        assert!(steps <= tree.len(), "cyclic parent links in search tree");
    }
    out
}

/// Records for the branch ending at `n_h`; see the module docs.
pub fn label_branch(n_h: NodeId, tree: &SearchTree, closed: &mut ClosedSet, scenario_id: &str) -> Vec<DatasetRecord> {
    walk_branch(n_h, tree, closed)
        .into_iter()
        .map(|(id, cost)| DatasetRecord {
            scenario_id: scenario_id.to_string(),
            state: tree.get(id).state,
            label: Label::Cost(cost),
        })
        .collect()
}

/// Outcome of labeling one exhaustive search.
#[derive(Debug, Clone)]
pub struct ScenarioLabels {
    pub records: Vec<DatasetRecord>,
    /// Closed nodes of the search, before labeling.
    pub closed: usize,
    /// Labeled from an expanded edge rather than a parent branch.
    pub rescued: usize,
}

/// Turns a drained search into labeled records.
pub fn label_search(mut run: ExhaustiveResult, scenario_id: &str) -> ScenarioLabels {
    let closed_total = run.closed.len();
    let mut records = Vec::with_capacity(closed_total);
    let mut label_of: HashMap<NodeId, f64> = HashMap::with_capacity(closed_total);

    let record = |id: NodeId, label: Label| DatasetRecord {
        scenario_id: scenario_id.to_string(),
        state: run.tree.get(id).state,
        label,
    };

    for &n_h in &run.horizon {
        for (id, cost) in walk_branch(n_h, &run.tree, &mut run.closed) {
            label_of.insert(id, cost);
            records.push(record(id, Label::Cost(cost)));
        }
    }

    let mut out_edges: HashMap<NodeId, Vec<(NodeId, f64)>> = HashMap::new();
    for e in &run.edges {
        out_edges.entry(e.from).or_default().push((e.to, e.cost));
    }
    let mut remaining: Vec<NodeId> = run.closed.iter().collect();
    // Successors are one time step later, so descending kt settles them first.
    remaining.sort_by_key(|id| std::cmp::Reverse(run.tree.get(*id).state.kt));
    let mut rescued = Vec::new();
    for id in remaining {
        let best = out_edges
            .get(&id)
            .into_iter()
            .flatten()
            .filter_map(|(to, c)| label_of.get(to).map(|l| c + l))
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            label_of.insert(id, best);
            run.closed.remove(id);
            rescued.push(id);
        }
    }
    rescued.sort();
    let rescued_count = rescued.len();
    records.extend(rescued.into_iter().map(|id| record(id, Label::Cost(label_of[&id]))));
    records.extend(run.closed.iter().map(|id| record(id, Label::DeadEnd)));

    ScenarioLabels {
        records,
        closed: closed_total,
        rescued: rescued_count,
    }
}

/// Exhaustive search from `start` on `scenario`, labeled.
pub fn label_scenario(scenario: &Scenario, start: &Node, table: &DpTable) -> Result<ScenarioLabels, DatasetError> {
    let grid = build_occupancy_grid(scenario)?;
    let run = exhaustive_search(start, &grid, &scenario.params, DpHeuristic::from_table(table.clone()))?;
    Ok(label_search(run, &scenario.id))
}

/// Scenario and start pose used for iteration `k` (1-based).
pub fn iteration_inputs(k: usize, params: &LatticeParams, master_seed: u64) -> Result<(Scenario, State), DatasetError> {
    let scenario = random_scenario(params, derive_seed(master_seed, 2 * k as u64));
    let grid = build_occupancy_grid(&scenario)?;
    let start = random_start(&grid, params, derive_seed(master_seed, 2 * k as u64 + 1));
    Ok((scenario, start))
}

pub fn generate_dataset(k_max: usize, params: &LatticeParams, master_seed: u64) -> Result<Dataset, DatasetError> {
    if k_max == 0 {
        return Err(DatasetError::InvalidArgument("k_max must be at least 1".into()));
    }
    params.validate()?;
    let table = crate::heuristics::build_dp_table(params);
    let mut scenarios = Vec::with_capacity(k_max);
    let mut records = Vec::new();
    for k in 1..=k_max {
        let (scenario, start) = iteration_inputs(k, params, master_seed)?;
        if scenarios.iter().any(|s: &Scenario| s.id == scenario.id) {
            return Err(DatasetError::DuplicateScenario(scenario.id));
        }
        let labels = label_scenario(&scenario, &Node::root(start), &table)?;
        records.extend(labels.records);
        scenarios.push(scenario);
    }
    Ok(Dataset {
        meta: DatasetMeta::new(*params, k_max, master_seed),
        scenarios,
        records,
    })
}

/// Partitions by scenario, so no scenario contributes to two splits.
pub fn split_dataset(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), DatasetError> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let n = dataset.scenarios.len();
    if n < 3 {
        return Err(DatasetError::InvalidArgument(format!(
            "cannot split {n} scenarios three ways"
        )));
    }
    let mut ids: Vec<&str> = dataset.scenarios.iter().map(|s| s.id.as_str()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((b * n as f64).round() as usize).max(1);
    let n_test = ((c * n as f64).round() as usize).max(1);
    let n_train = n.saturating_sub(n_val + n_test).max(1);
    let n_val = n - n_train - n_test;

    let part: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (
                *id,
                if i < n_train {
                    0
                } else if i < n_train + n_val {
                    1
                } else {
                    2
                },
            )
        })
        .collect();
    let subset = |which: usize| Dataset {
        meta: dataset.meta.clone(),
        scenarios: dataset
            .scenarios
            .iter()
            .filter(|s| part[s.id.as_str()] == which)
            .cloned()
            .collect(),
        records: dataset
            .records
            .iter()
            .filter(|r| part.get(r.scenario_id.as_str()) == Some(&which))
            .cloned()
            .collect(),
    };
    Ok((subset(0), subset(1), subset(2)))
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    sid: String,
    l: usize,
    ks: usize,
    kt: usize,
    kv: usize,
    label: Option<f64>,
    dead_end: bool,
}

#[derive(Serialize, Deserialize)]
struct ScenarioLine {
    scenario: Scenario,
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut w: W) -> io::Result<()> {
    serde_json::to_writer(&mut w, &dataset.meta)?;
    writeln!(w)?;
    for s in &dataset.scenarios {
        serde_json::to_writer(&mut w, &ScenarioLine { scenario: s.clone() })?;
        writeln!(w)?;
    }
    for r in &dataset.records {
        let line = RecordLine {
            sid: r.scenario_id.clone(),
            l: r.state.l,
            ks: r.state.ks,
            kt: r.state.kt,
            kv: r.state.kv,
            label: r.label.cost(),
            dead_end: r.label == Label::DeadEnd,
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset, DatasetError> {
    let mut lines = r.lines().enumerate();
    let parse_err = |line: usize, e: &dyn std::fmt::Display| DatasetError::Parse {
        line: line + 1,
        message: e.to_string(),
    };
    let io_err = |e: io::Error| DatasetError::Io {
        path: "<stream>".into(),
        source: e,
    };
    let (_, first) = lines.next().ok_or(DatasetError::Parse {
        line: 1,
        message: "empty dataset file".into(),
    })?;
    let meta: DatasetMeta = serde_json::from_str(&first.map_err(io_err)?).map_err(|e| parse_err(0, &e))?;
    if meta.generator != DATASET_FORMAT_VERSION {
        return Err(parse_err(
            0,
            &format!("unsupported dataset version {:?}", meta.generator),
        ));
    }
    let mut scenarios = Vec::new();
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse_err(i, &e))?;
        if value.get("scenario").is_some() {
            let s: ScenarioLine = serde_json::from_value(value).map_err(|e| parse_err(i, &e))?;
            scenarios.push(s.scenario);
        } else {
            let r: RecordLine = serde_json::from_value(value).map_err(|e| parse_err(i, &e))?;
            let label = match (r.label, r.dead_end) {
                (Some(c), false) => Label::Cost(c),
                (None, true) => Label::DeadEnd,
                _ => return Err(parse_err(i, &"label and dead_end disagree")),
            };
            records.push(DatasetRecord {
                scenario_id: r.sid,
                state: State::new(r.l, r.ks, r.kt, r.kv),
                label,
            });
        }
    }
    Ok(Dataset {
        meta,
        scenarios,
        records,
    })
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = BufWriter::new(File::create(path).map_err(io_err)?);
    if is_gzip(path) {
        let mut enc = GzEncoder::new(file, Compression::default());
        write_dataset(dataset, &mut enc).map_err(io_err)?;
        enc.finish().map_err(io_err)?.flush().map_err(io_err)
    } else {
        write_dataset(dataset, file).map_err(io_err)
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader: Box<dyn Read> = if is_gzip(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    read_dataset(BufReader::new(reader))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::build_dp_table;
    use crate::lattice::{successors, Obstacle};
    use std::collections::BTreeSet;

    #[test]
    fn branch_labels() {
        let tree = SearchTree::from_nodes(vec![
            Node {
                g: 0.0,
                ..Node::root(State::new(0, 0, 0, 0))
            },
            Node {
                g: 3.0,
                parent: Some(NodeId(0)),
                ..Node::root(State::new(0, 1, 1, 1))
            },
            Node {
                g: 7.5,
                parent: Some(NodeId(1)),
                ..Node::root(State::new(0, 3, 2, 2))
            },
        ]);
        let mut closed: ClosedSet = (0..3).map(NodeId).collect();
        let recs = label_branch(NodeId(2), &tree, &mut closed, "s");
        let labels: Vec<_> = recs.iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![Label::Cost(0.0), Label::Cost(4.5), Label::Cost(7.5)]);
        assert!(closed.is_empty());
    }

    #[test]
    fn shared_prefix_walks_through_consumed_nodes() {
        // 0 -> 1 -> 2 (horizon A) and 1 -> 3 -> 4 (horizon B). A consumes 0 and
        // 1; B still labels 3 and 4.
        let tree = SearchTree::from_nodes(vec![
            Node::root(State::new(0, 0, 0, 0)),
            Node {
                g: 1.0,
                parent: Some(NodeId(0)),
                ..Node::root(State::new(0, 0, 1, 0))
            },
            Node {
                g: 2.0,
                parent: Some(NodeId(1)),
                ..Node::root(State::new(0, 0, 2, 0))
            },
            Node {
                g: 1.5,
                parent: Some(NodeId(1)),
                ..Node::root(State::new(0, 1, 2, 1))
            },
            Node {
                g: 2.5,
                parent: Some(NodeId(3)),
                ..Node::root(State::new(0, 2, 3, 1))
            },
        ]);
        let mut closed: ClosedSet = (0..5).map(NodeId).collect();
        let a = label_branch(NodeId(2), &tree, &mut closed, "s");
        assert_eq!(a.len(), 3);
        let b = label_branch(NodeId(4), &tree, &mut closed, "s");
        let states: Vec<_> = b.iter().map(|r| (r.state, r.label)).collect();
        assert_eq!(
            states,
            vec![
                (State::new(0, 2, 3, 1), Label::Cost(0.0)),
                (State::new(0, 1, 2, 1), Label::Cost(1.0))
            ]
        );
        assert!(closed.is_empty());
    }

    /// Every state reachable in the search graph, with the optimal
    /// cost-to-horizon (infinite if none), by memoized recursion.
    fn optimal_to_horizon(s: &State, grid: &OccupancyGrid, p: &LatticeParams, memo: &mut HashMap<State, f64>) -> f64 {
        if p.is_horizon(s) {
            return 0.0;
        }
        if let Some(v) = memo.get(s) {
            return *v;
        }
        let v = successors(s, grid, p)
            .unwrap()
            .iter()
            .map(|n| n.cost + optimal_to_horizon(&n.state, grid, p, memo))
            .fold(f64::INFINITY, f64::min);
        memo.insert(*s, v);
        v
    }

    #[test]
    fn empty_world_has_no_dead_ends() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let s = Scenario::empty("empty", p);
        let table = build_dp_table(&p);
        for kv in 0..p.n_kv {
            let labels = label_scenario(&s, &Node::root(State::new(0, 0, 0, kv)), &table).unwrap();
            assert!(labels.records.iter().all(|r| r.label != Label::DeadEnd));
            assert_eq!(labels.records.len(), labels.closed);
        }
    }

    #[test]
    fn labels_are_sound_on_random_instances() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let table = build_dp_table(&p);
        let mut rescued = 0;
        for k in 1..=40 {
            let (scenario, start) = iteration_inputs(k, &p, 99).unwrap();
            let grid = build_occupancy_grid(&scenario).unwrap();
            let labels = label_scenario(&scenario, &Node::root(start), &table).unwrap();
            rescued += labels.rescued;
            let mut memo = HashMap::new();
            let mut seen = BTreeSet::new();
            for r in &labels.records {
                assert!(seen.insert(r.state), "duplicate record {:?}", r.state);
                let opt = optimal_to_horizon(&r.state, &grid, &p, &mut memo);
                match r.label {
                    Label::Cost(c) => assert!(c >= opt - 1e-9, "{:?}: {c} < {opt}", r.state),
                    Label::DeadEnd => assert!(opt.is_infinite(), "{:?} reaches a horizon", r.state),
                }
            }
            let first = labels.records.iter().find(|r| r.state == start).unwrap();
            let opt = optimal_to_horizon(&start, &grid, &p, &mut memo);
            if opt.is_finite() {
                assert_eq!(first.label, Label::Cost(opt));
            }
        }
        assert!(rescued > 0, "expected some nodes off the parent tree");
    }

    #[test]
    fn start_label_matches_plan() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let table = build_dp_table(&p);
        let (scenario, start) = iteration_inputs(1, &p, 5).unwrap();
        let grid = build_occupancy_grid(&scenario).unwrap();
        let labels = label_scenario(&scenario, &Node::root(start), &table).unwrap();
        let plan = crate::search::plan(&Node::root(start), &grid, &p, DpHeuristic::from_table(table.clone()));
        let rec = labels.records.iter().find(|r| r.state == start).unwrap();
        match plan {
            Ok(r) => assert_eq!(rec.label, Label::Cost(r.cost)),
            Err(_) => assert_eq!(rec.label, Label::DeadEnd),
        }
    }

    #[test]
    fn labels_ignore_start_g() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let table = build_dp_table(&p);
        for k in 1..=10 {
            let (scenario, start) = iteration_inputs(k, &p, 3).unwrap();
            let base = label_scenario(&scenario, &Node::root(start), &table).unwrap();
            let shifted = label_scenario(
                &scenario,
                &Node {
                    g: 100.0,
                    ..Node::root(start)
                },
                &table,
            )
            .unwrap();
            assert_eq!(base.records.len(), shifted.records.len());
            for (a, b) in base.records.iter().zip(&shifted.records) {
                assert_eq!(a.state, b.state);
                match (a.label, b.label) {
                    (Label::Cost(x), Label::Cost(y)) => assert!((x - y).abs() < 1e-9),
                    (x, y) => assert_eq!(x, y),
                }
            }
        }
    }

    #[test]
    fn boxed_in_start_is_all_dead_ends() {
        let p = LatticeParams::sized(8, 6, 1, 3);
        let s = Scenario {
            obstacles: vec![
                Obstacle::TrafficLight {
                    s_tl: 1,
                    phase: vec![true; 6],
                },
                Obstacle::MovingVehicle { lane: 0, s0: 2, v: 0 },
            ],
            ..Scenario::empty("box", p)
        };
        // Start moving at speed 2 toward a red light it cannot stop for.
        let table = build_dp_table(&p);
        let labels = label_scenario(&s, &Node::root(State::new(0, 0, 0, 2)), &table).unwrap();
        assert_eq!(labels.records.len(), 1);
        assert_eq!(labels.records[0].label, Label::DeadEnd);
    }

    #[test]
    fn generation_is_deterministic_and_unique() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let a = generate_dataset(6, &p, 17).unwrap();
        let b = generate_dataset(6, &p, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scenarios.len(), 6);
        let keys: BTreeSet<_> = a.records.iter().map(|r| (r.scenario_id.clone(), r.state)).collect();
        assert_eq!(keys.len(), a.records.len());
        assert!(a.records.iter().all(|r| a.scenario(&r.scenario_id).is_some()));
        assert!(generate_dataset(0, &p, 17).is_err());
    }

    #[test]
    fn record_count_equals_closed_total() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let table = build_dp_table(&p);
        let mut closed = 0;
        for k in 1..=4 {
            let (scenario, start) = iteration_inputs(k, &p, 8).unwrap();
            closed += label_scenario(&scenario, &Node::root(start), &table).unwrap().closed;
        }
        assert_eq!(generate_dataset(4, &p, 8).unwrap().records.len(), closed);
    }

    #[test]
    fn split_by_scenario() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let d = generate_dataset(10, &p, 1).unwrap();
        let (tr, va, te) = split_dataset(&d, (0.8, 0.1, 0.1), 4).unwrap();
        assert_eq!((tr.scenarios.len(), va.scenarios.len(), te.scenarios.len()), (8, 1, 1));
        let (tr2, va2, te2) = split_dataset(&d, (0.8, 0.1, 0.1), 4).unwrap();
        assert_eq!((&tr, &va, &te), (&tr2, &va2, &te2));
        assert_eq!(tr.records.len() + va.records.len() + te.records.len(), d.records.len());
        let mut all: Vec<_> = [tr, va, te]
            .iter()
            .flat_map(|s| s.records.clone())
            .map(|r| format!("{r:?}"))
            .collect();
        let mut orig: Vec<_> = d.records.iter().map(|r| format!("{r:?}")).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);

        let small = generate_dataset(2, &p, 1).unwrap();
        assert!(split_dataset(&small, (0.8, 0.1, 0.1), 0).is_err());
        assert!(split_dataset(&d, (0.8, 0.1, 0.2), 0).is_err());
    }

    #[test]
    fn jsonl_round_trip_plain_and_gzip() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let d = generate_dataset(3, &p, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["d.jsonl", "d.jsonl.gz"] {
            let path = dir.path().join(name);
            save_dataset(&d, &path).unwrap();
            assert_eq!(load_dataset(&path).unwrap(), d);
        }
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 + d.records.len());
        assert!(lines[1].starts_with("{\"scenario\":"));
        let rec: serde_json::Value = serde_json::from_str(lines[4]).unwrap();
        for key in ["sid", "l", "ks", "kt", "kv", "label", "dead_end"] {
            assert!(rec.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn bad_lines_are_located() {
        let p = LatticeParams::sized(8, 6, 2, 3);
        let d = generate_dataset(1, &p, 2).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{\"sid\": 3}\n");
        let n = text.lines().count();
        match read_dataset(text.as_bytes()) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, n),
            other => panic!("{other:?}"),
        }
    }
}
