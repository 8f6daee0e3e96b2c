//! Best-first lattice search.
//!
//! [`plan`] stops at the first horizon node taken off the Open list.
//! [`exhaustive_search`] runs the same loop until Open drains, treating
//! horizon nodes as absorbing, and hands back the whole Closed list.
//!
//! Open is ordered by `f`, then lower `h`, then first-insertion order. A node
//! already on Open is re-parented only when the new path has strictly lower
//! `g`; Closed nodes are never re-opened.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Instant;

use thiserror::Error;

use crate::heuristics::Heuristic;
use crate::lattice::{state_is_free, successors, LatticeError, LatticeParams, Node, NodeId, OccupancyGrid, State};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SearchStats {
    /// Nodes moved to Closed.
    pub nodes_explored: usize,
    pub open_peak: usize,
    /// Successor generations.
    pub expansions: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl SearchStats {
    /// Equality ignoring wall time.
    pub fn same_work(&self, other: &Self) -> bool {
        self.nodes_explored == other.nodes_explored
            && self.open_peak == other.open_peak
            && self.expansions == other.expansions
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("Open list exhausted without reaching a horizon ({} nodes explored)", stats.nodes_explored)]
    NoSolution { stats: SearchStats },
    #[error("start state {0:?} is not collision-free")]
    BlockedStart(State),
    #[error("parent links starting at node {0:?} form a cycle")]
    CyclicChain(NodeId),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Arena holding every node generated by one search.
#[derive(Debug, Clone, Default)]
pub struct SearchTree {
    nodes: Vec<Node>,
}

impl SearchTree {
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        Self { nodes }
    }

    pub fn get(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }
}

/// `[start, …, node]` following parent links.
pub fn reconstruct_chain(tree: &SearchTree, id: NodeId) -> Result<Vec<Node>, SearchError> {
    let mut chain = Vec::new();
    let mut cur = Some(id);
    while let Some(c) = cur {
        if chain.len() > tree.len() {
            return Err(SearchError::CyclicChain(id));
        }
        let node = tree.get(c);
        chain.push(node.clone());
        cur = node.parent;
    }
    chain.reverse();
    Ok(chain)
}

/// Nodes moved to Closed, in extraction order. Membership can be revoked
/// (dataset labeling consumes nodes) but the order is kept.
#[derive(Debug, Clone, Default)]
pub struct ClosedSet {
    order: Vec<NodeId>,
    member: Vec<bool>,
    len: usize,
}

impl ClosedSet {
    fn insert(&mut self, id: NodeId) {
        if self.member.len() <= id.0 {
            self.member.resize(id.0 + 1, false);
        }
        debug_assert!(!self.member[id.0]);
        self.member[id.0] = true;
        self.order.push(id);
        self.len += 1;
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.member.get(id.0).copied().unwrap_or(false)
    }

    /// Returns whether `id` was present.
    pub fn remove(&mut self, id: NodeId) -> bool {
        let present = self.contains(id);
        if present {
            self.member[id.0] = false;
            self.len -= 1;
        }
        present
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Remaining members in extraction order.
    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.order.iter().copied().filter(|id| self.contains(*id))
    }
}

impl FromIterator<NodeId> for ClosedSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        let mut set = ClosedSet::default();
        for id in iter {
            if !set.contains(id) {
                set.insert(id);
            }
        }
        set
    }
}

/// Hooks into the search loop; both default to no-ops.
pub trait SearchObserver {
    fn on_extract(&mut self, _node: &Node) {}

    fn on_edge(&mut self, _from: &Node, _to: &State, _cost: f64) {}
}

impl SearchObserver for () {}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Start to horizon node.
    pub solution: Vec<Node>,
    pub cost: f64,
    pub stats: SearchStats,
}

impl SearchResult {
    pub fn final_node(&self) -> &Node {
        self.solution.last().expect("solution is never empty")
    }
}

/// An expanded successor edge, including ones that did not improve the child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub tree: SearchTree,
    pub closed: ClosedSet,
    /// Horizon nodes in extraction order.
    pub horizon: Vec<NodeId>,
    pub edges: Vec<Edge>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    f: f64,
    h: f64,
    seq: u64,
    id: NodeId,
    g: f64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f
            .total_cmp(&other.f)
            .then(self.h.total_cmp(&other.h))
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Open,
    Closed,
}

enum Mode {
    FirstHorizon,
    Drain,
}

enum Outcome {
    Reached(NodeId),
    Drained,
}

struct Search<'a, H, O> {
    grid: &'a OccupancyGrid,
    params: &'a LatticeParams,
    heuristic: H,
    observer: O,
    tree: SearchTree,
    status: Vec<Status>,
    seq: Vec<u64>,
    slot: Vec<u32>,
    open: BinaryHeap<Reverse<Entry>>,
    open_len: usize,
    closed: ClosedSet,
    horizon: Vec<NodeId>,
    edges: Option<Vec<Edge>>,
    stats: SearchStats,
}

const NO_SLOT: u32 = u32::MAX;

impl<'a, H: Heuristic, O: SearchObserver> Search<'a, H, O> {
    fn new(grid: &'a OccupancyGrid, params: &'a LatticeParams, heuristic: H, observer: O, keep_edges: bool) -> Self {
        Self {
            grid,
            params,
            heuristic,
            observer,
            tree: SearchTree::default(),
            status: Vec::new(),
            seq: Vec::new(),
            slot: vec![NO_SLOT; params.state_count()],
            open: BinaryHeap::new(),
            open_len: 0,
            closed: ClosedSet::default(),
            horizon: Vec::new(),
            edges: keep_edges.then(Vec::new),
            stats: SearchStats::default(),
        }
    }

    fn state_index(&self, s: &State) -> usize {
        let p = self.params;
        ((s.l * p.n_ks + s.ks) * p.n_kt + s.kt) * p.n_kv + s.kv
    }

    fn push_entry(&mut self, id: NodeId) {
        let n = self.tree.get(id);
        self.open.push(Reverse(Entry {
            f: n.f(),
            h: n.h,
            seq: self.seq[id.0],
            id,
            g: n.g,
        }));
    }

    fn insert(&mut self, mut node: Node) -> NodeId {
        node.h = self.heuristic.estimate(&node.state, self.grid);
        let id = NodeId(self.tree.nodes.len());
        let si = self.state_index(&node.state);
        self.slot[si] = id.0 as u32;
        self.tree.nodes.push(node);
        self.status.push(Status::Open);
        self.seq.push(id.0 as u64);
        self.open_len += 1;
        self.stats.open_peak = self.stats.open_peak.max(self.open_len);
        self.push_entry(id);
        id
    }

    fn run(&mut self, start: Node, mode: Mode) -> Result<Outcome, SearchError> {
        self.params.validate()?;
        self.grid.check_dims(self.params)?;
        if !self.params.contains(&start.state) {
            return Err(LatticeError::OutOfBounds(start.state).into());
        }
        if !state_is_free(&start.state, self.grid) {
            return Err(SearchError::BlockedStart(start.state));
        }
        self.insert(Node {
            parent: None,
            action: None,
            ..start
        });

        while let Some(Reverse(entry)) = self.open.pop() {
            let id = entry.id;
            if self.status[id.0] != Status::Open || entry.g.to_bits() != self.tree.get(id).g.to_bits() {
                continue;
            }
            self.status[id.0] = Status::Closed;
            self.open_len -= 1;
            self.closed.insert(id);
            self.stats.nodes_explored += 1;
            self.observer.on_extract(self.tree.get(id));

            let state = self.tree.get(id).state;
            if self.params.is_horizon(&state) {
                match mode {
                    Mode::FirstHorizon => return Ok(Outcome::Reached(id)),
                    Mode::Drain => {
                        self.horizon.push(id);
                        continue;
                    }
                }
            }

            self.stats.expansions += 1;
            let parent_g = self.tree.get(id).g;
            for succ in successors(&state, self.grid, self.params)? {
                self.observer.on_edge(self.tree.get(id), &succ.state, succ.cost);
                let g = parent_g + succ.cost;
                let si = self.state_index(&succ.state);
                let child = match self.slot[si] {
                    NO_SLOT => self.insert(Node {
                        state: succ.state,
                        g,
                        h: 0.0,
                        parent: Some(id),
                        action: Some(succ.action),
                    }),
                    existing => {
                        let cid = NodeId(existing as usize);
                        if self.status[cid.0] == Status::Open && g < self.tree.get(cid).g {
                            let n = &mut self.tree.nodes[cid.0];
                            n.g = g;
                            n.parent = Some(id);
                            n.action = Some(succ.action);
                            self.push_entry(cid);
                        }
                        cid
                    }
                };
                if let Some(edges) = self.edges.as_mut() {
                    edges.push(Edge {
                        from: id,
                        to: child,
                        cost: succ.cost,
                    });
                }
            }
        }
        Ok(Outcome::Drained)
    }
}

/// Cheapest path (for a consistent heuristic) from `start` to either horizon.
pub fn plan<H: Heuristic>(
    start: &Node,
    grid: &OccupancyGrid,
    params: &LatticeParams,
    heuristic: H,
) -> Result<SearchResult, SearchError> {
    plan_observed(start, grid, params, heuristic, ())
}

pub fn plan_observed<H: Heuristic, O: SearchObserver>(
    start: &Node,
    grid: &OccupancyGrid,
    params: &LatticeParams,
    heuristic: H,
    observer: O,
) -> Result<SearchResult, SearchError> {
    let clock = Instant::now();
    let mut search = Search::new(grid, params, heuristic, observer, false);
    let outcome = search.run(start.clone(), Mode::FirstHorizon);
    search.stats.wall_time = clock.elapsed().as_secs_f64();
    match outcome? {
        Outcome::Reached(id) => {
            let solution = reconstruct_chain(&search.tree, id)?;
            Ok(SearchResult {
                cost: search.tree.get(id).g,
                solution,
                stats: search.stats,
            })
        }
        Outcome::Drained => Err(SearchError::NoSolution { stats: search.stats }),
    }
}

/// Runs until Open is empty; horizon nodes are recorded, not expanded.
pub fn exhaustive_search<H: Heuristic>(
    start: &Node,
    grid: &OccupancyGrid,
    params: &LatticeParams,
    heuristic: H,
) -> Result<ExhaustiveResult, SearchError> {
    exhaustive_search_observed(start, grid, params, heuristic, ())
}

pub fn exhaustive_search_observed<H: Heuristic, O: SearchObserver>(
    start: &Node,
    grid: &OccupancyGrid,
    params: &LatticeParams,
    heuristic: H,
    observer: O,
) -> Result<ExhaustiveResult, SearchError> {
    let clock = Instant::now();
    let mut search = Search::new(grid, params, heuristic, observer, true);
    search.run(start.clone(), Mode::Drain)?;
    search.stats.wall_time = clock.elapsed().as_secs_f64();
    Ok(ExhaustiveResult {
        tree: search.tree,
        closed: search.closed,
        horizon: search.horizon,
        edges: search.edges.unwrap_or_default(),
        stats: search.stats,
    })
}
