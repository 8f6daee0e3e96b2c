//! The discretized driving world.
//!
//! A planning window is a dense `n_ks × n_kt × n_kl` lattice of (longitudinal
//! cell, time cell, lane). Obstacles are rasterized into an [`OccupancyGrid`]
//! once per window; search states move through it with unit-time
//! [`MotionPrimitive`]s.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("invalid lattice parameters: {0}")]
    InvalidParams(String),
    #[error("obstacle #{index} is invalid: {reason}")]
    InvalidObstacle { index: usize, reason: String },
    #[error("state {0:?} lies outside the lattice")]
    OutOfBounds(State),
    #[error("cannot expand horizon state {0:?}")]
    HorizonExpansion(State),
    #[error("grid dims {found:?} do not match lattice dims {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
}

/// Size and cost weights of a planning window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeParams {
    pub n_ks: usize,
    pub n_kt: usize,
    pub n_kl: usize,
    pub n_kv: usize,
    /// Meters per s-cell.
    pub ds: f64,
    /// Seconds per t-cell.
    pub dt: f64,
    pub w_t: f64,
    pub w_a: f64,
    pub w_lc: f64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            n_ks: 30,
            n_kt: 15,
            n_kl: 3,
            n_kv: 4,
            ds: 5.0,
            dt: 1.0,
            w_t: 1.0,
            w_a: 0.5,
            w_lc: 2.0,
        }
    }
}

impl LatticeParams {
    /// Default weights on a lattice of the given size.
    pub fn sized(n_ks: usize, n_kt: usize, n_kl: usize, n_kv: usize) -> Self {
        Self {
            n_ks,
            n_kt,
            n_kl,
            n_kv,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        let bad = |msg: &str| Err(LatticeError::InvalidParams(msg.to_string()));
        if self.n_ks < 2 || self.n_kt < 2 || self.n_kl < 1 || self.n_kv < 2 {
            return bad("need n_ks >= 2, n_kt >= 2, n_kl >= 1, n_kv >= 2");
        }
        if !(self.w_t > 0.0 && self.w_t.is_finite()) {
            return bad("w_t must be a positive finite number");
        }
        if !(self.w_a >= 0.0 && self.w_a.is_finite() && self.w_lc >= 0.0 && self.w_lc.is_finite()) {
            return bad("w_a and w_lc must be nonnegative finite numbers");
        }
        if !(self.ds > 0.0 && self.dt > 0.0) {
            return bad("ds and dt must be positive");
        }
        Ok(())
    }

    /// Longitudinal extent of the window in meters.
    pub fn s_hor(&self) -> f64 {
        self.n_ks as f64 * self.ds
    }

    /// Temporal extent of the window in seconds.
    pub fn t_hor(&self) -> f64 {
        self.n_kt as f64 * self.dt
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_ks, self.n_kt, self.n_kl)
    }

    pub fn cell_count(&self) -> usize {
        self.n_ks * self.n_kt * self.n_kl
    }

    /// Number of distinct search states `(l, ks, kt, kv)`.
    pub fn state_count(&self) -> usize {
        self.cell_count() * self.n_kv
    }

    pub fn step_cost(&self, action: MotionPrimitive) -> f64 {
        self.w_t + self.w_a * f64::from(action.a.unsigned_abs()) + self.w_lc * f64::from(action.dl.unsigned_abs())
    }

    pub fn contains(&self, s: &State) -> bool {
        s.l < self.n_kl && s.ks < self.n_ks && s.kt < self.n_kt && s.kv < self.n_kv
    }

    /// A state on the s-horizon or the t-horizon.
    pub fn is_horizon(&self, s: &State) -> bool {
        s.ks == self.n_ks - 1 || s.kt == self.n_kt - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Obstacle {
    /// Constant-velocity vehicle on a fixed lane; occupies `s0 + v·kt`.
    #[serde(rename = "vehicle")]
    MovingVehicle { lane: usize, s0: usize, v: usize },
    /// Stop line at `s_tl`; `phase[kt]` is true while red.
    #[serde(rename = "light")]
    TrafficLight { s_tl: usize, phase: Vec<bool> },
    /// Leaving `lane_pair.0` is forbidden for `ks ∈ [s_from, s_to]`.
    #[serde(rename = "no_lc")]
    ForbiddenLaneChange {
        s_from: usize,
        s_to: usize,
        lane_pair: (usize, usize),
    },
}

impl Obstacle {
    pub fn is_dynamic(&self) -> bool {
        matches!(self, Obstacle::MovingVehicle { .. } | Obstacle::TrafficLight { .. })
    }

    fn validate(&self, params: &LatticeParams) -> Result<(), String> {
        match *self {
            Obstacle::MovingVehicle { lane, s0, .. } => {
                if lane >= params.n_kl {
                    return Err(format!("lane {lane} out of range 0..{}", params.n_kl));
                }
                if s0 >= params.n_ks {
                    return Err(format!("s0 {s0} out of range 0..{}", params.n_ks));
                }
            }
            Obstacle::TrafficLight { s_tl, ref phase } => {
                if s_tl >= params.n_ks {
                    return Err(format!("s_tl {s_tl} out of range 0..{}", params.n_ks));
                }
                if phase.len() != params.n_kt {
                    return Err(format!("phase has {} entries, expected {}", phase.len(), params.n_kt));
                }
            }
            Obstacle::ForbiddenLaneChange {
                s_from,
                s_to,
                lane_pair: (from, to),
            } => {
                if s_from > s_to {
                    return Err(format!("s_from {s_from} > s_to {s_to}"));
                }
                if s_to >= params.n_ks {
                    return Err(format!("s_to {s_to} out of range 0..{}", params.n_ks));
                }
                if from >= params.n_kl || to >= params.n_kl {
                    return Err(format!("lane pair ({from}, {to}) out of range 0..{}", params.n_kl));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub seed: u64,
    pub params: LatticeParams,
    pub obstacles: Vec<Obstacle>,
}

impl Scenario {
    pub fn empty(id: impl Into<String>, params: LatticeParams) -> Self {
        Self {
            id: id.into(),
            seed: 0,
            params,
            obstacles: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        self.params.validate()?;
        for (index, obstacle) in self.obstacles.iter().enumerate() {
            obstacle
                .validate(&self.params)
                .map_err(|reason| LatticeError::InvalidObstacle { index, reason })?;
        }
        Ok(())
    }

    /// True iff at least one moving vehicle or traffic light is present.
    pub fn has_dynamic_obstacles(&self) -> bool {
        self.obstacles.iter().any(Obstacle::is_dynamic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum CellCode {
    Free = 0,
    Vehicle = 1,
    RedLight = 2,
    LcForbidden = 3,
    EgoVirtual = 4,
}

impl CellCode {
    // Higher wins when obstacles overlap.
    fn precedence(self) -> u8 {
        match self {
            CellCode::Free => 0,
            CellCode::LcForbidden => 1,
            CellCode::RedLight => 2,
            CellCode::Vehicle => 3,
            CellCode::EgoVirtual => 4,
        }
    }

    fn blocks_motion(self) -> bool {
        matches!(self, CellCode::Vehicle | CellCode::RedLight)
    }
}

/// Rasterized obstacles of one planning window, indexed `(ks, kt, l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    n_ks: usize,
    n_kt: usize,
    n_kl: usize,
    cells: Vec<CellCode>,
}

impl OccupancyGrid {
    pub fn empty(params: &LatticeParams) -> Self {
        Self {
            n_ks: params.n_ks,
            n_kt: params.n_kt,
            n_kl: params.n_kl,
            cells: vec![CellCode::Free; params.cell_count()],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_ks, self.n_kt, self.n_kl)
    }

    #[inline]
    fn index(&self, ks: usize, kt: usize, l: usize) -> usize {
        debug_assert!(ks < self.n_ks && kt < self.n_kt && l < self.n_kl);
        (ks * self.n_kt + kt) * self.n_kl + l
    }

    #[inline]
    pub fn get(&self, ks: usize, kt: usize, l: usize) -> CellCode {
        self.cells[self.index(ks, kt, l)]
    }

    /// All cells in `(ks, kt, l)` row-major order.
    pub fn cells(&self) -> &[CellCode] {
        &self.cells
    }

    /// Nonzero cells as `((ks, kt, l), code)` in row-major order.
    pub fn occupied(&self) -> impl Iterator<Item = ((usize, usize, usize), CellCode)> + '_ {
        let (n_kt, n_kl) = (self.n_kt, self.n_kl);
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != CellCode::Free)
            .map(move |(i, &c)| ((i / (n_kt * n_kl), (i / n_kl) % n_kt, i % n_kl), c))
    }

    pub fn check_dims(&self, params: &LatticeParams) -> Result<(), LatticeError> {
        if self.dims() != params.dims() {
            return Err(LatticeError::DimensionMismatch {
                expected: params.dims(),
                found: self.dims(),
            });
        }
        Ok(())
    }
}

/// Mutable staging area for an [`OccupancyGrid`]; applies the obstacle
/// precedence `VEHICLE > RED_LIGHT > LC_FORBIDDEN` on every write.
#[derive(Debug, Clone)]
pub struct GridBuilder {
    grid: OccupancyGrid,
}

impl GridBuilder {
    pub fn new(params: &LatticeParams) -> Self {
        Self {
            grid: OccupancyGrid::empty(params),
        }
    }

    /// Marks a cell; out-of-window coordinates are ignored.
    pub fn mark(&mut self, ks: usize, kt: usize, l: usize, code: CellCode) -> &mut Self {
        assert!(
            code != CellCode::EgoVirtual,
            "EGO_VIRTUAL never appears in an occupancy grid"
        );
        if ks < self.grid.n_ks && kt < self.grid.n_kt && l < self.grid.n_kl {
            let i = self.grid.index(ks, kt, l);
            let cell = &mut self.grid.cells[i];
            if code.precedence() > cell.precedence() {
                *cell = code;
            }
        }
        self
    }

    pub fn finish(self) -> OccupancyGrid {
        self.grid
    }
}

/// Rasterizes every obstacle of `scenario` into a fresh grid.
pub fn build_occupancy_grid(scenario: &Scenario) -> Result<OccupancyGrid, LatticeError> {
    scenario.validate()?;
    let p = &scenario.params;
    let mut b = GridBuilder::new(p);
    for obstacle in &scenario.obstacles {
        match *obstacle {
            Obstacle::MovingVehicle { lane, s0, v } => {
                for kt in 0..p.n_kt {
                    let s = s0 + v * kt;
                    if s >= p.n_ks {
                        break;
                    }
                    b.mark(s, kt, lane, CellCode::Vehicle);
                }
            }
            Obstacle::TrafficLight { s_tl, ref phase } => {
                for (kt, _) in phase.iter().enumerate().filter(|(_, red)| **red) {
                    for l in 0..p.n_kl {
                        b.mark(s_tl, kt, l, CellCode::RedLight);
                    }
                }
            }
            Obstacle::ForbiddenLaneChange {
                s_from,
                s_to,
                lane_pair: (from, _),
            } => {
                for ks in s_from..=s_to {
                    for kt in 0..p.n_kt {
                        b.mark(ks, kt, from, CellCode::LcForbidden);
                    }
                }
            }
        }
    }
    Ok(b.finish())
}

/// Search-state identity: lane, s-cell, t-cell and velocity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub l: usize,
    pub ks: usize,
    pub kt: usize,
    pub kv: usize,
}

impl State {
    pub const fn new(l: usize, ks: usize, kt: usize, kv: usize) -> Self {
        Self { l, ks, kt, kv }
    }
}

/// Velocity-level change `a` and lane change `dl`, each in `{-1, 0, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub a: i8,
    pub dl: i8,
}

impl MotionPrimitive {
    /// All nine primitives, `a` ascending then `dl` ascending.
    pub const ALL: [MotionPrimitive; 9] = {
        let mut all = [MotionPrimitive { a: 0, dl: 0 }; 9];
        let mut i = 0;
        while i < 9 {
            all[i] = MotionPrimitive {
                a: (i / 3) as i8 - 1,
                dl: (i % 3) as i8 - 1,
            };
            i += 1;
        }
        all
    };

    pub const fn new(a: i8, dl: i8) -> Self {
        Self { a, dl }
    }

    /// The successor state, or `None` if the primitive is invalid at `from`.
    ///
    /// Advancing past the last s-cell lands on it: crossing the window edge
    /// is reaching the s-horizon.
    pub fn apply(self, from: &State, params: &LatticeParams) -> Option<State> {
        let kv = from.kv.checked_add_signed(self.a as isize)?;
        let l = from.l.checked_add_signed(self.dl as isize)?;
        if kv >= params.n_kv || l >= params.n_kl || (self.dl != 0 && kv == 0) {
            return None;
        }
        Some(State {
            l,
            ks: (from.ks + kv).min(params.n_ks - 1),
            kt: from.kt + 1,
            kv,
        })
    }
}

/// True if `action` taken from `from` runs into an obstacle.
///
/// Swept cells are `(ks'', kt+1, l')` for `ks'' ∈ [ks+1, ks']`, or just
/// `(ks, kt+1, l')` when the move ends at rest. Vehicles and red lights block
/// them; a lane change is also blocked if the same cells on the origin lane
/// are marked LC_FORBIDDEN.
pub fn collision_check(from: &State, action: MotionPrimitive, grid: &OccupancyGrid) -> bool {
    let (n_ks, n_kt, n_kl) = grid.dims();
    let kt = from.kt + 1;
    let kv = from.kv as isize + action.a as isize;
    let l = from.l as isize + action.dl as isize;
    debug_assert!(kv >= 0 && l >= 0 && (l as usize) < n_kl && kt < n_kt);
    let (kv, l) = (kv as usize, l as usize);
    let swept = if kv == 0 {
        from.ks..=from.ks
    } else {
        (from.ks + 1)..=(from.ks + kv).min(n_ks - 1)
    };
    swept.into_iter().any(|ks| {
        grid.get(ks, kt, l).blocks_motion() || (action.dl != 0 && grid.get(ks, kt, from.l) == CellCode::LcForbidden)
    })
}

/// Index of a search node inside a search tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub state: State,
    pub g: f64,
    pub h: f64,
    pub parent: Option<NodeId>,
    /// Primitive that produced this node (none for a root).
    pub action: Option<MotionPrimitive>,
}

impl Node {
    pub fn root(state: State) -> Self {
        Self {
            state,
            g: 0.0,
            h: 0.0,
            parent: None,
            action: None,
        }
    }

    pub fn f(&self) -> f64 {
        self.g + self.h
    }
}

/// A valid, collision-free move out of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub state: State,
    pub action: MotionPrimitive,
    pub cost: f64,
}

/// Collision-free successors of a non-horizon state in primitive order.
pub fn successors(from: &State, grid: &OccupancyGrid, params: &LatticeParams) -> Result<Vec<Successor>, LatticeError> {
    if !params.contains(from) {
        return Err(LatticeError::OutOfBounds(*from));
    }
    if params.is_horizon(from) {
        return Err(LatticeError::HorizonExpansion(*from));
    }
    let mut out = Vec::with_capacity(9);
    for action in MotionPrimitive::ALL {
        if let Some(state) = action.apply(from, params) {
            if !collision_check(from, action, grid) {
                out.push(Successor {
                    state,
                    action,
                    cost: params.step_cost(action),
                });
            }
        }
    }
    Ok(out)
}

/// Children of `node` (stored at `id`) with accumulated cost and parent link.
/// `h` is left at zero for the caller to fill in.
pub fn expand(
    node: &Node,
    id: NodeId,
    grid: &OccupancyGrid,
    params: &LatticeParams,
) -> Result<Vec<(Node, f64)>, LatticeError> {
    Ok(successors(&node.state, grid, params)?
        .into_iter()
        .map(|s| {
            (
                Node {
                    state: s.state,
                    g: node.g + s.cost,
                    h: 0.0,
                    parent: Some(id),
                    action: Some(s.action),
                },
                s.cost,
            )
        })
        .collect())
}

/// Whether the ego can occupy `state` at all (its own cell is not blocked).
pub fn state_is_free(state: &State, grid: &OccupancyGrid) -> bool {
    !grid.get(state.ks, state.kt, state.l).blocks_motion()
}

/// An occupancy grid with the ego's constant-velocity projection overlaid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SituationTensor {
    cells: OccupancyGrid,
    pub origin: State,
}

impl SituationTensor {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.cells.dims()
    }

    pub fn get(&self, ks: usize, kt: usize, l: usize) -> CellCode {
        self.cells.get(ks, kt, l)
    }

    pub fn cells(&self) -> &[CellCode] {
        self.cells.cells()
    }

    /// `(ks, kt, l)` of every EGO_VIRTUAL cell, ordered by `kt`.
    pub fn virtual_cells(&self) -> Vec<(usize, usize, usize)> {
        let mut v: Vec<_> = self
            .cells
            .occupied()
            .filter(|(_, c)| *c == CellCode::EgoVirtual)
            .map(|(idx, _)| idx)
            .collect();
        v.sort_by_key(|&(ks, kt, l)| (kt, ks, l));
        v
    }

    /// Recovers the originating state from the overlay alone. Needs at least
    /// two projected cells.
    pub fn decode_ego(&self) -> Option<State> {
        let cells = self.virtual_cells();
        match cells.as_slice() {
            [(ks0, kt0, l), (ks1, _, _), ..] => Some(State::new(*l, *ks0, *kt0, ks1 - ks0)),
            _ => None,
        }
    }
}

/// Overlays the projection of `state` (continuing at velocity `kv`) on a copy
/// of `grid`. The overlay wins over any obstacle code.
pub fn render_situation(state: &State, grid: &OccupancyGrid) -> SituationTensor {
    let mut cells = grid.clone();
    for_each_projected_cell(state, grid.dims(), |ks, kt, l| {
        let i = cells.index(ks, kt, l);
        cells.cells[i] = CellCode::EgoVirtual;
    });
    SituationTensor { cells, origin: *state }
}

/// Visits `(ks + kv·Δt, kt + Δt, l)` while it stays inside the window.
pub(crate) fn for_each_projected_cell(
    state: &State,
    (n_ks, n_kt, _): (usize, usize, usize),
    mut f: impl FnMut(usize, usize, usize),
) {
    for kt in state.kt..n_kt {
        let ks = state.ks + state.kv * (kt - state.kt);
        if ks >= n_ks {
            break;
        }
        f(ks, kt, state.l);
    }
}

/// Draws a random scenario; deterministic in `(params, seed)`.
///
/// Up to three vehicles, at most one traffic light and at most one
/// forbidden-lane-change band. The ego start cell `(l 0, ks 0, kt 0)` is
/// always left free.
pub fn random_scenario(params: &LatticeParams, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obstacles = Vec::new();

    let n_vehicles = rng.gen_range(0..=3usize);
    for _ in 0..n_vehicles {
        let lane = rng.gen_range(0..params.n_kl);
        let v = rng.gen_range(0..params.n_kv);
        let s0 = if lane == 0 {
            rng.gen_range(1..params.n_ks)
        } else {
            rng.gen_range(0..params.n_ks)
        };
        obstacles.push(Obstacle::MovingVehicle { lane, s0, v });
    }

    if rng.gen_bool(0.5) {
        let s_tl = rng.gen_range(1..params.n_ks);
        let period = rng.gen_range(2..=params.n_kt);
        let red = rng.gen_range(1..period);
        let offset = rng.gen_range(0..period);
        let phase = (0..params.n_kt).map(|kt| (kt + offset) % period < red).collect();
        obstacles.push(Obstacle::TrafficLight { s_tl, phase });
    }

    if params.n_kl >= 2 && rng.gen_bool(0.5) {
        let from = rng.gen_range(0..params.n_kl);
        let to = if from == 0 {
            1
        } else if from == params.n_kl - 1 || rng.gen_bool(0.5) {
            from - 1
        } else {
            from + 1
        };
        let s_from = if from == 0 {
            rng.gen_range(1..params.n_ks)
        } else {
            rng.gen_range(0..params.n_ks)
        };
        let s_to = rng.gen_range(s_from..params.n_ks);
        obstacles.push(Obstacle::ForbiddenLaneChange {
            s_from,
            s_to,
            lane_pair: (from, to),
        });
    }

    Scenario {
        id: format!("scn-{seed:016x}"),
        seed,
        params: *params,
        obstacles,
    }
}
