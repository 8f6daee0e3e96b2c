//! Cost-to-horizon estimators.
//!
//! * [`ZeroHeuristic`] turns the search into uniform-cost search.
//! * [`DpHeuristic`] relaxes the lattice to `(ks, kv)`, dropping lanes and all
//!   obstacles, and solves the relaxation exactly. It is admissible and
//!   consistent.
//! * [`MlHeuristic`] asks a learned model and clamps the answer into
//!   `[h_dp, ε·h_dp]`, so any model, trained or not, yields solutions at most
//!   `ε` times the optimum.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use thiserror::Error;

use crate::lattice::{LatticeParams, MotionPrimitive, OccupancyGrid, SituationTensor, State};
use crate::mlmodel::{self, MlpModel, ModelError};

#[derive(Debug, Error, PartialEq)]
pub enum HeuristicError {
    #[error("epsilon must be a finite number >= 1, got {0}")]
    InvalidEpsilon(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that can estimate the remaining cost from a state.
pub trait Heuristic {
    fn estimate(&self, state: &State, grid: &OccupancyGrid) -> f64;

    fn name(&self) -> String;
}

impl<H: Heuristic + ?Sized> Heuristic for &H {
    fn estimate(&self, state: &State, grid: &OccupancyGrid) -> f64 {
        (**self).estimate(state, grid)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

pub fn h_zero(_state: &State) -> f64 {
    0.0
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroHeuristic;

impl Heuristic for ZeroHeuristic {
    fn estimate(&self, state: &State, _grid: &OccupancyGrid) -> f64 {
        h_zero(state)
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

/// Exact costs of the obstacle-free, single-lane relaxation, indexed by
/// `(ks, kv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    values: Vec<f64>,
    params: LatticeParams,
}

impl DpTable {
    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    #[inline]
    pub fn value(&self, ks: usize, kv: usize) -> f64 {
        self.values[ks * self.params.n_kv + kv]
    }

    /// Dumps `ks,kv,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "ks,kv,value")?;
        for ks in 0..self.params.n_ks {
            for kv in 0..self.params.n_kv {
                writeln!(w, "{ks},{kv},{}", self.value(ks, kv))?;
            }
        }
        Ok(())
    }
}

/// Label-setting shortest path, run backwards from the absorbing last s-cell.
pub fn build_dp_table(params: &LatticeParams) -> DpTable {
    let (n_ks, n_kv) = (params.n_ks, params.n_kv);
    let idx = |ks: usize, kv: usize| ks * n_kv + kv;

    let mut reverse: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_ks * n_kv];
    for ks in 0..n_ks - 1 {
        for kv in 0..n_kv {
            for a in -1i8..=1 {
                let action = MotionPrimitive::new(a, 0);
                if let Some(next) = action.apply(&State::new(0, ks, 0, kv), params) {
                    reverse[idx(next.ks, next.kv)].push((idx(ks, kv), params.step_cost(action)));
                }
            }
        }
    }

    let mut values = vec![f64::INFINITY; n_ks * n_kv];
    let mut heap = BinaryHeap::new();
    for kv in 0..n_kv {
        values[idx(n_ks - 1, kv)] = 0.0;
        heap.push(Reverse((Cost(0.0), idx(n_ks - 1, kv))));
    }
    let mut settled = vec![false; n_ks * n_kv];
    while let Some(Reverse((Cost(d), u))) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        for &(v, c) in &reverse[u] {
            let nd = d + c;
            if nd < values[v] {
                values[v] = nd;
                heap.push(Reverse((Cost(nd), v)));
            }
        }
    }

    DpTable {
        values,
        params: *params,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Lower bound on the cost to either horizon: the relaxed cost to the last
/// s-cell, or idling until the last t-cell, whichever is cheaper.
pub fn h_dp(state: &State, table: &DpTable, params: &LatticeParams) -> f64 {
    let to_s = table.value(state.ks, state.kv);
    let to_t = params.w_t * (params.n_kt - 1 - state.kt) as f64;
    to_s.min(to_t)
}

#[derive(Debug, Clone)]
pub struct DpHeuristic {
    table: DpTable,
}

impl DpHeuristic {
    pub fn new(params: &LatticeParams) -> Self {
        Self {
            table: build_dp_table(params),
        }
    }

    pub fn from_table(table: DpTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &DpTable {
        &self.table
    }
}

impl Heuristic for DpHeuristic {
    fn estimate(&self, state: &State, _grid: &OccupancyGrid) -> f64 {
        h_dp(state, &self.table, &self.table.params)
    }

    fn name(&self) -> String {
        "dp".into()
    }
}

/// Suboptimality factor `ε ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EpsilonBand(f64);

impl EpsilonBand {
    pub fn new(epsilon: f64) -> Result<Self, HeuristicError> {
        if epsilon.is_finite() && epsilon >= 1.0 {
            Ok(Self(epsilon))
        } else {
            Err(HeuristicError::InvalidEpsilon(epsilon))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }

    /// Clamps `raw` into `[lower, ε·lower]`. NaN maps to `lower`.
    pub fn clamp(self, raw: f64, lower: f64) -> f64 {
        raw.max(lower).min(self.0 * lower)
    }
}

impl Default for EpsilonBand {
    fn default() -> Self {
        Self(1.5)
    }
}

/// Model prediction for `tensor`, clamped into the band around `h_dp`.
pub fn h_ml_clamped(
    state: &State,
    tensor: &SituationTensor,
    model: &MlpModel,
    table: &DpTable,
    band: EpsilonBand,
    params: &LatticeParams,
) -> Result<f64, HeuristicError> {
    let x = mlmodel::encode(tensor, params)?;
    let raw = model.predict(&x)?;
    Ok(band.clamp(raw, h_dp(state, table, params)))
}

/// Learned heuristic inside the `[h_dp, ε·h_dp]` band.
#[derive(Debug, Clone)]
pub struct MlHeuristic<'m> {
    model: &'m MlpModel,
    table: DpTable,
    band: EpsilonBand,
}

impl<'m> MlHeuristic<'m> {
    pub fn new(model: &'m MlpModel, params: &LatticeParams, band: EpsilonBand) -> Result<Self, HeuristicError> {
        model.check_input_dim(params)?;
        Ok(Self {
            model,
            table: build_dp_table(params),
            band,
        })
    }

    pub fn band(&self) -> EpsilonBand {
        self.band
    }

    /// Unclamped model output.
    pub fn raw(&self, state: &State, grid: &OccupancyGrid) -> f64 {
        let x = mlmodel::encode_state(state, grid, &self.table.params);
        self.model.predict_sparse(&x)
    }
}

impl Heuristic for MlHeuristic<'_> {
    fn estimate(&self, state: &State, grid: &OccupancyGrid) -> f64 {
        let lower = h_dp(state, &self.table, &self.table.params);
        if lower == 0.0 {
            return 0.0;
        }
        self.band.clamp(self.raw(state, grid), lower)
    }

    fn name(&self) -> String {
        "ml".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::render_situation;
    use proptest::prelude::*;

    /// Brute force over every action sequence of length `depth` in the
    /// single-lane relaxation; the cheapest sequence that ends on the last
    /// s-cell.
    fn enumerate_to_edge(p: &LatticeParams, ks: usize, kv: usize, depth: usize) -> f64 {
        if ks == p.n_ks - 1 {
            return 0.0;
        }
        if depth == 0 {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        for a in -1i8..=1 {
            let Some(nkv) = kv.checked_add_signed(a as isize).filter(|v| *v < p.n_kv) else {
                continue;
            };
            let nks = (ks + nkv).min(p.n_ks - 1);
            let c = p.step_cost(MotionPrimitive::new(a, 0)) + enumerate_to_edge(p, nks, nkv, depth - 1);
            best = best.min(c);
        }
        best
    }

    #[test]
    fn boundary_is_zero() {
        let p = LatticeParams::default();
        let t = build_dp_table(&p);
        for kv in 0..p.n_kv {
            assert_eq!(t.value(p.n_ks - 1, kv), 0.0);
        }
    }

    #[test]
    fn one_step_values() {
        let p = LatticeParams::default();
        let t = build_dp_table(&p);
        assert_eq!(t.value(p.n_ks - 2, 1), 1.0);
        assert_eq!(t.value(p.n_ks - 2, 0), 1.5);
    }

    #[test]
    fn table_matches_enumeration() {
        let p = LatticeParams::sized(10, 6, 1, 3);
        let t = build_dp_table(&p);
        for ks in 0..p.n_ks {
            for kv in 0..p.n_kv {
                let brute = enumerate_to_edge(&p, ks, kv, 12);
                assert!(
                    (t.value(ks, kv) - brute).abs() < 1e-12,
                    "({ks},{kv}): {} vs {brute}",
                    t.value(ks, kv)
                );
            }
        }
    }

    #[test]
    fn table_is_consistent() {
        let p = LatticeParams::default();
        let t = build_dp_table(&p);
        for ks in 0..p.n_ks - 1 {
            for kv in 0..p.n_kv {
                assert!(t.value(ks, kv).is_finite());
                for a in -1i8..=1 {
                    let act = MotionPrimitive::new(a, 0);
                    if let Some(n) = act.apply(&State::new(0, ks, 0, kv), &p) {
                        assert!(t.value(ks, kv) <= p.step_cost(act) + t.value(n.ks, n.kv) + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn h_dp_at_horizons() {
        let p = LatticeParams::default();
        let t = build_dp_table(&p);
        assert_eq!(h_dp(&State::new(1, 3, p.n_kt - 1, 2), &t, &p), 0.0);
        assert_eq!(h_dp(&State::new(0, p.n_ks - 1, 2, 0), &t, &p), 0.0);
        // From rest at the origin: driving costs 12.5, idling 14.
        assert_eq!(h_dp(&State::new(0, 0, 0, 0), &t, &p), 12.5);
    }

    #[test]
    fn csv_dump() {
        let p = LatticeParams::sized(3, 3, 1, 2);
        let mut buf = Vec::new();
        build_dp_table(&p).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "ks,kv,value");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(lines.last().unwrap(), &"2,1,0");
    }

    #[test]
    fn epsilon_band() {
        assert!(EpsilonBand::new(0.99).is_err());
        assert!(EpsilonBand::new(f64::NAN).is_err());
        let b = EpsilonBand::new(1.5).unwrap();
        assert_eq!(b.clamp(10.0, 4.0), 6.0);
        assert_eq!(b.clamp(2.0, 4.0), 4.0);
        assert_eq!(b.clamp(5.0, 4.0), 5.0);
        assert_eq!(b.clamp(123.0, 0.0), 0.0);
        assert_eq!(b.clamp(f64::NAN, 4.0), 4.0);
    }

    #[test]
    fn clamped_ml_at_horizon_is_zero() {
        let p = LatticeParams::sized(6, 4, 1, 3);
        let n = mlmodel::input_dim(&p);
        let mut model = MlpModel::zeros(&[n, 1]);
        model.set_output_bias(1e6);
        let t = build_dp_table(&p);
        let g = OccupancyGrid::empty(&p);
        let s = State::new(0, 5, 1, 1);
        let tensor = render_situation(&s, &g);
        let band = EpsilonBand::new(1.5).unwrap();
        assert_eq!(h_ml_clamped(&s, &tensor, &model, &t, band, &p).unwrap(), 0.0);
        let h = MlHeuristic::new(&model, &p, band).unwrap();
        assert_eq!(h.estimate(&s, &g), 0.0);
    }

    #[test]
    fn clamped_ml_dimension_mismatch() {
        let p = LatticeParams::sized(6, 4, 1, 3);
        let model = MlpModel::zeros(&[5, 1]);
        let t = build_dp_table(&p);
        let s = State::new(0, 0, 0, 0);
        let tensor = render_situation(&s, &OccupancyGrid::empty(&p));
        let r = h_ml_clamped(&s, &tensor, &model, &t, EpsilonBand::default(), &p);
        assert!(matches!(
            r,
            Err(HeuristicError::Model(ModelError::DimensionMismatch { .. }))
        ));
        assert!(MlHeuristic::new(&model, &p, EpsilonBand::default()).is_err());
    }

    proptest! {
        #[test]
        fn ml_stays_in_band(seed in any::<u64>(), bias in -1e6f64..1e6, eps in 1.0f64..4.0,
                            pick in any::<(usize, usize, usize, usize)>(), scen in any::<u64>()) {
            let p = LatticeParams::sized(8, 6, 2, 3);
            let grid = crate::lattice::build_occupancy_grid(&crate::lattice::random_scenario(&p, scen)).unwrap();
            let s = State::new(pick.0 % p.n_kl, pick.1 % p.n_ks, pick.2 % p.n_kt, pick.3 % p.n_kv);
            let n = mlmodel::input_dim(&p);
            let mut model = MlpModel::new(&[n, 8, 1], seed);
            model.set_output_bias(bias);
            let band = EpsilonBand::new(eps).unwrap();
            let table = build_dp_table(&p);
            let lo = h_dp(&s, &table, &p);
            let h = MlHeuristic::new(&model, &p, band).unwrap().estimate(&s, &grid);
            prop_assert!(lo <= h && h <= eps * lo);
            let tensor = render_situation(&s, &grid);
            let slow = h_ml_clamped(&s, &tensor, &model, &table, band, &p).unwrap();
            prop_assert_eq!(slow, h);
        }
    }
}
