//! Search-based lattice motion planning with learned cost-to-horizon
//! heuristics.
//!
//! The crate is organized bottom-up:
//!
//! * [`lattice`]: planning window, obstacles, occupancy grids, motion
//!   primitives and the situation tensor.
//! * [`search`]: best-first search, either stopping at the first horizon
//!   node or draining the Open list.
//! * [`heuristics`]: zero, relaxed dynamic-programming and clamped learned
//!   estimators.
//! * [`dataset`]: labeled training data from drained searches.
//! * [`mlmodel`]: a small feedforward regressor and its trainer.
//!
//! ```
//! use sbomp::heuristics::DpHeuristic;
//! use sbomp::lattice::{build_occupancy_grid, random_scenario, LatticeParams, Node, State};
//! use sbomp::search::plan;
//!
//! let params = LatticeParams::default();
//! let scenario = random_scenario(&params, 42);
//! let grid = build_occupancy_grid(&scenario).unwrap();
//! let start = Node::root(State::new(0, 0, 0, 0));
//! if let Ok(result) = plan(&start, &grid, &params, DpHeuristic::new(&params)) {
//!     assert!(params.is_horizon(&result.final_node().state));
//! }
//! ```

pub mod dataset;
pub mod heuristics;
pub mod lattice;
pub mod mlmodel;
pub mod search;

pub use heuristics::{DpHeuristic, EpsilonBand, Heuristic, MlHeuristic, ZeroHeuristic};
pub use lattice::{LatticeParams, Node, OccupancyGrid, Scenario, State};

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/heuristics.md")]
    mod heuristics {}
    #[doc = include_str!("../../../book/src/dataset.md")]
    mod dataset {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
}
