//! Coordinate-wise lattice operations on `R^d` and min-max closure.
//!
//! Two closure engines are provided: [`closure_naive`] sweeps all pairs of
//! an ordered point set, and [`closure_grid`] works on the rank-encoded
//! [`RankGrid`] with a parallel outer loop. Both return the same set.

mod closure;
mod grid;
mod point;

pub use closure::{
    closure_grid, closure_naive, is_minmax_closed, Closure, ClosureConfig, ClosureEngine,
    ClosureStats, DEFAULT_MEM_CAP_BITS,
};
pub use grid::{get_points, make_grid, make_set, set_one, RankGrid, RankTuple};
pub use point::{join, meet, Point, PointSet};
