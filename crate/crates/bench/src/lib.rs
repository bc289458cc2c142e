//! Criterion benchmarks for closure and mixture evaluation. Run with
//! `cargo bench -p tpkde-bench`. The table-style naive vs grid comparison
//! lives in `tpkde benchmark`.

use tpkde::experiments::benchmark_sample;
use tpkde::lattice::PointSet;

/// Standard Gaussian input shared by the benchmarks.
pub fn sample(d: usize, n: usize) -> PointSet {
    benchmark_sample(d, n, 0).expect("valid benchmark size")
}
