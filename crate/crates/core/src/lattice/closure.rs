use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::grid::RankGrid;
use crate::lattice::point::{Point, PointSet};

/// Default refusal threshold for closure grids: 2^31 bits (256 MiB).
pub const DEFAULT_MEM_CAP_BITS: u64 = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClosureEngine {
    /// Pairwise sweeps over an ordered point set.
    Naive,
    /// Sweeps over the rank grid with a data-parallel outer loop.
    Grid,
}

impl ClosureEngine {
    pub fn run(self, x: &PointSet, config: &ClosureConfig) -> Result<Closure> {
        match self {
            ClosureEngine::Naive => closure_naive(x, config),
            ClosureEngine::Grid => closure_grid(x, config),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClosureEngine::Naive => "naive",
            ClosureEngine::Grid => "grid",
        }
    }
}

impl fmt::Display for ClosureEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClosureEngine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(ClosureEngine::Naive),
            "grid" => Ok(ClosureEngine::Grid),
            other => Err(Error::Parse(format!("unknown closure engine `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureConfig {
    pub mem_cap_bits: u64,
}

impl Default for ClosureConfig {
    fn default() -> Self {
        ClosureConfig {
            mem_cap_bits: DEFAULT_MEM_CAP_BITS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureStats {
    pub n: usize,
    pub m: usize,
    /// `prod_i n_i`, the size of the generated grid.
    pub grid_capacity: u64,
    /// Full passes of the fixpoint loop, including the final pass that adds nothing.
    pub sweeps: usize,
    /// Set size before the first sweep and after each sweep.
    #[serde(skip)]
    pub sizes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Closure {
    pub set: PointSet,
    pub stats: ClosureStats,
}

fn projected_capacity(x: &PointSet, config: &ClosureConfig) -> Result<u64> {
    let required = x.grid_capacity();
    if required > config.mem_cap_bits as u128 {
        return Err(Error::MemoryCap {
            required,
            cap: config.mem_cap_bits,
        });
    }
    Ok(required as u64)
}

/// Min-max closure by repeated sweeps over all pairs of the current set.
///
/// Each sweep pairs the points present at its start; points added during a
/// sweep are paired on the next one. Stops after a sweep that adds nothing.
pub fn closure_naive(x: &PointSet, config: &ClosureConfig) -> Result<Closure> {
    let grid_capacity = projected_capacity(x, config)?;
    let mut members: BTreeSet<Point> = x.iter().cloned().collect();
    let mut list: Vec<Point> = x.points().to_vec();
    let mut sizes = vec![list.len()];
    let mut sweeps = 0;
    let (mut lo, mut hi) = (list[0].clone(), list[0].clone());
    loop {
        let old_size = list.len();
        sweeps += 1;
        for i in 0..old_size {
            for j in (i + 1)..old_size {
                list[i].meet_join_into(&list[j], &mut lo, &mut hi);
                for candidate in [&lo, &hi] {
                    if !members.contains(candidate) {
                        members.insert(candidate.clone());
                        list.push(candidate.clone());
                    }
                }
            }
        }
        sizes.push(list.len());
        if list.len() == old_size {
            break;
        }
    }
    let m = members.len();
    Ok(Closure {
        set: PointSet::from_sorted_unchecked(x.dims(), members.into_iter().collect()),
        stats: ClosureStats {
            n: x.len(),
            m,
            grid_capacity,
            sweeps,
            sizes,
        },
    })
}

/// Min-max closure on the rank grid.
///
/// The outer loop over grid points runs on the rayon pool; the only shared
/// writes are monotone bit sets. Termination compares occupied counts after
/// each fully joined sweep.
pub fn closure_grid(x: &PointSet, config: &ClosureConfig) -> Result<Closure> {
    let grid = RankGrid::make_grid(x, config.mem_cap_bits)?;
    if u32::try_from(grid.capacity()).is_ok() {
        grid_fixpoint::<u32>(x, grid)
    } else {
        grid_fixpoint::<u64>(x, grid)
    }
}

/// Per-axis offset `rank * stride`. The grid's linear index of a point is
/// the sum of its offsets, and since strides are positive, the meet and
/// join of two points take the coordinate-wise min and max of offsets.
trait Offset: Copy + Ord + Send + Sync {
    fn from_usize(v: usize) -> Self;
    fn to_usize(self) -> usize;
}

impl Offset for u32 {
    fn from_usize(v: usize) -> Self {
        v as u32
    }
    fn to_usize(self) -> usize {
        self as usize
    }
}

impl Offset for u64 {
    fn from_usize(v: usize) -> Self {
        v as u64
    }
    fn to_usize(self) -> usize {
        self as usize
    }
}

fn grid_fixpoint<T: Offset>(x: &PointSet, grid: RankGrid) -> Result<Closure> {
    let dims = grid.dims();
    let mut offsets = flat_offsets::<T>(&grid);
    let mut sizes = vec![offsets.len() / dims];
    let mut sweeps = 0;
    loop {
        let old_size = offsets.len() / dims;
        sweeps += 1;
        match dims {
            2 => sweep_fixed::<T, 2>(&offsets, &grid),
            3 => sweep_fixed::<T, 3>(&offsets, &grid),
            4 => sweep_fixed::<T, 4>(&offsets, &grid),
            _ => sweep(&offsets, dims, &grid),
        }
        offsets = flat_offsets(&grid);
        let size = offsets.len() / dims;
        debug_assert!(size >= old_size);
        sizes.push(size);
        if size == old_size {
            break;
        }
    }
    let set = grid.make_set();
    Ok(Closure {
        stats: ClosureStats {
            n: x.len(),
            m: set.len(),
            grid_capacity: grid.capacity() as u64,
            sweeps,
            sizes,
        },
        set,
    })
}

/// One pass over all unordered pairs; the outer loop runs on the rayon pool.
fn sweep<T: Offset>(offsets: &[T], dims: usize, grid: &RankGrid) {
    let n = offsets.len() / dims;
    (0..n).into_par_iter().for_each(|i| {
        let p = &offsets[i * dims..(i + 1) * dims];
        for q in offsets[(i + 1) * dims..].chunks_exact(dims) {
            let mut lo = 0;
            let mut hi = 0;
            for (&a, &b) in p.iter().zip(q) {
                lo += a.min(b).to_usize();
                hi += a.max(b).to_usize();
            }
            grid.set_linear(hi);
            grid.set_linear(lo);
        }
    });
}

/// [`sweep`] with the dimension known at compile time.
fn sweep_fixed<T: Offset, const D: usize>(offsets: &[T], grid: &RankGrid) {
    let (points, _) = offsets.as_chunks::<D>();
    (0..points.len()).into_par_iter().for_each(|i| {
        let p = &points[i];
        for q in &points[i + 1..] {
            let mut lo = 0;
            let mut hi = 0;
            for k in 0..D {
                lo += p[k].min(q[k]).to_usize();
                hi += p[k].max(q[k]).to_usize();
            }
            grid.set_linear(hi);
            grid.set_linear(lo);
        }
    });
}

fn flat_offsets<T: Offset>(grid: &RankGrid) -> Vec<T> {
    let strides = grid.strides();
    let occupied = grid.occupied_linear();
    let mut out = Vec::with_capacity(occupied.len() * grid.dims());
    for lin in occupied {
        out.extend(
            grid.decode(lin)
                .into_iter()
                .zip(strides)
                .map(|(r, s)| T::from_usize(r * s)),
        );
    }
    out
}

/// True iff every pairwise meet and join of `s` lies in `s`.
pub fn is_minmax_closed(s: &PointSet) -> bool {
    let pts = s.points();
    (0..pts.len()).into_par_iter().all(|i| {
        pts[i + 1..].iter().all(|q| {
            s.contains(&pts[i].meet_unchecked(q)) && s.contains(&pts[i].join_unchecked(q))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(rows: &[&[f64]]) -> PointSet {
        PointSet::from_rows(rows.iter().map(|r| r.to_vec())).unwrap()
    }

    /// Oracle: add every pairwise meet/join until nothing changes, with no
    /// sweep structure at all.
    fn brute_force_closure(x: &PointSet) -> BTreeSet<Vec<u64>> {
        let key = |p: &[f64]| p.iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        let mut s: BTreeSet<Vec<u64>> = x.iter().map(|p| key(p.coords())).collect();
        loop {
            let cur: Vec<Vec<f64>> = s
                .iter()
                .map(|k| k.iter().map(|b| f64::from_bits(*b)).collect())
                .collect();
            let before = s.len();
            for a in &cur {
                for b in &cur {
                    let lo: Vec<f64> = a.iter().zip(b).map(|(u, v)| u.min(*v)).collect();
                    let hi: Vec<f64> = a.iter().zip(b).map(|(u, v)| u.max(*v)).collect();
                    s.insert(key(&lo));
                    s.insert(key(&hi));
                }
            }
            if s.len() == before {
                return s;
            }
        }
    }

    fn keys(s: &PointSet) -> BTreeSet<Vec<u64>> {
        s.iter()
            .map(|p| p.coords().iter().map(|c| c.to_bits()).collect())
            .collect()
    }

    #[test]
    fn counterexample_pair_closes_to_four_points() {
        let x = set(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let expected = set(&[&[2.0, 0.0], &[0.0, 1.0], &[2.0, 1.0], &[0.0, 0.0]]);
        let cfg = ClosureConfig::default();
        assert_eq!(closure_naive(&x, &cfg).unwrap().set, expected);
        assert_eq!(closure_grid(&x, &cfg).unwrap().set, expected);
        assert!(is_minmax_closed(&expected));
        assert!(!is_minmax_closed(&x));
    }

    #[test]
    fn chain_is_already_closed() {
        let x = set(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        let c = closure_naive(&x, &ClosureConfig::default()).unwrap();
        assert_eq!(c.set, x);
        assert_eq!(c.stats.sweeps, 1);
    }

    #[test]
    fn single_point() {
        let x = set(&[&[0.25, -3.0, 9.0]]);
        let c = closure_grid(&x, &ClosureConfig::default()).unwrap();
        assert_eq!(c.set, x);
        assert_eq!(c.stats.m, 1);
    }

    #[test]
    fn three_point_cycle_matches_brute_force() {
        let x = set(&[&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0], &[2.0, 3.0, 1.0]]);
        let oracle = brute_force_closure(&x);
        // frozen from an independent fixpoint enumeration
        let frozen = set(&[
            &[1.0, 1.0, 1.0], &[1.0, 1.0, 2.0], &[1.0, 2.0, 1.0], &[1.0, 2.0, 2.0],
            &[1.0, 2.0, 3.0], &[2.0, 1.0, 1.0], &[2.0, 1.0, 2.0], &[2.0, 2.0, 1.0],
            &[2.0, 2.0, 2.0], &[2.0, 2.0, 3.0], &[2.0, 3.0, 1.0], &[2.0, 3.0, 2.0],
            &[2.0, 3.0, 3.0], &[3.0, 1.0, 2.0], &[3.0, 2.0, 2.0], &[3.0, 2.0, 3.0],
            &[3.0, 3.0, 2.0], &[3.0, 3.0, 3.0],
        ]);
        assert_eq!(keys(&frozen), oracle);
        let c = closure_naive(&x, &ClosureConfig::default()).unwrap();
        assert_eq!(c.set, frozen);
        assert_eq!(keys(&c.set), oracle);
        assert_eq!(keys(&closure_grid(&x, &ClosureConfig::default()).unwrap().set), oracle);
    }

    #[test]
    fn gaussian_sample_grid_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
            .collect();
        let x = PointSet::from_rows(rows).unwrap();
        let cfg = ClosureConfig::default();
        let naive = closure_naive(&x, &cfg).unwrap();
        let grid = closure_grid(&x, &cfg).unwrap();
        assert_eq!(naive.set, grid.set);
        assert_eq!(keys(&naive.set), brute_force_closure(&x));
        assert!(naive.stats.m as u64 <= naive.stats.grid_capacity);
        assert!(grid.stats.sizes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn memory_cap_refuses_both_engines() {
        let x = set(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let cfg = ClosureConfig { mem_cap_bits: 3 };
        assert!(matches!(closure_naive(&x, &cfg), Err(Error::MemoryCap { .. })));
        assert!(matches!(closure_grid(&x, &cfg), Err(Error::MemoryCap { .. })));
    }

    #[test]
    fn engine_parses() {
        assert_eq!("grid".parse::<ClosureEngine>().unwrap(), ClosureEngine::Grid);
        assert!("gpu".parse::<ClosureEngine>().is_err());
    }
}
