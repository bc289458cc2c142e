use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::lattice::point::{axis_values, Point, PointSet};

/// Per-axis rank positions of a grid point.
pub type RankTuple = Vec<usize>;

/// Rank-encoded occupancy grid over the lattice generated by a point set.
///
/// Axis `i` stores the sorted distinct `i`-th coordinates of the input, and
/// a point is represented by the tuple of its per-axis positions. Bits are
/// laid out row-major (last axis fastest), so increasing linear index is
/// lexicographic rank order, which is also lexicographic coordinate order.
///
/// Writes are monotone: bits only ever go from 0 to 1, so concurrent
/// [`RankGrid::set_one`] calls from many threads are safe.
#[derive(Debug)]
pub struct RankGrid {
    axes: Vec<Vec<f64>>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    capacity: usize,
    words: Vec<AtomicU64>,
}

impl RankGrid {
    /// Encodes `set` into a grid, refusing if `prod_i n_i` exceeds `mem_cap_bits`.
    pub fn make_grid(set: &PointSet, mem_cap_bits: u64) -> Result<Self> {
        let required = set.grid_capacity();
        if required > mem_cap_bits as u128 || required > usize::MAX as u128 {
            return Err(Error::MemoryCap {
                required,
                cap: mem_cap_bits,
            });
        }
        let axes = axis_values(set);
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let mut strides = vec![1usize; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        let capacity = required as usize;
        let words = (0..capacity.div_ceil(64)).map(|_| AtomicU64::new(0)).collect();
        let grid = RankGrid {
            axes,
            shape,
            strides,
            capacity,
            words,
        };
        for p in set {
            let lin = grid.linear_of_point(p);
            grid.set_linear(lin);
        }
        Ok(grid)
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// The sorted distinct coordinate values along each axis.
    pub fn coord_values(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// Total number of addressable bits, `prod_i n_i`.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn count_ones(&self) -> usize {
        self.words
            .iter()
            .map(|w| w.load(Ordering::Relaxed).count_ones() as usize)
            .sum()
    }

    /// Marks `idx` as a member. Returns whether the bit was newly set.
    pub fn set_one(&self, idx: &[usize]) -> Result<bool> {
        let lin = self.linear(idx)?;
        Ok(self.set_linear(lin))
    }

    pub fn contains(&self, idx: &[usize]) -> Result<bool> {
        let lin = self.linear(idx)?;
        Ok(self.test_linear(lin))
    }

    /// Rank tuples of every set bit, in lexicographic order.
    pub fn get_points(&self) -> Vec<RankTuple> {
        self.occupied_linear()
            .into_iter()
            .map(|lin| self.decode(lin))
            .collect()
    }

    /// Maps the occupied rank tuples back to coordinates.
    pub fn make_set(&self) -> PointSet {
        let points = self
            .occupied_linear()
            .into_iter()
            .map(|lin| {
                let coords = self
                    .decode(lin)
                    .into_iter()
                    .enumerate()
                    .map(|(axis, r)| self.axes[axis][r])
                    .collect();
                // coordinates were validated when the grid was built
                Point::new(coords).expect("grid coordinates are finite")
            })
            .collect();
        PointSet::from_sorted_unchecked(self.dims(), points)
    }

    fn linear(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dims() || idx.iter().zip(&self.shape).any(|(i, n)| i >= n) {
            return Err(Error::OutOfBounds {
                index: idx.to_vec(),
                shape: self.shape.clone(),
            });
        }
        Ok(idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum())
    }

    fn linear_of_point(&self, p: &Point) -> usize {
        p.coords()
            .iter()
            .enumerate()
            .map(|(axis, c)| {
                let rank = self.axes[axis]
                    .binary_search_by(|v| v.total_cmp(c))
                    .expect("point coordinate present on its axis");
                rank * self.strides[axis]
            })
            .sum()
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    #[inline]
    pub(crate) fn test_linear(&self, lin: usize) -> bool {
        self.words[lin / 64].load(Ordering::Relaxed) & (1u64 << (lin % 64)) != 0
    }

    #[inline]
    pub(crate) fn set_linear(&self, lin: usize) -> bool {
        let mask = 1u64 << (lin % 64);
        let word = &self.words[lin / 64];
        if word.load(Ordering::Relaxed) & mask != 0 {
            return false;
        }
        word.fetch_or(mask, Ordering::Relaxed) & mask == 0
    }

    pub(crate) fn occupied_linear(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (wi, w) in self.words.iter().enumerate() {
            let mut bits = w.load(Ordering::Relaxed);
            while bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                out.push(wi * 64 + tz);
                bits &= bits - 1;
            }
        }
        out
    }

    pub(crate) fn decode(&self, mut lin: usize) -> RankTuple {
        self.strides
            .iter()
            .map(|s| {
                let r = lin / s;
                lin %= s;
                r
            })
            .collect()
    }
}

pub fn make_grid(set: &PointSet, mem_cap_bits: u64) -> Result<RankGrid> {
    RankGrid::make_grid(set, mem_cap_bits)
}

pub fn make_set(grid: &RankGrid) -> PointSet {
    grid.make_set()
}

pub fn get_points(grid: &RankGrid) -> Vec<RankTuple> {
    grid.get_points()
}

pub fn set_one(grid: &RankGrid, idx: &[usize]) -> Result<bool> {
    grid.set_one(idx)
}
