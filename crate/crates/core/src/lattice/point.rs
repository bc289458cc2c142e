use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite point in `R^d`.
///
/// Negative zero is normalized to positive zero on construction so that
/// exact coordinate equality and the total order used for set membership
/// agree.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let mut coords = coords;
        for (axis, c) in coords.iter_mut().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite { axis, value: *c });
            }
            if *c == 0.0 {
                *c = 0.0;
            }
        }
        Ok(Point(coords))
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Coordinate-wise minimum.
    pub fn meet(&self, other: &Point) -> Result<Point> {
        check_dims(self.dims(), other.dims())?;
        Ok(self.meet_unchecked(other))
    }

    /// Coordinate-wise maximum.
    pub fn join(&self, other: &Point) -> Result<Point> {
        check_dims(self.dims(), other.dims())?;
        Ok(self.join_unchecked(other))
    }

    pub(crate) fn meet_unchecked(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a.min(*b)).collect())
    }

    pub(crate) fn join_unchecked(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a.max(*b)).collect())
    }

    /// Writes the meet and join of `self` and `other` into existing points
    /// of the same dimension, reusing their storage.
    pub(crate) fn meet_join_into(&self, other: &Point, meet: &mut Point, join: &mut Point) {
        for (k, (a, b)) in self.0.iter().zip(&other.0).enumerate() {
            meet.0[k] = a.min(*b);
            join.0[k] = a.max(*b);
        }
    }

    /// `self <= other` in every coordinate.
    pub fn le(&self, other: &Point) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

pub fn meet(a: &Point, b: &Point) -> Result<Point> {
    a.meet(b)
}

pub fn join(a: &Point, b: &Point) -> Result<Point> {
    a.join(b)
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

impl Eq for Point {}

impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::hash::Hash for Point {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for c in &self.0 {
            c.to_bits().hash(state);
        }
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Point").field(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Point::new(coords)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A nonempty, duplicate-free set of points sharing one dimension.
///
/// Points are kept in lexicographic order, which doubles as the canonical
/// output order for closures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    dims: usize,
    points: Vec<Point>,
}

impl PointSet {
    /// Builds a set from arbitrary points, dropping exact duplicates.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let dims = points.first().ok_or(Error::Empty)?.dims();
        for p in &points {
            check_dims(dims, p.dims())?;
        }
        let mut points = points;
        points.sort_unstable();
        points.dedup();
        Ok(PointSet { dims, points })
    }

    pub fn from_rows<I, R>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: Into<Vec<f64>>,
    {
        let points = rows
            .into_iter()
            .map(|r| Point::new(r.into()))
            .collect::<Result<Vec<_>>>()?;
        PointSet::new(points)
    }

    /// Caller guarantees the points are sorted, deduplicated and of equal dimension.
    pub(crate) fn from_sorted_unchecked(dims: usize, points: Vec<Point>) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
        PointSet { dims, points }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.points.binary_search(p).is_ok()
    }

    pub fn is_subset_of(&self, other: &PointSet) -> bool {
        self.points.iter().all(|p| other.contains(p))
    }

    /// Number of distinct values per axis.
    pub fn distinct_per_axis(&self) -> Vec<usize> {
        axis_values(self).iter().map(Vec::len).collect()
    }

    /// Size of the grid generated by the set, `prod_i n_i`, saturating at `u128::MAX`.
    pub fn grid_capacity(&self) -> u128 {
        self.distinct_per_axis()
            .into_iter()
            .fold(1u128, |acc, n| acc.saturating_mul(n as u128))
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Sorted, deduplicated coordinate values for every axis.
pub(crate) fn axis_values(set: &PointSet) -> Vec<Vec<f64>> {
    (0..set.dims)
        .map(|axis| {
            let mut values: Vec<f64> = set.points.iter().map(|p| p.0[axis]).collect();
            values.sort_unstable_by(f64::total_cmp);
            values.dedup();
            values
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn meet_join_counterexample_pair() {
        let a = p(&[2.0, 0.0]);
        let b = p(&[0.0, 1.0]);
        assert_eq!(meet(&a, &b).unwrap(), p(&[0.0, 0.0]));
        assert_eq!(join(&a, &b).unwrap(), p(&[2.0, 1.0]));
    }

    #[test]
    fn meet_join_three_dims() {
        let a = p(&[1.0, 2.0, 3.0]);
        let b = p(&[3.0, 1.0, 2.0]);
        assert_eq!(a.meet(&b).unwrap(), p(&[1.0, 1.0, 2.0]));
        assert_eq!(a.join(&b).unwrap(), p(&[3.0, 2.0, 3.0]));
    }

    #[test]
    fn meet_is_idempotent() {
        let a = p(&[0.5, -1.5, 7.0]);
        assert_eq!(a.meet(&a).unwrap(), a);
        assert_eq!(a.join(&a).unwrap(), a);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = p(&[1.0]).meet(&p(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, found: 2 }));
    }

    #[test]
    fn non_finite_and_empty_coordinates_are_rejected() {
        assert!(matches!(
            Point::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { axis: 1, .. })
        ));
        assert!(matches!(
            Point::new(vec![f64::INFINITY]),
            Err(Error::NonFinite { axis: 0, .. })
        ));
        assert!(matches!(Point::new(vec![]), Err(Error::ZeroDimension)));
    }

    #[test]
    fn negative_zero_is_normalized() {
        let a = p(&[-0.0, 1.0]);
        assert_eq!(a.coords()[0].to_bits(), 0.0f64.to_bits());
        assert_eq!(a.cmp(&p(&[0.0, 1.0])), Ordering::Equal);
    }

    #[test]
    fn point_set_dedups_and_sorts() {
        let set = PointSet::from_rows(vec![vec![1.0, 7.0], vec![1.0, 5.0], vec![1.0, 7.0]]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.points()[0], p(&[1.0, 5.0]));
        assert_eq!(set.distinct_per_axis(), vec![1, 2]);
        assert_eq!(set.grid_capacity(), 2);
    }

    #[test]
    fn point_set_rejects_empty_and_mixed_dims() {
        assert!(matches!(PointSet::new(vec![]), Err(Error::Empty)));
        assert!(matches!(
            PointSet::from_rows(vec![vec![1.0], vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
