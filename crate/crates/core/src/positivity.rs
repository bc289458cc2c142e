//! Checkers for total positivity of order 2 and the hypercube vertex
//! condition that makes a Gaussian convolution MTP2.
//!
//! Every check reports a signed relative margin rather than a bare boolean.
//! For an inequality `lhs <= rhs` with relative tolerance `tol` the margin is
//!
//! ```text
//! (rhs * (1 + tol) - lhs) / max(lhs, rhs)
//! ```
//!
//! which is negative exactly when `lhs > rhs * (1 + tol)`. When all factors
//! are strictly positive it is computed from logarithms so tiny densities do
//! not underflow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::lattice::Point;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Witness {
    Points(Vec<Vec<f64>>),
    Vertices(Vec<String>),
}

/// One checked inequality. `margin < 0` iff it is violated under the tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub kind: String,
    pub witness: Witness,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl ViolationReport {
    pub fn is_violation(&self) -> bool {
        self.margin < 0.0
    }
}

/// Relative margin of `lhs <= rhs` for nonnegative products.
pub fn relative_margin(lhs: f64, rhs: f64, tol: f64) -> f64 {
    let scale = lhs.max(rhs);
    if scale == 0.0 {
        return 0.0;
    }
    (rhs * (1.0 + tol) - lhs) / scale
}

/// Relative margin of `lhs <= rhs` given `ln lhs` and `ln rhs` (`-inf` for zero).
pub fn relative_margin_from_logs(log_lhs: f64, log_rhs: f64, tol: f64) -> f64 {
    let top = log_lhs.max(log_rhs);
    if top == f64::NEG_INFINITY {
        return 0.0;
    }
    (log_rhs - top).exp() * (1.0 + tol) - (log_lhs - top).exp()
}

fn checked_log(f: &impl Density, x: &[f64], strict: bool) -> Result<f64> {
    let v = f.log_density(x);
    if v.is_nan() || v == f64::INFINITY || (strict && v == f64::NEG_INFINITY) {
        return Err(Error::NonPositiveDensity {
            point: x.to_vec(),
            value: v.exp(),
        });
    }
    Ok(v)
}

/// Evaluates `f(x) f(y) <= f(x ^ y) f(x v y)` for one pair and returns the report
/// whether or not it is violated.
pub fn mtp2_margin(f: &impl Density, x: &Point, y: &Point, tol: f64) -> Result<ViolationReport> {
    let lo = x.meet(y)?;
    let hi = x.join(y)?;
    if x.dims() != f.dims() {
        return Err(Error::DimensionMismatch {
            expected: f.dims(),
            found: x.dims(),
        });
    }
    let lx = checked_log(f, x.coords(), false)?;
    let ly = checked_log(f, y.coords(), false)?;
    let llo = checked_log(f, lo.coords(), false)?;
    let lhi = checked_log(f, hi.coords(), false)?;
    let (log_lhs, log_rhs) = (lx + ly, llo + lhi);
    Ok(ViolationReport {
        kind: "mtp2".into(),
        witness: Witness::Points(vec![
            x.coords().to_vec(),
            y.coords().to_vec(),
            lo.into_coords(),
            hi.into_coords(),
        ]),
        lhs: log_lhs.exp(),
        rhs: log_rhs.exp(),
        margin: relative_margin_from_logs(log_lhs, log_rhs, tol),
    })
}

/// Returns a report for every pair violating MTP2 beyond the relative tolerance.
/// Zeros are allowed; negative or NaN values are an error.
pub fn mtp2_check(
    f: &impl Density,
    pairs: &[(Point, Point)],
    tol: f64,
) -> Result<Vec<ViolationReport>> {
    check_tolerance(tol)?;
    let all: Vec<ViolationReport> = pairs
        .par_iter()
        .map(|(x, y)| mtp2_margin(f, x, y, tol))
        .collect::<Result<_>>()?;
    Ok(all.into_iter().filter(ViolationReport::is_violation).collect())
}

/// Log-supermodularity form: `log f(x) + log f(y) <= log f(x v y) + log f(x ^ y) + log(1 + tol)`.
/// Requires strictly positive values.
pub fn is_log_supermodular_at(f: &impl Density, x: &Point, y: &Point, tol: f64) -> Result<bool> {
    let lo = x.meet(y)?;
    let hi = x.join(y)?;
    let l = checked_log(f, x.coords(), true)? + checked_log(f, y.coords(), true)?;
    let r = checked_log(f, hi.coords(), true)? + checked_log(f, lo.coords(), true)?;
    Ok(l <= r + tol.ln_1p())
}

fn check_tolerance(tol: f64) -> Result<()> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::Precondition(format!("tolerance must be >= 0, got {tol}")));
    }
    Ok(())
}

/// Checks MTP2 on every axis-aligned rectangle of the grid `prod_i axes[i]`
/// whose corners differ in exactly two coordinates.
///
/// For strictly positive `f` an empty result certifies MTP2 on the whole
/// grid, so `f` must be positive at every grid point.
pub fn mtp2_check_pairwise_grid(
    f: &impl Density,
    axes: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<ViolationReport>> {
    check_tolerance(tol)?;
    if axes.len() != f.dims() {
        return Err(Error::DimensionMismatch {
            expected: f.dims(),
            found: axes.len(),
        });
    }
    let axes: Vec<Vec<f64>> = axes
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.sort_unstable_by(f64::total_cmp);
            a.dedup();
            a
        })
        .collect::<Vec<_>>();
    if axes.iter().any(Vec::is_empty) {
        return Err(Error::Empty);
    }
    let d = axes.len();
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let mut strides = vec![1usize; d];
    for i in (0..d.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let total: usize = shape.iter().product();
    let coords_of = |mut lin: usize| -> Vec<f64> {
        (0..d)
            .map(|k| {
                let r = lin / strides[k];
                lin %= strides[k];
                axes[k][r]
            })
            .collect()
    };
    let logs: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|lin| checked_log(f, &coords_of(lin), true))
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let bases = (0..total).filter(|&lin| {
                (lin / strides[i]) % shape[i] == 0 && (lin / strides[j]) % shape[j] == 0
            });
            for base in bases {
                for u1 in 0..shape[i] {
                    for u2 in (u1 + 1)..shape[i] {
                        for v1 in 0..shape[j] {
                            for v2 in (v1 + 1)..shape[j] {
                                let at = |u: usize, v: usize| base + u * strides[i] + v * strides[j];
                                let log_lhs = logs[at(u2, v1)] + logs[at(u1, v2)];
                                let log_rhs = logs[at(u1, v1)] + logs[at(u2, v2)];
                                let margin = relative_margin_from_logs(log_lhs, log_rhs, tol);
                                if margin < 0.0 {
                                    reports.push(ViolationReport {
                                        kind: "mtp2-pairwise".into(),
                                        witness: Witness::Points(vec![
                                            coords_of(at(u2, v1)),
                                            coords_of(at(u1, v2)),
                                        ]),
                                        lhs: log_lhs.exp(),
                                        rhs: log_rhs.exp(),
                                        margin,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(reports)
}

/// Nonnegative weights on the `2^d` vertices of an axis-aligned box.
///
/// Vertex `b` is addressed by a bit mask where bit `k` selects the high
/// coordinate on axis `k`. As a string, character `k` of `"0110"` is axis `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypercubeValues {
    lows: Vec<f64>,
    highs: Vec<f64>,
    values: Vec<f64>,
}

/// Largest dimension accepted for hypercube checks.
pub const MAX_HYPERCUBE_DIMS: usize = 24;

impl HypercubeValues {
    pub fn new(lows: Vec<f64>, highs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let d = lows.len();
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        if d > MAX_HYPERCUBE_DIMS {
            return Err(Error::Precondition(format!("hypercube dimension {d} too large")));
        }
        if highs.len() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: highs.len(),
            });
        }
        if values.len() != 1 << d {
            return Err(Error::LengthMismatch {
                left: 1 << d,
                right: values.len(),
            });
        }
        for (axis, (lo, hi)) in lows.iter().zip(&highs).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Precondition(format!(
                    "axis {axis}: need finite low < high, got {lo} and {hi}"
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Precondition(format!("vertex weight {v} is not >= 0")));
        }
        Ok(HypercubeValues {
            lows,
            highs,
            values,
        })
    }

    /// Weights on the unit cube `{0, 1}^d`, indexed by vertex mask.
    pub fn unit(dims: usize, values: Vec<f64>) -> Result<Self> {
        HypercubeValues::new(vec![0.0; dims], vec![1.0; dims], values)
    }

    /// Indicator of a set of unit-cube vertices.
    pub fn indicator(dims: usize, members: &[u64]) -> Result<Self> {
        let mut values = vec![0.0; 1 << dims.min(MAX_HYPERCUBE_DIMS)];
        for &m in members {
            *values.get_mut(m as usize).ok_or_else(|| {
                Error::Precondition(format!("vertex {m} outside the {dims}-cube"))
            })? = 1.0;
        }
        HypercubeValues::unit(dims, values)
    }

    /// Samples `alpha` at every vertex of the box.
    pub fn from_fn(lows: Vec<f64>, highs: Vec<f64>, alpha: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = lows.len();
        if highs.len() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: highs.len(),
            });
        }
        let values = (0..1u64 << d.min(MAX_HYPERCUBE_DIMS))
            .map(|mask| alpha(&vertex_coords(&lows, &highs, mask)))
            .collect();
        HypercubeValues::new(lows, highs, values)
    }

    pub fn dims(&self) -> usize {
        self.lows.len()
    }

    pub fn value(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vertex(&self, mask: u64) -> Point {
        Point::new(vertex_coords(&self.lows, &self.highs, mask)).expect("finite box corners")
    }

    pub fn mask_string(&self, mask: u64) -> String {
        BitString::from_mask(mask, self.dims()).to_string()
    }

    fn mask_of(&self, x: &[f64]) -> Option<u64> {
        if x.len() != self.dims() {
            return None;
        }
        let mut mask = 0;
        for (k, c) in x.iter().enumerate() {
            if *c == self.highs[k] {
                mask |= 1 << k;
            } else if *c != self.lows[k] {
                return None;
            }
        }
        Some(mask)
    }
}

fn vertex_coords(lows: &[f64], highs: &[f64], mask: u64) -> Vec<f64> {
    (0..lows.len())
        .map(|k| if mask >> k & 1 == 1 { highs[k] } else { lows[k] })
        .collect()
}

/// Vertex weights as a function on `R^d`; undefined (NaN) off the vertices.
impl Density for HypercubeValues {
    fn dims(&self) -> usize {
        self.lows.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.mask_of(x).map_or(f64::NAN, |m| self.value(m).ln())
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.mask_of(x).map_or(f64::NAN, |m| self.value(m))
    }
}

/// Positive and negative parts of the vertex sum for the axis pair `(i, j)`:
/// `sum_a alpha(11a) alpha(00a') - alpha(10a) alpha(01a')`, where `a` ranges
/// over assignments to the remaining axes and `a'` is its complement.
fn constraint_a_parts(h: &HypercubeValues, i: usize, j: usize) -> (f64, f64) {
    let d = h.dims();
    let rest_mask: u64 = ((1u64 << d) - 1) & !(1 << i) & !(1 << j);
    let (bi, bj) = (1u64 << i, 1u64 << j);
    let mut pos = 0.0;
    let mut neg = 0.0;
    // enumerate subsets `a` of the remaining axes
    let mut a = 0u64;
    loop {
        let comp = rest_mask & !a;
        pos += h.value(bi | bj | a) * h.value(comp);
        neg += h.value(bi | a) * h.value(bj | comp);
        if a == rest_mask {
            break;
        }
        a = (a.wrapping_sub(rest_mask)) & rest_mask;
    }
    (pos, neg)
}

fn check_axes(h: &HypercubeValues, i: usize, j: usize) -> Result<()> {
    let d = h.dims();
    for axis in [i, j] {
        if axis >= d {
            return Err(Error::AxisOutOfRange { axis, dims: d });
        }
    }
    if i == j {
        return Err(Error::Precondition(format!("axes must differ, got {i} twice")));
    }
    Ok(())
}

/// The signed vertex sum for axes `i` and `j` (0-based). The sum is
/// symmetric in `i, j` and independent of the order of the other axes.
pub fn constraint_a_sum(h: &HypercubeValues, i: usize, j: usize) -> Result<f64> {
    check_axes(h, i, j)?;
    let (pos, neg) = constraint_a_parts(h, i, j);
    Ok(pos - neg)
}

/// The vertex sum for an explicit permutation: string position `k` is placed
/// on axis `perm[k]`, the first two positions carry the fixed bits and the
/// remaining `d - 2` positions carry `a`.
pub fn constraint_a_sum_permuted(h: &HypercubeValues, perm: &[usize]) -> Result<f64> {
    let d = h.dims();
    let mut seen = vec![false; d];
    if perm.len() != d || d < 2 {
        return Err(Error::LengthMismatch {
            left: d,
            right: perm.len(),
        });
    }
    for &p in perm {
        if p >= d || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Precondition(format!("{perm:?} is not a permutation")));
        }
    }
    let place = |s: &[u8]| -> u64 {
        s.iter()
            .enumerate()
            .fold(0u64, |acc, (k, &bit)| acc | (u64::from(bit) << perm[k]))
    };
    let mut total = 0.0;
    for a in 0..1u64 << (d - 2) {
        let a_bits: Vec<u8> = (0..d - 2).map(|k| (a >> k & 1) as u8).collect();
        let abar: Vec<u8> = a_bits.iter().map(|b| 1 - b).collect();
        let s = |x: u8, y: u8, tail: &[u8]| {
            let mut v = vec![x, y];
            v.extend_from_slice(tail);
            place(&v)
        };
        total += h.value(s(1, 1, &a_bits)) * h.value(s(0, 0, &abar))
            - h.value(s(1, 0, &a_bits)) * h.value(s(0, 1, &abar));
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintAOutcome {
    pub holds: bool,
    /// One report per unordered axis pair, violated or not.
    pub pairs: Vec<ViolationReport>,
    /// Whether the pair sums were confirmed against every permutation.
    pub cross_validated: bool,
}

impl ConstraintAOutcome {
    pub fn violations(&self) -> impl Iterator<Item = &ViolationReport> {
        self.pairs.iter().filter(|r| r.is_violation())
    }
}

/// Largest dimension for which [`constraint_a_check`] also enumerates all permutations.
pub const PERMUTATION_CROSS_CHECK_MAX_DIMS: usize = 5;

/// Checks the vertex sum condition on every unordered axis pair.
///
/// For `d <= 5` every permutation is also evaluated literally and must agree
/// with its pair sum.
pub fn constraint_a_check(h: &HypercubeValues, tol: f64) -> Result<ConstraintAOutcome> {
    check_tolerance(tol)?;
    let d = h.dims();
    let mut pairs = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            let (pos, neg) = constraint_a_parts(h, i, j);
            pairs.push(ViolationReport {
                kind: "constraint-a".into(),
                witness: Witness::Vertices(vec![format!("axes {i},{j}")]),
                lhs: neg,
                rhs: pos,
                margin: relative_margin(neg, pos, tol),
            });
        }
    }
    let cross_validated = (2..=PERMUTATION_CROSS_CHECK_MAX_DIMS).contains(&d);
    if cross_validated {
        for perm in permutations(d) {
            let literal = constraint_a_sum_permuted(h, &perm)?;
            let (pos, neg) = constraint_a_parts(h, perm[0].min(perm[1]), perm[0].max(perm[1]));
            let scale = pos.max(neg).max(f64::MIN_POSITIVE);
            if ((pos - neg) - literal).abs() > 1e-12 * scale {
                return Err(Error::CrossValidation(format!(
                    "permutation {perm:?}: literal sum {literal} vs pair sum {}",
                    pos - neg
                )));
            }
        }
    }
    Ok(ConstraintAOutcome {
        holds: pairs.iter().all(|r| !r.is_violation()),
        pairs,
        cross_validated,
    })
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(d), &mut vec![false; d], &mut out);
    out
}

/// A binary string of length at most 64; character `k` is bit `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: u64,
    len: u8,
}

impl BitString {
    pub fn from_mask(bits: u64, len: usize) -> Self {
        assert!(len <= 64, "bit strings hold at most 64 bits");
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        BitString {
            bits: bits & mask,
            len: len as u8,
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn mask(&self) -> u64 {
        self.bits
    }

    pub fn complement(&self) -> Self {
        BitString::from_mask(!self.bits, self.len())
    }

    pub fn meet(&self, other: &Self) -> Self {
        BitString::from_mask(self.bits & other.bits, self.len())
    }

    pub fn join(&self, other: &Self) -> Self {
        BitString::from_mask(self.bits | other.bits, self.len())
    }
}

impl std::str::FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > 64 {
            return Err(Error::Parse(format!("bit string longer than 64: {s}")));
        }
        let mut bits = 0;
        for (k, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => bits |= 1 << k,
                _ => return Err(Error::Parse(format!("invalid bit string `{s}`"))),
            }
        }
        Ok(BitString::from_mask(bits, s.len()))
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for k in 0..self.len() {
            f.write_str(if self.bits >> k & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Evaluates whether `(!a & b) == !(a | !b)`. Always true; kept as a checked identity.
pub fn binary_complement_lemma_check(a: &BitString, b: &BitString) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.complement().meet(b) == a.join(&b.complement()).complement())
}

/// Arguments of the four-exponential inequality behind the isotropic case.
///
/// Requires `a1 > a2`, `b1 > b2`, `xi > xk`, `xj > xl` and `h > 0`. The
/// exponents are `-(|u|^2 + |v|^2) / (2h)`, i.e. `h` plays the role of the
/// common kernel variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpPosTuple {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub xi: f64,
    pub xj: f64,
    pub xk: f64,
    pub xl: f64,
    pub h: f64,
}

impl ExpPosTuple {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a1 > self.a2
            && self.b1 > self.b2
            && self.xi > self.xk
            && self.xj > self.xl
            && self.h > 0.0
            && [self.a1, self.a2, self.b1, self.b2, self.xi, self.xj, self.xk, self.xl, self.h]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(Error::Precondition(format!(
                "need a1 > a2, b1 > b2, xi > xk, xj > xl, h > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    fn exponents(&self) -> [f64; 4] {
        let sq = |u: f64, v: f64| u * u + v * v;
        let s = -0.5 / self.h;
        let t = self;
        [
            s * (sq(t.a1 - t.xi, t.b1 - t.xj) + sq(t.a2 - t.xk, t.b2 - t.xl)),
            s * (sq(t.a1 - t.xi, t.b2 - t.xj) + sq(t.a2 - t.xk, t.b1 - t.xl)),
            s * (sq(t.a1 - t.xk, t.b1 - t.xl) + sq(t.a2 - t.xi, t.b2 - t.xj)),
            s * (sq(t.a1 - t.xk, t.b2 - t.xl) + sq(t.a2 - t.xi, t.b1 - t.xj)),
        ]
    }

    /// Largest of the four exponential terms.
    pub fn max_term(&self) -> f64 {
        self.exponents().iter().fold(0.0f64, |m, e| m.max(e.exp()))
    }

    /// The same value through the product form
    /// `exp(-S / 2h) (e^A - e^A') (e^B - e^B')`.
    pub fn value_factored(&self) -> f64 {
        let t = self;
        let common = -0.5 / t.h
            * (t.a1 * t.a1 + t.a2 * t.a2 + t.b1 * t.b1 + t.b2 * t.b2
                + t.xi * t.xi + t.xj * t.xj + t.xk * t.xk + t.xl * t.xl);
        let a_hi = (t.a1 * t.xi + t.a2 * t.xk) / t.h;
        let a_lo = (t.a1 * t.xk + t.a2 * t.xi) / t.h;
        let b_hi = (t.b1 * t.xj + t.b2 * t.xl) / t.h;
        let b_lo = (t.b2 * t.xj + t.b1 * t.xl) / t.h;
        // e^{c} (e^{a_hi} - e^{a_lo}) (e^{b_hi} - e^{b_lo}), factoring out the larger exponent
        // of each difference to keep the magnitudes representable
        let fa = -(a_lo - a_hi).exp_m1();
        let fb = -(b_lo - b_hi).exp_m1();
        (common + a_hi + b_hi).exp() * fa * fb
    }
}

/// Direct evaluation of `T1 - T2 + T3 - T4` for a validated tuple.
pub fn lemma_exppos_value(t: &ExpPosTuple) -> Result<f64> {
    t.validate()?;
    let [e1, e2, e3, e4] = t.exponents();
    Ok(e1.exp() - e2.exp() + e3.exp() - e4.exp())
}

/// `(a dx + c dy)(d dy + c dx)` for `dx = xi - xk > 0`, `dy = xj - xl > 0`
/// and inverse covariance `[[a, c], [c, d]]`.
///
/// A negative value means the sufficient condition for an MTP2 convolution
/// fails for this anisotropic kernel at these offsets.
pub fn anisotropic_violation_factor(
    xi: f64,
    xj: f64,
    xk: f64,
    xl: f64,
    a: f64,
    c: f64,
    d: f64,
) -> Result<f64> {
    if !(a > 0.0 && d > 0.0 && a * d - c * c > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "[[{a}, {c}], [{c}, {d}]]"
        )));
    }
    if !(xi > xk && xj > xl) {
        return Err(Error::Precondition(format!(
            "need xi > xk and xj > xl, got {xi}, {xk}, {xj}, {xl}"
        )));
    }
    let (dx, dy) = (xi - xk, xj - xl);
    Ok((a * dx + c * dy) * (d * dy + c * dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::kde_build;
    use crate::lattice::PointSet;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn mask(s: &str) -> u64 {
        s.parse::<BitString>().unwrap().mask()
    }

    /// Oracle: literal vertex sum for the first two string positions, with
    /// vertices built from explicit strings.
    fn literal_sum_d3(alpha: impl Fn(&str) -> f64) -> f64 {
        alpha("111") * alpha("000") - alpha("101") * alpha("010")
            + alpha("110") * alpha("001") - alpha("100") * alpha("011")
    }

    #[test]
    fn kde_counterexample_flags_violation() {
        let mix = kde_build(&PointSet::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(), 1.0)
            .unwrap();
        let v = mtp2_check(&mix, &[(p(&[0.0, 1.0]), p(&[1.0, 0.0]))], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0].lhs - 0.012).abs() < 1e-3);
        assert!((v[0].rhs - 0.009).abs() < 1e-3);
        assert!(v[0].margin < 0.0);
    }

    #[test]
    fn comparable_pairs_never_violate() {
        let mix = kde_build(&PointSet::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(), 0.4)
            .unwrap();
        let pairs = vec![
            (p(&[0.0, 0.0]), p(&[1.0, 2.0])),
            (p(&[3.0, 1.0]), p(&[-1.0, 0.5])),
            (p(&[0.2, 0.2]), p(&[0.2, 0.2])),
        ];
        assert!(mtp2_check(&mix, &pairs, 0.0).unwrap().is_empty());
    }

    #[test]
    fn product_density_has_no_pairwise_violations() {
        struct Product;
        impl Density for Product {
            fn dims(&self) -> usize {
                3
            }
            fn log_density(&self, x: &[f64]) -> f64 {
                -x[0].powi(4) - (x[1] - 1.0).abs() - x[2] * x[2] * 0.3
            }
        }
        let axes = vec![vec![-1.0, 0.0, 0.4, 2.0], vec![-3.0, 1.0, 2.0], vec![0.0, 5.0]];
        assert!(mtp2_check_pairwise_grid(&Product, &axes, DEFAULT_TOLERANCE)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn pairwise_grid_rejects_zero_density() {
        let h = HypercubeValues::unit(2, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let axes = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        assert!(matches!(
            mtp2_check_pairwise_grid(&h, &axes, 0.0),
            Err(Error::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn negative_tolerance_rejected() {
        let h = HypercubeValues::unit(2, vec![1.0; 4]).unwrap();
        assert!(constraint_a_check(&h, -1.0).is_err());
    }

    #[test]
    fn d2_sum_is_the_mtp2_condition() {
        // values indexed by mask: 00, 10, 01, 11 (bit k = axis k)
        let h = HypercubeValues::unit(2, vec![2.0, 3.0, 5.0, 7.0]).unwrap();
        let s = constraint_a_sum(&h, 0, 1).unwrap();
        assert_eq!(s, 7.0 * 2.0 - 3.0 * 5.0);
        assert_eq!(constraint_a_sum(&h, 1, 0).unwrap(), s);
    }

    #[test]
    fn d3_sum_matches_four_term_expression() {
        let vals: Vec<f64> = (0..8).map(|m| 1.0 + (m as f64) * 0.7 + ((m * m) % 5) as f64).collect();
        let h = HypercubeValues::unit(3, vals).unwrap();
        let alpha = |s: &str| h.value(mask(s));
        assert_eq!(constraint_a_sum(&h, 0, 1).unwrap(), literal_sum_d3(alpha));
    }

    #[test]
    fn uniform_weights_cancel() {
        for d in 2..=6 {
            let h = HypercubeValues::unit(d, vec![0.25; 1 << d]).unwrap();
            let out = constraint_a_check(&h, DEFAULT_TOLERANCE).unwrap();
            assert!(out.holds);
            assert!(out.pairs.iter().all(|r| r.lhs == r.rhs));
        }
    }

    #[test]
    fn chain_indicator_satisfies_constraint() {
        let members: Vec<u64> = ["000", "100", "110", "111"].iter().map(|s| mask(s)).collect();
        let h = HypercubeValues::indicator(3, &members).unwrap();
        let out = constraint_a_check(&h, 0.0).unwrap();
        assert!(out.holds && out.cross_validated);
        // brute force: pair (0,1) -> alpha(111)alpha(000) = 1, every other product 0
        assert_eq!(constraint_a_sum(&h, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn constraint_stronger_than_nonnegativity() {
        let mut vals = vec![1.0; 8];
        vals[mask("110") as usize] = 0.0;
        vals[mask("001") as usize] = 0.0;
        let h = HypercubeValues::unit(3, vals).unwrap();
        let alpha = |s: &str| h.value(mask(s));
        // 1*1 - 1*1 + 0*0 - 1*1
        assert_eq!(literal_sum_d3(alpha), -1.0);
        assert_eq!(constraint_a_sum(&h, 0, 1).unwrap(), -1.0);
        let out = constraint_a_check(&h, DEFAULT_TOLERANCE).unwrap();
        assert!(!out.holds);
        assert_eq!(out.violations().count(), 1);
    }

    #[test]
    fn permuted_sums_agree_with_pair_sums() {
        let vals: Vec<f64> = (0..16).map(|m| ((m * 7 + 3) % 11) as f64).collect();
        let h = HypercubeValues::unit(4, vals).unwrap();
        for perm in permutations(4) {
            let lit = constraint_a_sum_permuted(&h, &perm).unwrap();
            let pair = constraint_a_sum(&h, perm[0], perm[1]).unwrap();
            assert_eq!(lit, pair, "{perm:?}");
        }
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn constraint_axis_errors() {
        let h = HypercubeValues::unit(3, vec![1.0; 8]).unwrap();
        assert!(matches!(constraint_a_sum(&h, 0, 3), Err(Error::AxisOutOfRange { axis: 3, dims: 3 })));
        assert!(constraint_a_sum(&h, 1, 1).is_err());
    }

    #[test]
    fn hypercube_validation() {
        assert!(HypercubeValues::new(vec![0.0], vec![0.0], vec![1.0, 1.0]).is_err());
        assert!(HypercubeValues::unit(2, vec![1.0; 3]).is_err());
        assert!(HypercubeValues::unit(2, vec![1.0, -1.0, 1.0, 1.0]).is_err());
        assert!(HypercubeValues::indicator(2, &[4]).is_err());
    }

    #[test]
    fn hypercube_density_is_defined_on_vertices_only() {
        let h = HypercubeValues::new(vec![-1.0, 2.0], vec![1.0, 3.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(h.density(&[1.0, 3.0]), 4.0);
        assert_eq!(h.vertex(mask("10")), p(&[1.0, 2.0]));
        assert!(h.density(&[0.0, 3.0]).is_nan());
    }

    #[test]
    fn bit_string_parsing_and_display() {
        let b: BitString = "0110".parse().unwrap();
        assert_eq!(b.mask(), 0b0110);
        assert_eq!(b.to_string(), "0110");
        assert_eq!(b.complement().to_string(), "1001");
        assert!("01a".parse::<BitString>().is_err());
    }

    #[test]
    fn complement_lemma_examples() {
        let a: BitString = "10".parse().unwrap();
        let b: BitString = "01".parse().unwrap();
        // !a & b = 01 & 01 = 01 ; a | !b = 10 | 10 = 10 ; !(10) = 01
        assert_eq!(a.complement().meet(&b).to_string(), "01");
        assert_eq!(a.join(&b.complement()).complement().to_string(), "01");
        assert!(binary_complement_lemma_check(&a, &b).unwrap());
        assert!(binary_complement_lemma_check(&a, &a).unwrap());
        assert_eq!(a.complement().meet(&a).to_string(), "00");
        let short: BitString = "1".parse().unwrap();
        assert!(matches!(
            binary_complement_lemma_check(&a, &short),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn exppos_two_routes_agree_at_unit_tuple() {
        let t = ExpPosTuple {
            a1: 1.0,
            a2: 0.0,
            b1: 1.0,
            b2: 0.0,
            xi: 1.0,
            xj: 1.0,
            xk: 0.0,
            xl: 0.0,
            h: 1.0,
        };
        let direct = lemma_exppos_value(&t).unwrap();
        // closed form: e^{-0}... terms are 1 - e^{-1} + e^{-2} - e^{-1} = (1 - e^{-1})^2
        let closed = (1.0 - (-1.0f64).exp()).powi(2);
        assert!((direct - closed).abs() < 1e-15);
        assert!((direct / t.value_factored() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exppos_degenerate_limit() {
        let mut t = ExpPosTuple {
            a1: 0.7,
            a2: -0.2,
            b1: 1.5,
            b2: 0.1,
            xi: 0.3 + 1e-9,
            xj: 0.8,
            xk: 0.3,
            xl: -0.4,
            h: 0.5,
        };
        let v = lemma_exppos_value(&t).unwrap();
        assert!(v.abs() < 1e-8 && v >= -1e-15);
        t.xi = 0.3;
        assert!(lemma_exppos_value(&t).is_err());
    }

    #[test]
    fn anisotropic_factor_examples() {
        // (5*2 - 2*1)(1*1 - 2*2) = 8 * (-3)
        let v = anisotropic_violation_factor(2.0, 1.0, 0.0, 0.0, 5.0, -2.0, 1.0).unwrap();
        assert_eq!(v, -24.0);
        let diag = anisotropic_violation_factor(0.9, 2.0, 0.1, -1.0, 2.0, 0.0, 3.0).unwrap();
        assert!((diag - 2.0 * 3.0 * 0.8 * 3.0).abs() < 1e-12);
        assert!(anisotropic_violation_factor(2.0, 1.0, 0.0, 0.0, 1.0, -2.0, 1.0).is_err());
        assert!(anisotropic_violation_factor(0.0, 1.0, 0.0, 0.0, 5.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn margin_helpers() {
        assert_eq!(relative_margin(0.0, 0.0, 1e-9), 0.0);
        assert!(relative_margin(2.0, 1.0, 0.0) < 0.0);
        assert!(relative_margin(1.0 + 1e-12, 1.0, 1e-9) > 0.0);
        let m = relative_margin_from_logs(2.0f64.ln(), 1.0f64.ln(), 0.0);
        assert!((m - relative_margin(2.0, 1.0, 0.0)).abs() < 1e-15);
        assert_eq!(relative_margin_from_logs(f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0), 0.0);
    }
}
