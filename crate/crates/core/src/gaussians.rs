//! Multivariate normal densities whose inverse covariance is an M-matrix
//! (nonpositive off-diagonal), which is exactly the MTP2 Gaussian family.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::lattice::{Point, PointSet};

/// Smallest eigenvalue accepted as strictly positive definite.
pub const MIN_EIGENVALUE: f64 = 1e-10;
/// Spectral-norm bound on `cov * invcov - I`.
pub const INVERSE_RESIDUAL_TOL: f64 = 1e-9;
/// Attempts allowed when sampling a random MTP2 precision matrix.
pub const REJECTION_CAP: usize = 10_000;

/// True iff every off-diagonal entry is `<= 0`. Definiteness is checked separately.
pub fn is_m_matrix(m: &DMatrix<f64>) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    Ok((0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] <= 0.0)))
}

fn check_symmetric_pd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite(format!("{what} is not symmetric")));
    }
    let min_eig = m.clone().symmetric_eigenvalues().min();
    if min_eig <= MIN_EIGENVALUE {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has smallest eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// A multivariate normal `N(mean, cov)` with its precision matrix.
#[derive(Clone, Debug)]
pub struct GaussianSpec {
    mean: Point,
    cov: DMatrix<f64>,
    invcov: DMatrix<f64>,
    cov_chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianSpec {
    /// Builds the Gaussian from a precision (inverse covariance) matrix.
    pub fn from_precision(mean: Point, invcov: DMatrix<f64>) -> Result<Self> {
        check_symmetric_pd(&invcov, "inverse covariance")?;
        let cov = invcov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("inverse covariance".into()))?
            .inverse();
        let cov = (&cov + cov.transpose()) * 0.5;
        GaussianSpec::assemble(mean, cov, invcov)
    }

    pub fn from_covariance(mean: Point, cov: DMatrix<f64>) -> Result<Self> {
        check_symmetric_pd(&cov, "covariance")?;
        let invcov = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?
            .inverse();
        let invcov = (&invcov + invcov.transpose()) * 0.5;
        GaussianSpec::assemble(mean, cov, invcov)
    }

    fn assemble(mean: Point, cov: DMatrix<f64>, invcov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        if mean.dims() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: mean.dims(),
            });
        }
        check_symmetric_pd(&cov, "covariance")?;
        let residual = spectral_norm(&(&cov * &invcov - DMatrix::identity(d, d)));
        if residual > INVERSE_RESIDUAL_TOL {
            return Err(Error::NotPositiveDefinite(format!(
                "cov * invcov deviates from I by {residual:e}"
            )));
        }
        let cov_chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?
            .l();
        let log_det_cov: f64 = 2.0 * cov_chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64) * (2.0 * PI).ln() - 0.5 * log_det_cov;
        Ok(GaussianSpec {
            mean,
            cov,
            invcov,
            cov_chol,
            log_norm,
        })
    }

    pub fn mean(&self) -> &Point {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn invcov(&self) -> &DMatrix<f64> {
        &self.invcov
    }

    /// `mean + L z` with `L L^T = cov` and `z` standard normal.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dims();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.cov_chol * z;
        x.iter().zip(self.mean.coords()).map(|(v, m)| v + m).collect()
    }

    /// `n` draws, in draw order (duplicates are kept).
    pub fn sample_vec<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        (0..n)
            .map(|_| Point::new(self.sample_point(rng)).expect("finite Gaussian draw"))
            .collect()
    }

    /// `n` draws as a point set.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<PointSet> {
        if n == 0 {
            return Err(Error::Empty);
        }
        PointSet::new(self.sample_vec(n, rng))
    }

    pub fn to_file(&self, seed: Option<u64>) -> GaussianFile {
        GaussianFile {
            mean: self.mean.coords().to_vec(),
            cov: rows(&self.cov),
            seed,
        }
    }

    pub fn from_file(file: &GaussianFile) -> Result<Self> {
        let cov = from_rows(&file.cov)?;
        GaussianSpec::from_covariance(Point::new(file.mean.clone())?, cov)
    }
}

impl Density for GaussianSpec {
    fn dims(&self) -> usize {
        self.mean.dims()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dims();
        let q = DVector::from_iterator(d, x.iter().zip(self.mean.coords()).map(|(a, m)| a - m));
        self.log_norm - 0.5 * q.dot(&(&self.invcov * &q))
    }
}

/// Density of `N(mean, cov)` at `x`.
pub fn density(g: &GaussianSpec, x: &Point) -> Result<f64> {
    if x.dims() != g.dims() {
        return Err(Error::DimensionMismatch {
            expected: g.dims(),
            found: x.dims(),
        });
    }
    Ok(g.density(x.coords()))
}

pub fn is_mtp2_gaussian(g: &GaussianSpec) -> bool {
    is_m_matrix(&g.invcov).expect("spec matrices are square")
}

/// Weighted point masses convolved with a zero-mean Gaussian kernel:
/// `C(x) = sum_i w_i N(x - s_i; 0, cov)`.
#[derive(Clone, Debug)]
pub struct DiscreteConvolution {
    support: Vec<Point>,
    log_weights: Vec<f64>,
    kernel: GaussianSpec,
}

impl DiscreteConvolution {
    /// Uniform weights on `support` with kernel precision `invcov`.
    pub fn uniform(support: &PointSet, invcov: DMatrix<f64>) -> Result<Self> {
        let zero = Point::new(vec![0.0; support.dims()])?;
        let kernel = GaussianSpec::from_precision(zero, invcov)?;
        let lw = -(support.len() as f64).ln();
        Ok(DiscreteConvolution {
            support: support.points().to_vec(),
            log_weights: vec![lw; support.len()],
            kernel,
        })
    }

    pub fn kernel(&self) -> &GaussianSpec {
        &self.kernel
    }
}

impl Density for DiscreteConvolution {
    fn dims(&self) -> usize {
        self.kernel.dims()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .support
            .iter()
            .zip(&self.log_weights)
            .map(|(s, lw)| {
                let diff: Vec<f64> = x.iter().zip(s.coords()).map(|(a, b)| a - b).collect();
                lw + self.kernel.log_density(&diff)
            })
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }
}

/// JSON form: `{mean, cov: [[row], ...], seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFile {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub seed: Option<u64>,
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::LengthMismatch {
            left: cols,
            right: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
}

/// Draws a random symmetric M-matrix: diagonal `|z|`, off-diagonal `-|z|`
/// with `z` standard normal, upper triangle mirrored.
fn random_m_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let z: f64 = rng.sample(StandardNormal);
        m[(i, i)] = z.abs();
        for j in (i + 1)..d {
            let z: f64 = rng.sample(StandardNormal);
            m[(i, j)] = -z.abs();
            m[(j, i)] = -z.abs();
        }
    }
    m
}

/// Random MTP2 Gaussian: standard normal mean, M-matrix precision resampled
/// until it is strictly positive definite and well conditioned enough to
/// invert within [`INVERSE_RESIDUAL_TOL`].
pub fn random_mtp2_gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<GaussianSpec> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    let mean: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mean = Point::new(mean)?;
    for _ in 0..REJECTION_CAP {
        let precision = random_m_matrix(d, rng);
        if let Ok(spec) = GaussianSpec::from_precision(mean.clone(), precision) {
            return Ok(spec);
        }
    }
    Err(Error::RejectionExhausted(REJECTION_CAP))
}

/// Two MTP2 covariances whose sum is not MTP2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionWitness {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// `(A + B)^-1`
    pub sum_inverse: Vec<Vec<f64>>,
    /// Position of the largest positive off-diagonal entry of `(A + B)^-1`.
    pub entry: (usize, usize),
    pub value: f64,
    pub trial: usize,
}

/// Searches random pairs of covariances `A, B` with M-matrix inverses for
/// one where `(A + B)^-1` has a positive off-diagonal entry, i.e. the
/// convolution of two MTP2 Gaussians that is not MTP2.
pub fn convolution_closure_search<R: Rng + ?Sized>(
    d: usize,
    trials: usize,
    rng: &mut R,
) -> Result<Option<ConvolutionWitness>> {
    if d < 2 {
        return Ok(None);
    }
    for trial in 0..trials {
        let a = random_mtp2_gaussian(d, rng)?;
        let b = random_mtp2_gaussian(d, rng)?;
        let sum = a.cov() + b.cov();
        let Some(chol) = sum.clone().cholesky() else {
            continue;
        };
        let inv = chol.inverse();
        let scale = inv.amax();
        let mut best: Option<((usize, usize), f64)> = None;
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                if v > 1e-12 * scale && best.is_none_or(|(_, b)| v > b) {
                    best = Some(((i, j), v));
                }
            }
        }
        if let Some((entry, value)) = best {
            return Ok(Some(ConvolutionWitness {
                a: rows(a.cov()),
                b: rows(b.cov()),
                sum_inverse: rows(&inv),
                entry,
                value,
                trial,
            }));
        }
    }
    Ok(None)
}
