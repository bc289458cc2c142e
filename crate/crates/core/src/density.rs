//! Gaussian kernels, the standard KDE and the totally positive KDE.
//!
//! Both estimators are equally weighted isotropic Gaussian mixtures: the
//! standard KDE is centered on the sample, the TPKDE on its min-max
//! closure. The bandwidth `h` is the kernel standard deviation, so every
//! component has covariance `h^2 I`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Closure, ClosureConfig, ClosureEngine, Point, PointSet};

/// A function on `R^d` that can be evaluated pointwise.
///
/// Implementors return the natural log of the value; zero is `-inf`.
pub trait Density: Sync {
    fn dims(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }
}

impl<D: Density + ?Sized> Density for &D {
    fn dims(&self) -> usize {
        (**self).dims()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }

    fn density(&self, x: &[f64]) -> f64 {
        (**self).density(x)
    }
}

/// `(2 pi sigma^2)^(-d/2) exp(-|x - c|^2 / (2 sigma^2))`.
pub fn gaussian_kernel(x: &Point, center: &Point, sigma: f64) -> Result<f64> {
    check_bandwidth(sigma)?;
    if x.dims() != center.dims() {
        return Err(Error::DimensionMismatch {
            expected: center.dims(),
            found: x.dims(),
        });
    }
    let d = x.dims() as f64;
    let sq = squared_distance(x.coords(), center.coords());
    Ok((2.0 * PI * sigma * sigma).powf(-d / 2.0) * (-sq / (2.0 * sigma * sigma)).exp())
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidBandwidth(h));
    }
    Ok(())
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Equally weighted mixture of `N(c_i, h^2 I)` components.
#[derive(Clone, Debug)]
pub struct IsotropicMixture {
    centers: PointSet,
    bandwidth: f64,
    flat: Vec<f64>,
    log_norm: f64,
}

impl IsotropicMixture {
    pub fn new(centers: PointSet, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let d = centers.dims() as f64;
        let m = centers.len() as f64;
        let log_norm = -m.ln() - 0.5 * d * (2.0 * PI * bandwidth * bandwidth).ln();
        let flat = centers.iter().flat_map(|p| p.coords().iter().copied()).collect();
        Ok(IsotropicMixture {
            centers,
            bandwidth,
            flat,
            log_norm,
        })
    }

    pub fn centers(&self) -> &PointSet {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Direct sum of kernel values without log-domain accumulation.
    /// Underflows to zero far from the centers.
    pub fn density_naive(&self, x: &[f64]) -> f64 {
        let d = self.centers.dims() as f64;
        let h2 = self.bandwidth * self.bandwidth;
        let norm = (2.0 * PI * h2).powf(-d / 2.0);
        let sum: f64 = self
            .flat
            .chunks_exact(self.centers.dims())
            .map(|c| norm * (-squared_distance(x, c) / (2.0 * h2)).exp())
            .sum();
        sum / self.centers.len() as f64
    }

    /// Evaluates the density at many points in parallel.
    pub fn evaluate_batch(&self, xs: &[Point]) -> Result<Vec<f64>> {
        for x in xs {
            if x.dims() != self.dims() {
                return Err(Error::DimensionMismatch {
                    expected: self.dims(),
                    found: x.dims(),
                });
            }
        }
        Ok(xs.par_iter().map(|x| self.density(x.coords())).collect())
    }

    pub fn to_file(&self) -> MixtureFile {
        MixtureFile {
            dims: self.dims(),
            bandwidth: self.bandwidth,
            centers: self.centers.iter().map(|p| p.coords().to_vec()).collect(),
        }
    }

    pub fn from_file(file: MixtureFile) -> Result<Self> {
        let centers = PointSet::from_rows(file.centers)?;
        if centers.dims() != file.dims {
            return Err(Error::DimensionMismatch {
                expected: file.dims,
                found: centers.dims(),
            });
        }
        IsotropicMixture::new(centers, file.bandwidth)
    }
}

impl Density for IsotropicMixture {
    fn dims(&self) -> usize {
        self.centers.dims()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let inv = -0.5 / (self.bandwidth * self.bandwidth);
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for c in self.flat.chunks_exact(self.centers.dims()) {
            let e = inv * squared_distance(x, c);
            if e > max {
                sum = sum * (max - e).exp() + 1.0;
                max = e;
            } else {
                sum += (e - max).exp();
            }
        }
        self.log_norm + max + sum.ln()
    }
}

/// JSON form of a mixture: `{dims, bandwidth, centers: [[...], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureFile {
    pub dims: usize,
    pub bandwidth: f64,
    pub centers: Vec<Vec<f64>>,
}

/// Standard Gaussian KDE centered on the sample itself.
pub fn kde_build(x: &PointSet, h: f64) -> Result<IsotropicMixture> {
    IsotropicMixture::new(x.clone(), h)
}

/// Totally positive KDE: a Gaussian mixture centered on the min-max closure of `x`.
pub fn tpkde_build(
    x: &PointSet,
    h: f64,
    engine: ClosureEngine,
    config: &ClosureConfig,
) -> Result<IsotropicMixture> {
    tpkde_build_with_closure(x, h, engine, config).map(|(mix, _)| mix)
}

/// Like [`tpkde_build`], also returning the closure and its statistics.
pub fn tpkde_build_with_closure(
    x: &PointSet,
    h: f64,
    engine: ClosureEngine,
    config: &ClosureConfig,
) -> Result<(IsotropicMixture, Closure)> {
    check_bandwidth(h)?;
    let closure = engine.run(x, config)?;
    let mix = IsotropicMixture::new(closure.set.clone(), h)?;
    Ok((mix, closure))
}

/// Silverman's rule `h = s * (4 / ((d + 2) n))^(1 / (d + 4))`, where `s` is
/// the mean of the per-coordinate sample standard deviations (divisor `n - 1`).
pub fn silverman_bandwidth(x: &PointSet) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            found: n,
        });
    }
    let d = x.dims();
    let mut sd_sum = 0.0;
    for axis in 0..d {
        let mean = x.iter().map(|p| p.coords()[axis]).sum::<f64>() / n as f64;
        let var = x
            .iter()
            .map(|p| (p.coords()[axis] - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        sd_sum += var.sqrt();
    }
    if sd_sum == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sigma = sd_sum / d as f64;
    let (n, d) = (n as f64, d as f64);
    Ok(sigma * (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn set(rows: &[&[f64]]) -> PointSet {
        PointSet::from_rows(rows.iter().map(|r| r.to_vec())).unwrap()
    }

    #[test]
    fn kernel_peak_and_offset() {
        let c = p(&[0.0, 0.0]);
        let peak = gaussian_kernel(&c, &c, 1.0).unwrap();
        assert!((peak - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((peak - 0.159155).abs() < 1e-6);
        let off = gaussian_kernel(&p(&[1.0, 1.0]), &c, 1.0).unwrap();
        assert!((off - (-1.0f64).exp() / (2.0 * PI)).abs() < 1e-15);
        assert!((off - 0.058550).abs() < 1e-6);
    }

    #[test]
    fn kernel_depends_only_on_distance() {
        let c = p(&[0.5, -0.5]);
        let a = gaussian_kernel(&p(&[1.5, -0.5]), &c, 0.7).unwrap();
        let b = gaussian_kernel(&p(&[0.5, 0.5]), &c, 0.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_rejects_bad_sigma() {
        let c = p(&[0.0]);
        assert!(matches!(gaussian_kernel(&c, &c, 0.0), Err(Error::InvalidBandwidth(_))));
        assert!(matches!(gaussian_kernel(&c, &c, -1.0), Err(Error::InvalidBandwidth(_))));
    }

    #[test]
    fn kde_counterexample_products() {
        let mix = kde_build(&set(&[&[0.0, 1.0], &[1.0, 0.0]]), 1.0).unwrap();
        let f = |x: &[f64]| mix.density(x);
        let lhs = f(&[0.0, 1.0]) * f(&[1.0, 0.0]);
        let rhs = f(&[0.0, 0.0]) * f(&[1.0, 1.0]);
        assert!((lhs - 0.012).abs() < 1e-3, "{lhs}");
        assert!((rhs - 0.009).abs() < 1e-3, "{rhs}");
        assert!(lhs > rhs);
    }

    #[test]
    fn single_center_is_a_gaussian_bump() {
        let c = p(&[0.2, 0.4, -1.0]);
        let mix = kde_build(&PointSet::new(vec![c.clone()]).unwrap(), 0.8).unwrap();
        let x = p(&[0.0, 1.0, 0.0]);
        let expected = gaussian_kernel(&x, &c, 0.8).unwrap();
        assert!((mix.density(x.coords()) / expected - 1.0).abs() < 1e-13);
    }

    #[test]
    fn tpkde_of_pair_uses_closure() {
        let x = set(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let mix = tpkde_build(&x, 0.5, ClosureEngine::Grid, &ClosureConfig::default()).unwrap();
        assert_eq!(
            mix.centers(),
            &set(&[&[2.0, 0.0], &[0.0, 1.0], &[2.0, 1.0], &[0.0, 0.0]])
        );
        assert!(mix.density(&[1.0, 0.5]) > 0.0);
    }

    #[test]
    fn tpkde_on_closed_set_equals_kde() {
        let x = set(&[&[0.0, 0.0], &[1.0, 2.0], &[3.0, 3.0]]);
        let tp = tpkde_build(&x, 0.9, ClosureEngine::Naive, &ClosureConfig::default()).unwrap();
        let kd = kde_build(&x, 0.9).unwrap();
        for q in [[0.5, 0.5], [2.0, -1.0], [3.0, 3.0]] {
            assert_eq!(tp.density(&q), kd.density(&q));
        }
    }

    #[test]
    fn log_sum_exp_matches_naive_sum() {
        let x = set(&[&[0.0, 1.0], &[1.0, 0.0], &[0.3, 0.3], &[-2.0, 1.5]]);
        let mix = kde_build(&x, 0.6).unwrap();
        for q in [[0.0, 0.0], [1.0, 1.0], [-1.0, 3.0], [4.0, -4.0]] {
            let lse = mix.density(&q);
            let naive = mix.density_naive(&q);
            assert!((lse / naive - 1.0).abs() < 1e-12, "{lse} vs {naive}");
        }
    }

    #[test]
    fn log_domain_survives_underflow() {
        let mix = kde_build(&set(&[&[0.0], &[1.0]]), 0.01).unwrap();
        assert_eq!(mix.density_naive(&[50.0]), 0.0);
        let ld = mix.log_density(&[50.0]);
        assert!(ld.is_finite() && ld < -1e6);
    }

    #[test]
    fn bad_bandwidth_rejected() {
        let x = set(&[&[0.0]]);
        assert!(matches!(kde_build(&x, 0.0), Err(Error::InvalidBandwidth(_))));
        assert!(matches!(
            tpkde_build(&x, f64::NAN, ClosureEngine::Grid, &ClosureConfig::default()),
            Err(Error::InvalidBandwidth(_))
        ));
    }

    #[test]
    fn tpkde_memory_cap_propagates() {
        let x = set(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let cfg = ClosureConfig { mem_cap_bits: 2 };
        assert!(matches!(
            tpkde_build(&x, 1.0, ClosureEngine::Grid, &cfg),
            Err(Error::MemoryCap { .. })
        ));
    }

    #[test]
    fn silverman_one_dimensional_unit_spread() {
        // 100 points with sample standard deviation exactly 1
        let raw: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mean = 49.5;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        let x = PointSet::from_rows(raw.iter().map(|v| vec![(v - mean) / sd])).unwrap();
        let h = silverman_bandwidth(&x).unwrap();
        assert!((h - (4.0f64 / 300.0).powf(0.2)).abs() < 1e-12);
        assert!((h - 0.421_684_606).abs() < 1e-8);
    }

    #[test]
    fn silverman_is_homogeneous() {
        let x = set(&[&[0.1, 2.0], &[1.3, -0.4], &[-0.8, 0.9], &[2.2, 1.1]]);
        let scaled = PointSet::from_rows(
            x.iter().map(|p| p.coords().iter().map(|c| 3.5 * c).collect::<Vec<_>>()),
        )
        .unwrap();
        let (h, hs) = (silverman_bandwidth(&x).unwrap(), silverman_bandwidth(&scaled).unwrap());
        assert!((hs / h - 3.5).abs() < 1e-12);
    }

    #[test]
    fn silverman_errors() {
        // identical points collapse to one, leaving too few for a spread estimate
        let x = PointSet::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(silverman_bandwidth(&x), Err(Error::TooFewPoints { .. })));
        assert!(matches!(silverman_bandwidth(&set(&[&[0.0]])), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn mixture_file_round_trip() {
        let mix = kde_build(&set(&[&[0.0, 1.0], &[1.0, 0.0]]), 1.25).unwrap();
        let json = serde_json::to_string(&mix.to_file()).unwrap();
        let back = IsotropicMixture::from_file(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.centers(), mix.centers());
        assert_eq!(back.bandwidth(), 1.25);
    }
}
