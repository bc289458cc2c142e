//! Reproduction harnesses: the two MTP2 counterexamples, the closure
//! benchmark, the KDE vs TPKDE error study, and a randomized search over
//! MTP2 hypercube weights for Constraint A violations.
//!
//! Every harness is a pure function of its config and seed. Independent work
//! items draw from separate ChaCha substreams, so parallel execution order
//! never changes the output.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{kde_build, silverman_bandwidth, tpkde_build, Density, IsotropicMixture};
use crate::error::{Error, Result};
use crate::gaussians::{random_mtp2_gaussian, DiscreteConvolution, GaussianSpec};
use crate::io::fmt_f64;
use crate::lattice::{ClosureConfig, ClosureEngine, Point, PointSet, DEFAULT_MEM_CAP_BITS};
use crate::manifest::{config_hash, CsvRecord};
use crate::positivity::{constraint_a_check, mtp2_margin, HypercubeValues, ViolationReport, DEFAULT_TOLERANCE};
use crate::rng::{seeded, stream_id, RNG_ID};

/// Outcome of evaluating one MTP2 inequality at a fixed pair of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub meet: Vec<f64>,
    pub join: Vec<f64>,
    /// `f(p1) f(p2)`
    pub product_pair: f64,
    /// `f(p1 ^ p2) f(p1 v p2)`
    pub product_meet_join: f64,
    pub margin: f64,
    pub violation: bool,
}

impl PairEvaluation {
    fn evaluate(f: &impl Density, p1: &Point, p2: &Point, tol: f64) -> Result<Self> {
        let report = mtp2_margin(f, p1, p2, tol)?;
        Ok(PairEvaluation {
            p1: p1.coords().to_vec(),
            p2: p2.coords().to_vec(),
            meet: p1.meet(p2)?.into_coords(),
            join: p1.join(p2)?.into_coords(),
            product_pair: report.lhs,
            product_meet_join: report.rhs,
            margin: report.margin,
            violation: report.is_violation(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeCounterexampleReport {
    pub sample: Vec<Vec<f64>>,
    pub bandwidth: f64,
    pub evaluation: PairEvaluation,
}

/// Two-point Gaussian KDE with `h = 1` on `{(0,1), (1,0)}`, evaluated at the
/// sample points themselves. The standard KDE is not MTP2 here.
pub fn reproduce_kde_counterexample() -> Result<KdeCounterexampleReport> {
    let sample = PointSet::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]])?;
    let kde = kde_build(&sample, 1.0)?;
    let p1 = Point::new(vec![0.0, 1.0])?;
    let p2 = Point::new(vec![1.0, 0.0])?;
    Ok(KdeCounterexampleReport {
        sample: sample.iter().map(|p| p.coords().to_vec()).collect(),
        bandwidth: 1.0,
        evaluation: PairEvaluation::evaluate(&kde, &p1, &p2, DEFAULT_TOLERANCE)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionCounterexampleReport {
    pub support: Vec<Vec<f64>>,
    pub precision: Vec<Vec<f64>>,
    pub support_is_closed: bool,
    pub kernel_is_mtp2: bool,
    pub anisotropic: PairEvaluation,
    /// The same support and points with an isotropic kernel.
    pub isotropic_variance: f64,
    pub isotropic: PairEvaluation,
}

/// Uniform weights on the closed set `{(2,0), (0,1), (2,1), (0,0)}` convolved
/// with the MTP2 Gaussian of precision `[[5,-2],[-2,1]]`. The result is not
/// MTP2 at `p1 = (0.98, 0.43)`, `p2 = (0.49, 0.7)`, while an isotropic kernel
/// on the same support is.
pub fn reproduce_convolution_counterexample() -> Result<ConvolutionCounterexampleReport> {
    let support = PointSet::from_rows(vec![
        vec![2.0, 0.0],
        vec![0.0, 1.0],
        vec![2.0, 1.0],
        vec![0.0, 0.0],
    ])?;
    let precision = DMatrix::from_row_slice(2, 2, &[5.0, -2.0, -2.0, 1.0]);
    let conv = DiscreteConvolution::uniform(&support, precision.clone())?;
    let p1 = Point::new(vec![0.98, 0.43])?;
    let p2 = Point::new(vec![0.49, 0.7])?;
    let anisotropic = PairEvaluation::evaluate(&conv, &p1, &p2, DEFAULT_TOLERANCE)?;

    let isotropic_variance = 1.0;
    let iso = DiscreteConvolution::uniform(&support, DMatrix::identity(2, 2) / isotropic_variance)?;
    let isotropic = PairEvaluation::evaluate(&iso, &p1, &p2, DEFAULT_TOLERANCE)?;

    Ok(ConvolutionCounterexampleReport {
        support: support.iter().map(|p| p.coords().to_vec()).collect(),
        precision: crate::gaussians::rows(&precision),
        support_is_closed: crate::lattice::is_minmax_closed(&support),
        kernel_is_mtp2: crate::gaussians::is_mtp2_gaussian(conv.kernel()),
        anisotropic,
        isotropic_variance,
        isotropic,
    })
}

/// A density that can also be sampled from.
pub trait Sample: Density {
    fn sample_one(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
}

impl Sample for GaussianSpec {
    fn sample_one(&self, mut rng: &mut dyn rand::RngCore) -> Vec<f64> {
        self.sample_point(&mut rng)
    }
}

/// `sqrt(mean((f0(Y) - fe(Y))^2))` over `s` draws `Y ~ f0`.
pub fn rmse_monte_carlo<F0, FE, R>(f0: &F0, fe: &FE, s: usize, rng: &mut R) -> Result<f64>
where
    F0: Sample + ?Sized,
    FE: Density + ?Sized,
    R: Rng,
{
    if s == 0 {
        return Err(Error::Precondition("Monte Carlo size must be at least 1".into()));
    }
    let ys: Vec<Vec<f64>> = (0..s).map(|_| f0.sample_one(rng)).collect();
    rmse_at(f0, fe, &ys)
}

/// Root mean squared difference of two densities over fixed evaluation points.
pub fn rmse_at<F0, FE>(f0: &F0, fe: &FE, ys: &[Vec<f64>]) -> Result<f64>
where
    F0: Density + ?Sized,
    FE: Density + ?Sized,
{
    if ys.is_empty() {
        return Err(Error::Empty);
    }
    if f0.dims() != fe.dims() {
        return Err(Error::DimensionMismatch {
            expected: f0.dims(),
            found: fe.dims(),
        });
    }
    let sq: Vec<f64> = ys
        .par_iter()
        .map(|y| {
            let a = f0.density(y);
            let b = fe.density(y);
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::NonPositiveDensity {
                    point: y.clone(),
                    value: if a.is_finite() { b } else { a },
                });
            }
            Ok((a - b) * (a - b))
        })
        .collect::<Result<_>>()?;
    // Sequential sum keeps the result independent of thread count.
    let total: f64 = sq.iter().sum();
    Ok((total / ys.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimator {
    Kde,
    Tpkde,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Kde => "KDE",
            Estimator::Tpkde => "TPKDE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStudyConfig {
    pub d: usize,
    pub n_values: Vec<usize>,
    pub trials: usize,
    /// Monte Carlo size per RMSE estimate.
    pub s: usize,
    pub seed: u64,
    pub engine: ClosureEngine,
    pub mem_cap_bits: u64,
}

impl ErrorStudyConfig {
    /// Default grids: d=2 n in 10..=80 step 10, d=3 n in 5..=25 step 5,
    /// d=4 n in 5..=15 step 2, otherwise n in {5, 10}; 20 trials, s = 2000.
    pub fn default_for(d: usize, seed: u64) -> Self {
        let n_values = match d {
            2 => (1..=8).map(|k| 10 * k).collect(),
            3 => (1..=5).map(|k| 5 * k).collect(),
            4 => (5..=15).step_by(2).collect(),
            _ => vec![5, 10],
        };
        ErrorStudyConfig {
            d,
            n_values,
            trials: 20,
            s: 2000,
            seed,
            engine: ClosureEngine::Grid,
            mem_cap_bits: DEFAULT_MEM_CAP_BITS,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::ZeroDimension);
        }
        if self.n_values.is_empty() || self.trials == 0 || self.s == 0 {
            return Err(Error::Precondition(
                "error study needs at least one n, one trial and s >= 1".into(),
            ));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 2) {
            return Err(Error::TooFewPoints { required: 2, found: n });
        }
        if self.trials > u16::MAX as usize || self.d > u16::MAX as usize {
            return Err(Error::Precondition("trial count and d must fit in 16 bits".into()));
        }
        let max_n = *self.n_values.iter().max().expect("non-empty");
        let required = (max_n as u128).checked_pow(self.d as u32).unwrap_or(u128::MAX);
        if required > self.mem_cap_bits as u128 {
            return Err(Error::MemoryCap {
                required,
                cap: self.mem_cap_bits,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseRecord {
    pub d: usize,
    pub n: usize,
    pub trial: usize,
    /// Substream id under the study seed that generated this trial.
    pub trial_stream: u64,
    pub estimator: Estimator,
    pub bandwidth: f64,
    /// Number of mixture components (n for KDE, closure size for TPKDE).
    pub components: usize,
    pub s: usize,
    pub rmse: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl CsvRecord for RmseRecord {
    fn header() -> &'static [&'static str] {
        &[
            "d",
            "n",
            "trial",
            "trial_stream",
            "estimator",
            "bandwidth",
            "components",
            "s",
            "rmse",
            "seed",
            "config_hash",
            "rng",
        ]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.d.to_string(),
            self.n.to_string(),
            self.trial.to_string(),
            self.trial_stream.to_string(),
            self.estimator.as_str().to_owned(),
            fmt_f64(self.bandwidth),
            self.components.to_string(),
            self.s.to_string(),
            fmt_f64(self.rmse),
            self.seed.to_string(),
            self.config_hash.clone(),
            RNG_ID.to_owned(),
        ]
    }
}

const STUDY_TAG: u16 = 1;
const BENCH_TAG: u16 = 2;
const CONJECTURE_TAG: u16 = 3;
const LEMMA_TAG: u16 = 4;

/// KDE vs TPKDE RMSE against a random MTP2 Gaussian truth.
///
/// Within a trial the truth `f0`, the Monte Carlo points and the sample are
/// shared across all `n`: the sample for `n` is the first `n` draws of one
/// sequence. This makes the per-trial error curves directly comparable.
pub fn run_error_study(config: &ErrorStudyConfig) -> Result<Vec<RmseRecord>> {
    config.validate()?;
    let hash = config_hash(config);
    let max_n = *config.n_values.iter().max().expect("validated");
    let closure_cfg = ClosureConfig {
        mem_cap_bits: config.mem_cap_bits,
    };
    let per_trial: Vec<Vec<RmseRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let stream = |k: u16| stream_id([STUDY_TAG, config.d as u16, trial as u16, k]);
            let f0 = random_mtp2_gaussian(config.d, &mut seeded(config.seed, stream(0)))?;
            let draws = f0.sample_vec(max_n, &mut seeded(config.seed, stream(1)));
            let mut mc_rng = seeded(config.seed, stream(2));
            let ys: Vec<Vec<f64>> = (0..config.s).map(|_| f0.sample_point(&mut mc_rng)).collect();
            let mut out = Vec::with_capacity(2 * config.n_values.len());
            for &n in &config.n_values {
                let x = PointSet::new(draws[..n].to_vec())?;
                let h = silverman_bandwidth(&x)?;
                let kde = kde_build(&x, h)?;
                let tpkde = tpkde_build(&x, h, config.engine, &closure_cfg)?;
                for (estimator, mix) in [(Estimator::Kde, &kde), (Estimator::Tpkde, &tpkde)] {
                    out.push(RmseRecord {
                        d: config.d,
                        n,
                        trial,
                        trial_stream: stream(0),
                        estimator,
                        bandwidth: h,
                        components: mix.len(),
                        s: config.s,
                        rmse: rmse_at(&f0, mix, &ys)?,
                        seed: config.seed,
                        config_hash: hash.clone(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<RmseRecord> = per_trial.into_iter().flatten().collect();
    records.sort_by(|a, b| (a.n, a.trial, a.estimator).cmp(&(b.n, b.trial, b.estimator)));
    Ok(records)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// `(n, median rmse)` for one estimator, ascending in `n`.
pub fn median_rmse_by_n(records: &[RmseRecord], estimator: Estimator) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| {
            let mut v: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && r.estimator == estimator)
                .map(|r| r.rmse)
                .collect();
            (!v.is_empty()).then(|| (n, median(&mut v)))
        })
        .collect()
}

/// Number of consecutive steps where the curve goes up.
pub fn count_inversions(curve: &[(usize, f64)]) -> usize {
    curve.windows(2).filter(|w| w[1].1 > w[0].1).count()
}

/// Per `(n, trial)` comparison of the two estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub n: usize,
    pub trial: usize,
    pub kde: f64,
    pub tpkde: f64,
    pub tpkde_wins: bool,
}

pub fn compare_cells(records: &[RmseRecord]) -> Vec<CellComparison> {
    let mut cells = Vec::new();
    for r in records.iter().filter(|r| r.estimator == Estimator::Kde) {
        if let Some(t) = records
            .iter()
            .find(|t| t.estimator == Estimator::Tpkde && t.n == r.n && t.trial == r.trial)
        {
            cells.push(CellComparison {
                n: r.n,
                trial: r.trial,
                kde: r.rmse,
                tpkde: t.rmse,
                tpkde_wins: t.rmse <= r.rmse,
            });
        }
    }
    cells
}

/// Fraction of `(n, trial)` cells where TPKDE's RMSE is at most KDE's.
pub fn tpkde_win_fraction(records: &[RmseRecord]) -> f64 {
    let cells = compare_cells(records);
    if cells.is_empty() {
        return f64::NAN;
    }
    cells.iter().filter(|c| c.tpkde_wins).count() as f64 / cells.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStudySummary {
    pub d: usize,
    pub kde_medians: Vec<(usize, f64)>,
    pub tpkde_medians: Vec<(usize, f64)>,
    pub kde_inversions: usize,
    pub tpkde_inversions: usize,
    pub tpkde_win_fraction: f64,
}

pub fn summarize_error_study(d: usize, records: &[RmseRecord]) -> ErrorStudySummary {
    let kde_medians = median_rmse_by_n(records, Estimator::Kde);
    let tpkde_medians = median_rmse_by_n(records, Estimator::Tpkde);
    ErrorStudySummary {
        d,
        kde_inversions: count_inversions(&kde_medians),
        tpkde_inversions: count_inversions(&tpkde_medians),
        kde_medians,
        tpkde_medians,
        tpkde_win_fraction: tpkde_win_fraction(records),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub d: usize,
    pub n_values: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    /// Wall-clock budget per `(d, n)` cell across all repeats and both engines.
    pub cell_budget_secs: f64,
    pub mem_cap_bits: u64,
}

impl BenchmarkConfig {
    /// Table-shaped grids: d=2 n in {40,50,60,80}, d=3 {10,15,20,25},
    /// d=4 {10,12,15,20}; 5 repeats, 120 s per cell.
    pub fn default_for(d: usize, seed: u64) -> Self {
        let n_values = match d {
            2 => vec![40, 50, 60, 80],
            3 => vec![10, 15, 20, 25],
            4 => vec![10, 12, 15, 20],
            _ => vec![5, 8],
        };
        BenchmarkConfig {
            d,
            n_values,
            repeats: 5,
            seed,
            cell_budget_secs: 120.0,
            mem_cap_bits: DEFAULT_MEM_CAP_BITS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub d: usize,
    pub n: usize,
    pub algorithm: ClosureEngine,
    /// Median over repeats.
    pub wall_time_secs: f64,
    pub m: usize,
    pub sweeps: usize,
    /// Naive median time over this algorithm's median time.
    pub speedup: f64,
    pub repeats: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl CsvRecord for BenchmarkRecord {
    fn header() -> &'static [&'static str] {
        &[
            "d",
            "n",
            "algorithm",
            "wall_time_secs",
            "m",
            "sweeps",
            "speedup",
            "repeats",
            "seed",
            "config_hash",
            "rng",
        ]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.d.to_string(),
            self.n.to_string(),
            self.algorithm.as_str().to_owned(),
            fmt_f64(self.wall_time_secs),
            self.m.to_string(),
            self.sweeps.to_string(),
            fmt_f64(self.speedup),
            self.repeats.to_string(),
            self.seed.to_string(),
            self.config_hash.clone(),
            RNG_ID.to_owned(),
        ]
    }
}

/// The standard Gaussian sample the benchmark uses for `(d, n)`: the first
/// `n` draws of one sequence per `(d, seed)`, so larger cells extend smaller ones.
pub fn benchmark_sample(d: usize, n: usize, seed: u64) -> Result<PointSet> {
    if d > u16::MAX as usize {
        return Err(Error::Precondition("d must fit in 16 bits".into()));
    }
    let mut rng = seeded(seed, stream_id([BENCH_TAG, d as u16, 0, 0]));
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
        .collect();
    PointSet::from_rows(rows)
}

/// Times naive and grid closure on the same sample per `n`.
///
/// Repeats alternate which engine runs first, after one untimed warm-up run of each. Cells run one at a time;
/// output sets are compared on every repeat before any time is kept.
pub fn run_closure_benchmark(config: &BenchmarkConfig) -> Result<Vec<BenchmarkRecord>> {
    if config.d == 0 {
        return Err(Error::ZeroDimension);
    }
    if config.repeats == 0 || config.n_values.is_empty() {
        return Err(Error::Precondition("benchmark needs at least one n and one repeat".into()));
    }
    let hash = config_hash(config);
    let closure_cfg = ClosureConfig {
        mem_cap_bits: config.mem_cap_bits,
    };
    let budget = Duration::from_secs_f64(config.cell_budget_secs.max(0.0));
    let mut records = Vec::with_capacity(2 * config.n_values.len());
    for &n in &config.n_values {
        let x = benchmark_sample(config.d, n, config.seed)?;
        let started = Instant::now();
        // Untimed warm-up so allocator and page-fault costs do not land in the first repeat.
        if config.repeats > 1 {
            for engine in [ClosureEngine::Naive, ClosureEngine::Grid] {
                engine.run(&x, &closure_cfg)?;
            }
        }
        let mut times = [Vec::new(), Vec::new()];
        let mut stats = [None, None];
        for rep in 0..config.repeats {
            let order = if rep % 2 == 0 {
                [ClosureEngine::Naive, ClosureEngine::Grid]
            } else {
                [ClosureEngine::Grid, ClosureEngine::Naive]
            };
            let mut sets = [None, None];
            for engine in order {
                let slot = engine as usize;
                let t = Instant::now();
                let closure = engine.run(&x, &closure_cfg)?;
                times[slot].push(t.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
                sets[slot] = Some(closure.set);
                stats[slot] = Some(closure.stats);
                if started.elapsed() > budget {
                    return Err(Error::Timeout {
                        elapsed_secs: started.elapsed().as_secs_f64(),
                        budget_secs: config.cell_budget_secs,
                    });
                }
            }
            if sets[0] != sets[1] {
                return Err(Error::CrossValidation(format!(
                    "naive and grid closures differ at d={}, n={n}",
                    config.d
                )));
            }
        }
        let medians = [median(&mut times[0]), median(&mut times[1])];
        for engine in [ClosureEngine::Naive, ClosureEngine::Grid] {
            let slot = engine as usize;
            let st = stats[slot].as_ref().expect("ran at least once");
            records.push(BenchmarkRecord {
                d: config.d,
                n,
                algorithm: engine,
                wall_time_secs: medians[slot],
                m: st.m,
                sweeps: st.sweeps,
                speedup: medians[0] / medians[slot],
                repeats: config.repeats,
                seed: config.seed,
                config_hash: hash.clone(),
            });
        }
    }
    Ok(records)
}

/// `(n, grid speedup)` pairs from benchmark output, ascending in `n`.
pub fn grid_speedups(records: &[BenchmarkRecord]) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = records
        .iter()
        .filter(|r| r.algorithm == ClosureEngine::Grid)
        .map(|r| (r.n, r.speedup))
        .collect();
    v.sort_by_key(|&(n, _)| n);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjectureSearchConfig {
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjectureViolation {
    pub trial: usize,
    pub precision: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
    pub reports: Vec<ViolationReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjectureSearchReport {
    pub d: usize,
    pub trials: usize,
    pub min_margin: f64,
    pub violations: Vec<ConjectureViolation>,
}

/// Evaluates Constraint A on hypercube weights taken from random MTP2
/// Gaussians (restricted to random boxes, hence MTP2 on the cube). Any
/// failure is returned in the report.
pub fn run_constraint_a_search(config: &ConjectureSearchConfig) -> Result<ConjectureSearchReport> {
    if config.d < 2 || config.d > 16 {
        return Err(Error::Precondition("constraint A search needs 2 <= d <= 16".into()));
    }
    let outcomes: Vec<(f64, Option<ConjectureViolation>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seeded(
                config.seed,
                stream_id([CONJECTURE_TAG, config.d as u16, (trial >> 16) as u16, trial as u16]),
            );
            let g = random_mtp2_gaussian(config.d, &mut rng)?;
            let lows: Vec<f64> = g
                .mean()
                .coords()
                .iter()
                .map(|m| m + rng.random_range(-1.5..0.5))
                .collect();
            let highs: Vec<f64> = lows.iter().map(|l| l + rng.random_range(0.05..2.0)).collect();
            let cube = HypercubeValues::from_fn(lows.clone(), highs.clone(), |x| g.density(x))?;
            let outcome = constraint_a_check(&cube, config.tol)?;
            let min_margin = outcome
                .pairs
                .iter()
                .map(|r| r.margin)
                .fold(f64::INFINITY, f64::min);
            let violation = (!outcome.holds).then(|| ConjectureViolation {
                trial,
                precision: crate::gaussians::rows(g.invcov()),
                mean: g.mean().coords().to_vec(),
                lows,
                highs,
                reports: outcome.violations().cloned().collect(),
            });
            Ok((min_margin, violation))
        })
        .collect::<Result<_>>()?;
    let min_margin = outcomes.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
    Ok(ConjectureSearchReport {
        d: config.d,
        trials: config.trials,
        min_margin,
        violations: outcomes.into_iter().filter_map(|o| o.1).collect(),
    })
}

/// `count` random pairs, each point a random center plus `N(0, spread^2 I)` noise.
pub fn random_evaluation_pairs<R: Rng + ?Sized>(
    centers: &PointSet,
    count: usize,
    spread: f64,
    rng: &mut R,
) -> Result<Vec<(Point, Point)>> {
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::Precondition(format!("spread must be finite and >= 0, got {spread}")));
    }
    let pts = centers.points();
    let draw = |rng: &mut R| -> Result<Point> {
        let c = &pts[rng.random_range(0..pts.len())];
        Point::new(
            c.coords()
                .iter()
                .map(|v| v + spread * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect(),
        )
    };
    (0..count).map(|_| Ok((draw(rng)?, draw(rng)?))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuiteReport {
    pub cases: usize,
    pub complement_failures: Vec<(String, String)>,
    /// Tuples whose value fell below `-1e-12` times the largest term.
    pub exponential_failures: Vec<ExpPosRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpPosRecord {
    pub tuple: [f64; 9],
    pub value: f64,
    pub max_term: f64,
}

impl LemmaSuiteReport {
    pub fn is_clean(&self) -> bool {
        self.complement_failures.is_empty() && self.exponential_failures.is_empty()
    }
}

/// Randomized checks of the binary complement identity (string lengths
/// 1 to 16) and of four-exponential nonnegativity on `cases` inputs each.
pub fn run_lemma_suites(cases: usize, seed: u64) -> Result<LemmaSuiteReport> {
    use crate::positivity::{binary_complement_lemma_check, lemma_exppos_value, BitString, ExpPosTuple};
    let mut rng = seeded(seed, stream_id([LEMMA_TAG, 0, 0, 0]));
    let mut complement_failures = Vec::new();
    for _ in 0..cases {
        let len = rng.random_range(1..=16);
        let a = BitString::from_mask(rng.random(), len);
        let b = BitString::from_mask(rng.random(), len);
        if !binary_complement_lemma_check(&a, &b)? {
            complement_failures.push((a.to_string(), b.to_string()));
        }
    }
    let mut rng = seeded(seed, stream_id([LEMMA_TAG, 1, 0, 0]));
    let ordered = |rng: &mut crate::rng::ExperimentRng| {
        let (u, v): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        if u == v {
            (u + 1e-3, u)
        } else {
            (u.max(v), u.min(v))
        }
    };
    let mut exponential_failures = Vec::new();
    for _ in 0..cases {
        let (a1, a2) = ordered(&mut rng);
        let (b1, b2) = ordered(&mut rng);
        let (xi, xk) = ordered(&mut rng);
        let (xj, xl) = ordered(&mut rng);
        let h = rng.random_range(0.1..5.0);
        let t = ExpPosTuple { a1, a2, b1, b2, xi, xj, xk, xl, h };
        let value = lemma_exppos_value(&t)?;
        let max_term = t.max_term();
        if value < -1e-12 * max_term {
            exponential_failures.push(ExpPosRecord {
                tuple: [a1, a2, b1, b2, xi, xj, xk, xl, h],
                value,
                max_term,
            });
        }
    }
    Ok(LemmaSuiteReport {
        cases,
        complement_failures,
        exponential_failures,
    })
}

/// Densities evaluated on a list of points as `(point, value)` rows.
pub fn evaluate_on(mix: &IsotropicMixture, points: &[Point]) -> Result<Vec<(Point, f64)>> {
    let values = mix.evaluate_batch(points)?;
    Ok(points.iter().cloned().zip(values).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::write_records_csv;
    use std::f64::consts::PI;

    #[test]
    fn kde_counterexample_violates() {
        let r = reproduce_kde_counterexample().unwrap();
        assert!((r.evaluation.product_pair - 0.012).abs() < 1e-3);
        assert!((r.evaluation.product_meet_join - 0.009).abs() < 1e-3);
        assert!(r.evaluation.violation);
        assert_eq!(r.evaluation.meet, vec![0.0, 0.0]);
        assert_eq!(r.evaluation.join, vec![1.0, 1.0]);
    }

    #[test]
    fn convolution_counterexample_violates_only_when_anisotropic() {
        let r = reproduce_convolution_counterexample().unwrap();
        assert!(r.support_is_closed);
        assert!(r.kernel_is_mtp2);
        assert!(r.anisotropic.product_meet_join < r.anisotropic.product_pair);
        assert!(r.anisotropic.violation);
        assert!(!r.isotropic.violation);
        assert!(r.isotropic.product_meet_join >= r.isotropic.product_pair);
    }

    struct StdNormal1;

    impl Density for StdNormal1 {
        fn dims(&self) -> usize {
            1
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            -0.5 * x[0] * x[0] - 0.5 * (2.0 * PI).ln()
        }
    }

    impl Sample for StdNormal1 {
        fn sample_one(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
            vec![rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)]
        }
    }

    struct Zero1;

    impl Density for Zero1 {
        fn dims(&self) -> usize {
            1
        }
        fn log_density(&self, _: &[f64]) -> f64 {
            f64::NEG_INFINITY
        }
    }

    #[test]
    fn rmse_of_identical_densities_is_zero() {
        let r = rmse_monte_carlo(&StdNormal1, &StdNormal1, 100, &mut seeded(1, 0)).unwrap();
        assert_eq!(r, 0.0);
        assert!(rmse_monte_carlo(&StdNormal1, &StdNormal1, 0, &mut seeded(1, 0)).is_err());
    }

    #[test]
    fn rmse_against_zero_matches_quadrature() {
        // E[phi(Y)^2] = integral of phi^3, by trapezoid quadrature on [-12, 12].
        let steps = 240_000;
        let dx = 24.0 / steps as f64;
        let phi = |y: f64| (-0.5 * y * y).exp() / (2.0 * PI).sqrt();
        let integral: f64 = (0..=steps)
            .map(|k| {
                let y = -12.0 + k as f64 * dx;
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                w * phi(y).powi(3)
            })
            .sum::<f64>()
            * dx;
        assert!((integral - 1.0 / (2.0 * PI * 3f64.sqrt())).abs() < 1e-12);
        let expected = integral.sqrt();
        let got = rmse_monte_carlo(&StdNormal1, &Zero1, 200_000, &mut seeded(7, 0)).unwrap();
        assert!((got - expected).abs() / expected < 0.01, "{got} vs {expected}");
    }

    #[test]
    fn rmse_standard_error_scales_with_root_s() {
        let spread = |s: usize, stream: u64| {
            let v: Vec<f64> = (0..100)
                .map(|k| {
                    rmse_monte_carlo(&StdNormal1, &Zero1, s, &mut seeded(stream, k))
                        .unwrap()
                        .powi(2)
                })
                .collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let ratio = spread(500, 11) / spread(2000, 12);
        assert!((1.5..2.7).contains(&ratio), "{ratio}");
    }

    fn tiny_study(seed: u64) -> ErrorStudyConfig {
        ErrorStudyConfig {
            d: 2,
            n_values: vec![5, 10, 20],
            trials: 3,
            s: 200,
            seed,
            engine: ClosureEngine::Grid,
            mem_cap_bits: DEFAULT_MEM_CAP_BITS,
        }
    }

    #[test]
    fn error_study_is_deterministic() {
        let a = run_error_study(&tiny_study(3)).unwrap();
        let b = run_error_study(&tiny_study(3)).unwrap();
        let c = run_error_study(&tiny_study(4)).unwrap();
        assert_eq!(a.len(), 3 * 3 * 2);
        let csv = |r: &[RmseRecord]| {
            let mut buf = Vec::new();
            write_records_csv(&mut buf, r).unwrap();
            buf
        };
        assert_eq!(csv(&a), csv(&b));
        assert_ne!(csv(&a), csv(&c));
        for r in &a {
            assert!(r.rmse >= 0.0);
            match r.estimator {
                Estimator::Kde => assert_eq!(r.components, r.n),
                Estimator::Tpkde => assert!(r.components >= r.n),
            }
        }
    }

    #[test]
    fn error_study_checks_memory_cap() {
        let mut cfg = tiny_study(1);
        cfg.mem_cap_bits = 100;
        assert!(matches!(run_error_study(&cfg), Err(Error::MemoryCap { .. })));
    }

    #[test]
    fn summaries() {
        let curve = vec![(1, 3.0), (2, 2.0), (3, 2.5), (4, 1.0)];
        assert_eq!(count_inversions(&curve), 1);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn benchmark_tiny_cell_agrees() {
        let cfg = BenchmarkConfig {
            d: 2,
            n_values: vec![2, 10],
            repeats: 2,
            seed: 5,
            cell_budget_secs: 60.0,
            mem_cap_bits: DEFAULT_MEM_CAP_BITS,
        };
        let recs = run_closure_benchmark(&cfg).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].m, recs[1].m);
        assert!(recs[0].m == 2 || recs[0].m == 4);
        for r in &recs {
            assert!(r.wall_time_secs > 0.0);
        }
        assert_eq!(recs[0].speedup, 1.0);
        let (small, large) = (benchmark_sample(2, 10, 5).unwrap(), benchmark_sample(2, 20, 5).unwrap());
        assert!(small.is_subset_of(&large));
    }

    #[test]
    fn lemma_suites_are_clean() {
        let r = run_lemma_suites(2000, 1).unwrap();
        assert!(r.is_clean());
        assert_eq!(r, run_lemma_suites(2000, 1).unwrap());
    }

    #[test]
    fn evaluation_pairs_are_reproducible() {
        let c = PointSet::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let a = random_evaluation_pairs(&c, 10, 0.5, &mut seeded(1, 0)).unwrap();
        assert_eq!(a, random_evaluation_pairs(&c, 10, 0.5, &mut seeded(1, 0)).unwrap());
        assert!(random_evaluation_pairs(&c, 1, f64::NAN, &mut seeded(1, 0)).is_err());
    }

    #[test]
    fn constraint_a_search_runs() {
        let cfg = ConjectureSearchConfig {
            d: 3,
            trials: 50,
            seed: 2,
            tol: DEFAULT_TOLERANCE,
        };
        let r = run_constraint_a_search(&cfg).unwrap();
        assert_eq!(r.trials, 50);
        assert_eq!(r, run_constraint_a_search(&cfg).unwrap());
    }
}
