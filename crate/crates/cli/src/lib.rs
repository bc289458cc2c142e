//! The `tpkde` command-line tool.
//!
//! Exit codes: 0 clean, 1 violations found, 2 bad input or other error,
//! 3 closure memory cap exceeded. Every run writes a JSON manifest next to
//! its output file (`<output>.manifest.json`), to `--manifest`, or to stderr
//! when the output goes to stdout.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use tpkde::density::{kde_build, silverman_bandwidth, tpkde_build_with_closure, IsotropicMixture, MixtureFile};
use tpkde::experiments::{
    grid_speedups, reproduce_kde_counterexample, reproduce_convolution_counterexample, run_closure_benchmark,
    run_constraint_a_search, run_error_study, run_lemma_suites, summarize_error_study, BenchmarkConfig,
    ConjectureSearchConfig, ErrorStudyConfig,
};
use tpkde::gaussians::convolution_closure_search;
use tpkde::io::{read_hypercube_csv, read_pairs_csv, read_point_list_csv, read_points_csv, write_points_csv, write_values_csv};
use tpkde::lattice::{ClosureConfig, ClosureEngine, DEFAULT_MEM_CAP_BITS};
use tpkde::manifest::{write_records_csv, RunManifest};
use tpkde::positivity::{constraint_a_check, mtp2_check, ViolationReport, DEFAULT_TOLERANCE};
use tpkde::rng::{seeded, stream_id};
use tpkde::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_MEMORY_CAP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tpkde", version, about = "Totally positive kernel density estimation")]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
struct Globals {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance for inequality checks.
    #[arg(long, global = true, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
    /// Refuse closure grids larger than this many bits.
    #[arg(long, global = true, default_value_t = DEFAULT_MEM_CAP_BITS)]
    mem_cap_bits: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Min-max closure of a point file.
    Closure(ClosureArgs),
    /// Evaluate a KDE or TPKDE at given points.
    Estimate(EstimateArgs),
    /// Verify positivity conditions.
    Check {
        #[command(subcommand)]
        kind: CheckKind,
    },
    /// Time naive against grid closure.
    Benchmark(BenchmarkArgs),
    /// Run a reproduction harness.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args, Serialize)]
struct ClosureArgs {
    /// Point CSV, or `-` for stdin.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "grid", value_parser = parse_engine)]
    engine: ClosureEngine,
    /// Output CSV, or `-` for stdout.
    #[arg(long, default_value = "-")]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Kde,
    Tpkde,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum Bandwidth {
    Silverman,
    Fixed(f64),
}

impl FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("silverman") {
            return Ok(Bandwidth::Silverman);
        }
        match s.parse::<f64>() {
            Ok(h) if h.is_finite() && h > 0.0 => Ok(Bandwidth::Fixed(h)),
            _ => Err(format!("bandwidth must be `silverman` or a positive number, got `{s}`")),
        }
    }
}

fn parse_engine(s: &str) -> Result<ClosureEngine, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
struct MixtureArgs {
    /// Sample CSV the estimator is built from.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tpkde")]
    method: Method,
    /// `silverman` or a kernel standard deviation.
    #[arg(long, default_value = "silverman")]
    bandwidth: Bandwidth,
    #[arg(long, default_value = "grid", value_parser = parse_engine)]
    engine: ClosureEngine,
}

#[derive(Debug, Args, Serialize)]
struct EstimateArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    /// Evaluation points CSV.
    #[arg(long)]
    eval: PathBuf,
    #[arg(long, default_value = "-")]
    output: PathBuf,
    /// Also save the fitted mixture as JSON.
    #[arg(long)]
    save_mixture: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum CheckKind {
    /// MTP2 inequality at point pairs of a mixture.
    Mtp2(Mtp2Args),
    /// Vertex sum condition on unit-cube weights.
    ConstraintA(ConstraintAArgs),
    /// Randomized binary complement and four-exponential suites.
    Lemmas(LemmaArgs),
}

#[derive(Debug, Args, Serialize)]
struct Mtp2Args {
    /// Saved mixture JSON; otherwise one is built from `--sample`.
    #[arg(long, conflicts_with = "sample")]
    mixture: Option<PathBuf>,
    #[command(flatten)]
    build: MixtureArgs,
    /// CSV of `2d` columns: x then y.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Number of random pairs when no pair file is given.
    #[arg(long, default_value_t = 10_000)]
    random_pairs: usize,
    /// Noise scale around mixture centers for random pairs, in bandwidths.
    #[arg(long, default_value_t = 3.0)]
    spread: f64,
    /// Violations as JSON lines.
    #[arg(long, default_value = "-")]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ConstraintAArgs {
    /// CSV of `vertex,value` rows such as `01,0.25`.
    #[arg(long)]
    vertices: PathBuf,
    #[arg(long, default_value = "-")]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct LemmaArgs {
    #[arg(long, default_value_t = 10_000)]
    cases: usize,
    #[arg(long, default_value = "-")]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BenchmarkArgs {
    /// JSON config; missing fields take defaults for its `d`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value = "-")]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ExperimentKind {
    /// KDE vs TPKDE RMSE study (CSV).
    ErrorStudy,
    /// Both counterexample reproductions (JSON).
    Counterexamples,
    /// Vertex sum condition on MTP2 Gaussian weights (JSON).
    ConstraintSearch,
    /// MTP2 covariances whose sum is not MTP2 (JSON).
    ConvolutionSearch,
}

#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: ExperimentKind,
    /// JSON config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value = "-")]
    output: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.globals.threads > 0 {
        // Fails only if the pool already exists, e.g. on a second call in one process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.globals.threads)
            .build_global();
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("tpkde: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MemoryCap { .. } => EXIT_MEMORY_CAP,
        _ => EXIT_ERROR,
    }
}

type CmdResult = tpkde::Result<i32>;

fn execute(cli: &Cli) -> CmdResult {
    let g = &cli.globals;
    if !(g.tol.is_finite() && g.tol >= 0.0) {
        return Err(Error::Precondition(format!("--tol must be finite and >= 0, got {}", g.tol)));
    }
    match &cli.command {
        Command::Closure(a) => cmd_closure(g, a),
        Command::Estimate(a) => cmd_estimate(g, a),
        Command::Check { kind } => match kind {
            CheckKind::Mtp2(a) => cmd_check_mtp2(g, a),
            CheckKind::ConstraintA(a) => cmd_check_constraint_a(g, a),
            CheckKind::Lemmas(a) => cmd_check_lemmas(g, a),
        },
        Command::Benchmark(a) => cmd_benchmark(g, a),
        Command::Experiment(a) => cmd_experiment(g, a),
    }
}

fn is_std(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn open_input(path: &Path) -> tpkde::Result<Box<dyn Read>> {
    if is_std(path) {
        Ok(Box::new(io::stdin().lock()))
    } else {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

fn open_output(path: &Path) -> tpkde::Result<Box<dyn Write>> {
    if is_std(path) {
        Ok(Box::new(io::stdout().lock()))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn write_manifest<C: Serialize, S: Serialize>(
    g: &Globals,
    output: &Path,
    command: &str,
    config: &C,
    seed: u64,
    summary: &S,
) -> tpkde::Result<()> {
    let manifest = RunManifest::new(command, &json!({ "globals": g, "command": config }), seed, summary);
    let target = match &g.manifest {
        Some(p) => Some(p.clone()),
        None if is_std(output) => None,
        None => {
            let mut name = output.as_os_str().to_owned();
            name.push(".manifest.json");
            Some(PathBuf::from(name))
        }
    };
    match target {
        Some(p) if !is_std(&p) => {
            let mut f = BufWriter::new(File::create(p)?);
            serde_json::to_writer_pretty(&mut f, &manifest)?;
            writeln!(f)?;
            f.flush()?;
        }
        _ => eprintln!("{}", serde_json::to_string(&manifest)?),
    }
    Ok(())
}

fn closure_config(g: &Globals) -> ClosureConfig {
    ClosureConfig {
        mem_cap_bits: g.mem_cap_bits,
    }
}

fn cmd_closure(g: &Globals, a: &ClosureArgs) -> CmdResult {
    let x = read_points_csv(open_input(&a.input)?)?;
    let started = Instant::now();
    let closure = a.engine.run(&x, &closure_config(g))?;
    let elapsed = started.elapsed().as_secs_f64();
    let mut out = open_output(&a.output)?;
    write_points_csv(&mut out, x.dims(), &closure.set)?;
    out.flush()?;
    let summary = json!({
        "n": closure.stats.n,
        "m": closure.stats.m,
        "sweeps": closure.stats.sweeps,
        "elapsed_secs": elapsed,
    });
    write_manifest(g, &a.output, "closure", a, g.seed, &summary)?;
    Ok(EXIT_OK)
}

struct Fitted {
    mixture: IsotropicMixture,
    bandwidth: f64,
    closure_size: Option<usize>,
}

fn fit(g: &Globals, m: &MixtureArgs) -> tpkde::Result<Fitted> {
    let path = m
        .sample
        .as_ref()
        .ok_or_else(|| Error::Precondition("a sample file (--sample) is required".into()))?;
    let x = read_points_csv(open_input(path)?)?;
    let h = match m.bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(&x)?,
        Bandwidth::Fixed(h) => h,
    };
    Ok(match m.method {
        Method::Kde => Fitted {
            mixture: kde_build(&x, h)?,
            bandwidth: h,
            closure_size: None,
        },
        Method::Tpkde => {
            let (mixture, closure) = tpkde_build_with_closure(&x, h, m.engine, &closure_config(g))?;
            Fitted {
                mixture,
                bandwidth: h,
                closure_size: Some(closure.stats.m),
            }
        }
    })
}

fn cmd_estimate(g: &Globals, a: &EstimateArgs) -> CmdResult {
    let fitted = fit(g, &a.mixture)?;
    let points = read_point_list_csv(open_input(&a.eval)?)?;
    let mix = &fitted.mixture;
    if let Some(p) = points.iter().find(|p| p.dims() != mix.centers().dims()) {
        return Err(Error::DimensionMismatch {
            expected: mix.centers().dims(),
            found: p.dims(),
        });
    }
    let values = mix.evaluate_batch(&points)?;
    let rows: Vec<_> = points.into_iter().zip(values).collect();
    let mut out = open_output(&a.output)?;
    write_values_csv(&mut out, mix.centers().dims(), "density", &rows)?;
    out.flush()?;
    if let Some(path) = &a.save_mixture {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut f, &mix.to_file())?;
        f.flush()?;
    }
    let summary = json!({
        "bandwidth": fitted.bandwidth,
        "components": mix.len(),
        "closure_size": fitted.closure_size,
        "points": rows.len(),
    });
    write_manifest(g, &a.output, "estimate", a, g.seed, &summary)?;
    Ok(EXIT_OK)
}

fn write_json_lines<W: Write, T: Serialize>(mut out: W, items: impl IntoIterator<Item = T>) -> tpkde::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_check_mtp2(g: &Globals, a: &Mtp2Args) -> CmdResult {
    let mix = match &a.mixture {
        Some(p) => {
            let file: MixtureFile = serde_json::from_reader(open_input(p)?)?;
            IsotropicMixture::from_file(file)?
        }
        None => fit(g, &a.build)?.mixture,
    };
    let pairs = match &a.pairs {
        Some(p) => read_pairs_csv(open_input(p)?)?,
        None => tpkde::experiments::random_evaluation_pairs(
            mix.centers(),
            a.random_pairs,
            a.spread * mix.bandwidth(),
            &mut seeded(g.seed, stream_id([5, 0, 0, 0])),
        )?,
    };
    let violations: Vec<ViolationReport> = mtp2_check(&mix, &pairs, g.tol)?;
    write_json_lines(open_output(&a.output)?, &violations)?;
    let summary = json!({ "pairs": pairs.len(), "violations": violations.len() });
    write_manifest(g, &a.output, "check mtp2", a, g.seed, &summary)?;
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn cmd_check_constraint_a(g: &Globals, a: &ConstraintAArgs) -> CmdResult {
    let cube = read_hypercube_csv(open_input(&a.vertices)?)?;
    let outcome = constraint_a_check(&cube, g.tol)?;
    write_json_lines(open_output(&a.output)?, outcome.violations())?;
    let summary = json!({
        "dims": cube.dims(),
        "holds": outcome.holds,
        "pairs": outcome.pairs.len(),
        "cross_validated": outcome.cross_validated,
        "min_margin": outcome.pairs.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
    });
    write_manifest(g, &a.output, "check constraint-a", a, g.seed, &summary)?;
    Ok(if outcome.holds { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn cmd_check_lemmas(g: &Globals, a: &LemmaArgs) -> CmdResult {
    let report = run_lemma_suites(a.cases, g.seed)?;
    let mut out = open_output(&a.output)?;
    serde_json::to_writer(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    let summary = json!({
        "cases": report.cases,
        "complement_failures": report.complement_failures.len(),
        "exponential_failures": report.exponential_failures.len(),
    });
    write_manifest(g, &a.output, "check lemmas", a, g.seed, &summary)?;
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn read_config(path: &Option<PathBuf>) -> tpkde::Result<serde_json::Map<String, serde_json::Value>> {
    match path {
        None => Ok(Default::default()),
        Some(p) => match serde_json::from_reader(open_input(p)?)? {
            serde_json::Value::Object(m) => Ok(m),
            _ => Err(Error::Parse("config must be a JSON object".into())),
        },
    }
}

/// Overlays the fields present in `file` onto `defaults`.
fn merge<T: Serialize + for<'de> Deserialize<'de>>(
    defaults: T,
    file: serde_json::Map<String, serde_json::Value>,
) -> tpkde::Result<T> {
    let mut base = match serde_json::to_value(defaults)? {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("configs serialize to objects"),
    };
    for (k, v) in file {
        if !base.contains_key(&k) {
            return Err(Error::Parse(format!("unknown config field `{k}`")));
        }
        base.insert(k, v);
    }
    Ok(serde_json::from_value(serde_json::Value::Object(base))?)
}

/// `d` from `--d`, else the config file, else `fallback`.
fn resolve_d(flag: Option<usize>, file: &serde_json::Map<String, serde_json::Value>, fallback: usize) -> tpkde::Result<usize> {
    if let Some(d) = flag {
        return Ok(d);
    }
    match file.get("d") {
        None => Ok(fallback),
        Some(v) => v
            .as_u64()
            .map(|d| d as usize)
            .ok_or_else(|| Error::Parse(format!("config field `d` must be a non-negative integer, got {v}"))),
    }
}

fn cmd_benchmark(g: &Globals, a: &BenchmarkArgs) -> CmdResult {
    let file = read_config(&a.config)?;
    let d = resolve_d(a.d, &file, 2)?;
    let mut defaults = BenchmarkConfig::default_for(d, g.seed);
    defaults.mem_cap_bits = g.mem_cap_bits;
    let mut config: BenchmarkConfig = merge(defaults, file)?;
    config.d = d;
    let records = run_closure_benchmark(&config)?;
    write_records_csv(open_output(&a.output)?, &records)?;
    let summary = json!({ "grid_speedups": grid_speedups(&records) });
    write_manifest(g, &a.output, "benchmark", &config, config.seed, &summary)?;
    Ok(EXIT_OK)
}

#[derive(Serialize, Deserialize)]
struct ConvolutionSearchConfig {
    d: usize,
    trials: usize,
    seed: u64,
}

fn cmd_experiment(g: &Globals, a: &ExperimentArgs) -> CmdResult {
    let file = read_config(&a.config)?;
    match a.kind {
        ExperimentKind::ErrorStudy => {
            let d = resolve_d(a.d, &file, 2)?;
            let mut defaults = ErrorStudyConfig::default_for(d, g.seed);
            defaults.mem_cap_bits = g.mem_cap_bits;
            let mut config: ErrorStudyConfig = merge(defaults, file)?;
            config.d = d;
            let records = run_error_study(&config)?;
            write_records_csv(open_output(&a.output)?, &records)?;
            let summary = summarize_error_study(d, &records);
            eprintln!(
                "error study d={d}: median-RMSE inversions KDE {} TPKDE {}; TPKDE <= KDE in {:.1}% of cells",
                summary.kde_inversions,
                summary.tpkde_inversions,
                100.0 * summary.tpkde_win_fraction
            );
            write_manifest(g, &a.output, "experiment error-study", &config, config.seed, &summary)?;
            Ok(EXIT_OK)
        }
        ExperimentKind::Counterexamples => {
            let report = json!({
                "kde_two_point": reproduce_kde_counterexample()?,
                "anisotropic_convolution": reproduce_convolution_counterexample()?,
            });
            let mut out = open_output(&a.output)?;
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
            out.flush()?;
            write_manifest(g, &a.output, "experiment counterexamples", &json!({}), g.seed, &json!({}))?;
            Ok(EXIT_OK)
        }
        ExperimentKind::ConstraintSearch => {
            let d = resolve_d(a.d, &file, 3)?;
            let defaults = ConjectureSearchConfig {
                d,
                trials: 1000,
                seed: g.seed,
                tol: g.tol,
            };
            let mut config: ConjectureSearchConfig = merge(defaults, file)?;
            config.d = d;
            let report = run_constraint_a_search(&config)?;
            let mut out = open_output(&a.output)?;
            serde_json::to_writer(&mut out, &report)?;
            writeln!(out)?;
            out.flush()?;
            let summary = json!({ "violations": report.violations.len(), "min_margin": report.min_margin });
            write_manifest(g, &a.output, "experiment constraint-search", &config, config.seed, &summary)?;
            Ok(if report.violations.is_empty() { EXIT_OK } else { EXIT_VIOLATIONS })
        }
        ExperimentKind::ConvolutionSearch => {
            let d = resolve_d(a.d, &file, 3)?;
            let defaults = ConvolutionSearchConfig {
                d,
                trials: 10_000,
                seed: g.seed,
            };
            let mut config: ConvolutionSearchConfig = merge(defaults, file)?;
            config.d = d;
            let witness = convolution_closure_search(
                config.d,
                config.trials,
                &mut seeded(config.seed, stream_id([6, 0, 0, 0])),
            )?;
            let mut out = open_output(&a.output)?;
            serde_json::to_writer(&mut out, &json!({ "witness": witness }))?;
            writeln!(out)?;
            out.flush()?;
            let summary = json!({ "found": witness.is_some() });
            write_manifest(g, &a.output, "experiment convolution-search", &config, config.seed, &summary)?;
            Ok(EXIT_OK)
        }
    }
}
