//! The `deepicm` command-line tool: `fit`, `predict`, `design` and `bench`.
//!
//! [`run`] parses arguments, dispatches, reports errors on stderr and returns
//! the process exit code (0 success, 2 usage error, 3 data error, 4 numerical
//! failure).

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use crate::acquisition::{
    design_loop, suggest_next, AcquisitionConfig, DesignLoopConfig, StepRecord, Strategy, SurrogateKind,
};
use crate::bench::{evaluate_benchmark, Benchmark};
use crate::bundle;
use crate::data::{fmt_f64, numbered_header, read_csv, write_csv, Dataset, Table};
use crate::doe::{grid, maximin_lhd, rescale, DEFAULT_LHD_ITERS};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, DEFAULT_JITTER};
use crate::metrics::{self, MetricReport};
use crate::predict::{predict, LatentMapping, PredictConfig, Prediction};
use crate::sampler::{run_chain, Chain, Layers, ModelSpec, SamplerConfig};

/// Offset mixed into the seed of benchmark test designs so they differ from training designs.
const TEST_DESIGN_SALT: u64 = 0x7E57_DE51_6E00_0001;

#[derive(Debug, Parser)]
#[command(name = "deepicm", version, about = "Deep ICM Gaussian-process surrogates for multi-output computer experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a chain to CSV data and save it as a bundle directory.
    Fit(FitArgs),
    /// Predict from a saved bundle; optionally score against the truth.
    Predict(PredictArgs),
    /// Sequential design by ALC (or random) acquisition.
    Design(DesignArgs),
    /// Repeated fit/predict/score runs on a benchmark function.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total MCMC iterations.
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 2)]
    pub thin: usize,
    /// 2 for the deep model, 1 for the shallow ICM.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Width of the latent layer (default max(d, Q)).
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_JITTER)]
    pub jitter: f64,
    /// Output path (file or directory, depending on the command).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report zero wall-clock times so artifacts are byte-reproducible.
    #[arg(long)]
    pub no_clock: bool,
}

impl CommonArgs {
    fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.iters,
            burn_in: self.burnin,
            thinning: self.thin,
            seed: self.seed,
            jitter: self.jitter,
            ..SamplerConfig::default()
        }
    }

    fn model(&self) -> Result<ModelSpec> {
        Ok(ModelSpec {
            layers: Layers::from_count(self.layers)?,
            latent_dim: self.latent_dim,
            ..ModelSpec::default()
        })
    }

    fn out(&self, what: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config(format!("--out is required ({what})")))
    }

    fn seconds(&self, started: Instant) -> f64 {
        if self.no_clock {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input CSV (n rows, d columns).
    #[arg(long)]
    pub x: PathBuf,
    /// Output CSV (n rows, Q columns).
    #[arg(long)]
    pub y: PathBuf,
    /// Natural input domain as `lo:hi,lo:hi,...` (default: data range).
    #[arg(long)]
    pub bounds: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MappingArg {
    Sample,
    Mean,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Bundle directory written by `fit`.
    #[arg(long)]
    pub chain: PathBuf,
    /// Test inputs CSV.
    #[arg(long)]
    pub x: PathBuf,
    /// True outputs at the test inputs; enables metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Metrics JSON path (default: the prediction path with a `.json` extension).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MappingArg::Sample)]
    pub latent_mapping: MappingArg,
    /// Draw latent points from Student-t instead of Gaussian conditionals.
    #[arg(long)]
    pub student_t: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AcqArg {
    Alc,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Deep,
    Shallow,
    Indep,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Initial inputs CSV (with --y); otherwise a maximin LHD of --n0 points on the benchmark domain.
    #[arg(long, requires = "y")]
    pub x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    pub y: Option<PathBuf>,
    /// Benchmark used as the simulator in the closed loop.
    #[arg(long = "fn")]
    pub function: Option<String>,
    /// Initial design size when no data is given (default: the benchmark's training size).
    #[arg(long)]
    pub n0: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Points per dimension of the candidate/reference grid.
    #[arg(long, default_value_t = 20)]
    pub grid: usize,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AcqArg::Alc)]
    pub acq: AcqArg,
    /// Surrogate (default follows --layers).
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Score candidates by direct augmented solves instead of the rank-one update.
    #[arg(long)]
    pub no_fast_update: bool,
    #[arg(long, requires = "test_y")]
    pub test_x: Option<PathBuf>,
    #[arg(long, requires = "test_x")]
    pub test_y: Option<PathBuf>,
    /// Size of a maximin LHD test set on the benchmark domain.
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Natural input domain as `lo:hi,lo:hi,...` (default: benchmark domain or data range).
    #[arg(long)]
    pub bounds: Option<String>,
    /// Fit once, write the next point to `next.csv` and stop.
    #[arg(long)]
    pub suggest_only: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "fn")]
    pub function: String,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Training size (default: the benchmark's table value).
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Test size (default: the benchmark's table value).
    #[arg(long)]
    pub n_test: Option<usize>,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Design(a) => cmd_design(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `lo:hi,lo:hi,...`.
pub fn parse_bounds(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|pair| {
            let (lo, hi) = pair
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bound `{pair}` is not of the form lo:hi")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bound `{pair}` is not numeric")))
            };
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if !(lo < hi) {
                return Err(Error::Config(format!("bound `{pair}` needs lo < hi")));
            }
            Ok((lo, hi))
        })
        .collect()
}

fn load_dataset(x: &Table, y: &Table, bounds: Option<&str>) -> Result<Dataset> {
    match bounds {
        Some(text) => {
            let bounds = parse_bounds(text)?;
            if bounds.len() != x.data.ncols() {
                return Err(Error::Shape(format!(
                    "{} bounds for {} input columns",
                    bounds.len(),
                    x.data.ncols()
                )));
            }
            Dataset::with_bounds(x.data.clone(), y.data.clone(), bounds)
        }
        None => Dataset::new(x.data.clone(), y.data.clone()),
    }
}

fn acceptance_summary(chain: &Chain) -> String {
    let a = &chain.acceptance;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
    format!(
        "samples={} accept_theta_w={} accept_theta_y={:.4} mean_ess_shrinks={} failed_evaluations={}",
        chain.len(),
        opt(a.theta_w),
        a.theta_y,
        opt(a.mean_ess_shrinks),
        a.failed_evaluations
    )
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let out = args.common.out("bundle directory")?;
    let (x, y) = (read_csv(&args.x)?, read_csv(&args.y)?);
    let data = load_dataset(&x, &y, args.bounds.as_deref())?;
    let chain = run_chain(&data, &args.common.sampler(), &args.common.model()?)?;
    bundle::save(&chain, &data, out)?;
    println!("{}", acceptance_summary(&chain));
    Ok(())
}

/// Header of the prediction CSV: means, variances, then the upper covariance triangle.
pub fn prediction_header(q: usize) -> Vec<String> {
    let mut header = numbered_header("mean_", q);
    header.extend(numbered_header("var_", q));
    for a in 1..=q {
        for b in a + 1..=q {
            header.push(format!("cov_{a}{b}"));
        }
    }
    header
}

/// One row per test point in the layout of [`prediction_header`].
pub fn prediction_table(pred: &Prediction, q: usize) -> Matrix {
    let width = prediction_header(q).len();
    let mut table = Matrix::zeros(pred.len(), width);
    for i in 0..pred.len() {
        let mut col = 0;
        for a in 0..q {
            table[(i, col)] = pred.mean[(i, a)];
            col += 1;
        }
        for a in 0..q {
            table[(i, col)] = pred.cov[i][(a, a)];
            col += 1;
        }
        for a in 0..q {
            for b in a + 1..q {
                table[(i, col)] = pred.cov[i][(a, b)];
                col += 1;
            }
        }
    }
    table
}

fn json_number(v: f64) -> Value {
    // Non-finite values (e.g. an unscorable median) become `null`.
    Value::from(v)
}

/// Flat JSON object: `rmse_1..rmse_Q`, `crps_1..crps_Q`, `mv_score`, then `extra`.
pub fn metrics_json(report: &MetricReport, extra: &[(&str, Value)]) -> String {
    let mut obj = Map::new();
    for (k, v) in report.rmse.iter().enumerate() {
        obj.insert(format!("rmse_{}", k + 1), json_number(*v));
    }
    for (k, v) in report.crps.iter().enumerate() {
        obj.insert(format!("crps_{}", k + 1), json_number(*v));
    }
    obj.insert("mv_score".into(), json_number(report.mv_score));
    for (k, v) in extra {
        obj.insert((*k).to_string(), v.clone());
    }
    Value::Object(obj).to_string()
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let out = args.common.out("prediction CSV")?;
    let loaded = bundle::load(&args.chain)?;
    let x = read_csv(&args.x)?;
    if x.data.ncols() != loaded.data.d() {
        return Err(Error::Shape(format!(
            "bundle was fitted on {} inputs but the test CSV has {} columns",
            loaded.data.d(),
            x.data.ncols()
        )));
    }
    let config = PredictConfig {
        seed: args.common.seed,
        latent_mapping: match args.latent_mapping {
            MappingArg::Sample => LatentMapping::Sample,
            MappingArg::Mean => LatentMapping::Mean,
        },
        student_t: args.student_t,
    };
    let started = Instant::now();
    let pred = predict(&loaded.chain, &x.data, &loaded.data, &config)?;
    let seconds = args.common.seconds(started);
    let q = loaded.data.q();
    write_csv(out, &prediction_header(q), &prediction_table(&pred, q))?;

    if let Some(truth_path) = &args.truth {
        let truth = read_csv(truth_path)?;
        let report = metrics::evaluate(&pred, &truth.data, seconds)?;
        let path = args.metrics.clone().unwrap_or_else(|| out.with_extension("json"));
        let extra = [
            ("skipped_points", Value::from(report.skipped_points)),
            ("seconds", json_number(seconds)),
            ("seed", Value::from(args.common.seed)),
        ];
        fs::write(path, metrics_json(&report, &extra) + "\n")?;
    }
    Ok(())
}

fn unit_grid_on(points_per_dim: usize, bounds: &[(f64, f64)]) -> Result<Matrix> {
    let design = grid(points_per_dim, bounds.len())?;
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    rescale(&design, &lower, &upper)
}

fn lhd_on(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Matrix> {
    let design = maximin_lhd(n, bounds.len(), DEFAULT_LHD_ITERS, seed)?;
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    rescale(&design, &lower, &upper)
}

fn steps_header(d: usize, q: usize, with_metrics: bool) -> String {
    let mut cols = vec!["step".to_string()];
    cols.extend(numbered_header("x", d));
    cols.extend(numbered_header("y", q));
    cols.extend(["score", "seconds", "random"].map(String::from));
    if with_metrics {
        cols.extend(numbered_header("rmse_", q));
        cols.extend(numbered_header("crps_", q));
        cols.push("mv_score".into());
    }
    cols.join(",")
}

fn steps_row(record: &StepRecord, random: bool, no_clock: bool) -> String {
    let seconds = if no_clock { 0.0 } else { record.seconds };
    let mut fields = vec![record.step.to_string()];
    fields.extend(record.point.iter().chain(&record.output).map(|v| fmt_f64(*v)));
    fields.push(fmt_f64(record.score));
    fields.push(fmt_f64(seconds));
    fields.push(u8::from(random).to_string());
    if let Some(m) = &record.metrics {
        fields.extend(m.rmse.iter().chain(&m.crps).map(|v| fmt_f64(*v)));
        fields.push(fmt_f64(m.mv_score));
    }
    fields.join(",")
}

fn write_design(dir: &Path, data: &Dataset, x_header: &[String], y_header: &[String]) -> Result<()> {
    write_csv(&dir.join("x.csv"), x_header, data.x())?;
    write_csv(&dir.join("y.csv"), y_header, data.y())
}

fn cmd_design(args: &DesignArgs) -> Result<()> {
    let common = &args.common;
    let out = common.out("output directory")?;
    let bench = args.function.as_deref().map(str::parse::<Benchmark>).transpose()?;
    let mut bounds = match &args.bounds {
        Some(text) => Some(parse_bounds(text)?),
        None => bench.map(|b| b.spec().domain),
    };

    let (x_table, y_table) = match (&args.x, &args.y) {
        (Some(x), Some(y)) => (read_csv(x)?, read_csv(y)?),
        _ => {
            let b = bench.ok_or_else(|| Error::Config("either --x/--y or --fn is required".into()))?;
            let spec = b.spec();
            let n0 = args.n0.unwrap_or(spec.default_n_train);
            let x = lhd_on(n0, &spec.domain, common.seed)?;
            let y = evaluate_benchmark(b, &x)?;
            (
                Table {
                    header: numbered_header("x", spec.d),
                    data: x,
                },
                Table {
                    header: numbered_header("y", spec.q),
                    data: y,
                },
            )
        }
    };
    let data = match bounds.take() {
        Some(b) => {
            if b.len() != x_table.data.ncols() {
                return Err(Error::Shape(format!(
                    "{} bounds for {} input columns",
                    b.len(),
                    x_table.data.ncols()
                )));
            }
            Dataset::with_bounds(x_table.data.clone(), y_table.data.clone(), b)?
        }
        None => Dataset::new(x_table.data.clone(), y_table.data.clone())?,
    };
    let (d, q) = (data.d(), data.q());

    let candidates = match &args.candidates {
        Some(path) => read_csv(path)?.data,
        None => unit_grid_on(args.grid, data.x_bounds())?,
    };
    let reference = match &args.reference {
        Some(path) => read_csv(path)?.data,
        None => candidates.clone(),
    };
    let model = match args.model {
        Some(ModelArg::Deep) => SurrogateKind::Deep,
        Some(ModelArg::Shallow) => SurrogateKind::Shallow,
        Some(ModelArg::Indep) => SurrogateKind::Indep,
        None => match Layers::from_count(common.layers)? {
            Layers::Deep => SurrogateKind::Deep,
            Layers::Shallow => SurrogateKind::Shallow,
        },
    };
    let strategy = match args.acq {
        AcqArg::Alc => Strategy::Alc,
        AcqArg::Random => Strategy::Random,
    };
    let config = DesignLoopConfig {
        steps: args.steps,
        sampler: common.sampler(),
        model,
        latent_dim: common.latent_dim,
        strategy,
        acquisition: AcquisitionConfig {
            use_fast_update: !args.no_fast_update,
            ..AcquisitionConfig::new(candidates, reference)
        },
        seed: common.seed,
    };
    config.sampler.validate()?;
    config.acquisition.validate(d)?;

    fs::create_dir_all(out)?;
    if args.suggest_only {
        let (point, score) = suggest_next(&data, &config)?;
        let mut header = x_table.header.clone();
        header.push("score".into());
        let mut row = point;
        row.push(score);
        return write_csv(&out.join("next.csv"), &header, &Matrix::from_row_slice(1, row.len(), &row));
    }

    let test = match (&args.test_x, &args.test_y, args.n_test) {
        (Some(tx), Some(ty), _) => Some((read_csv(tx)?.data, read_csv(ty)?.data)),
        (_, _, Some(m)) => {
            let b = bench.ok_or_else(|| Error::Config("--n-test needs --fn".into()))?;
            let x = lhd_on(m, &b.spec().domain, common.seed ^ TEST_DESIGN_SALT)?;
            let y = evaluate_benchmark(b, &x)?;
            Some((x, y))
        }
        _ => None,
    };

    write_design(out, &data, &x_table.header, &y_table.header)?;
    let steps_path = out.join("steps.csv");
    fs::write(&steps_path, steps_header(d, q, test.is_some()) + "\n")?;
    if args.steps == 0 {
        return Ok(());
    }
    let b = bench.ok_or_else(|| {
        Error::Config("closed-loop design needs a simulator: pass --fn, or use --suggest-only".into())
    })?;
    let simulator = |x: &[f64]| -> Result<Vec<f64>> {
        let y = evaluate_benchmark(b, &Matrix::from_row_slice(1, x.len(), x))?;
        Ok(y.row(0).iter().copied().collect())
    };
    let random = strategy == Strategy::Random;
    let test_ref = test.as_ref().map(|(x, y)| (x, y));
    design_loop(simulator, &data, &config, test_ref, |current, record| {
        write_design(out, current, &x_table.header, &y_table.header)?;
        let mut file = fs::OpenOptions::new().append(true).open(&steps_path)?;
        writeln!(file, "{}", steps_row(record, random, common.no_clock))?;
        Ok(())
    })?;
    Ok(())
}

/// Error from one benchmark repetition, reported with its index.
fn in_rep(rep: usize, e: Error) -> Error {
    match e {
        Error::Shape(m) => Error::Shape(format!("rep {rep}: {m}")),
        Error::Domain(m) => Error::Domain(format!("rep {rep}: {m}")),
        Error::DegenerateLikelihood(m) => Error::DegenerateLikelihood(format!("rep {rep}: {m}")),
        Error::Data(m) => Error::Data(format!("rep {rep}: {m}")),
        Error::Config(m) => Error::Config(format!("rep {rep}: {m}")),
        Error::Simulator(m) => Error::Simulator(format!("rep {rep}: {m}")),
        Error::Sampler { iteration, source } => Error::Sampler {
            iteration,
            source: Box::new(in_rep(rep, *source)),
        },
        other => {
            eprintln!("rep {rep} failed");
            other
        }
    }
}

/// One benchmark repetition: fresh maximin training design, fit, predict, score.
fn bench_rep(
    b: Benchmark,
    args: &BenchArgs,
    seed: u64,
    test: &(Matrix, Matrix),
) -> Result<(MetricReport, f64)> {
    let spec = b.spec();
    let started = Instant::now();
    let n = args.n_train.unwrap_or(spec.default_n_train);
    let x = lhd_on(n, &spec.domain, seed)?;
    let y = evaluate_benchmark(b, &x)?;
    let data = Dataset::with_bounds(x, y, spec.domain.clone())?;
    let sampler = SamplerConfig {
        seed,
        ..args.common.sampler()
    };
    let chain = run_chain(&data, &sampler, &args.common.model()?)?;
    let config = PredictConfig {
        seed,
        ..PredictConfig::default()
    };
    let pred = predict(&chain, &test.0, &data, &config)?;
    let seconds = args.common.seconds(started);
    Ok((metrics::evaluate(&pred, &test.1, seconds)?, seconds))
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.reps == 0 {
        return Err(Error::Config("--reps must be at least 1".into()));
    }
    let b: Benchmark = args.function.parse()?;
    let spec = b.spec();
    let seed = args.common.seed;
    let m = args.n_test.unwrap_or(spec.default_n_test);
    let test_x = lhd_on(m, &spec.domain, seed ^ TEST_DESIGN_SALT)?;
    let test_y = evaluate_benchmark(b, &test_x)?;
    let test = (test_x, test_y);

    let mut sink: Box<dyn std::io::Write> = match &args.common.out {
        Some(path) => Box::new(std::io::BufWriter::new(fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for rep in 0..args.reps {
        let rep_seed = seed ^ rep as u64;
        let (report, seconds) = bench_rep(b, args, rep_seed, &test).map_err(|e| in_rep(rep, e))?;
        let extra = [("seconds", json_number(seconds)), ("seed", Value::from(rep_seed))];
        writeln!(sink, "{}", metrics_json(&report, &extra))?;
        sink.flush()?;
    }
    Ok(())
}
