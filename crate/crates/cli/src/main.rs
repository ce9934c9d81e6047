mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use algstab::lifter::{stabilize, LiftOptions};
use algstab::mat::io::{read_any, write_binary};
use algstab::nilpotent::{build_chain, truncate_to_nilpotent, ChainOptions};
use algstab::normest::{estimate_norm, sample_representation, NcPoly, SampleOptions};
use algstab::seqmodel::{compact_correct, CalkinOptions, MatSeq};
use algstab::spectral::{default_stol, spectral_data};
use algstab::trials::{log_grid, stability_curve, CurveConfig};
use algstab::{Error, Mat, Polynomial, Result};

use output::{Format, Output};

#[derive(Parser, Serialize)]
#[command(name = "algstab", version, about = "Stabilize matrices approximately annihilated by a polynomial")]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    // output does not depend on the pool size, so it is left out of reports
    #[serde(skip)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Stabilize one matrix and print the report.
    Stabilize(StabilizeArgs),
    /// Sweep the noise level over a log grid and record distances.
    Curve(CurveArgs),
    /// Correct a matrix sequence term by term.
    Calkin(CalkinArgs),
    /// Lower-bound a universal norm by sampling exact solutions.
    Normest(NormestArgs),
    /// Draw one exact solution.
    Sample(SampleArgs),
    /// Dump spectral idempotents, metric and projections.
    Spectral(SpectralArgs),
    /// Dump the nilpotent chain and truncation of a matrix.
    Chain(ChainArgs),
}

#[derive(Args, Serialize, Clone)]
struct Common {
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the generation timestamp so reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args, Serialize, Clone)]
struct Tolerances {
    #[arg(long)]
    stol: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    captol: f64,
    /// Skip basin checks and construct a solution anyway.
    #[arg(long)]
    force: bool,
}

impl Tolerances {
    fn lift_options(&self) -> Result<LiftOptions> {
        positive("stol", self.stol)?;
        positive("tau", self.tau)?;
        positive("captol", Some(self.captol))?;
        Ok(LiftOptions {
            stol: self.stol,
            tau: self.tau,
            captol: self.captol,
            force: self.force,
            ..LiftOptions::default()
        })
    }
}

#[derive(Args, Serialize)]
struct StabilizeArgs {
    /// Polynomial as inline JSON or a path to a JSON file.
    #[arg(long)]
    poly: String,
    /// Input matrix (JSON or binary container).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "C", default_value_t = 1.0)]
    bound: f64,
    #[command(flatten)]
    tol: Tolerances,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct CurveArgs {
    #[arg(long)]
    poly: String,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Noise range `lo..hi`.
    #[arg(long, value_parser = parse_range, default_value = "1e-6..1e-1")]
    eps: (f64, f64),
    /// Grid points (default: one per decade).
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "C", default_value_t = 1.0)]
    bound: f64,
    #[command(flatten)]
    tol: Tolerances,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct CalkinArgs {
    #[arg(long)]
    poly: String,
    /// Sequence container `{"terms": [...], "tail_model": ...}`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    seqtol: f64,
    #[command(flatten)]
    tol: Tolerances,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct NormestArgs {
    #[arg(long)]
    poly: String,
    /// Noncommutative polynomial in `x` and `x*`, e.g. `x + x*`.
    #[arg(long)]
    q: String,
    /// Dimensions as `lo..hi` (inclusive) or a comma list.
    #[arg(long, value_parser = parse_dims, default_value = "2..8")]
    dims: DimList,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "C", default_value_t = 1.0)]
    bound: f64,
    #[arg(long, default_value_t = 10.0)]
    max_cond: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct SampleArgs {
    #[arg(long)]
    poly: String,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "C", default_value_t = 1.0)]
    bound: f64,
    #[arg(long, default_value_t = 10.0)]
    max_cond: f64,
    /// Write the matrix in the binary container instead of a JSON report.
    #[arg(long, requires = "out")]
    binary: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct SpectralArgs {
    #[arg(long)]
    poly: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    stol: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct ChainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Nilpotency order.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    common: Common,
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(Error::InvalidArgument(format!("--{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected `lo..hi`")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo > 0.0 && hi >= lo) {
        return Err("need 0 < lo <= hi".into());
    }
    Ok((lo, hi))
}

#[derive(Clone, Serialize)]
#[serde(transparent)]
struct DimList(Vec<usize>);

fn parse_dims(s: &str) -> std::result::Result<DimList, String> {
    let dims: Vec<usize> = if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|e| format!("{e}"))?;
        let hi: usize = hi.trim().parse().map_err(|e| format!("{e}"))?;
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|d| d.trim().parse().map_err(|e| format!("{e}")))
            .collect::<std::result::Result<_, _>>()?
    };
    if dims.is_empty() || dims.contains(&0) {
        return Err("dimensions must be positive".into());
    }
    Ok(DimList(dims))
}

fn load_poly(arg: &str) -> Result<Polynomial> {
    if arg.trim_start().starts_with('{') {
        Polynomial::from_json(arg)
    } else {
        Polynomial::from_json(&fs::read_to_string(arg)?)
    }
}

fn load_matrix(path: &Path) -> Result<Mat> {
    read_any(&fs::read(path)?)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidArgument("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let config = serde_json::to_value(cli)?;
    match &cli.command {
        Command::Stabilize(a) => {
            let p = load_poly(&a.poly)?;
            let x = load_matrix(&a.input)?;
            let report = stabilize(&x, &p, a.bound, &a.tol.lift_options()?)?;
            let out = Output::new(&a.common, config);
            match a.format {
                Format::Json => out.json(&report),
                Format::Csv => out.csv(&[output::ReportRow::from(&report)], None),
            }
        }
        Command::Curve(a) => {
            let p = load_poly(&a.poly)?;
            let (lo, hi) = a.eps;
            let points = a.points.unwrap_or_else(|| ((hi / lo).log10().round() as usize) + 1);
            let cfg = CurveConfig {
                dim: a.dim,
                etas: log_grid(lo, hi, points)?,
                trials: a.trials,
                seed: a.seed,
                bound: a.bound,
            };
            let rows = stability_curve(&p, &cfg, &a.tol.lift_options()?)?;
            let out = Output::new(&a.common, config);
            match a.format {
                Format::Json => out.json(&rows),
                Format::Csv => out.csv(&rows, None),
            }
        }
        Command::Calkin(a) => {
            let p = load_poly(&a.poly)?;
            let seq = MatSeq::from_json(&fs::read_to_string(&a.input)?)?;
            positive("seqtol", Some(a.seqtol))?;
            let opts = CalkinOptions {
                lift: a.tol.lift_options()?,
                window: a.window,
                seqtol: a.seqtol,
                basin_threshold: None,
            };
            let result = compact_correct(&seq, &p, &opts)?;
            let out = Output::new(&a.common, config);
            match a.format {
                Format::Json => out.json(&result.report),
                Format::Csv => {
                    let mut summary = serde_json::to_value(&result.report)?;
                    if let Some(o) = summary.as_object_mut() {
                        o.remove("rows");
                    }
                    out.csv(&result.report.rows, Some(summary))
                }
            }
        }
        Command::Normest(a) => {
            let p = load_poly(&a.poly)?;
            let q: NcPoly = a.q.parse()?;
            let opts = SampleOptions {
                norm_bound: a.bound,
                max_similarity_cond: a.max_cond,
            };
            let est = estimate_norm(&q, &p, &a.dims.0, a.trials, a.seed, &opts)?;
            let out = Output::new(&a.common, config);
            match a.format {
                Format::Json => out.json(&est),
                Format::Csv => out.csv(
                    &est.table,
                    Some(serde_json::json!({
                        "lower_bound": est.lower_bound,
                        "upper_bound": est.upper_bound,
                    })),
                ),
            }
        }
        Command::Sample(a) => {
            let p = load_poly(&a.poly)?;
            let opts = SampleOptions {
                norm_bound: a.bound,
                max_similarity_cond: a.max_cond,
            };
            let sample = sample_representation(&p, a.dim, a.seed, &opts)?;
            match (&a.common.out, a.binary) {
                (Some(path), true) => write_binary(fs::File::create(path)?, &sample.x),
                _ => Output::new(&a.common, config).json(&sample),
            }
        }
        Command::Spectral(a) => {
            let p = load_poly(&a.poly)?;
            let x = load_matrix(&a.input)?;
            positive("stol", a.stol)?;
            let sd = spectral_data(&x, &p, a.stol.unwrap_or_else(|| default_stol(x.nrows())))?;
            Output::new(&a.common, config).json(&sd)
        }
        Command::Chain(a) => {
            let x = load_matrix(&a.input)?;
            positive("tau", a.tau)?;
            let opts = ChainOptions {
                tau: a.tau,
                ..ChainOptions::default()
            };
            let chain = build_chain(&x, a.k, &opts)?;
            let truncated = truncate_to_nilpotent(&x, &chain)?;
            Output::new(&a.common, config).json(&output::ChainDump::new(chain, truncated, &x))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ALGSTAB_LOG", "warn")).init();
    // clap exits with 2 on usage errors, which is reserved for refusals here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe downstream (`| head`) is not a failure
        Err(algstab::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_refusal() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
