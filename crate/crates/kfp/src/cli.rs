//! The `kfp` command line: `eval`, `solve`, `verify` and `info`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kfp_core::cauchy::{SolveConfig, SolvePlan};
use kfp_core::operator::{self, OperatorSpec};
use kfp_core::verify::{self, Suite, SuiteConfig, VerificationReport};
use kfp_core::{kernel, DVector};
use rayon::prelude::*;

use crate::cache::CovarianceCache;
use crate::datum::DatumFile;
use crate::exit::{CliError, CHECK_FAILED};
use crate::problem::ProblemFile;
use crate::table::{self, coordinate_names, Table};

#[derive(Debug, Parser)]
#[command(
    name = "kfp",
    version,
    about = "Fundamental solutions of Kolmogorov-Fokker-Planck operators"
)]
pub struct Cli {
    /// Master seed of every randomized check.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the kernel at points for one pole.
    Eval(EvalArgs),
    /// Solve the Cauchy problem for a datum.
    Solve(SolveArgs),
    /// Run verification suites.
    Verify(VerifyArgs),
    /// Print the block structure of a problem.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Pole as X1,...,XN@T0.
    #[arg(long, allow_hyphen_values = true)]
    pub pole: String,
    /// Point X1,...,XN@T; repeatable.
    #[arg(long = "at", allow_hyphen_values = true)]
    pub at: Vec<String>,
    /// CSV of points with header x1,...,xN,t.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Box grid LO:HI:COUNT per axis, comma separated; needs --times.
    #[arg(long, allow_hyphen_values = true, requires = "times")]
    pub grid: Option<String>,
    /// Comma-separated times for --grid.
    #[arg(long, allow_hyphen_values = true)]
    pub times: Option<String>,
    /// Add first and second derivatives in x and y.
    #[arg(long)]
    pub derivatives: bool,
    /// Add the log of the kernel.
    #[arg(long)]
    pub log: bool,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub datum: PathBuf,
    /// Time at which the datum is prescribed.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    /// Comma-separated output times.
    #[arg(long, allow_hyphen_values = true)]
    pub times: String,
    /// Box grid LO:HI:COUNT per axis, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Spatial point X1,...,XN; repeatable.
    #[arg(long = "at", allow_hyphen_values = true)]
    pub at: Vec<String>,
    #[arg(long, default_value_t = SolveConfig::default().hermite_order)]
    pub hermite_order: usize,
    /// Fraction of the raw horizon that may be used for growing data.
    #[arg(long, default_value_t = SolveConfig::default().horizon_safety)]
    pub safety: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value = "all", value_parser = clap::builder::PossibleValuesParser::new(Suite::NAMES))]
    pub suite: String,
    /// Samples per residual sweep.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub comparison_samples: Option<usize>,
    #[arg(long)]
    pub mc_paths: Option<u64>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long)]
    pub problem: PathBuf,
}

/// Runs the CLI on `args` (including the program name), writing results to
/// `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.stage.code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::parse("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::parse(format!("cannot start worker threads: {e}")))?;
    // Output is assembled inside the pool and written by the caller's thread.
    let (text, code) = pool.install(|| -> Result<(Vec<u8>, u8), CliError> {
        match &cli.command {
            Command::Eval(a) => Ok((emit(&cmd_eval(a)?, a.output.as_deref())?, 0)),
            Command::Solve(a) => Ok((emit(&cmd_solve(a)?, a.output.as_deref())?, 0)),
            Command::Verify(a) => cmd_verify(a, cli.seed).map(|(s, code)| (s.into_bytes(), code)),
            Command::Info(a) => Ok((cmd_info(&ProblemFile::read(&a.problem)?)?.into_bytes(), 0)),
        }
    })?;
    out.write_all(&text)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::parse(format!("cannot write output: {e}")))?;
    Ok(code)
}

/// The table as CSV bytes for stdout, or nothing if it went to `path`.
fn emit(table: &Table, path: Option<&Path>) -> Result<Vec<u8>, CliError> {
    match path {
        Some(p) => {
            let file =
                std::fs::File::create(p).map_err(|e| CliError::parse(format!("cannot create {}: {e}", p.display())))?;
            table.write_to(std::io::BufWriter::new(file))?;
            Ok(Vec::new())
        }
        None => Ok(table.to_csv().into_bytes()),
    }
}

fn load_spec(path: &Path) -> Result<OperatorSpec, CliError> {
    ProblemFile::read(path)?.to_spec()
}

fn parse_times(text: &str) -> Result<Vec<f64>, CliError> {
    table::parse_list(text, "--times")
}

/// Rows of `eval`: explicit points, then the points file, then the grid with
/// times outermost and the last axis fastest.
fn eval_points(a: &EvalArgs, n: usize) -> Result<Vec<(Vec<f64>, f64)>, CliError> {
    let mut points =
        a.at.iter()
            .map(|p| table::parse_point(p, n, "--at"))
            .collect::<Result<Vec<_>, _>>()?;
    if let Some(path) = &a.points {
        let file =
            std::fs::File::open(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
        points.extend(table::read_points(std::io::BufReader::new(file), n)?);
    }
    if let Some(g) = &a.grid {
        let grid = table::parse_grid(g, n)?;
        let times = parse_times(a.times.as_deref().unwrap_or_default())?;
        for &t in &times {
            points.extend(grid.points().into_iter().map(|x| (x, t)));
        }
    }
    if points.is_empty() {
        return Err(CliError::parse(
            "no evaluation points: give --at, --points or --grid with --times",
        ));
    }
    Ok(points)
}

fn eval_header(n: usize, a: &EvalArgs) -> Vec<String> {
    let mut h = coordinate_names("x", n);
    h.push("t".into());
    h.push("gamma".into());
    if a.log {
        h.push("log_gamma".into());
    }
    if a.derivatives {
        for var in ["x", "y"] {
            h.extend((1..=n).map(|i| format!("grad_{var}{i}")));
            for i in 1..=n {
                h.extend((i..=n).map(|j| format!("hess_{var}{i}_{var}{j}")));
            }
        }
        h.push("dt".into());
    }
    h
}

/// Upper triangle, row by row.
fn upper(m: &kfp_core::DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    let n = m.nrows();
    (0..n).flat_map(move |i| (i..n).map(move |j| m[(i, j)]))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Table, CliError> {
    let spec = load_spec(&a.problem)?;
    let n = spec.dim();
    let (x0, t0) = table::parse_point(&a.pole, n, "--pole")?;
    let points = eval_points(a, n)?;
    let header = eval_header(n, a);
    let width = header.len();
    let cache = CovarianceCache::new(&spec);
    let x0v = DVector::from_column_slice(&x0);

    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|(x, t)| -> Result<Vec<f64>, CliError> {
            let mut row = x.clone();
            row.push(*t);
            if *t <= t0 {
                // below the pole the kernel and all its derivatives vanish
                row.push(0.0);
                if a.log {
                    row.push(f64::NEG_INFINITY);
                }
                row.resize(width, 0.0);
                return Ok(row);
            }
            let bundle = cache.get(t0, *t)?;
            let xv = DVector::from_column_slice(x);
            let log_value = kernel::log_gamma_in(&bundle, &xv, &x0v);
            row.push(log_value.exp());
            if a.log {
                row.push(log_value);
            }
            if a.derivatives {
                let d = kernel::derivatives_in(&spec, &bundle, &xv, &x0v);
                row.extend(d.grad_x.iter());
                row.extend(upper(&d.hess_x));
                row.extend(d.grad_y.iter());
                row.extend(upper(&d.hess_y));
                row.push(d.dt);
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;

    let mut table = Table::new(header);
    for row in rows {
        table.push(row);
    }
    Ok(table)
}

pub fn cmd_solve(a: &SolveArgs) -> Result<Table, CliError> {
    let spec = load_spec(&a.problem)?;
    let n = spec.dim();
    let datum = DatumFile::read(&a.datum)?.to_datum(n)?;
    let cfg = SolveConfig {
        hermite_order: a.hermite_order,
        horizon_safety: a.safety,
    };
    let times = parse_times(&a.times)?;
    let mut xs =
        a.at.iter()
            .map(|p| {
                let x = table::parse_list(p, "--at")?;
                if x.len() == n {
                    Ok(x)
                } else {
                    Err(CliError::parse(format!(
                        "--at {p:?} has {} coordinates, N = {n}",
                        x.len()
                    )))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
    if let Some(g) = &a.grid {
        xs.extend(table::parse_grid(g, n)?.points());
    }
    if xs.is_empty() {
        return Err(CliError::parse("no solution points: give --grid or --at"));
    }

    let mut header = coordinate_names("x", n);
    header.extend(["t".to_string(), "u".to_string()]);
    let mut table = Table::new(header);
    for &t in &times {
        let plan = SolvePlan::new(&spec, &datum, a.t0, t, &cfg)?;
        let values: Vec<f64> = xs.par_iter().map(|x| plan.at(x)).collect::<Result<_, _>>()?;
        for (x, u) in xs.iter().zip(values) {
            let mut row = x.clone();
            row.extend([t, u]);
            table.push(row);
        }
    }
    Ok(table)
}

/// Runs the suites `suite` stands for in parallel and assembles one report in
/// their fixed order.
pub fn run_verification(spec: &OperatorSpec, suite: Suite, cfg: &SuiteConfig) -> Result<VerificationReport, CliError> {
    let parts: Vec<VerificationReport> = suite
        .expand()
        .into_par_iter()
        .map(|s| verify::run_suite(spec, s, cfg))
        .collect::<Result<_, _>>()?;
    let mut report = VerificationReport::empty(suite, cfg);
    for p in parts {
        report.checks.extend(p.checks);
        report.skipped.extend(p.skipped);
    }
    Ok(report)
}

fn summary(report: &VerificationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:>8} {:>12} {:>10}  status",
        "check", "samples", "worst", "tolerance"
    );
    for c in &report.checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{:<24} {:>8} {:>12.3e} {:>10.0e}  {status}",
            c.id, c.samples, c.worst, c.tolerance
        );
        if !c.passed && !c.worst_at.is_empty() {
            let _ = writeln!(s, "    worst at {:?}", c.worst_at);
        }
    }
    for skipped in &report.skipped {
        let _ = writeln!(s, "skipped: {skipped}");
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    let _ = writeln!(
        s,
        "suite {}: {passed}/{} checks passed (seed {})",
        report.suite,
        report.checks.len(),
        report.seed
    );
    s
}

/// 0 if every check passed, else [`CHECK_FAILED`].
pub fn verdict(report: &VerificationReport) -> u8 {
    if report.passed() {
        0
    } else {
        CHECK_FAILED
    }
}

/// Summary table and exit code of `verify`.
fn cmd_verify(a: &VerifyArgs, seed: u64) -> Result<(String, u8), CliError> {
    let spec = load_spec(&a.problem)?;
    let suite: Suite = a
        .suite
        .parse()
        .map_err(|_| CliError::parse(format!("unknown suite {:?}", a.suite)))?;
    let mut cfg = SuiteConfig {
        seed,
        ..SuiteConfig::default()
    };
    if let Some(v) = a.samples {
        cfg.samples = v;
    }
    if let Some(v) = a.comparison_samples {
        cfg.comparison_samples = v;
    }
    if let Some(v) = a.mc_paths {
        cfg.mc_paths = v;
    }
    let report = run_verification(&spec, suite, &cfg)?;
    if let Some(path) = &a.report {
        let mut text = serde_json::to_string_pretty(&report).expect("reports always serialize");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::parse(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok((summary(&report), verdict(&report)))
}

fn tuple<T: std::fmt::Display>(items: &[T]) -> String {
    let inner: Vec<String> = items.iter().map(|v| v.to_string()).collect();
    format!("({})", inner.join(","))
}

/// Structure summary. A drift that fails the block checks is reported, not
/// rejected, so the command can diagnose it; coefficient errors still fail.
pub fn cmd_info(file: &ProblemFile) -> Result<String, CliError> {
    let drift = file.drift_matrix()?;
    let track = file.track()?;
    let hypoelliptic = operator::kalman_hypoelliptic(&drift, file.q);
    let verdict = if hypoelliptic { "yes" } else { "no" };
    let mut s = String::new();
    let _ = writeln!(s, "N={}, q={}, blocks={}", file.n, file.q, tuple(&file.blocks));
    match file.to_spec() {
        Ok(spec) => {
            let st = spec.structure();
            let _ = writeln!(
                s,
                "κ={}, σ={}, Q={}, ν={}, hypoelliptic: {verdict}",
                st.kappa(),
                tuple(st.sigma()),
                st.homogeneous_dim(),
                spec.nu()
            );
            let _ = writeln!(s, "Tr B={}", spec.trace_drift());
        }
        Err(e) => {
            let nu = operator::nu_of(&track)?;
            let _ = writeln!(s, "structure: invalid ({e})");
            let _ = writeln!(s, "ν={nu}, hypoelliptic: {verdict}");
        }
    }
    let _ = writeln!(
        s,
        "coefficient pieces: {} starting at {}",
        track.pieces().len(),
        tuple(track.breakpoints())
    );
    Ok(s)
}
