//! `riskattrib` command-line front end.
//!
//! Exit codes: 0 success, 1 a validation check failed, 2 usage or input
//! error, 3 numerical failure. Data goes to stdout or `--output`; all
//! diagnostics go to stderr.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::attribution::{
    histogram, prob_negative, prob_positive, run_mc, summarize, tail_risk, with_thread_pool, PortfolioWeights,
    PosteriorSummary,
};
use crate::error::{Error, ErrorKind};
use crate::ingest::{load_csv, DateRange, PanelKind, PeriodScheme, ReturnPanel};
use crate::matstat::sample_covariance;
use crate::portfolio::{backtest, optimize_weights, BacktestConfig, OptimizerConfig};
use crate::posterior::{posterior_from_scatter, PriorSpec, TargetKind};
use crate::shrinkage::{estimate, Estimator};
use crate::validate::{run_all, Status, ValidateConfig};

pub const THREADS_ENV: &str = "RISKATTRIB_THREADS";

const EXIT_VALIDATION: i32 = 1;
const EXIT_INPUT: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "riskattrib",
    version,
    about = "Bayesian covariance shrinkage and Monte Carlo risk attribution"
)]
pub struct Cli {
    /// Worker threads [default: all cores]. RISKATTRIB_THREADS overrides this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the covariance matrix of a return panel.
    Estimate(EstimateArgs),
    /// Posterior risk attribution for a fixed or optimized portfolio.
    Attribute(AttributeArgs),
    /// Rolling out-of-sample backtest of optimized portfolios.
    Backtest(BacktestArgs),
    /// Run the Monte Carlo oracle checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Prices,
    Returns,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    /// Diagonal of sample variances.
    Diag,
    Identity,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    HalfYears,
    Months,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// CSV with a date column followed by one column per source.
    input: PathBuf,

    #[arg(long, value_enum, default_value_t = KindArg::Returns)]
    kind: KindArg,
}

#[derive(Debug, Args)]
struct PriorArgs {
    /// Prior degrees-of-freedom slack.
    #[arg(long, default_value_t = 1.5)]
    c: f64,

    /// Fixed prior degrees of freedom, bypassing the slack rule.
    #[arg(long)]
    n0: Option<f64>,

    /// Prior scale of the posterior used for attribution.
    #[arg(long, value_enum, default_value_t = TargetArg::Diag)]
    prior_target: TargetArg,
}

impl PriorArgs {
    fn spec(&self) -> PriorSpec {
        PriorSpec {
            c: self.c,
            target_kind: match self.prior_target {
                TargetArg::Diag => TargetKind::SampleVarianceDiag,
                TargetArg::Identity => TargetKind::IdentityScaled,
            },
            n0_override: self.n0,
        }
    }
}

fn estimator_parser() -> impl TypedValueParser<Value = Estimator> {
    PossibleValuesParser::new(Estimator::ALL.map(Estimator::name))
        .map(|s| s.parse::<Estimator>().expect("restricted to known names"))
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, default_value = "dhd", value_parser = estimator_parser())]
    estimator: Estimator,

    #[command(flatten)]
    prior: PriorArgs,

    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct WeightSource {
    /// CSV with header `source,weight`.
    #[arg(long)]
    weights: Option<PathBuf>,

    /// Mean-variance optimal weights from the chosen estimator.
    #[arg(long)]
    optimize: bool,
}

#[derive(Debug, Args)]
struct AttributeArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    weight_source: WeightSource,

    /// Rescale weights to sum to one (e.g. percentages).
    #[arg(long, requires = "weights")]
    normalize_weights: bool,

    /// Covariance estimator for `--optimize`.
    #[arg(long, default_value = "dhd", value_parser = estimator_parser())]
    estimator: Estimator,

    #[command(flatten)]
    prior: PriorArgs,

    #[arg(long, default_value_t = 10_000)]
    sims: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Tail level for VaR and expected shortfall.
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// Risk aversion for `--optimize`.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,

    /// Report volatilities, contributions and tail losses in percent.
    #[arg(long)]
    percent: bool,

    /// Directory for per-source contribution histograms.
    #[arg(long)]
    histograms: Option<PathBuf>,

    #[arg(long, default_value_t = 50)]
    bins: usize,

    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, default_value = "dhd", value_parser = estimator_parser())]
    estimator: Estimator,

    #[command(flatten)]
    prior: PriorArgs,

    #[arg(long, value_enum, default_value_t = SchemeArg::HalfYears, conflicts_with = "ranges")]
    scheme: SchemeArg,

    /// Explicit periods, e.g. `2008-05-01:2008-07-31,2008-08-01:2008-10-31`.
    #[arg(long)]
    ranges: Option<String>,

    #[arg(long, default_value_t = 1.0)]
    gamma: f64,

    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,

    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Fewer draws and a 5% tolerance.
    #[arg(long)]
    quick: bool,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: match e.kind() {
                ErrorKind::Input => EXIT_INPUT,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = resolve_threads(cli.threads)
        .and_then(|threads| with_thread_pool(threads, || dispatch(cli.command)).map_err(Failure::from)?);
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> CliResult<usize> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Failure::input(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
        ),
        Err(_) => flag,
    };
    match threads {
        Some(0) => Err(Failure::input("thread count must be at least 1")),
        Some(t) => Ok(t),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn dispatch(command: Command) -> CliResult<i32> {
    match command {
        Command::Estimate(a) => cmd_estimate(&a).map(|_| 0),
        Command::Attribute(a) => cmd_attribute(&a).map(|_| 0),
        Command::Backtest(a) => cmd_backtest(&a).map(|_| 0),
        Command::Validate(a) => cmd_validate(&a),
    }
}

fn load_panel(input: &InputArgs) -> CliResult<ReturnPanel> {
    let kind = match input.kind {
        KindArg::Prices => PanelKind::Prices,
        KindArg::Returns => PanelKind::Returns,
    };
    Ok(load_csv(&input.input, kind)?.into_returns()?)
}

/// Drops sources with missing values, with a warning.
fn complete_panel(input: &InputArgs) -> CliResult<ReturnPanel> {
    let (panel, dropped) = load_panel(input)?.complete_cases();
    if !dropped.is_empty() {
        eprintln!("warning: dropping sources with missing values: {}", dropped.join(", "));
    }
    if panel.n_sources() == 0 {
        return Err(Failure::input("no source has complete data"));
    }
    Ok(panel)
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    let res = match path {
        Some(p) => fs::write(p, bytes),
        None => io::stdout().lock().write_all(bytes),
    };
    res.map_err(|e| Failure::input(format!("cannot write output: {e}")))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_output(path, text.as_bytes())
}

/// Runs an estimator, explaining the sample estimator's failure mode.
fn run_estimator(
    estimator: Estimator,
    panel: &ReturnPanel,
    prior: &PriorSpec,
) -> CliResult<crate::shrinkage::CovarianceEstimate> {
    let s = sample_covariance(panel)?;
    let (n, p) = (panel.n_obs(), panel.n_sources());
    estimate(estimator, &s, n, prior).map_err(|e| {
        let rank_deficient = estimator == Estimator::Sample && matches!(e, Error::NotPositiveDefinite { .. });
        let mut f = Failure::from(e);
        if rank_deficient {
            f.message = format!(
                "sample covariance is rank deficient with n = {n} observations and p = {p} sources; \
                 use a shrinkage estimator ({})",
                f.message
            );
        }
        f
    })
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    estimator: &'a str,
    p: usize,
    n: usize,
    n0: Option<f64>,
    q_or_rho: f64,
    sources: &'a [String],
    matrix: Vec<Vec<f64>>,
    min_eigenvalue: f64,
}

fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let panel = complete_panel(&a.input)?;
    let prior = a.prior.spec();
    let est = run_estimator(a.estimator, &panel, &prior)?;
    let (n, p) = (panel.n_obs(), panel.n_sources());
    let n0 = if a.estimator.uses_prior() {
        Some(prior.n0(n, p)?)
    } else {
        None
    };
    write_json(
        a.output.as_deref(),
        &EstimateReport {
            estimator: a.estimator.name(),
            p,
            n,
            n0,
            q_or_rho: est.weight_on_target,
            sources: panel.sources(),
            matrix: est.matrix.to_rows(),
            min_eigenvalue: est.matrix.min_eigenvalue(),
        },
    )
}

#[derive(Serialize)]
struct Summary {
    mean: f64,
    sd: f64,
    ci_lo: f64,
    ci_hi: f64,
}

impl Summary {
    fn scaled(s: PosteriorSummary, k: f64) -> Self {
        Self {
            mean: s.mean * k,
            sd: s.sd * k,
            ci_lo: s.ci_lo * k,
            ci_hi: s.ci_hi * k,
        }
    }
}

#[derive(Serialize)]
struct SignedSummary {
    #[serde(flatten)]
    summary: Summary,
    prob_positive: f64,
    prob_negative: f64,
}

#[derive(Serialize)]
struct SourceReport<'a> {
    source: &'a str,
    weight: f64,
    cctr: SignedSummary,
    mctr: SignedSummary,
}

#[derive(Serialize)]
struct TailReport {
    level: f64,
    var: f64,
    esf: f64,
}

#[derive(Serialize)]
struct AttributeReport<'a> {
    weights_from: String,
    units: &'static str,
    n: usize,
    p: usize,
    n0: f64,
    nu: f64,
    sims: usize,
    seed: u64,
    total_volatility: Summary,
    sources: Vec<SourceReport<'a>>,
    tail_risk: TailReport,
}

fn read_weights(path: &Path, sources: &[String], normalize: bool) -> CliResult<PortfolioWeights> {
    let file = File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut raw = vec![None; sources.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let bad = |msg: String| Failure::input(format!("{} row {}: {msg}", path.display(), row + 1));
        let (Some(label), Some(value)) = (rec.get(0), rec.get(1)) else {
            return Err(bad("expected `source,weight`".into()));
        };
        let j = sources
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| bad(format!("unknown source {label:?}")))?;
        let w: f64 = value.parse().map_err(|_| bad(format!("not a number: {value:?}")))?;
        if raw[j].replace(w).is_some() {
            return Err(bad(format!("duplicate weight for {label:?}")));
        }
    }
    let raw: Vec<f64> = raw
        .into_iter()
        .zip(sources)
        .map(|(w, s)| w.ok_or_else(|| Failure::input(format!("no weight for source {s:?}"))))
        .collect::<CliResult<_>>()?;
    let w = if normalize {
        PortfolioWeights::normalized(raw)?
    } else {
        PortfolioWeights::new(raw)?
    };
    Ok(w)
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn write_histogram(path: &Path, draws: &[f64], bins: usize, scale: f64) -> CliResult<()> {
    let scaled: Vec<f64> = draws.iter().map(|x| x * scale).collect();
    let h = histogram(&scaled, bins, 0.005)?;
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (k, c) in h.counts.iter().enumerate() {
        out.push_str(&format!("{:?},{:?},{c}\n", h.edges[k], h.edges[k + 1]));
    }
    fs::write(path, out).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn cmd_attribute(a: &AttributeArgs) -> CliResult<()> {
    if a.sims < 2 {
        return Err(Failure::input(format!("--sims must be at least 2, got {}", a.sims)));
    }
    let panel = complete_panel(&a.input)?;
    let prior = a.prior.spec();
    let (n, p) = (panel.n_obs(), panel.n_sources());

    let (w, weights_from) = match &a.weight_source.weights {
        Some(path) => (read_weights(path, panel.sources(), a.normalize_weights)?, "file".to_string()),
        None => {
            let sigma_hat = run_estimator(a.estimator, &panel, &prior)?.matrix;
            let cfg = OptimizerConfig {
                risk_aversion: a.gamma,
                ..OptimizerConfig::default()
            };
            let w = optimize_weights(&panel.mean_returns(), &sigma_hat, &cfg)?;
            (w, format!("optimized:{}", a.estimator))
        }
    };

    let s = sample_covariance(&panel)?;
    let post = posterior_from_scatter(&s, n, &prior)?;
    let samples = run_mc(&post, &w, a.sims, a.seed)?;
    let tail = tail_risk(&post, &w, &panel.mean_returns(), a.sims, a.level, a.seed)?;
    let k = if a.percent { 100.0 } else { 1.0 };

    let mut sources = Vec::with_capacity(p);
    for (j, label) in panel.sources().iter().enumerate() {
        let cctr = samples.cctr_column(j);
        let mctr = samples.mctr_column(j);
        sources.push(SourceReport {
            source: label,
            weight: w.as_slice()[j],
            cctr: SignedSummary {
                summary: Summary::scaled(summarize(&cctr)?, k),
                prob_positive: prob_positive(&cctr),
                prob_negative: prob_negative(&cctr),
            },
            mctr: SignedSummary {
                summary: Summary::scaled(summarize(&mctr)?, k),
                prob_positive: prob_positive(&mctr),
                prob_negative: prob_negative(&mctr),
            },
        });
        if let Some(dir) = &a.histograms {
            write_histogram(&dir.join(format!("cctr_{j}_{}.csv", file_stem(label))), &cctr, a.bins, k)?;
        }
    }
    if let Some(dir) = &a.histograms {
        write_histogram(&dir.join("total_volatility.csv"), samples.sigma_p(), a.bins, k)?;
    }

    write_json(
        a.output.as_deref(),
        &AttributeReport {
            weights_from,
            units: if a.percent { "percent" } else { "decimal" },
            n,
            p,
            n0: post.n0(),
            nu: post.nu(),
            sims: a.sims,
            seed: a.seed,
            total_volatility: Summary::scaled(summarize(samples.sigma_p())?, k),
            sources,
            tail_risk: TailReport {
                level: tail.level,
                var: tail.var * k,
                esf: tail.esf * k,
            },
        },
    )
}

fn parse_ranges(spec: &str) -> CliResult<Vec<DateRange>> {
    let date = |s: &str| {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| Failure::input(format!("bad date {s:?} in --ranges")))
    };
    spec.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Failure::input(format!("range {part:?} is not START:END")))?;
            Ok(DateRange::new(date(lo)?, date(hi)?))
        })
        .collect()
}

fn cmd_backtest(a: &BacktestArgs) -> CliResult<()> {
    let panel = load_panel(&a.input)?;
    let scheme = match (&a.ranges, a.scheme) {
        (Some(r), _) => PeriodScheme::ExplicitRanges(parse_ranges(r)?),
        (None, SchemeArg::HalfYears) => PeriodScheme::HalfYears,
        (None, SchemeArg::Months) => PeriodScheme::Months,
    };
    let cfg = BacktestConfig {
        scheme,
        estimator: a.estimator,
        prior: a.prior.spec(),
        optimizer: OptimizerConfig {
            risk_aversion: a.gamma,
            max_iter: a.max_iter,
            ..OptimizerConfig::default()
        },
    };
    let reports = backtest(&panel, &cfg)?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let header = ["Period", "Return", "Risk", "Sharpe", "Portfolio Size", "Market Size", "Ex-ante Risk"];
    wtr.write_record(header).expect("in-memory write");
    for r in &reports {
        wtr.write_record([
            r.period_label.clone(),
            format!("{:?}", r.portfolio_return),
            format!("{:?}", r.portfolio_risk),
            format!("{:?}", r.sharpe),
            r.portfolio_size.to_string(),
            r.market_size.to_string(),
            format!("{:?}", r.ex_ante_risk),
        ])
        .expect("in-memory write");
    }
    let bytes = wtr.into_inner().expect("in-memory flush");
    write_output(a.output.as_deref(), &bytes)
}

fn cmd_validate(a: &ValidateArgs) -> CliResult<i32> {
    let cfg = ValidateConfig {
        seed: a.seed,
        quick: a.quick,
    };
    let checks = run_all(&cfg)?;
    let mut out = format!(
        "{:<12} {:>14} {:>14} {:>12}  {}\n",
        "status", "observed", "expected", "tolerance", "check"
    );
    for c in &checks {
        let tol = if c.relative {
            format!("{:.1e} rel", c.tolerance)
        } else if c.tolerance == 0.0 {
            "bound".to_string()
        } else {
            format!("{:.1e}", c.tolerance)
        };
        out.push_str(&format!(
            "{:<12} {:>14.6} {:>14.6} {:>12}  {}\n",
            c.status.label(),
            c.observed,
            c.expected,
            tol,
            c.name
        ));
        if let Some(note) = &c.note {
            out.push_str(&format!("{:<12} {note}\n", ""));
        }
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    let reported = checks.iter().filter(|c| c.status == Status::Discrepancy).count();
    out.push_str(&format!(
        "{} checks: {} passed, {failed} failed, {reported} discrepancies reported\n",
        checks.len(),
        checks.len() - failed - reported
    ));
    write_output(a.output.as_deref(), out.as_bytes())?;
    Ok(if failed > 0 { EXIT_VALIDATION } else { 0 })
}
