//! Command-line front end: data ingestion, fitting, replication studies,
//! bandwidth selection and identifiability checks.
//!
//! Every command is a library function that writes its files and returns a
//! short text summary, so the `semimix` binary only parses arguments and
//! prints. JSON numbers are written in shortest round-trip form; CSV numbers
//! use 17 significant digits. Every CSV starts with a `#` line echoing the
//! configuration that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{cv_fit, silverman, AfterCv, CvConfig, CvCurve};
use crate::error::{Error, Result};
use crate::experiments::{mse_curve, run_experiment, ExperimentSpec, ExperimentSummary, RepRow};
use crate::identifiability::{check_g_monotone, IdentifiabilityReport, VarianceFunction};
use crate::mm::{
    fit, FInit, FitResult, GridSpec, MmConfig, StopReason, DEFAULT_GRID_POINTS, DEFAULT_MAX_ITERS,
    DEFAULT_P_INIT, DEFAULT_TOL,
};
use crate::model::{ParametricDensity, Sample};
use crate::smoothing::{Bandwidth, Grid, Kernel};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Data files

/// `x ↦ ln(x + c)`, written `log+<c>` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogShift(pub f64);

impl FromStr for LogShift {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let c = match s.trim() {
            "log" => 0.0,
            t => t
                .strip_prefix("log+")
                .ok_or_else(|| format!("expected `log+<c>`, got `{s}`"))?
                .parse::<f64>()
                .map_err(|e| format!("bad shift in `{s}`: {e}"))?,
        };
        if !c.is_finite() {
            return Err(format!("shift must be finite, got {c}"));
        }
        Ok(LogShift(c))
    }
}

impl std::fmt::Display for LogShift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "log+{}", self.0)
    }
}

/// Numeric rows of a text file with `ncols` comma-separated columns, each
/// paired with its 1-based line number. Blank lines and `#` comments are
/// skipped; the first content line may be a header.
pub fn parse_columns(text: &str, path: &str, ncols: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_string(),
        line,
        message,
    };
    let mut rows = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let first = !seen_content;
        seen_content = true;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != ncols {
            return Err(err(
                line_no,
                format!("expected {ncols} column(s), found {}", fields.len()),
            ));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(err(line_no, format!("non-finite value in `{line}`")));
                }
                rows.push((line_no, vals));
            }
            Err(_) if first && fields.iter().any(|f| f.chars().any(|c| c.is_alphabetic())) => {
                // header line
            }
            Err(e) => {
                return Err(err(
                    line_no,
                    format!("cannot parse `{line}` as a number: {e}"),
                ))
            }
        }
    }
    if rows.is_empty() {
        return Err(err(0, "file contains no data values".into()));
    }
    Ok(rows)
}

/// Reads a one-number-per-line (or single-column CSV) file and applies the
/// optional log shift.
pub fn read_sample(path: &Path, transform: Option<LogShift>) -> Result<Sample> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let rows = parse_columns(&text, &name, 1)?;
    let mut values = Vec::with_capacity(rows.len());
    for (line, v) in rows {
        let x = v[0];
        let y = match transform {
            None => x,
            Some(LogShift(c)) => {
                if !(x + c > 0.0) {
                    return Err(Error::Parse {
                        path: name,
                        line,
                        message: format!("log transform needs x + {c} > 0, got x = {x}"),
                    });
                }
                (x + c).ln()
            }
        };
        values.push(y);
    }
    Sample::new(values)
}

// ---------------------------------------------------------------------------
// Argument value types

/// `family:param,param`, e.g. `normal:0,1`, `gamma:2,1`, `exponential:0.5`,
/// `trunc-normal:6,1`, `uniform:0,1`.
pub fn parse_density(s: &str) -> std::result::Result<ParametricDensity, String> {
    let (name, params) = s
        .split_once(':')
        .ok_or_else(|| format!("expected `family:params`, got `{s}`"))?;
    let ps: Vec<f64> = params
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad parameter `{p}`: {e}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    let want = |k: usize| {
        if ps.len() == k {
            Ok(())
        } else {
            Err(format!(
                "family `{name}` takes {k} parameter(s), got {}",
                ps.len()
            ))
        }
    };
    let d = match name.trim().to_ascii_lowercase().as_str() {
        "normal" => want(2).map(|_| ParametricDensity::normal(ps[0], ps[1]))?,
        "trunc-normal" | "positive_trunc_normal" => {
            want(2).map(|_| ParametricDensity::positive_trunc_normal(ps[0], ps[1]))?
        }
        "gamma" => want(2).map(|_| ParametricDensity::gamma(ps[0], ps[1]))?,
        "exponential" => want(1).map(|_| ParametricDensity::exponential(ps[0]))?,
        "uniform" => want(2).map(|_| ParametricDensity::uniform(ps[0], ps[1]))?,
        other => return Err(format!("unknown family `{other}`")),
    };
    d.map_err(|e| e.to_string())
}

fn parse_f_init(s: &str) -> std::result::Result<FInit, String> {
    if s.trim() == "auto" {
        Ok(FInit::Auto)
    } else {
        parse_density(s).map(FInit::Parametric)
    }
}

/// `lo,hi,n`.
fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected `lo,hi,n`, got `{s}`"));
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("bad lo: {e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("bad hi: {e}"))?;
    let n: usize = parts[2].parse().map_err(|e| format!("bad n: {e}"))?;
    Grid::new(lo, hi, n).map_err(|e| e.to_string())
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    Ok((
        a.trim().parse().map_err(|e| format!("bad lo: {e}"))?,
        b.trim().parse().map_err(|e| format!("bad hi: {e}"))?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthChoice {
    Silverman,
    Cv,
    Fixed(f64),
}

impl FromStr for BandwidthChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "silverman" => Ok(BandwidthChoice::Silverman),
            "cv" => Ok(BandwidthChoice::Cv),
            t => {
                let h = t
                    .strip_prefix("fixed=")
                    .ok_or_else(|| format!("expected silverman, cv or fixed=<h>, got `{s}`"))?
                    .parse::<f64>()
                    .map_err(|e| format!("bad bandwidth in `{s}`: {e}"))?;
                Bandwidth::new(h).map_err(|e| e.to_string())?;
                Ok(BandwidthChoice::Fixed(h))
            }
        }
    }
}

impl FromStr for AfterCv {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "continue" => Ok(AfterCv::Continue),
            "restart" => Ok(AfterCv::Restart),
            _ => Err(format!("expected continue or restart, got `{s}`")),
        }
    }
}

// ---------------------------------------------------------------------------
// Command-line definition

#[derive(Debug, Parser)]
#[command(
    name = "semimix",
    version,
    about = "Two-component mixtures with one known component"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the mixture to a data file and write a JSON report.
    Fit(FitArgs),
    /// Run a seeded replication study from a JSON spec file.
    Simulate(SimulateArgs),
    /// Cross-validate the bandwidth for a data file.
    Bandwidth(BandwidthArgs),
    /// Check the monotonicity condition for identifiability.
    CheckIdentifiability(IdentArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Data file: one number per line, or a single-column CSV with optional header.
    pub data: PathBuf,
    /// Known component, e.g. `normal:0,1` or `trunc-normal:6,1`.
    #[arg(long, value_parser = parse_density)]
    pub f0: ParametricDensity,
    /// Transform applied to every value, e.g. `log+50` for ln(x + 50).
    #[arg(long)]
    pub transform: Option<LogShift>,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[arg(long, default_value_t = 50)]
    pub folds: usize,
    /// Candidate bandwidths span h_s ± half-range.
    #[arg(long, default_value_t = 0.4)]
    pub half_range: f64,
    /// Candidates on each side of h_s.
    #[arg(long, default_value_t = 10)]
    pub grid_steps: usize,
    /// MM iterations per warm-up fit.
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MmArgs {
    #[arg(long, default_value = "triangular")]
    pub kernel: Kernel,
    #[arg(long, default_value_t = DEFAULT_P_INIT)]
    pub p_init: f64,
    /// Initial unknown density: `auto` or a family spec such as `gamma:4,2`.
    #[arg(long, default_value = "auto", value_parser = parse_f_init)]
    pub f_init: FInit,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Fixed fit grid `lo,hi,n`; default pads the data range.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    /// Seed for the cross-validation fold split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mm: MmArgs,
    /// `silverman`, `cv` or `fixed=<h>`.
    #[arg(long, default_value = "silverman")]
    pub bandwidth: BandwidthChoice,
    #[command(flatten)]
    pub cv: CvArgs,
    /// After cross-validation: `continue` from the warm state or `restart`.
    #[arg(long, default_value = "continue")]
    pub after_cv: AfterCv,
    /// Also write the mixture and component curves as CSV.
    #[arg(long)]
    pub emit_curves: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON experiment spec.
    pub spec: PathBuf,
    /// Comma-separated true proportions; runs the spec once per value.
    #[arg(long, value_delimiter = ',')]
    pub p_values: Option<Vec<f64>>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mm: MmArgs,
    #[command(flatten)]
    pub cv: CvArgs,
    /// Only print the rule-of-thumb bandwidth.
    #[arg(long)]
    pub silverman_only: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IdentArgs {
    /// Power of the variance function `V(μ) = scale · μ^power`.
    #[arg(long, conflicts_with = "table", required_unless_present = "table")]
    pub power: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Two-column CSV `mu,v` tabulating the variance function.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Mean of the known component.
    #[arg(long, allow_hyphen_values = true)]
    pub mu_f0: f64,
    /// Range `lo,hi` of candidate means.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub domain: (f64, f64),
    #[arg(long, default_value_t = 1000)]
    pub n_check: usize,
    /// Write the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Fit

/// Everything that determines a fit besides the data and `f0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub kernel: Kernel,
    pub bandwidth: BandwidthChoice,
    pub p_init: f64,
    pub f_init: FInit,
    pub tol: f64,
    pub max_iters: usize,
    pub grid: Option<Grid>,
    pub seed: u64,
    pub cv: CvConfig,
    pub after_cv: AfterCv,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            kernel: Kernel::Triangular,
            bandwidth: BandwidthChoice::Silverman,
            p_init: DEFAULT_P_INIT,
            f_init: FInit::Auto,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            grid: None,
            seed: 0,
            cv: CvConfig::default(),
            after_cv: AfterCv::Continue,
        }
    }
}

impl FitOptions {
    fn from_args(mm: &MmArgs, bandwidth: BandwidthChoice, cv: &CvArgs, after_cv: AfterCv) -> Self {
        FitOptions {
            kernel: mm.kernel,
            bandwidth,
            p_init: mm.p_init,
            f_init: mm.f_init.clone(),
            tol: mm.tol,
            max_iters: mm.max_iters,
            grid: mm.grid,
            seed: mm.seed,
            cv: CvConfig {
                folds: cv.folds,
                half_range: cv.half_range,
                grid_steps: cv.grid_steps,
                warmup: cv.warmup,
                fold_seed: mm.seed,
            },
            after_cv,
        }
    }

    fn mm_config(&self, h: Bandwidth) -> MmConfig {
        let mut cfg = MmConfig::new(self.kernel, h);
        cfg.p_init = self.p_init;
        cfg.f_init = self.f_init.clone();
        cfg.tol = self.tol;
        cfg.max_iters = self.max_iters;
        cfg.grid = match self.grid {
            Some(g) => GridSpec::Fixed(g),
            None => GridSpec::Padded {
                n_points: DEFAULT_GRID_POINTS,
            },
        };
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub data: Option<String>,
    pub n: usize,
    pub transform: Option<LogShift>,
    pub f0: ParametricDensity,
    pub kernel: Kernel,
    pub bandwidth_mode: BandwidthChoice,
    pub bandwidth: f64,
    pub p_init: f64,
    pub f_init: String,
    pub tol: f64,
    pub max_iters: usize,
    pub grid: Grid,
    pub seed: u64,
    pub cv: Option<CvConfig>,
    pub after_cv: Option<AfterCv>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTraceEntry {
    pub t: usize,
    pub p: f64,
    pub objective: f64,
    pub alpha: Option<f64>,
}

/// Serialized result of `semimix fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub p_hat: f64,
    pub n_iters: usize,
    pub stop_reason: StopReason,
    pub objective: f64,
    /// Grid abscissae shared by `f_hat` and `mixture`.
    pub x: Vec<f64>,
    pub f_hat: Vec<f64>,
    /// `(1 - p̂) f0 + p̂ f̂` on the grid.
    pub mixture: Vec<f64>,
    pub trace: Vec<ReportTraceEntry>,
    pub cv_curve: Option<CvCurve>,
    pub warnings: Vec<String>,
    pub config: ConfigEcho,
}

impl FitReport {
    pub fn from_fit(
        res: &FitResult,
        f0: &ParametricDensity,
        cv_curve: Option<CvCurve>,
        config: ConfigEcho,
    ) -> Self {
        let x = res.f_hat.grid().abscissae();
        let f_hat = res.f_hat.values().to_vec();
        let mixture = x
            .iter()
            .zip(&f_hat)
            .map(|(&xi, &fi)| (1.0 - res.p_hat) * f0.pdf(xi) + res.p_hat * fi)
            .collect();
        FitReport {
            schema_version: SCHEMA_VERSION,
            p_hat: res.p_hat,
            n_iters: res.n_iters,
            stop_reason: res.stop_reason,
            objective: res.trace.last().map_or(f64::NAN, |e| e.objective),
            x,
            f_hat,
            mixture,
            trace: res
                .trace
                .iter()
                .map(|e| ReportTraceEntry {
                    t: e.t,
                    p: e.p,
                    objective: e.objective,
                    alpha: e.alpha,
                })
                .collect(),
            cv_curve,
            warnings: res.warnings.clone(),
            config,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let report: FitReport = serde_path_to_error::deserialize(de).map_err(|e| Error::Spec {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if report.schema_version > SCHEMA_VERSION {
            return Err(Error::Spec {
                path: "schema_version".into(),
                message: format!(
                    "report version {} is newer than {SCHEMA_VERSION}",
                    report.schema_version
                ),
            });
        }
        Ok(report)
    }
}

/// Fits `sample` and assembles the report; writes nothing.
pub fn fit_report(
    sample: &Sample,
    f0: &ParametricDensity,
    opts: &FitOptions,
    data: Option<String>,
    transform: Option<LogShift>,
) -> Result<FitReport> {
    let (res, curve) = match opts.bandwidth {
        BandwidthChoice::Silverman => (fit(sample, f0, &opts.mm_config(silverman(sample)?))?, None),
        BandwidthChoice::Fixed(h) => (fit(sample, f0, &opts.mm_config(Bandwidth::new(h)?))?, None),
        BandwidthChoice::Cv => {
            let cfg = opts.mm_config(silverman(sample)?);
            let (curve, res) = cv_fit(sample, f0, &cfg, &opts.cv, opts.after_cv)?;
            (res, Some(curve))
        }
    };
    let is_cv = opts.bandwidth == BandwidthChoice::Cv;
    let config = ConfigEcho {
        data,
        n: sample.len(),
        transform,
        f0: *f0,
        kernel: opts.kernel,
        bandwidth_mode: opts.bandwidth,
        bandwidth: res.bandwidth.get(),
        p_init: opts.p_init,
        f_init: match &opts.f_init {
            FInit::Auto => "auto".into(),
            FInit::Parametric(d) => d.label(),
            FInit::Grid(_) => "tabulated".into(),
        },
        tol: opts.tol,
        max_iters: opts.max_iters,
        grid: *res.f_hat.grid(),
        seed: opts.seed,
        cv: is_cv.then_some(opts.cv),
        after_cv: is_cv.then_some(opts.after_cv),
    };
    Ok(FitReport::from_fit(&res, f0, curve, config))
}

/// 17 significant digits; empty for missing values.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn echo_line<T: Serialize>(command: &str, config: &T) -> Result<String> {
    Ok(format!(
        "# semimix {command} {}\n",
        serde_json::to_string(config)?
    ))
}

fn write_curve(path: &Path, echo: &str, x: &[f64], y: &[f64]) -> Result<()> {
    let mut out = String::from(echo);
    out.push_str("x,density\n");
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(out, "{},{}", fmt_num(*a), fmt_num(*b));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn cmd_fit(args: &FitArgs) -> Result<String> {
    let sample = read_sample(&args.data.data, args.data.transform)?;
    let opts = FitOptions::from_args(&args.mm, args.bandwidth, &args.cv, args.after_cv);
    let report = fit_report(
        &sample,
        &args.data.f0,
        &opts,
        Some(args.data.data.display().to_string()),
        args.data.transform,
    )?;
    fs::create_dir_all(&args.out_dir)?;
    let report_path = args.out_dir.join("fit_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    if args.emit_curves {
        let echo = echo_line("fit", &report.config)?;
        write_curve(
            &args.out_dir.join("mixture_curve.csv"),
            &echo,
            &report.x,
            &report.mixture,
        )?;
        write_curve(
            &args.out_dir.join("component_curve.csv"),
            &echo,
            &report.x,
            &report.f_hat,
        )?;
    }
    let mut msg = format!(
        "p_hat = {:.6}  ({} iterations, {:?}, h = {:.6})\nreport: {}\n",
        report.p_hat,
        report.n_iters,
        report.stop_reason,
        report.config.bandwidth,
        report_path.display()
    );
    for w in &report.warnings {
        let _ = writeln!(msg, "warning: {w}");
    }
    Ok(msg)
}

// ---------------------------------------------------------------------------
// Simulate

/// Parses an experiment spec; errors name the offending field.
pub fn parse_experiment_spec(text: &str) -> Result<ExperimentSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| Error::Spec {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

pub const REP_COLUMNS: &str = "rep,seed,p_hat,ise,mu_hat,p_true,bandwidth,n_iters,converged,error";
pub const AGGREGATE_COLUMNS: &str =
    "p_true,n,reps,n_ok,n_failed,n_not_converged,mse_p,mise,mean_p,sd_p,mean_mu,sd_mu";

fn rep_line(out: &mut String, r: &RepRow, p_true: f64) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        r.rep,
        r.seed,
        fmt_opt(r.p_hat),
        fmt_opt(r.ise),
        fmt_opt(r.mu_hat),
        fmt_num(p_true),
        fmt_opt(r.bandwidth),
        r.n_iters.map(|k| k.to_string()).unwrap_or_default(),
        r.converged.map(|c| c.to_string()).unwrap_or_default(),
        r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
    );
}

fn aggregate_line(out: &mut String, s: &ExperimentSummary) {
    let a = &s.aggregates;
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        fmt_num(s.spec.mixture.p),
        s.spec.n,
        s.spec.reps,
        a.n_ok,
        a.n_failed,
        a.n_not_converged,
        fmt_opt(a.mse_p),
        fmt_opt(a.mise),
        fmt_opt(a.mean_p),
        fmt_opt(a.sd_p),
        fmt_opt(a.mean_mu),
        fmt_opt(a.sd_mu),
    );
}

/// Runs the study and writes `reps.csv`, `aggregate.csv` and `summary.json`
/// (plus `curve.csv` when `p_values` is given).
pub fn simulate(
    spec: &ExperimentSpec,
    p_values: Option<&[f64]>,
    out_dir: &Path,
) -> Result<Vec<ExperimentSummary>> {
    let summaries = match p_values {
        None => vec![run_experiment(spec)?],
        Some(ps) => {
            let (rows, summaries) = mse_curve(spec, ps)?;
            let mut out = echo_line("simulate", spec)?;
            out.push_str("p,n,mse,mise,n_failed\n");
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_num(r.p),
                    r.n,
                    fmt_opt(r.mse),
                    fmt_opt(r.mise),
                    r.n_failed
                );
            }
            fs::create_dir_all(out_dir)?;
            fs::write(out_dir.join("curve.csv"), out)?;
            summaries
        }
    };
    fs::create_dir_all(out_dir)?;
    let echo = echo_line("simulate", spec)?;
    let mut reps = echo.clone();
    reps.push_str(REP_COLUMNS);
    reps.push('\n');
    let mut agg = echo;
    agg.push_str(AGGREGATE_COLUMNS);
    agg.push('\n');
    for s in &summaries {
        s.rows
            .iter()
            .for_each(|r| rep_line(&mut reps, r, s.spec.mixture.p));
        aggregate_line(&mut agg, s);
    }
    fs::write(out_dir.join("reps.csv"), reps)?;
    fs::write(out_dir.join("aggregate.csv"), agg)?;
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summaries)?,
    )?;
    Ok(summaries)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let text = fs::read_to_string(&args.spec)?;
    let spec = parse_experiment_spec(&text)?;
    let summaries = simulate(&spec, args.p_values.as_deref(), &args.out_dir)?;
    let mut msg = String::new();
    for s in &summaries {
        let a = &s.aggregates;
        let _ = writeln!(
            msg,
            "p = {:.3}, n = {}: mean p_hat = {}, sd = {}, mean mu_hat = {}, MSE = {}, MISE = {} ({} ok, {} failed)",
            s.spec.mixture.p,
            s.spec.n,
            fmt_opt(a.mean_p),
            fmt_opt(a.sd_p),
            fmt_opt(a.mean_mu),
            fmt_opt(a.mse_p),
            fmt_opt(a.mise),
            a.n_ok,
            a.n_failed
        );
    }
    for m in summaries
        .first()
        .map(|s| s.metadata.as_slice())
        .unwrap_or_default()
    {
        let _ = writeln!(msg, "note: {m}");
    }
    let _ = writeln!(msg, "outputs written to {}", args.out_dir.display());
    Ok(msg)
}

// ---------------------------------------------------------------------------
// Bandwidth

/// Writes `cv_curve.csv` with columns `h,cv,l2_norm_sq,heldout_sum,error`.
pub fn write_cv_curve(path: &Path, echo: &str, curve: &CvCurve) -> Result<()> {
    let mut out = String::from(echo);
    out.push_str("h,cv,l2_norm_sq,heldout_sum,error\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(p.h),
            fmt_opt(p.cv),
            fmt_opt(p.l2_norm_sq),
            fmt_opt(p.heldout_sum),
            p.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        );
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn cmd_bandwidth(args: &BandwidthArgs) -> Result<String> {
    let sample = read_sample(&args.data.data, args.data.transform)?;
    let h_s = silverman(&sample)?;
    if args.silverman_only {
        return Ok(format!("h_silverman = {}\n", fmt_num(h_s.get())));
    }
    let opts = FitOptions::from_args(&args.mm, BandwidthChoice::Cv, &args.cv, AfterCv::Continue);
    let (_, curve) =
        crate::bandwidth::cv_bandwidth(&sample, &args.data.f0, &opts.mm_config(h_s), &opts.cv)?;
    fs::create_dir_all(&args.out_dir)?;
    let echo = echo_line(
        "bandwidth",
        &serde_json::json!({
            "data": args.data.data.display().to_string(),
            "transform": args.data.transform,
            "f0": args.data.f0,
            "kernel": opts.kernel,
            "p_init": opts.p_init,
            "f_init": format!("{:?}", opts.f_init),
            "grid": opts.grid,
            "cv": opts.cv,
        }),
    )?;
    let path = args.out_dir.join("cv_curve.csv");
    write_cv_curve(&path, &echo, &curve)?;
    let mut msg = format!(
        "h_star = {}\nh_silverman = {}\ncurve: {}\n",
        fmt_num(curve.h_star),
        fmt_num(curve.h_silverman),
        path.display()
    );
    if !curve.has_interior_minimum() && curve.points.len() > 1 {
        msg.push_str("warning: the minimum lies on the edge of the candidate range\n");
    }
    Ok(msg)
}

// ---------------------------------------------------------------------------
// Identifiability

pub fn identifiability(args: &IdentArgs) -> Result<IdentifiabilityReport> {
    let v = match (&args.table, args.power) {
        (Some(path), _) => {
            let name = path.display().to_string();
            let rows = parse_columns(&fs::read_to_string(path)?, &name, 2)?;
            VarianceFunction::Tabulated {
                mu: rows.iter().map(|(_, r)| r[0]).collect(),
                v: rows.iter().map(|(_, r)| r[1]).collect(),
            }
        }
        (None, Some(power)) => VarianceFunction::NefPvf {
            scale: args.scale,
            power,
        },
        (None, None) => {
            return Err(Error::Identifiability(
                "give either --power or --table".into(),
            ));
        }
    };
    check_g_monotone(&v, args.mu_f0, args.domain, args.n_check)
}

pub fn cmd_check_identifiability(args: &IdentArgs) -> Result<String> {
    let report = identifiability(args)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.json {
        fs::write(path, &json)?;
    }
    let mut msg = format!(
        "condition {}\n",
        if report.condition_holds {
            "holds"
        } else {
            "fails"
        }
    );
    if let Some((a, b)) = report.witness {
        let _ = writeln!(
            msg,
            "witness: G does not increase between mu = {a} and mu = {b}"
        );
    }
    for n in &report.notes {
        let _ = writeln!(msg, "note: {n}");
    }
    msg.push_str(&json);
    msg.push('\n');
    Ok(msg)
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bandwidth(a) => cmd_bandwidth(a),
        Command::CheckIdentifiability(a) => cmd_check_identifiability(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_with_header_comments_and_blanks() {
        let rows = parse_columns("value\n1.5\n\n# note\n-2e3\n", "f", 1).unwrap();
        assert_eq!(rows, vec![(2, vec![1.5]), (5, vec![-2000.0])]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_columns("1\n2\nabc\n", "f.txt", 1) {
            Err(Error::Parse { line, path, .. }) => assert_eq!((line, path.as_str()), (3, "f.txt")),
            other => panic!("unexpected {other:?}"),
        }
        match parse_columns("1,2\n", "f", 1) {
            Err(Error::Parse {
                line: 1, message, ..
            }) => assert!(message.contains("column")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_columns("", "f", 1),
            Err(Error::Parse { line: 0, .. })
        ));
        assert!(parse_columns("x\n", "f", 1).is_err());
        assert!(parse_columns("1\ninf\n", "f", 1).is_err());
    }

    #[test]
    fn value_parsers() {
        assert_eq!("log+50".parse::<LogShift>().unwrap(), LogShift(50.0));
        assert!("ln+50".parse::<LogShift>().is_err());
        assert_eq!(
            "fixed=0.5".parse::<BandwidthChoice>().unwrap(),
            BandwidthChoice::Fixed(0.5)
        );
        assert!("fixed=-1".parse::<BandwidthChoice>().is_err());
        assert_eq!(
            parse_density("gamma:2,1").unwrap(),
            ParametricDensity::gamma(2.0, 1.0).unwrap()
        );
        assert_eq!(
            parse_density("trunc-normal:6,1").unwrap(),
            ParametricDensity::positive_trunc_normal(6.0, 1.0).unwrap()
        );
        assert!(parse_density("normal:0").is_err());
        assert!(parse_density("cauchy:0,1").is_err());
        assert!(parse_grid("0,1,10").is_ok());
        assert!(parse_grid("1,0,10").is_err());
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 6.02214076e23, -1e-300, std::f64::consts::PI] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn spec_errors_name_the_field() {
        let js = r#"{"mixture":{"p":0.3,"known":{"family":"normal","mu":0,"sigma":1},
            "unknown":{"family":"lognormal","mu":6,"sigma":1}},"n":100,"reps":2,"master_seed":1}"#;
        match parse_experiment_spec(js) {
            Err(Error::Spec { path, .. }) => assert!(path.contains("mixture.unknown"), "{path}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_round_trips_through_json() {
        let s = crate::model::sample_mixture(
            &crate::model::MixtureSpec::new(
                0.5,
                ParametricDensity::normal(0.0, 1.0).unwrap(),
                ParametricDensity::normal(4.0, 1.0).unwrap(),
            )
            .unwrap(),
            100,
            2,
        )
        .unwrap();
        let opts = FitOptions {
            grid: Some(Grid::new(-6.0, 10.0, 200).unwrap()),
            tol: 1e-4,
            ..FitOptions::default()
        };
        let r = fit_report(
            &s,
            &ParametricDensity::normal(0.0, 1.0).unwrap(),
            &opts,
            None,
            None,
        )
        .unwrap();
        let back = FitReport::from_json(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(r, back);
        let mass = Grid::new(-6.0, 10.0, 200).unwrap().integrate(&r.f_hat);
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
