//! The `fbsheet` command-line front end.
//!
//! Settings come from an optional TOML file (`--config`) and from flags of
//! the same names; flags win. JSON goes to stdout, tables and messages to
//! stderr. Exit codes: 0 success, 1 a verification failed, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error as ThisError;

use crate::error::Error;
use crate::fieldsim::{field_from_increments, sample_white_increments, write_dump, DumpKind, FactorMethod, SheetSampler};
use crate::kernel::{HurstPair, Point};
use crate::mcverify::{
    clt_ks_check, kernel_property_suite, mean_decay, product_grid, render_table, to_json_string, CharFnCheck,
    MomentCheck, SamplerCheck, SecondMomentLimit, SheetFunctional, VerifyReport, BOOTSTRAP_RESAMPLES,
    DEFAULT_LAMBDA_VALUES,
};
use crate::qv::{limit_sample, qv_process, write_matrix_csv, write_partial_sums_csv};
use crate::rng::{Purpose, RngStream};
use crate::sigma::sigma_series;
use crate::weight::WeightFunction;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_SIGMA_TOL: f64 = 1e-10;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Tolerance overrides; any subset may be given.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tail tolerance of the limiting-constant series.
    pub sigma: Option<f64>,
    /// Relative gap allowed by the second-moment limit check.
    pub relative: Option<f64>,
    /// KS test level.
    pub ks_level: Option<f64>,
    /// Allowed deviation of the mean-decay slope.
    pub slope: Option<f64>,
    /// Minimum fraction of covariance entries within 4 SE.
    pub fraction: Option<f64>,
}

impl Tolerances {
    fn overlay(self, top: Self) -> Self {
        Self {
            sigma: top.sigma.or(self.sigma),
            relative: top.relative.or(self.relative),
            ks_level: top.ks_level.or(self.ks_level),
            slope: top.slope.or(self.slope),
            fraction: top.fraction.or(self.fraction),
        }
    }

    fn set(&mut self, key: &str, value: f64) -> CliResult<()> {
        let slot = match key {
            "sigma" => &mut self.sigma,
            "relative" => &mut self.relative,
            "ks_level" => &mut self.ks_level,
            "slope" => &mut self.slope,
            "fraction" => &mut self.fraction,
            other => return Err(config_err(format!("unknown tolerance {other:?}"))),
        };
        *slot = Some(value);
        Ok(())
    }
}

// `tol = 1e-10` is shorthand for `tol.sigma`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum TolSpec {
    Sigma(f64),
    Table(Tolerances),
}

impl From<TolSpec> for Tolerances {
    fn from(t: TolSpec) -> Self {
        match t {
            TolSpec::Sigma(s) => Tolerances {
                sigma: Some(s),
                ..Default::default()
            },
            TolSpec::Table(t) => t,
        }
    }
}

/// All settings of a run. Every field is optional here; commands decide
/// what is required and what defaults apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub weight: Option<String>,
    pub points: Option<Vec<Point>>,
    /// Per-coordinate lambda values; the grid is their Cartesian power.
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "de_tol")]
    pub tol: Tolerances,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub method: Option<String>,
    pub functional: Option<String>,
    pub bootstrap: Option<usize>,
}

fn de_tol<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Tolerances, D::Error> {
    Ok(TolSpec::deserialize(d)?.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| config_err(format!("config file: {e}")))
    }

    /// Field-wise overlay: values in `top` replace those in `self`.
    pub fn overlay(self, top: Self) -> Self {
        Self {
            seed: top.seed.or(self.seed),
            alpha: top.alpha.or(self.alpha),
            beta: top.beta.or(self.beta),
            n: top.n.or(self.n),
            n_list: top.n_list.or(self.n_list),
            m: top.m.or(self.m),
            weight: top.weight.or(self.weight),
            points: top.points.or(self.points),
            lambda_grid: top.lambda_grid.or(self.lambda_grid),
            tol: self.tol.overlay(top.tol),
            output: top.output.or(self.output),
            workers: top.workers.or(self.workers),
            method: top.method.or(self.method),
            functional: top.functional.or(self.functional),
            bootstrap: top.bootstrap.or(self.bootstrap),
        }
    }

    fn seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| config_err("seed is required for this command"))
    }

    fn hurst(&self) -> CliResult<HurstPair> {
        let alpha = self.alpha.ok_or_else(|| config_err("alpha is required"))?;
        let beta = self.beta.ok_or_else(|| config_err("beta is required"))?;
        Ok(HurstPair::new(alpha, beta)?)
    }

    fn n_or(&self, default: usize) -> CliResult<usize> {
        match self.n.unwrap_or(default) {
            0 => Err(config_err("n must be positive")),
            n => Ok(n),
        }
    }

    fn n_required(&self) -> CliResult<usize> {
        let n = self.n.ok_or_else(|| config_err("n is required"))?;
        self.n_or(n)
    }

    fn replications_or(&self, default: usize) -> CliResult<usize> {
        match self.m.unwrap_or(default) {
            0 => Err(config_err("M must be positive")),
            m => Ok(m),
        }
    }

    fn weight_or(&self, default: WeightFunction) -> CliResult<WeightFunction> {
        match &self.weight {
            None => Ok(default),
            Some(s) => Ok(s.parse()?),
        }
    }

    fn first_point(&self) -> Point {
        self.points
            .as_ref()
            .and_then(|p| p.first().copied())
            .unwrap_or([1.0, 1.0])
    }

    fn method(&self) -> CliResult<Option<FactorMethod>> {
        self.method.as_deref().map(str::parse).transpose().map_err(CliError::from)
    }

    fn sampler(&self, h: HurstPair, n: usize) -> CliResult<SheetSampler> {
        Ok(match self.method()? {
            Some(m) => SheetSampler::new(h, n, m)?,
            None => SheetSampler::preferred(h, n)?,
        })
    }
}

/// Flags mirroring [`RunConfig`]; usable before or after the subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// TOML file with any of the settings below.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Comma-separated grid sizes.
    #[arg(long = "n_list", global = true, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Monte Carlo replications.
    #[arg(long = "M", global = true, visible_alias = "replications")]
    pub m: Option<usize>,
    /// constant_one | identity | square | cosine | table:v0,v1,...
    #[arg(long, global = true)]
    pub weight: Option<String>,
    /// Points as `s,t;s,t;...`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub points: Option<String>,
    /// Per-coordinate lambda values, comma-separated.
    #[arg(long = "lambda_grid", global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda_grid: Option<Vec<f64>>,
    /// `KEY=VALUE` (sigma, relative, ks_level, slope, fraction) or a bare
    /// number for the series tolerance; repeatable.
    #[arg(long, global = true, value_name = "KEY=VALUE")]
    pub tol: Vec<String>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// cholesky | circulant (default: circulant, falling back to Cholesky).
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Sheet functional for `verify stable`: cos_terminal | positive_midpoint.
    #[arg(long, global = true)]
    pub functional: Option<String>,
    /// Bootstrap resamples.
    #[arg(long, global = true)]
    pub bootstrap: Option<usize>,
}

fn parse_points(s: &str) -> CliResult<Vec<Point>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let xs: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| config_err(format!("point {p:?}: {e}")))?;
            match xs[..] {
                [s, t] => Ok([s, t]),
                _ => Err(config_err(format!("point {p:?} needs two coordinates"))),
            }
        })
        .collect()
}

impl ConfigFlags {
    fn to_config(&self) -> CliResult<RunConfig> {
        let mut tol = Tolerances::default();
        for t in &self.tol {
            match t.split_once('=') {
                Some((k, v)) => {
                    let v = v
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| config_err(format!("tolerance {t:?}: {e}")))?;
                    tol.set(k.trim(), v)?;
                }
                None => tol.sigma = Some(t.parse().map_err(|e| config_err(format!("tolerance {t:?}: {e}")))?),
            }
        }
        Ok(RunConfig {
            seed: self.seed,
            alpha: self.alpha,
            beta: self.beta,
            n: self.n,
            n_list: self.n_list.clone(),
            m: self.m,
            weight: self.weight.clone(),
            points: self.points.as_deref().map(parse_points).transpose()?,
            lambda_grid: self.lambda_grid.clone(),
            tol,
            output: self.output.clone(),
            workers: self.workers,
            method: self.method.clone(),
            functional: self.functional.clone(),
            bootstrap: self.bootstrap,
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "fbsheet", version, about = "Fractional Brownian sheets: weighted quadratic variations and their limit")]
pub struct Cli {
    #[command(flatten)]
    pub flags: ConfigFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleKind {
    /// Node values, `(n+1) x (n+1)`.
    Grid,
    /// Cell increments, `n x n`.
    Increments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleFormat {
    Csv,
    /// Little-endian binary dump.
    Bin,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// The limiting constant with its truncation bound.
    Sigma,
    /// Draw one sheet on the n x n grid.
    Sample {
        #[arg(long, value_enum, default_value_t = SampleKind::Grid)]
        kind: SampleKind,
        #[arg(long, value_enum, default_value_t = SampleFormat::Csv)]
        format: SampleFormat,
    },
    /// The statistic X^n (or the discretized limit) on the grid of one draw.
    Qv {
        /// Emit the limit sigma * int f(W) dB instead of X^n.
        #[arg(long)]
        limit: bool,
    },
    /// Run a verification suite: mean | var | ks | charfn | stable | kernel-props | sampler.
    Verify { which: String },
    /// Time the sampler and statistic stages.
    Bench,
}

/// Parse `args`, run, and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn resolve_config(flags: &ConfigFlags) -> CliResult<RunConfig> {
    let from_flags = flags.to_config()?;
    let base = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    Ok(base.overlay(from_flags))
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let cfg = resolve_config(&cli.flags)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        if w == 0 {
            return Err(config_err("workers must be positive"));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| config_err(format!("worker pool: {e}")))?;
    // the pool needs Send captures, so commands write to buffers first
    let (mut out_buf, mut err_buf) = (Vec::new(), Vec::new());
    let result = pool.install(|| match &cli.command {
        Command::Sigma => cmd_sigma(&cfg, &mut out_buf),
        Command::Sample { kind, format } => cmd_sample(&cfg, *kind, *format, &mut out_buf),
        Command::Qv { limit } => cmd_qv(&cfg, *limit, &mut out_buf),
        Command::Verify { which } => cmd_verify(&cfg, which, &mut out_buf, &mut err_buf),
        Command::Bench => cmd_bench(&cfg, &mut out_buf, &mut err_buf),
    });
    out.write_all(&out_buf)?;
    err.write_all(&err_buf)?;
    out.flush()?;
    result
}

fn create_output(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
}

/// Limiting constant as JSON.
pub fn cmd_sigma(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<i32> {
    let h = cfg.hurst()?;
    let tol = cfg.tol.sigma.unwrap_or(DEFAULT_SIGMA_TOL);
    let res = sigma_series(&h, tol)?;
    let payload = json!({
        "alpha": h.alpha(),
        "beta": h.beta(),
        "tol": tol,
        "sigma": res.sigma(),
        "sigma_squared": res.value,
        "cutoff": res.cutoff,
        "tail_bound": res.tail_bound,
        "admissible": h.admissible(),
    });
    writeln!(out, "{}", to_json_string(&payload))?;
    Ok(EXIT_OK)
}

/// One sheet as CSV (header row, metadata row, matrix rows) or binary dump.
pub fn cmd_sample(cfg: &RunConfig, kind: SampleKind, format: SampleFormat, out: &mut dyn Write) -> CliResult<i32> {
    let h = cfg.hurst()?;
    let n = cfg.n_required()?;
    let seed = cfg.seed()?;
    let sampler = cfg.sampler(h, n)?;
    let (inc, field) = sampler.sample_field(&mut RngStream::new(seed, 0, Purpose::Sheet));
    let (dump_kind, values) = match kind {
        SampleKind::Grid => (DumpKind::Grid, field.values()),
        SampleKind::Increments => (DumpKind::Increments, inc.values()),
    };
    let mut file = cfg.output.as_deref().map(create_output).transpose()?;
    let sink: &mut dyn Write = match file.as_mut() {
        Some(f) => f,
        None if format == SampleFormat::Bin => {
            return Err(config_err("binary output needs --output"));
        }
        None => out,
    };
    match format {
        SampleFormat::Csv => {
            let name = match kind {
                SampleKind::Grid => "grid",
                SampleKind::Increments => "increments",
            };
            writeln!(sink, "n,alpha,beta,kind,seed,method")?;
            writeln!(
                sink,
                "{n},{:.16e},{:.16e},{name},{seed},{}",
                h.alpha(),
                h.beta(),
                match sampler.method() {
                    FactorMethod::Cholesky => "cholesky",
                    FactorMethod::Circulant => "circulant",
                }
            )?;
            write_matrix_csv(sink, values)?;
        }
        SampleFormat::Bin => write_dump(sink, dump_kind, &h, values)?,
    }
    sink.flush()?;
    Ok(EXIT_OK)
}

/// `X^n` (or the limit) at every grid point as CSV, or at `points` as JSON.
pub fn cmd_qv(cfg: &RunConfig, limit: bool, out: &mut dyn Write) -> CliResult<i32> {
    let h = cfg.hurst()?;
    let n = cfg.n_required()?;
    let seed = cfg.seed()?;
    let weight = cfg.weight_or(WeightFunction::ConstantOne)?;
    let sampler = cfg.sampler(h, n)?;
    let (inc, field) = sampler.sample_field(&mut RngStream::new(seed, 0, Purpose::Sheet));
    let sums = if limit {
        let s = sigma_series(&h, cfg.tol.sigma.unwrap_or(DEFAULT_SIGMA_TOL))?.sigma();
        let driver = sample_white_increments(n, &mut RngStream::new(seed, 0, Purpose::Driver));
        limit_sample(&field, &weight, s, &driver)?
    } else {
        qv_process(&field, &inc, &weight)?.partial_sums().clone()
    };
    if let Some(points) = &cfg.points {
        let values: Vec<f64> = points.iter().map(|p| sums.eval(p[0], p[1])).collect();
        let payload = json!({
            "alpha": h.alpha(), "beta": h.beta(), "n": n, "seed": seed,
            "weight": weight.name(), "limit": limit, "points": points, "values": values,
        });
        writeln!(out, "{}", to_json_string(&payload))?;
    }
    match cfg.output.as_deref() {
        Some(path) => {
            let mut f = create_output(path)?;
            write_partial_sums_csv(&mut f, &h, &weight, &sums)?;
            f.flush()?;
        }
        None if cfg.points.is_none() => write_partial_sums_csv(out, &h, &weight, &sums)?,
        None => {}
    }
    Ok(EXIT_OK)
}

fn n_pair(cfg: &RunConfig, default_fine: usize) -> CliResult<(usize, usize)> {
    match cfg.n_list.as_deref() {
        Some([a, b]) => Ok((*a, *b)),
        Some(other) => Err(config_err(format!("n_list must have two values here, got {other:?}"))),
        None => {
            let n = cfg.n_or(default_fine)?;
            if n < 2 {
                return Err(config_err("n must be at least 2 for a two-level check"));
            }
            Ok((n / 2, n))
        }
    }
}

fn charfn_check(cfg: &RunConfig, functional: Option<SheetFunctional>, default_weight: WeightFunction) -> CliResult<CharFnCheck> {
    let (n_coarse, n_fine) = n_pair(cfg, 64)?;
    let points = cfg
        .points
        .clone()
        .unwrap_or_else(|| vec![[0.5, 1.0], [1.0, 0.5]]);
    let values = cfg
        .lambda_grid
        .clone()
        .unwrap_or_else(|| DEFAULT_LAMBDA_VALUES.to_vec());
    Ok(CharFnCheck {
        hurst: cfg.hurst()?,
        weight: cfg.weight_or(default_weight)?,
        lambda_grid: product_grid(&values, points.len()),
        points,
        n_coarse,
        n_fine,
        replications: cfg.replications_or(5000)?,
        seed: cfg.seed()?,
        bootstrap: cfg.bootstrap.unwrap_or(BOOTSTRAP_RESAMPLES),
        functional,
    })
}

fn verify_reports(cfg: &RunConfig, which: &str) -> CliResult<Vec<VerifyReport>> {
    let mut reports = Vec::new();
    match which {
        "mean" => {
            let h = cfg.hurst()?;
            let weight = cfg.weight_or(WeightFunction::Square)?;
            let t = cfg.first_point();
            let check = MomentCheck {
                hurst: h,
                weight: weight.clone(),
                n: cfg.n_or(16)?,
                t,
                replications: cfg.replications_or(10_000)?,
                seed: cfg.seed()?,
            };
            reports.push(check.mean()?);
            if let Some(list) = &cfg.n_list {
                let d = mean_decay(&h, &weight, t, list)?;
                reports.push(d.report(&h, &weight, t, cfg.tol.slope.unwrap_or(0.25)));
            }
        }
        "var" => {
            let h = cfg.hurst()?;
            let weight = cfg.weight_or(WeightFunction::ConstantOne)?;
            let t = cfg.first_point();
            let seed = cfg.seed()?;
            let replications = cfg.replications_or(10_000)?;
            if let Some(list) = &cfg.n_list {
                let [n_coarse, n_fine] = list[..] else {
                    return Err(config_err("n_list for var must have two values"));
                };
                reports.push(
                    SecondMomentLimit {
                        hurst: h,
                        weight,
                        t,
                        n_coarse,
                        n_fine,
                        replications,
                        seed,
                        rel_tol: cfg.tol.relative.unwrap_or(0.15),
                    }
                    .run()?,
                );
            } else {
                let check = MomentCheck {
                    hurst: h,
                    weight,
                    n: cfg.n_or(32)?,
                    t,
                    replications,
                    seed,
                };
                reports.push(check.variance()?);
            }
        }
        "ks" => {
            let weight = cfg.weight_or(WeightFunction::ConstantOne)?;
            if weight != WeightFunction::ConstantOne {
                return Err(config_err("the KS check supports weight constant_one only"));
            }
            reports.push(clt_ks_check(
                &cfg.hurst()?,
                cfg.n_or(64)?,
                cfg.replications_or(5000)?,
                cfg.seed()?,
                cfg.tol.ks_level.unwrap_or(1e-3),
            )?);
        }
        "charfn" => reports.push(charfn_check(cfg, None, WeightFunction::Cosine)?.run()?),
        "stable" => {
            let functional = match cfg.functional.as_deref() {
                None => SheetFunctional::CosTerminal,
                Some(s) => s.parse()?,
            };
            reports.push(charfn_check(cfg, Some(functional), WeightFunction::Identity)?.run()?);
        }
        "kernel-props" => {
            reports.extend(kernel_property_suite(
                cfg.replications_or(100_000)?,
                cfg.seed.unwrap_or(0),
            )?);
        }
        "sampler" => {
            let check = SamplerCheck {
                hurst: cfg.hurst()?,
                n: cfg.n_or(8)?,
                replications: cfg.replications_or(20_000)?,
                seed: cfg.seed()?,
                min_fraction: cfg.tol.fraction.unwrap_or(0.99),
            };
            reports.push(check.exactness(FactorMethod::Cholesky)?);
            reports.push(check.exactness(FactorMethod::Circulant)?);
            reports.push(check.agreement()?);
        }
        other => {
            return Err(config_err(format!(
                "unknown verification {other:?}; expected mean, var, ks, charfn, stable, kernel-props or sampler"
            )))
        }
    }
    Ok(reports)
}

/// Run a suite; JSON lines to stdout (and `output`), a table to stderr.
pub fn cmd_verify(cfg: &RunConfig, which: &str, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let reports = verify_reports(cfg, which)?;
    let mut file = cfg.output.as_deref().map(create_output).transpose()?;
    for r in &reports {
        let line = r.to_json();
        writeln!(out, "{line}")?;
        if let Some(f) = file.as_mut() {
            writeln!(f, "{line}")?;
        }
    }
    if let Some(f) = file.as_mut() {
        f.flush()?;
    }
    write!(err, "{}", render_table(&reports))?;
    Ok(if reports.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

#[derive(Debug, Serialize)]
struct Timing {
    stage: &'static str,
    n: usize,
    method: FactorMethod,
    reps: usize,
    mean_s: f64,
    sd_s: f64,
    per_second: f64,
}

fn timing(stage: &'static str, n: usize, method: FactorMethod, secs: &[f64]) -> Timing {
    let reps = secs.len();
    let mean = secs.iter().sum::<f64>() / reps as f64;
    let sd = if reps > 1 {
        (secs.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
    } else {
        0.0
    };
    Timing {
        stage,
        n,
        method,
        reps,
        mean_s: mean,
        sd_s: sd,
        per_second: if mean > 0.0 { 1.0 / mean } else { f64::INFINITY },
    }
}

/// Wall time per stage for each `n` and sampler path.
pub fn cmd_bench(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let h = cfg.hurst()?;
    let seed = cfg.seed()?;
    let ns = match (&cfg.n_list, cfg.n) {
        (Some(l), _) => l.clone(),
        (None, Some(n)) => vec![n],
        (None, None) => vec![8, 64, 256],
    };
    if ns.contains(&0) {
        return Err(config_err("n must be positive"));
    }
    let reps = cfg.replications_or(10)?;
    let weight = cfg.weight_or(WeightFunction::ConstantOne)?;
    let methods = match cfg.method()? {
        Some(m) => vec![m],
        None => vec![FactorMethod::Cholesky, FactorMethod::Circulant],
    };
    let mut rows = Vec::new();
    for &n in &ns {
        for &method in &methods {
            let start = Instant::now();
            let sampler = SheetSampler::new(h, n, method)?;
            rows.push(timing("factor", n, method, &[start.elapsed().as_secs_f64()]));
            let mut sample_s = Vec::with_capacity(reps);
            let mut stat_s = Vec::with_capacity(reps);
            for r in 0..reps as u64 {
                let mut rng = RngStream::new(seed, r, Purpose::Sheet);
                let t0 = Instant::now();
                let inc = sampler.sample_increments(&mut rng);
                let field = field_from_increments(&inc);
                sample_s.push(t0.elapsed().as_secs_f64());
                let t1 = Instant::now();
                let q = qv_process(&field, &inc, &weight)?;
                stat_s.push(t1.elapsed().as_secs_f64());
                std::hint::black_box(q);
            }
            rows.push(timing("sample", n, method, &sample_s));
            rows.push(timing("statistic", n, method, &stat_s));
        }
    }
    writeln!(err, "{:<10} {:>6} {:>10} {:>5} {:>12} {:>12} {:>12}", "stage", "n", "method", "reps", "mean_s", "sd_s", "per_s")?;
    for t in &rows {
        writeln!(out, "{}", to_json_string(t))?;
        writeln!(
            err,
            "{:<10} {:>6} {:>10} {:>5} {:>12.4e} {:>12.4e} {:>12.4e}",
            t.stage,
            t.n,
            serde_json::to_value(t.method).unwrap().as_str().unwrap_or(""),
            t.reps,
            t.mean_s,
            t.sd_s,
            t.per_second
        )?;
    }
    Ok(EXIT_OK)
}
