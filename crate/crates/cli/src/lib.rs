//! Command-line driver: configuration, caching, artifact emission and the
//! consolidated report.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use kfcl_core::distribution::EmpiricalDistribution;
use kfcl_core::explicit::{
    coefficient_decay_constant, coefficient_decay_fit, error_envelope, explicit_sum, ErrorModel,
};
use kfcl_core::kfree::partial_sum;
use kfcl_core::limodel::{fourier_nu, montgomery_bounds, sample_x, tail_from_samples};
use kfcl_core::zeros::{
    parse_zero_file, scan_zeros, zero_count_check, zero_count_sweep, ZeroCatalog, DEFAULT_COUNT_CONSTANT,
};
use serde::Serialize;
use serde_json::Value;

use crate::config::{read_config_file, Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    beta_artifact, decade_grid, detect_format, dist_artifact, dist_csv, growth_artifact, model_artifact,
    moments_artifact, run_all, stability_artifact, variance_artifact, write_csv, Session, MOMENT_ORDERS,
};

/// Calibration x values per truncation for the explicit-formula envelope.
const CALIBRATION_POINTS: usize = 24;

#[derive(Debug, Parser)]
#[command(name = "kfcl", version, about = "Partial sums of real characters over k-free integers")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand; each overrides the config file.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// key = value config file with [spec], [data] and [run] sections
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub k: Option<u32>,
    /// Character modulus
    #[arg(long, global = true)]
    pub q: Option<u64>,
    /// Fundamental discriminant, instead of --q
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub d: Option<i64>,
    /// odd or even, when the modulus carries both
    #[arg(long, global = true)]
    pub kind: Option<String>,
    /// Use the modified character
    #[arg(long, global = true)]
    pub modified: bool,
    /// zeta or L(d=<d>); defaults to the one the summand needs
    #[arg(long, global = true)]
    pub catalog: Option<String>,
    /// Zero file (plain ordinates or gamma,dre,dim csv)
    #[arg(long, global = true)]
    pub zeros: Option<PathBuf>,
    /// Sieve limit
    #[arg(long = "N", visible_alias = "n", global = true)]
    pub n: Option<u64>,
    #[arg(long, global = true)]
    pub precision: Option<u32>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "cache-dir", global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Zero truncation height
    #[arg(long = "T", global = true)]
    pub t: Option<f64>,
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    #[arg(long, global = true)]
    pub y0: Option<f64>,
    /// Model sample count
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long = "Ctilde", visible_alias = "ctilde", global = true)]
    pub ctilde: Option<f64>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            k: self.k,
            q: self.q,
            d: self.d,
            kind: self.kind.clone(),
            modified: self.modified.then_some(true),
            catalog: self.catalog.clone(),
            zeros: self.zeros.clone(),
            n: self.n,
            precision: self.precision,
            out: self.out.clone(),
            cache: self.cache_dir.clone(),
            seed: self.seed,
            t: self.t,
            bins: self.bins,
            y0: self.y0,
            samples: self.samples,
            eps: self.eps,
            ctilde: self.ctilde,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or load the cached k-free sieve and print its count
    Sieve,
    /// Print S_f(x)
    Sum {
        #[arg(long)]
        x: f64,
    },
    #[command(subcommand)]
    Zeros(ZerosCommand),
    /// Truncated explicit formula against the exact sums
    Explicit {
        /// Comma-separated x values
        #[arg(long, value_delimiter = ',')]
        x: Vec<f64>,
        /// lo:hi:n, half-integers spaced evenly in log x
        #[arg(long = "x-grid")]
        x_grid: Option<String>,
    },
    /// Exact log-measure distribution: csv histogram and JSON summary
    Dist {
        #[arg(long = "Y")]
        y: Option<f64>,
    },
    /// Mean-square integral over ln X on a grid of X
    Variance {
        #[arg(long = "X", value_delimiter = ',')]
        x: Vec<f64>,
    },
    /// Growth envelope, exceedance threshold and normaliser sweep
    Growth {
        #[arg(long = "X")]
        x: Option<f64>,
    },
    /// Partial sums of beta_k with the extrapolated tail
    Beta,
    #[command(subcommand)]
    Model(ModelCommand),
    /// Discrete moment growth fits
    Moments(MomentArgs),
    /// KS distance between the windows [y0, Y] and [y0, Y/2]
    Stability,
    /// Consolidate existing artifacts into report.json
    Report,
    /// Compute every artifact, then the report
    Pipeline,
}

#[derive(Debug, Subcommand)]
pub enum ZerosCommand {
    /// Parse a zero file and write it in csv form
    Ingest {
        #[arg(long)]
        file: PathBuf,
    },
    /// Attach derivatives to every ordinate
    Enrich,
    /// Zero-counting check against the smooth main term
    Check {
        #[arg(long = "T-list", value_delimiter = ',')]
        t_list: Vec<f64>,
    },
    Moments(MomentArgs),
    /// Locate zeros on [t-lo, t-hi] from sign changes of the Hardy function
    Scan {
        #[arg(long = "t-lo")]
        t_lo: f64,
        #[arg(long = "t-hi")]
        t_hi: f64,
    },
}

#[derive(Debug, Args)]
pub struct MomentArgs {
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
}

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Draws of the random model
    Sample {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Bessel-product Fourier transform
    Fourier {
        #[arg(long = "xi-grid", value_delimiter = ',', required = true)]
        xi_grid: Vec<f64>,
    },
    /// Tail probabilities and Montgomery bounds
    Tail {
        #[arg(long = "V-grid", value_delimiter = ',', required = true)]
        v_grid: Vec<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Empirical distribution against the model
    Compare {
        /// A dist.json artifact; computed from the config when absent
        #[arg(long)]
        dist: Option<PathBuf>,
    },
}

/// Runs the command line, writing normal output to `out` and diagnostics
/// to `err`; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn resolve(common: &CommonArgs) -> CliResult<RunConfig> {
    let file = match &common.config {
        Some(p) => read_config_file(p)?,
        None => Overrides::default(),
    };
    RunConfig::resolve(&file.layered(&common.overrides()))
}

fn print_paths(out: &mut dyn Write, paths: &[PathBuf]) -> CliResult<()> {
    for p in paths {
        writeln!(out, "{}", p.display()).map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|e| CliError::Data(e.to_string()))
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let cfg = resolve(&cli.common)?;
    let mut s = Session::new(cfg);
    match cli.command {
        Command::Sieve => {
            let sieve = s.sieve(s.cfg.n)?;
            say(out, sieve.count())
        }
        Command::Sum { x } => {
            if !(x >= 1.0) || !x.is_finite() {
                return Err(CliError::Usage(format!("x must be >= 1, got {x}")));
            }
            let n = kfcl_core::kfree::floor_snapped(x).max(1);
            let sieve = s.sieve(n.max(s.cfg.k as u64))?;
            say(out, partial_sum(&s.cfg.spec(), x, &sieve)?)
        }
        Command::Zeros(z) => zeros_command(&mut s, z, out),
        Command::Explicit { x, x_grid } => explicit_command(&mut s, x, x_grid, out),
        Command::Dist { y } => {
            let d = dist_artifact(&mut s, y)?;
            let csv = s.out_path("dist.csv");
            dist_csv(&csv, &d.distribution)?;
            let json = s.write_artifact("dist.json", "log_measure_distribution", &d)?;
            print_paths(out, &[csv, json])
        }
        Command::Variance { x } => {
            let xs = if x.is_empty() { decade_grid(s.cfg.n as f64) } else { x };
            let v = variance_artifact(&mut s, &xs)?;
            let p = s.write_artifact("variance.json", "variance_integral_ratio", &v)?;
            print_paths(out, &[p])
        }
        Command::Growth { x } => {
            let g = growth_artifact(&mut s, x)?;
            let p = s.write_artifact("growth.json", "growth_envelope", &g)?;
            print_paths(out, &[p])
        }
        Command::Beta => {
            let b = beta_artifact(&mut s)?;
            let p = s.write_artifact("beta.json", "beta_k", &b)?;
            print_paths(out, &[p])
        }
        Command::Stability => {
            let st = stability_artifact(&mut s)?;
            let p = s.write_artifact("stability.json", "ks_window_stability", &st)?;
            print_paths(out, &[p])
        }
        Command::Model(m) => model_command(&mut s, m, out),
        Command::Moments(m) => moments_command(&mut s, m, out),
        Command::Report => {
            let p = report::write_report(&s.cfg.out)?;
            print_paths(out, &[p])
        }
        Command::Pipeline => {
            let mut paths = run_all(&mut s)?;
            paths.push(report::write_report(&s.cfg.out)?);
            print_paths(out, &paths)
        }
    }
}

fn moments_command(s: &mut Session, m: MomentArgs, out: &mut dyn Write) -> CliResult<()> {
    let orders = if m.r.is_empty() { MOMENT_ORDERS.to_vec() } else { m.r };
    let grid = (!m.grid.is_empty()).then_some(m.grid.as_slice());
    let mo = moments_artifact(s, &orders, grid)?;
    let p = s.write_artifact("moments.json", "discrete_moment_growth", &mo)?;
    print_paths(out, &[p])
}

#[derive(Serialize)]
struct CountCheck {
    rows: Vec<kfcl_core::zeros::ZeroCountReport>,
    worst_t: f64,
    worst_ratio: f64,
}

fn zeros_command(s: &mut Session, z: ZerosCommand, out: &mut dyn Write) -> CliResult<()> {
    match z {
        ZerosCommand::Ingest { file } => {
            let text = fs::read_to_string(&file).map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?;
            let c = parse_zero_file(&file, detect_format(&text), s.cfg.catalog.clone())?;
            let p = s.out_path("zeros.csv");
            write_catalog(&c, &p)?;
            print_paths(out, &[p])
        }
        ZerosCommand::Enrich => {
            let c = s.catalog()?.clone();
            let p = s.out_path("zeros_enriched.csv");
            write_catalog(&c, &p)?;
            print_paths(out, &[p])
        }
        ZerosCommand::Check { t_list } => {
            let c = s.catalog()?.clone();
            let top = c.t_max().min(1000.0);
            let ts = if t_list.is_empty() { decade_grid_from(20.0, top) } else { t_list };
            let rows = ts
                .iter()
                .map(|&t| zero_count_check(&c, t, DEFAULT_COUNT_CONSTANT))
                .collect::<Result<Vec<_>, _>>()?;
            let (worst_t, worst_ratio) = zero_count_sweep(&c, 20.0)?;
            let p = s.write_artifact(
                "zeros_check.json",
                "zero_count_check",
                &CountCheck {
                    rows,
                    worst_t,
                    worst_ratio,
                },
            )?;
            print_paths(out, &[p])
        }
        ZerosCommand::Moments(m) => moments_command(s, m, out),
        ZerosCommand::Scan { t_lo, t_hi } => {
            let found = scan_zeros(&s.cfg.catalog, t_lo, t_hi, &s.cfg.context())?;
            let c = ZeroCatalog::new(s.cfg.catalog.clone(), found, t_hi)?;
            let p = s.out_path("zeros_scan.csv");
            write_catalog(&c, &p)?;
            print_paths(out, &[p])
        }
    }
}

fn write_catalog(c: &ZeroCatalog, path: &std::path::Path) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    Ok(c.write_csv(path)?)
}

/// `lo`, then multiples of 100 up to `hi`, then `hi`.
fn decade_grid_from(lo: f64, hi: f64) -> Vec<f64> {
    let mut v = vec![lo];
    let mut t = 100.0;
    while t < hi {
        v.push(t);
        t += 100.0;
    }
    if hi > lo {
        v.push(hi);
    }
    v
}

/// Parses `lo:hi:n` into `n` half-integers spread evenly in `log x`.
pub fn half_integer_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Usage(format!("--x-grid expects lo:hi:n, got '{spec}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo >= 2.0) || !(hi > lo) || n < 2 {
        return Err(bad());
    }
    Ok((0..n)
        .map(|i| {
            let x = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp();
            x.floor() + 0.5
        })
        .collect())
}

#[derive(Serialize)]
struct ExplicitSummary {
    truncation: f64,
    terms: usize,
    decay_slope: Option<f64>,
    decay_constant: f64,
    mean_abs_residual: f64,
    max_normalized_residual: f64,
    /// Envelope constants, fitted on a calibration grid disjoint from the
    /// reported x values.
    envelope: ErrorModel,
    calibration_points: usize,
}

/// `(x, T, |residual|)` on a half-integer grid avoiding `xs`, at `T`, `T/2`
/// and `T/4`.
fn envelope_calibration(
    series: &kfcl_core::kfree::StepSeries,
    terms: &[kfcl_core::explicit::ResidueTerm],
    xs: &[f64],
    t: f64,
) -> CliResult<Vec<(f64, f64, f64)>> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min).max(2.0);
    let hi = xs.iter().copied().fold(0.0, f64::max);
    let limit = series.limit() as f64;
    let mut grid = Vec::new();
    for i in 0..CALIBRATION_POINTS {
        let mut x = (lo.ln() + (hi.max(lo + 1.0).ln() - lo.ln()) * i as f64 / (CALIBRATION_POINTS - 1) as f64)
            .exp()
            .floor()
            + 0.5;
        while xs.contains(&x) || grid.contains(&x) {
            x += 1.0;
        }
        if x <= limit {
            grid.push(x);
        }
    }
    let k = series.k();
    let mut samples = Vec::new();
    for tc in [0.25 * t, 0.5 * t, t] {
        let head = &terms[..terms.partition_point(|r| r.gamma < tc)];
        for &x in &grid {
            let r = series.value_at(x)? as f64 - explicit_sum(head, x, k);
            samples.push((x, tc, r.abs()));
        }
    }
    Ok(samples)
}

fn explicit_command(s: &mut Session, x: Vec<f64>, grid: Option<String>, out: &mut dyn Write) -> CliResult<()> {
    let xs = match (x.is_empty(), grid) {
        (false, None) => x,
        (true, Some(g)) => half_integer_grid(&g)?,
        (true, None) => half_integer_grid("100:10000:100")?,
        (false, Some(_)) => return Err(CliError::Usage("use either --x or --x-grid".into())),
    };
    let k = s.cfg.k;
    let top = xs.iter().copied().fold(0.0, f64::max);
    if top > s.cfg.n as f64 {
        return Err(CliError::Usage(format!("x = {top} exceeds the sieve limit N = {}", s.cfg.n)));
    }
    let t = s.cfg.t;
    let terms = s.terms()?.to_vec();
    let series = s.series()?;
    let calibration = envelope_calibration(series, &terms, &xs, t)?;
    let model = ErrorModel::fit(k, ErrorModel::default_epsilon(k), &calibration)?;
    let mut rows = Vec::with_capacity(xs.len());
    for &x in &xs {
        let sf = series.value_at(x)? as f64;
        let e = explicit_sum(&terms, x, k);
        rows.push(vec![x, sf, e, sf - e, error_envelope(&model, x, t)]);
    }
    let csv = s.out_path("explicit.csv");
    write_csv(&csv, "x,S_f,explicit,residual,envelope", &rows)?;
    let summary = ExplicitSummary {
        truncation: s.cfg.t,
        terms: terms.len(),
        decay_slope: coefficient_decay_fit(&terms).map(|f| f.slope),
        decay_constant: coefficient_decay_constant(&terms, k),
        mean_abs_residual: rows.iter().map(|r| r[3].abs()).sum::<f64>() / rows.len() as f64,
        max_normalized_residual: rows
            .iter()
            .map(|r| r[3].abs() / r[0].powf(0.5 / k as f64))
            .fold(0.0, f64::max),
        envelope: model,
        calibration_points: calibration.len(),
    };
    let json = s.write_artifact("explicit.json", "explicit_formula_residual", &summary)?;
    print_paths(out, &[csv, json])
}

#[derive(Serialize)]
struct TailRow {
    v: f64,
    probability: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct TailArtifact {
    count: usize,
    seed: u64,
    rows: Vec<TailRow>,
    montgomery: Vec<kfcl_core::limodel::MontgomeryBounds>,
}

fn model_command(s: &mut Session, m: ModelCommand, out: &mut dyn Write) -> CliResult<()> {
    match m {
        ModelCommand::Sample { count } => {
            let amps = s.amplitudes()?;
            let x = sample_x(&amps, count.unwrap_or(s.cfg.samples), s.cfg.seed);
            let rows: Vec<Vec<f64>> = x.into_iter().map(|v| vec![v]).collect();
            let p = s.out_path("model_samples.csv");
            write_csv(&p, "x", &rows)?;
            print_paths(out, &[p])
        }
        ModelCommand::Fourier { xi_grid } => {
            let amps = s.amplitudes()?;
            let rows: Vec<Vec<f64>> = xi_grid
                .iter()
                .map(|&xi| {
                    let f = fourier_nu(&amps, xi);
                    vec![xi, f.truncated, f.with_tail]
                })
                .collect();
            let p = s.out_path("model_fourier.csv");
            write_csv(&p, "xi,truncated,with_tail", &rows)?;
            print_paths(out, &[p])
        }
        ModelCommand::Tail { v_grid, count } => {
            let amps = s.amplitudes()?;
            let count = count.unwrap_or(s.cfg.samples);
            if count < kfcl_core::limodel::MIN_TAIL_COUNT {
                return Err(CliError::Usage(format!(
                    "tail estimates need at least {} samples",
                    kfcl_core::limodel::MIN_TAIL_COUNT
                )));
            }
            let x = sample_x(&amps, count, s.cfg.seed);
            let rows = v_grid
                .iter()
                .map(|&v| {
                    let t = tail_from_samples(&x, v);
                    TailRow {
                        v,
                        probability: t.probability,
                        std_error: t.std_error,
                    }
                })
                .collect();
            let montgomery = [5usize, 10, 20]
                .iter()
                .filter(|&&k| k <= amps.len())
                .map(|&k| montgomery_bounds(&amps, k))
                .collect::<Result<_, _>>()?;
            let seed = s.cfg.seed;
            let p = s.write_artifact(
                "model_tail.json",
                "model_tail_probability",
                &TailArtifact {
                    count,
                    seed,
                    rows,
                    montgomery,
                },
            )?;
            print_paths(out, &[p])
        }
        ModelCommand::Compare { dist } => {
            let d = match dist {
                Some(path) => Some(load_distribution(&path)?),
                None => None,
            };
            let m = model_artifact(s, d)?;
            let p = s.write_artifact("model_compare.json", "model_comparison", &m)?;
            print_paths(out, &[p])
        }
    }
}

fn load_distribution(path: &std::path::Path) -> CliResult<EmpiricalDistribution> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    let d = v
        .pointer("/data/distribution")
        .cloned()
        .ok_or_else(|| CliError::Data(format!("{}: not a dist artifact", path.display())))?;
    Ok(serde_json::from_value(d)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_half_integers() {
        let g = half_integer_grid("100:10000:100").unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 100.5);
        assert_eq!(g[99], 10000.5);
        assert!(g.iter().all(|x| x.fract() == 0.5));
        assert!(half_integer_grid("100:10").is_err());
    }
}
