//! Computation of each artifact from a resolved configuration, shared by the
//! individual subcommands and the full pipeline.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kfcl_core::distribution::{
    beta_k, exact_log_distribution, exceedance_threshold, growth_envelope, ks_distance, normalizer_sweep,
    variance_integral, variance_integral_between, variance_trend, window_stability, BetaReport,
    EmpiricalDistribution, GrowthReport, NormalizerSweep, VarianceTrend, WindowStability,
};
use kfcl_core::explicit::{residue_coefficients, ResidueTerm};
use kfcl_core::kfree::{cumulative_series, KFreeSieve, StepSeries};
use kfcl_core::limodel::{
    empirical_vs_model, fourier_nu, montgomery_bounds, FourierValue, ModelAmplitudes, ModelComparison,
    MontgomeryBounds,
};
use kfcl_core::zeros::{
    moment_growth_fit, parse_zero_text, scan_catalog, write_atomic, MomentGrowthReport, ZeroCatalog, ZeroFileFormat,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
/// Prime cutoff for the Euler product in predicted moment constants.
pub const MOMENT_PRIME_CUTOFF: u64 = 100_000;
pub const MOMENT_ORDERS: [f64; 2] = [0.5, 1.0];
pub const EXCEEDANCE_TARGET: f64 = 0.01;

/// Artifact file names, in report order.
pub const ARTIFACTS: [&str; 7] = [
    "growth.json",
    "variance.json",
    "beta.json",
    "stability.json",
    "dist.json",
    "model_compare.json",
    "moments.json",
];

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    quantity: &'a str,
    config_hash: &'a str,
    data: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> CliResult<()> {
    let mut text = String::with_capacity(32 * rows.len() * header.split(',').count());
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.15e}")).collect();
        writeln!(text, "{}", cells.join(",")).unwrap();
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Lazily built inputs for one configuration.
pub struct Session {
    pub cfg: RunConfig,
    hash: Option<String>,
    series: Option<StepSeries>,
    catalog: Option<ZeroCatalog>,
    terms: Option<Vec<ResidueTerm>>,
    dist: Option<EmpiricalDistribution>,
}

impl Session {
    pub fn new(cfg: RunConfig) -> Self {
        Self {
            cfg,
            hash: None,
            series: None,
            catalog: None,
            terms: None,
            dist: None,
        }
    }

    pub fn hash(&mut self) -> CliResult<String> {
        if self.hash.is_none() {
            self.hash = Some(self.cfg.hash()?);
        }
        Ok(self.hash.clone().unwrap())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    pub fn write_artifact<T: Serialize>(&mut self, name: &str, quantity: &str, data: &T) -> CliResult<PathBuf> {
        let hash = self.hash()?;
        let path = self.out_path(name);
        write_json(
            &path,
            &Envelope {
                schema_version: SCHEMA_VERSION,
                quantity,
                config_hash: &hash,
                data,
            },
        )?;
        Ok(path)
    }

    pub fn sieve(&self, limit: u64) -> CliResult<KFreeSieve> {
        fs::create_dir_all(&self.cfg.cache)
            .map_err(|e| CliError::Data(format!("{}: {e}", self.cfg.cache.display())))?;
        Ok(KFreeSieve::load_or_build(&self.cfg.cache, self.cfg.k, limit)?)
    }

    pub fn series(&mut self) -> CliResult<&StepSeries> {
        if self.series.is_none() {
            let sieve = self.sieve(self.cfg.n)?;
            self.series = Some(cumulative_series(&self.cfg.spec(), self.cfg.n, &sieve)?);
        }
        Ok(self.series.as_ref().unwrap())
    }

    /// Raw catalog from the configured source, not enriched.
    pub fn raw_catalog(&self) -> CliResult<ZeroCatalog> {
        let function = self.cfg.catalog.clone();
        match self.cfg.zero_text()? {
            Some((name, text)) => Ok(parse_zero_text(&text, &name, detect_format(&text), function)?),
            None => Ok(scan_catalog(function, self.cfg.t + 1.0, &self.cfg.context())?),
        }
    }

    /// Enriched catalog, cached under the hash of its source, function and
    /// precision.
    pub fn catalog(&mut self) -> CliResult<&ZeroCatalog> {
        if self.catalog.is_none() {
            let source = match self.cfg.zero_text()? {
                Some((_, text)) => text,
                None => format!("scan to {:?}", self.cfg.t + 1.0),
            };
            let mut h = Sha256::new();
            h.update(source.as_bytes());
            h.update(self.cfg.catalog.to_string().as_bytes());
            h.update(self.cfg.precision.to_le_bytes());
            let key = hex(&h.finalize()[..8]);
            let path = self.cfg.cache.join(format!("enriched-{key}.csv"));
            let catalog = if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                parse_zero_text(&text, &path.display().to_string(), ZeroFileFormat::Csv, self.cfg.catalog.clone())?
            } else {
                let c = self.raw_catalog()?.enrich(&self.cfg.context())?;
                fs::create_dir_all(&self.cfg.cache)
                    .map_err(|e| CliError::Data(format!("{}: {e}", self.cfg.cache.display())))?;
                c.write_csv(&path)?;
                c
            };
            self.catalog = Some(catalog);
        }
        Ok(self.catalog.as_ref().unwrap())
    }

    pub fn terms(&mut self) -> CliResult<&[ResidueTerm]> {
        if self.terms.is_none() {
            let spec = self.cfg.spec();
            let ctx = self.cfg.context();
            let t = self.cfg.t;
            let catalog = self.catalog()?;
            if catalog.t_max() < t {
                return Err(CliError::Data(format!(
                    "zero catalog reaches height {} but T = {t}",
                    catalog.t_max()
                )));
            }
            let terms = residue_coefficients(&spec, catalog, t, &ctx)?;
            self.terms = Some(terms);
        }
        Ok(self.terms.as_deref().unwrap())
    }

    pub fn y_max(&self) -> f64 {
        ((self.cfg.n + 1) as f64).ln()
    }

    pub fn distribution(&mut self) -> CliResult<&EmpiricalDistribution> {
        if self.dist.is_none() {
            let (y0, y1, bins) = (self.cfg.y0, self.y_max(), self.cfg.bins);
            let d = exact_log_distribution(self.series()?, y0, y1, bins)?;
            self.dist = Some(d);
        }
        Ok(self.dist.as_ref().unwrap())
    }

    /// Conductor of the function whose zeros index the residue terms.
    pub fn zero_modulus(&self) -> u64 {
        self.cfg.catalog.modulus()
    }

    pub fn amplitudes(&mut self) -> CliResult<ModelAmplitudes> {
        let (k, q) = (self.cfg.k, self.zero_modulus());
        Ok(ModelAmplitudes::from_terms(self.terms()?, k, q)?)
    }
}

pub fn detect_format(text: &str) -> ZeroFileFormat {
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    if first.to_ascii_lowercase().starts_with("gamma") {
        ZeroFileFormat::Csv
    } else {
        ZeroFileFormat::Plain
    }
}

/// Powers of ten from `10^3` below `top`, then `top` itself.
pub fn decade_grid(top: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (3..).map(|e| 10f64.powi(e)).take_while(|&x| x < top).collect();
    grid.push(top);
    grid
}

#[derive(Debug, Serialize)]
pub struct VarianceArtifact {
    pub trend: VarianceTrend,
    /// `|V(2, X1) + V(X1, X) - V(2, X)|` relative to `V(2, X)` at the middle
    /// of the grid.
    pub additivity_gap: f64,
}

pub fn variance_artifact(s: &mut Session, xs: &[f64]) -> CliResult<VarianceArtifact> {
    let series = s.series()?;
    let trend = variance_trend(series, xs)?;
    let top = *xs.last().unwrap();
    let mid = (top.ln() / 2.0).exp().max(2.5);
    let whole = variance_integral(series, top)?;
    let split = variance_integral_between(series, 2.0, mid)? + variance_integral_between(series, mid, top)?;
    Ok(VarianceArtifact {
        trend,
        additivity_gap: if whole > 0.0 { (split - whole).abs() / whole } else { 0.0 },
    })
}

#[derive(Debug, Serialize)]
pub struct BetaArtifact {
    pub truncation: f64,
    pub beta: BetaReport,
    pub x: f64,
    pub variance_ratio: f64,
    /// `|ratio - beta| / beta` with `beta` the partial sum plus tail.
    pub relative_gap: f64,
}

pub fn beta_artifact(s: &mut Session) -> CliResult<BetaArtifact> {
    let q = s.zero_modulus();
    let beta = beta_k(s.terms()?, q);
    let x = s.cfg.n as f64;
    let ratio = variance_integral(s.series()?, x)? / x.ln();
    Ok(BetaArtifact {
        truncation: s.cfg.t,
        relative_gap: (ratio - beta.total).abs() / beta.total,
        beta,
        x,
        variance_ratio: ratio,
    })
}

pub fn stability_artifact(s: &mut Session) -> CliResult<Vec<WindowStability>> {
    let ys: Vec<f64> = decade_grid(s.cfg.n as f64).iter().map(|x| x.ln()).collect();
    let (y0, bins) = (s.cfg.y0, s.cfg.bins);
    Ok(window_stability(s.series()?, y0, &ys, bins)?)
}

#[derive(Debug, Serialize)]
pub struct DistArtifact {
    pub y0: f64,
    pub y: f64,
    pub variance: f64,
    pub kurtosis: f64,
    pub total_mass: f64,
    pub ks_half_window: f64,
    pub distribution: EmpiricalDistribution,
}

pub fn dist_artifact(s: &mut Session, y: Option<f64>) -> CliResult<DistArtifact> {
    let y = y.unwrap_or_else(|| s.y_max());
    let (y0, bins) = (s.cfg.y0, s.cfg.bins);
    let full = if y == s.y_max() {
        s.distribution()?.clone()
    } else {
        exact_log_distribution(s.series()?, y0, y, bins)?
    };
    let half = exact_log_distribution(s.series()?, y0, 0.5 * y, bins)?;
    Ok(DistArtifact {
        y0,
        y,
        variance: full.variance(),
        kurtosis: full.kurtosis(),
        total_mass: full.total_mass(),
        ks_half_window: ks_distance(&full, &half),
        distribution: full,
    })
}

pub fn dist_csv(path: &Path, d: &EmpiricalDistribution) -> CliResult<()> {
    let rows: Vec<Vec<f64>> = (0..d.bins())
        .map(|i| vec![d.edges[i], d.edges[i + 1], d.masses[i]])
        .collect();
    write_csv(path, "bin_lo,bin_hi,mass", &rows)
}

#[derive(Debug, Serialize)]
pub struct GrowthArtifact {
    pub envelope: GrowthReport,
    /// Smallest `C~` whose exceedance log-measure is below the target.
    pub threshold_target: f64,
    pub threshold_ctilde: f64,
    pub normalizer: NormalizerSweep,
}

pub fn growth_artifact(s: &mut Session, x: Option<f64>) -> CliResult<GrowthArtifact> {
    let x = x.unwrap_or(s.cfg.n as f64);
    let (c, eps) = (s.cfg.ctilde, s.cfg.eps);
    let series = s.series()?;
    Ok(GrowthArtifact {
        envelope: growth_envelope(series, c, eps, x)?,
        threshold_target: EXCEEDANCE_TARGET,
        threshold_ctilde: exceedance_threshold(series, eps, x, EXCEEDANCE_TARGET)?,
        normalizer: normalizer_sweep(series, x)?,
    })
}

#[derive(Debug, Serialize)]
pub struct ModelArtifact {
    pub truncation: f64,
    pub terms: usize,
    pub tail_sum: f64,
    pub comparison: ModelComparison,
    pub fourier: Vec<FourierValue>,
    pub montgomery: Vec<MontgomeryBounds>,
}

pub fn model_artifact(s: &mut Session, dist: Option<EmpiricalDistribution>) -> CliResult<ModelArtifact> {
    let amps = s.amplitudes()?;
    let dist = match dist {
        Some(d) => d,
        None => s.distribution()?.clone(),
    };
    let comparison = empirical_vs_model(&dist, &amps, s.cfg.samples, s.cfg.seed)?;
    let montgomery = [5usize, 10, 20]
        .iter()
        .filter(|&&k| k <= amps.len())
        .map(|&k| montgomery_bounds(&amps, k))
        .collect::<Result<_, _>>()?;
    Ok(ModelArtifact {
        truncation: amps.truncation,
        terms: amps.len(),
        tail_sum: amps.tail_sum,
        comparison,
        fourier: [0.5, 1.0, 2.0].iter().map(|&xi| fourier_nu(&amps, xi)).collect(),
        montgomery,
    })
}

/// Eight log-spaced heights from 50 to the top of the catalog.
pub fn moment_grid(t_max: f64) -> Vec<f64> {
    let (lo, hi) = (50f64.ln(), t_max.ln());
    (0..8).map(|i| (lo + (hi - lo) * i as f64 / 7.0).exp().min(t_max)).collect()
}

pub fn moments_artifact(s: &mut Session, orders: &[f64], grid: Option<&[f64]>) -> CliResult<Vec<MomentGrowthReport>> {
    let catalog = s.catalog()?;
    let grid = grid.map(<[f64]>::to_vec).unwrap_or_else(|| moment_grid(catalog.t_max()));
    orders
        .iter()
        .map(|&r| Ok(moment_growth_fit(catalog, r, &grid, MOMENT_PRIME_CUTOFF)?))
        .collect()
}

/// Computes and writes every artifact the report needs.
pub fn run_all(s: &mut Session) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let g = growth_artifact(s, None)?;
    written.push(s.write_artifact("growth.json", "growth_envelope", &g)?);
    let v = variance_artifact(s, &decade_grid(s.cfg.n as f64))?;
    written.push(s.write_artifact("variance.json", "variance_integral_ratio", &v)?);
    let b = beta_artifact(s)?;
    written.push(s.write_artifact("beta.json", "beta_k", &b)?);
    let st = stability_artifact(s)?;
    written.push(s.write_artifact("stability.json", "ks_window_stability", &st)?);
    let d = dist_artifact(s, None)?;
    let csv = s.out_path("dist.csv");
    dist_csv(&csv, &d.distribution)?;
    written.push(csv);
    written.push(s.write_artifact("dist.json", "log_measure_distribution", &d)?);
    let m = model_artifact(s, None)?;
    written.push(s.write_artifact("model_compare.json", "model_comparison", &m)?);
    let mo = moments_artifact(s, &MOMENT_ORDERS, None)?;
    written.push(s.write_artifact("moments.json", "discrete_moment_growth", &mo)?);
    Ok(written)
}
