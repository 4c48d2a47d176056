//! Zero catalogs for zeta and real-character L-functions: ingestion,
//! Newton refinement, counting checks, discrete moments and the numerical
//! probes of the hypotheses on the zero sequence.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::numeric::{fit_line, least_squares, CompensatedSum};
use crate::special::{hardy_z, hko_constant, EvalContext};
use crate::{Error, Result};

pub use crate::special::FunctionId;

/// The first 1000 zeta ordinates, shipped with the crate.
pub const BUNDLED_ZETA_ZEROS: &str = include_str!("../data/zeta_zeros.txt");

/// Where a record's ordinate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroSource {
    Dataset,
    Computed,
}

/// One zero `rho = 1/2 + i gamma` with the derivative of the function there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroRecord {
    pub gamma: f64,
    pub deriv: Option<Complex64>,
    pub source: ZeroSource,
}

impl ZeroRecord {
    pub fn rho(&self) -> Complex64 {
        Complex64::new(0.5, self.gamma)
    }
}

/// Input layout of a zero file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroFileFormat {
    /// One ordinate per line, `#` comments allowed.
    Plain,
    /// Header `gamma,dre,dim`; empty derivative fields mean "not enriched".
    Csv,
}

/// Positive ordinates of one function, strictly increasing, complete up to
/// `t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCatalog {
    function: FunctionId,
    records: Vec<ZeroRecord>,
    t_max: f64,
}

impl ZeroCatalog {
    pub fn new(function: FunctionId, records: Vec<ZeroRecord>, t_max: f64) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if !(r.gamma > 0.0) || !r.gamma.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "record {} has non-positive ordinate {}",
                    i + 1,
                    r.gamma
                )));
            }
            if i > 0 && records[i - 1].gamma >= r.gamma {
                return Err(Error::InvalidParameter(format!(
                    "ordinates not strictly increasing at record {}",
                    i + 1
                )));
            }
            if r.deriv.is_some_and(|d| d.norm() == 0.0) {
                return Err(Error::MultipleZero {
                    gamma: r.gamma,
                    magnitude: 0.0,
                });
            }
        }
        let last = records.last().map_or(0.0, |r| r.gamma);
        if t_max < last {
            return Err(Error::InvalidParameter(format!(
                "catalog height {t_max} is below its last ordinate {last}"
            )));
        }
        Ok(Self {
            function,
            records,
            t_max,
        })
    }

    pub fn function(&self) -> &FunctionId {
        &self.function
    }

    pub fn records(&self) -> &[ZeroRecord] {
        &self.records
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with `gamma <= t`.
    pub fn up_to(&self, t: f64) -> &[ZeroRecord] {
        let n = self.records.partition_point(|r| r.gamma <= t);
        &self.records[..n]
    }

    /// `N(t)`, the number of ordinates in `(0, t]`.
    pub fn count(&self, t: f64) -> usize {
        self.up_to(t).len()
    }

    /// Sub-catalog with `gamma <= t`.
    pub fn truncated(&self, t: f64) -> Result<Self> {
        if t > self.t_max {
            return Err(beyond_catalog(t, self.t_max));
        }
        Ok(Self {
            function: self.function.clone(),
            records: self.up_to(t).to_vec(),
            t_max: t,
        })
    }

    pub fn is_enriched(&self) -> bool {
        self.records.iter().all(|r| r.deriv.is_some())
    }

    /// Enriched csv with a header comment naming the function and height.
    /// Values use 17 significant digits so parsing restores them exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# function = {}", self.function);
        let _ = writeln!(out, "# height = {:.16e}", self.t_max);
        out.push_str("gamma,dre,dim\n");
        for r in &self.records {
            match r.deriv {
                Some(d) => {
                    let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", r.gamma, d.re, d.im);
                }
                None => {
                    let _ = writeln!(out, "{:.16e},,", r.gamma);
                }
            }
        }
        out
    }

    /// Write the csv form atomically.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    /// Replace every record by its Newton-refined version, computing the
    /// derivative. Refinement runs in parallel; results keep catalog order.
    pub fn enrich(&self, ctx: &EvalContext) -> Result<Self> {
        let refined: Result<Vec<ZeroRecord>> = self
            .records
            .par_iter()
            .map(|r| {
                let z = refine_zero(r.gamma, &self.function, ctx)?;
                Ok(ZeroRecord {
                    gamma: z.gamma,
                    deriv: Some(z.deriv),
                    source: r.source,
                })
            })
            .collect();
        Self::new(self.function.clone(), refined?, self.t_max)
    }
}

fn beyond_catalog(t: f64, t_max: f64) -> Error {
    Error::OutOfRange {
        value: t,
        range: format!("(0, {t_max}] covered by the catalog"),
    }
}

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_error(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_number(path: &str, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("cannot parse '{}' as a number", field.trim())))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, "non-finite value"));
    }
    Ok(v)
}

/// Parse catalog text. `name` only labels errors.
pub fn parse_zero_text(
    text: &str,
    name: &str,
    format: ZeroFileFormat,
    function: FunctionId,
) -> Result<ZeroCatalog> {
    let mut records: Vec<ZeroRecord> = Vec::new();
    let mut height: Option<f64> = None;
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "height" => height = Some(parse_number(name, line_no, value)?),
                    "function" => {
                        let declared: FunctionId = value
                            .trim()
                            .parse()
                            .map_err(|e: Error| parse_error(name, line_no, e.to_string()))?;
                        if declared != function {
                            return Err(Error::CatalogMismatch(format!(
                                "{name} holds zeros of {declared}, expected {function}"
                            )));
                        }
                    }
                    _ => {}
                }
            }
            continue;
        }
        let record = match format {
            ZeroFileFormat::Plain => ZeroRecord {
                gamma: parse_number(name, line_no, line)?,
                deriv: None,
                source: ZeroSource::Dataset,
            },
            ZeroFileFormat::Csv => {
                if !saw_header {
                    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                    if cols != ["gamma", "dre", "dim"] {
                        return Err(parse_error(name, line_no, "expected header 'gamma,dre,dim'"));
                    }
                    saw_header = true;
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 3 {
                    return Err(parse_error(
                        name,
                        line_no,
                        format!("expected 3 fields, found {}", fields.len()),
                    ));
                }
                let gamma = parse_number(name, line_no, fields[0])?;
                let deriv = match (fields[1].trim(), fields[2].trim()) {
                    ("", "") => None,
                    (re, im) => {
                        let d = Complex64::new(
                            parse_number(name, line_no, re)?,
                            parse_number(name, line_no, im)?,
                        );
                        if d.norm() == 0.0 {
                            return Err(parse_error(name, line_no, "zero derivative"));
                        }
                        Some(d)
                    }
                };
                ZeroRecord {
                    gamma,
                    deriv,
                    source: ZeroSource::Dataset,
                }
            }
        };
        if record.gamma <= 0.0 {
            return Err(parse_error(name, line_no, format!("ordinate {} is not positive", record.gamma)));
        }
        if let Some(prev) = records.last() {
            if record.gamma <= prev.gamma {
                return Err(parse_error(
                    name,
                    line_no,
                    format!("ordinate {} does not exceed the previous {}", record.gamma, prev.gamma),
                ));
            }
        }
        records.push(record);
    }
    let last = records.last().map_or(0.0, |r| r.gamma);
    let t_max = match height {
        Some(h) if h < last => {
            return Err(Error::Parse {
                path: name.to_string(),
                line: 0,
                message: format!("declared height {h} is below the last ordinate {last}"),
            })
        }
        Some(h) => h,
        None => last,
    };
    ZeroCatalog::new(function, records, t_max)
}

pub fn parse_zero_file(path: &Path, format: ZeroFileFormat, function: FunctionId) -> Result<ZeroCatalog> {
    let text = fs::read_to_string(path)?;
    parse_zero_text(&text, &path.display().to_string(), format, function)
}

/// Newton-refined zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedZero {
    pub gamma: f64,
    pub deriv: Complex64,
    pub residual: f64,
    pub iterations: usize,
}

const NEWTON_MAX_ITER: usize = 50;
const ZERO_TOLERANCE: f64 = 1e-10;
const MIN_DERIVATIVE: f64 = 1e-12;

/// Newton iteration on `t -> F(1/2 + it)` starting from `gamma0`.
pub fn refine_zero(gamma0: f64, function: &FunctionId, ctx: &EvalContext) -> Result<RefinedZero> {
    if !(gamma0 > 0.0) {
        return Err(Error::InvalidParameter(format!("starting ordinate must be positive, got {gamma0}")));
    }
    let mut t = gamma0;
    for iteration in 1..=NEWTON_MAX_ITER {
        let (f, df) = function.eval_with_deriv(Complex64::new(0.5, t), ctx)?;
        if df.norm() < MIN_DERIVATIVE {
            return Err(Error::MultipleZero {
                gamma: t,
                magnitude: df.norm(),
            });
        }
        // d/dt F(1/2 + it) = i F'
        let step = (f / (Complex64::i() * df)).re;
        let small = step.abs() <= 4.0 * f64::EPSILON * t.max(1.0);
        if small && f.norm() < ZERO_TOLERANCE {
            return Ok(RefinedZero {
                gamma: t,
                deriv: df,
                residual: f.norm(),
                iterations: iteration,
            });
        }
        t -= step.clamp(-0.5, 0.5);
        if small {
            // converged in t without meeting the residual target
            let (f, df) = function.eval_with_deriv(Complex64::new(0.5, t), ctx)?;
            if f.norm() < ZERO_TOLERANCE {
                return Ok(RefinedZero {
                    gamma: t,
                    deriv: df,
                    residual: f.norm(),
                    iterations: iteration + 1,
                });
            }
            return Err(Error::PrecisionUnreachable(format!(
                "|F(1/2 + i{t})| = {:e} after convergence in t",
                f.norm()
            )));
        }
    }
    Err(Error::NoConvergence {
        what: format!("Newton refinement from {gamma0}"),
        iterations: NEWTON_MAX_ITER,
    })
}

/// Smooth main term `(T/2pi) log(qT / 2 pi e)`.
pub fn zero_count_main_term(q: u64, t: f64) -> f64 {
    t / (2.0 * PI) * (q as f64 * t / (2.0 * PI * std::f64::consts::E)).ln()
}

/// Locate zeros in `(t_lo, t_hi]` from sign changes of the rotated real
/// function `Z(t)`, then polish each by Newton. Close pairs that fall inside
/// one sampling step are missed; `zero_count_check` exposes such gaps.
pub fn scan_zeros(function: &FunctionId, t_lo: f64, t_hi: f64, ctx: &EvalContext) -> Result<Vec<ZeroRecord>> {
    if !(t_lo >= 0.0) || !(t_hi > t_lo) {
        return Err(Error::InvalidParameter(format!("bad scan window ({t_lo}, {t_hi}]")));
    }
    let q = function.modulus() as f64;
    // a tenth of the mean spacing 2 pi / log(q t / 2 pi)
    let step_at = |t: f64| {
        let density = (q * t.max(2.0 * PI * 3.0) / (2.0 * PI)).ln();
        (0.2 * PI / density).min(0.1)
    };
    let mut grid = vec![t_lo.max(1e-3)];
    while *grid.last().unwrap() < t_hi {
        let t = *grid.last().unwrap();
        grid.push((t + step_at(t)).min(t_hi));
    }
    let values: Result<Vec<f64>> = grid.par_iter().map(|&t| hardy_z(function, t, ctx)).collect();
    let values = values?;
    let brackets: Vec<(f64, f64, f64, f64)> = grid
        .windows(2)
        .zip(values.windows(2))
        .filter(|(_, v)| v[0] == 0.0 || v[0].signum() != v[1].signum())
        .map(|(g, v)| (g[0], g[1], v[0], v[1]))
        .collect();
    let mut out: Vec<ZeroRecord> = brackets
        .par_iter()
        .map(|&(a, b, fa, fb)| {
            // one secant step before Newton
            let t0 = if fa == fb { 0.5 * (a + b) } else { a - fa * (b - a) / (fb - fa) };
            let z = refine_zero(t0.clamp(a, b), function, ctx)?;
            Ok(ZeroRecord {
                gamma: z.gamma,
                deriv: Some(z.deriv),
                source: ZeroSource::Computed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.retain(|r| r.gamma > t_lo && r.gamma <= t_hi);
    out.dedup_by(|a, b| (a.gamma - b.gamma).abs() < 1e-9);
    Ok(out)
}

/// Catalog of zeros in `(0, t_max]` computed from scratch.
pub fn scan_catalog(function: FunctionId, t_max: f64, ctx: &EvalContext) -> Result<ZeroCatalog> {
    let records = scan_zeros(&function, 0.0, t_max, ctx)?;
    ZeroCatalog::new(function, records, t_max)
}

/// Result of comparing the catalog count with the smooth main term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroCountReport {
    pub t: f64,
    pub count: usize,
    pub main_term: f64,
    pub residual: f64,
    pub bound: f64,
    pub flagged: bool,
}

pub const DEFAULT_COUNT_CONSTANT: f64 = 3.0;

/// `N(T) - (T/2pi) log(qT/2 pi e)` against the allowance `C log(qT)`.
pub fn zero_count_check(catalog: &ZeroCatalog, t: f64, c: f64) -> Result<ZeroCountReport> {
    if t > catalog.t_max() {
        return Err(beyond_catalog(t, catalog.t_max()));
    }
    if !(t >= 4.0) {
        return Err(Error::OutOfRange {
            value: t,
            range: "[4, T_max]".into(),
        });
    }
    let q = catalog.function().modulus();
    let count = catalog.count(t);
    let main_term = zero_count_main_term(q, t);
    let residual = count as f64 - main_term;
    let bound = c * (q as f64 * t).ln();
    Ok(ZeroCountReport {
        t,
        count,
        main_term,
        residual,
        bound,
        flagged: residual.abs() > bound,
    })
}

/// Largest `|residual| / log(qT)` over a sweep of `T` in `[t_lo, T_max]`,
/// evaluated just before and at every ordinate and on a unit grid.
pub fn zero_count_sweep(catalog: &ZeroCatalog, t_lo: f64) -> Result<(f64, f64)> {
    let t_max = catalog.t_max();
    let mut ts: Vec<f64> = Vec::new();
    let mut t = t_lo;
    while t <= t_max {
        ts.push(t);
        t += 1.0;
    }
    for r in catalog.records() {
        if r.gamma >= t_lo {
            ts.push(r.gamma);
            let before = r.gamma * (1.0 - 1e-12);
            if before >= t_lo {
                ts.push(before);
            }
        }
    }
    let mut worst = (t_lo, 0.0);
    for &t in &ts {
        let rep = zero_count_check(catalog, t, DEFAULT_COUNT_CONSTANT)?;
        let ratio = rep.residual.abs() / (catalog.function().modulus() as f64 * t).ln();
        if ratio > worst.1 {
            worst = (t, ratio);
        }
    }
    Ok(worst)
}

/// `sum_{0 < gamma <= T} |F'(rho)|^{2r}`.
pub fn discrete_moment(catalog: &ZeroCatalog, r: f64, t: f64) -> Result<f64> {
    if t > catalog.t_max() {
        return Err(beyond_catalog(t, catalog.t_max()));
    }
    let records = catalog.up_to(t);
    if r == 0.0 {
        return Ok(records.len() as f64);
    }
    let mut sum = CompensatedSum::new();
    for rec in records {
        let d = rec.deriv.ok_or(Error::MissingDerivative(rec.gamma))?;
        sum.add((r * d.norm_sqr().ln()).exp());
    }
    Ok(sum.value())
}

/// One height of a moment-growth table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentPoint {
    pub t: f64,
    pub moment: f64,
    pub per_height: f64,
    /// `J_r(T) / (T (log T)^{(r+1)^2})`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentGrowthReport {
    pub r: f64,
    pub points: Vec<MomentPoint>,
    /// Free fit `log J = a + b log T + c log log T`.
    pub free_exponent: f64,
    pub free_log_power: f64,
    /// Fit of `log J - (r+1)^2 log log T = a + b log T`.
    pub exponent: f64,
    pub consistent_with_unit_exponent: bool,
    /// Mean of the normalized column, to compare with the predicted constant.
    pub fitted_constant: f64,
    pub predicted_constant: Option<f64>,
    pub caveat: String,
}

/// Tolerance on the fitted power of `T` for the consistency flag.
pub const EXPONENT_TOLERANCE: f64 = 0.25;

pub fn moment_growth_fit(
    catalog: &ZeroCatalog,
    r: f64,
    grid: &[f64],
    prime_cutoff: u64,
) -> Result<MomentGrowthReport> {
    let mut ts: Vec<f64> = grid.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 3 || ts[0] <= std::f64::consts::E {
        return Err(Error::InsufficientData(
            "moment growth needs at least 3 distinct heights above e".into(),
        ));
    }
    let lp = (r + 1.0) * (r + 1.0);
    let mut points = Vec::with_capacity(ts.len());
    for &t in &ts {
        let j = discrete_moment(catalog, r, t)?;
        if !(j > 0.0) {
            return Err(Error::InsufficientData(format!("no zeros up to T = {t}")));
        }
        points.push(MomentPoint {
            t,
            moment: j,
            per_height: j / t,
            normalized: j / (t * t.ln().powf(lp)),
        });
    }
    let log_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let log_j: Vec<f64> = points.iter().map(|p| p.moment.ln()).collect();
    let rows: Vec<Vec<f64>> = log_t.iter().map(|&l| vec![1.0, l, l.ln()]).collect();
    let free = least_squares(&rows, &log_j)
        .ok_or_else(|| Error::InsufficientData("degenerate height grid".into()))?;
    let shifted: Vec<f64> = log_j.iter().zip(&log_t).map(|(j, l)| j - lp * l.ln()).collect();
    let fixed = fit_line(&log_t, &shifted)
        .ok_or_else(|| Error::InsufficientData("degenerate height grid".into()))?;
    let fitted_constant = points.iter().map(|p| p.normalized).sum::<f64>() / points.len() as f64;
    let predicted_constant = if r > -1.5 {
        hko_constant(r, prime_cutoff).ok().map(|h| h.value)
    } else {
        None
    };
    Ok(MomentGrowthReport {
        r,
        points,
        free_exponent: free[1],
        free_log_power: free[2],
        exponent: fixed.slope,
        consistent_with_unit_exponent: (fixed.slope - 1.0).abs() <= EXPONENT_TOLERANCE,
        fitted_constant,
        predicted_constant,
        caveat: format!(
            "heights up to {:.0} only; log T and log log T are nearly collinear here, so the fit \
             describes the observed range and cannot confirm the asymptotic order",
            ts.last().unwrap()
        ),
    })
}

/// A concrete sequence `T_n in [n, n+1]` kept away from ordinates: the
/// candidate (interval end or midpoint between consecutive ordinates) with
/// the largest distance to the nearest ordinate.
pub fn separated_heights(catalog: &ZeroCatalog, n_max: usize) -> Vec<f64> {
    let gammas: Vec<f64> = catalog.records().iter().map(|r| r.gamma).collect();
    let distance = |t: f64| {
        let i = gammas.partition_point(|&g| g < t);
        let mut d = f64::INFINITY;
        if i < gammas.len() {
            d = d.min(gammas[i] - t);
        }
        if i > 0 {
            d = d.min(t - gammas[i - 1]);
        }
        d
    };
    (1..=n_max)
        .map(|n| {
            let (lo, hi) = (n as f64, n as f64 + 1.0);
            let mut candidates = vec![lo, hi];
            let a = gammas.partition_point(|&g| g < lo);
            let b = gammas.partition_point(|&g| g <= hi);
            let start = a.saturating_sub(1);
            let end = (b + 1).min(gammas.len());
            for w in gammas[start..end].windows(2) {
                candidates.push((0.5 * (w[0] + w[1])).clamp(lo, hi));
            }
            candidates
                .into_iter()
                .max_by(|x, y| distance(*x).total_cmp(&distance(*y)).then(y.total_cmp(x)))
                .unwrap()
        })
        .collect()
}

/// Heights and weights `(lambda_n, r_n)` feeding the hypothesis probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyWeight {
    pub lambda: f64,
    pub weight: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub t: f64,
    pub weighted_sum: f64,
    pub count: usize,
    pub count_ratio: f64,
    pub max_unit_count: usize,
    pub max_unit_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionsReport {
    pub rows: Vec<ProbeRow>,
    /// Slope of `log sum lambda^2 |r|^2` against `log T`.
    pub theta: f64,
    /// `max N(T) / (T log T)` over the grid.
    pub count_constant: f64,
    /// `max count(m, m+1] / log(m+1)` over unit intervals below the top height.
    pub unit_constant: f64,
}

/// Tabulate `sum lambda^2 |r|^2`, `N_lambda(T) / (T log T)` and the largest
/// unit-interval count on a height grid.
pub fn assumptions_probe(terms: &[FrequencyWeight], grid: &[f64]) -> Result<AssumptionsReport> {
    let mut sorted: Vec<FrequencyWeight> = terms.to_vec();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut ts: Vec<f64> = grid.iter().copied().filter(|&t| t > std::f64::consts::E).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if sorted.len() < 3 || ts.len() < 2 {
        return Err(Error::InsufficientData(
            "the probe needs at least 3 frequencies and 2 heights above e".into(),
        ));
    }
    let lambdas: Vec<f64> = sorted.iter().map(|t| t.lambda).collect();
    let mut rows = Vec::with_capacity(ts.len());
    let mut worst_unit = (0usize, 0.0f64);
    let mut m = 1usize;
    for &t in &ts {
        let n = lambdas.partition_point(|&l| l <= t);
        let mut acc = CompensatedSum::new();
        for term in &sorted[..n] {
            acc.add(term.lambda * term.lambda * term.weight.norm_sqr());
        }
        while (m + 1) as f64 <= t {
            let lo = lambdas.partition_point(|&l| l <= m as f64);
            let hi = lambdas.partition_point(|&l| l <= (m + 1) as f64);
            let c = hi - lo;
            let ratio = c as f64 / ((m + 1) as f64).ln().max(1.0);
            if ratio > worst_unit.1 || c > worst_unit.0 {
                worst_unit = (worst_unit.0.max(c), worst_unit.1.max(ratio));
            }
            m += 1;
        }
        rows.push(ProbeRow {
            t,
            weighted_sum: acc.value(),
            count: n,
            count_ratio: n as f64 / (t * t.ln()),
            max_unit_count: worst_unit.0,
            max_unit_ratio: worst_unit.1,
        });
    }
    let usable: Vec<&ProbeRow> = rows.iter().filter(|r| r.weighted_sum > 0.0).collect();
    let theta = if usable.len() >= 2 {
        let xs: Vec<f64> = usable.iter().map(|r| r.t.ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|r| r.weighted_sum.ln()).collect();
        fit_line(&xs, &ys).map_or(f64::NAN, |f| f.slope)
    } else {
        return Err(Error::InsufficientData("weighted sums vanish on the grid".into()));
    };
    let count_constant = rows.iter().map(|r| r.count_ratio).fold(0.0, f64::max);
    Ok(AssumptionsReport {
        theta,
        count_constant,
        unit_constant: worst_unit.1,
        rows,
    })
}
