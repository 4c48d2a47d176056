//! Distribution of `phi(y) = e^{-y/2k} S_f(e^y)` under `dy`, the quadratic
//! mean of `S_f`, `beta_k` and growth tracking. Everything is integrated
//! piece by piece over the constant stretches of `S_f`, so no sampling is
//! involved.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::explicit::{coefficient_decay_fit, ResidueTerm};
use crate::kfree::StepSeries;
use crate::numeric::{fit_line, CompensatedSum};
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 201;
pub const DEFAULT_Y0: f64 = std::f64::consts::LN_2;

/// Histogram of a probability measure on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
    /// Smallest and largest value actually taken.
    pub support: (f64, f64),
    /// Length of the `y` window the measure was normalised by.
    pub measure: f64,
    /// Exact raw moments, not the binned ones.
    pub mean: f64,
    pub second_moment: f64,
    pub third_moment: f64,
    pub fourth_moment: f64,
}

impl EmpiricalDistribution {
    /// Histogram from explicit edges and masses. Masses are normalised;
    /// moments are taken from bin midpoints.
    pub fn new(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if masses.len() + 1 != edges.len() {
            return Err(Error::InvalidParameter(format!(
                "{} edges need {} masses, got {}",
                edges.len(),
                edges.len() - 1,
                masses.len()
            )));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter("masses must be finite and >= 0".into()));
        }
        let total: f64 = masses.iter().copied().collect::<CompensatedSum>().value();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("masses sum to zero".into()));
        }
        let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let mid = |i: usize| 0.5 * (edges[i] + edges[i + 1]);
        let mean = (0..masses.len()).map(|i| masses[i] * mid(i)).sum();
        let raw = |p: i32| -> f64 { (0..masses.len()).map(|i| masses[i] * mid(i).powi(p)).sum() };
        let first = masses.iter().position(|&m| m > 0.0).unwrap();
        let last = masses.iter().rposition(|&m| m > 0.0).unwrap();
        let (second_moment, third_moment, fourth_moment) = (raw(2), raw(3), raw(4));
        Ok(Self {
            support: (edges[first], edges[last + 1]),
            edges,
            masses,
            measure: 1.0,
            mean,
            second_moment,
            third_moment,
            fourth_moment,
        })
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn variance(&self) -> f64 {
        (self.second_moment - self.mean * self.mean).max(0.0)
    }

    /// Fourth central moment over the squared variance.
    pub fn kurtosis(&self) -> f64 {
        let m = self.mean;
        let c4 = self.fourth_moment - 4.0 * m * self.third_moment + 6.0 * m * m * self.second_moment
            - 3.0 * m.powi(4);
        c4 / self.variance().powi(2)
    }

    /// Histogram of samples with `bins` uniform bins over their range and
    /// sample moments.
    pub fn from_samples(samples: &[f64], bins: usize) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("need finite samples".into()));
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let edges = uniform_edges(lo, hi, bins)?;
        let nb = edges.len() - 1;
        let mut counts = vec![0u64; nb];
        let mut raw = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
        for &x in samples {
            counts[(edges.partition_point(|&e| e <= x).max(1) - 1).min(nb - 1)] += 1;
            let mut p = 1.0;
            for r in raw.iter_mut() {
                p *= x;
                r.add(p);
            }
        }
        let n = samples.len() as f64;
        Ok(Self {
            masses: counts.iter().map(|&c| c as f64 / n).collect(),
            edges,
            support: (lo, hi),
            measure: n,
            mean: raw[0].value() / n,
            second_moment: raw[1].value() / n,
            third_moment: raw[2].value() / n,
            fourth_moment: raw[3].value() / n,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().copied().collect::<CompensatedSum>().value()
    }

    pub fn binned_mean(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| m * 0.5 * (self.edges[i] + self.edges[i + 1]))
            .sum()
    }

    /// CDF with mass spread uniformly inside each bin.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.edges.len();
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= self.edges[n - 1] {
            return 1.0;
        }
        let i = self.edges.partition_point(|&e| e <= x) - 1;
        let below: f64 = self.masses[..i].iter().sum();
        let frac = (x - self.edges[i]) / (self.edges[i + 1] - self.edges[i]);
        (below + frac * self.masses[i]).min(1.0)
    }

    /// `1 - CDF(x)`.
    pub fn tail(&self, x: f64) -> f64 {
        (1.0 - self.cdf(x)).max(0.0)
    }

    /// Measure-weighted mixture of two distributions on identical edges.
    pub fn mixture(&self, other: &Self) -> Result<Self> {
        if self.edges != other.edges {
            return Err(Error::InvalidParameter("mixture needs identical edges".into()));
        }
        let total = self.measure + other.measure;
        let (w1, w2) = (self.measure / total, other.measure / total);
        Ok(Self {
            edges: self.edges.clone(),
            masses: self
                .masses
                .iter()
                .zip(&other.masses)
                .map(|(a, b)| w1 * a + w2 * b)
                .collect(),
            support: (self.support.0.min(other.support.0), self.support.1.max(other.support.1)),
            measure: total,
            mean: w1 * self.mean + w2 * other.mean,
            second_moment: w1 * self.second_moment + w2 * other.second_moment,
            third_moment: w1 * self.third_moment + w2 * other.third_moment,
            fourth_moment: w1 * self.fourth_moment + w2 * other.fourth_moment,
        })
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidParameter("need at least two edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("edges must be finite and strictly ascending".into()));
    }
    Ok(())
}

/// `bins` uniform bins over `[lo, hi]`, widened when the range is a point.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!("bad histogram range [{lo}, {hi}] x {bins}")));
    }
    let (lo, hi) = if lo == hi {
        let h = 0.5 * lo.abs().max(1.0);
        (lo - h, hi + h)
    } else {
        (lo, hi)
    };
    let w = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
    edges[bins] = hi;
    Ok(edges)
}

fn window_check(series: &StepSeries, y0: f64, y1: f64) -> Result<()> {
    if !(y0 >= 0.0) || !(y1 > y0) {
        return Err(Error::InvalidParameter(format!("need 0 <= y0 < Y, got [{y0}, {y1}]")));
    }
    let top = (series.limit() + 1) as f64;
    if y1.exp() > top * (1.0 + 1e-14) {
        return Err(Error::OutOfRange {
            value: y1,
            range: format!("[0, {}]", top.ln()),
        });
    }
    Ok(())
}

/// Pieces of `S_f` over `[e^{y0}, e^{y1})` in `y` coordinates. The window
/// ends are passed through unchanged and every interior boundary is `ln n`,
/// so adjacent pieces and adjacent windows share their endpoints bit for bit.
fn for_each_log_piece<F: FnMut(f64, f64, i64)>(series: &StepSeries, y0: f64, y1: f64, mut f: F) -> Result<()> {
    let top = (series.limit() + 1) as f64;
    let lo = y0.exp().max(1.0);
    let hi = y1.exp().min(top);
    series.for_each_piece(lo, hi, |a, b, s| {
        let ya = if a == lo { y0 } else { a.ln() };
        let yb = if b == hi { y1 } else { b.ln() };
        if yb > ya {
            f(ya, yb, s);
        }
    })
}

/// Exact distribution of `phi` on `[y0, y1]` with `bins` uniform bins over
/// the observed support.
pub fn exact_log_distribution(series: &StepSeries, y0: f64, y1: f64, bins: usize) -> Result<EmpiricalDistribution> {
    window_check(series, y0, y1)?;
    let h = 0.5 / series.k() as f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for_each_log_piece(series, y0, y1, |ya, yb, s| {
        let s = s as f64;
        for v in [s * (-h * ya).exp(), s * (-h * yb).exp()] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    })?;
    let edges = uniform_edges(lo, hi, bins)?;
    exact_log_distribution_on(series, y0, y1, &edges)
}

/// Exact distribution of `phi` on `[y0, y1]` over caller-supplied edges,
/// which must cover every value taken.
pub fn exact_log_distribution_on(
    series: &StepSeries,
    y0: f64,
    y1: f64,
    edges: &[f64],
) -> Result<EmpiricalDistribution> {
    window_check(series, y0, y1)?;
    check_edges(edges)?;
    let nb = edges.len() - 1;
    let k2 = 2.0 * series.k() as f64;
    let h = 1.0 / k2;
    let bin_of = |v: f64| -> usize { (edges.partition_point(|&e| e <= v).max(1) - 1).min(nb - 1) };
    let mut acc = vec![CompensatedSum::new(); nb];
    let mut first = CompensatedSum::new();
    let mut second = CompensatedSum::new();
    let mut third = CompensatedSum::new();
    let mut fourth = CompensatedSum::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut outside = None;
    for_each_log_piece(series, y0, y1, |ya, yb, s| {
        let sf = s as f64;
        let (ea, eb) = ((-h * ya).exp(), (-h * yb).exp());
        first.add(sf * k2 * (ea - eb));
        second.add(sf * sf * 0.5 * k2 * (ea * ea - eb * eb));
        third.add(sf.powi(3) * k2 / 3.0 * (ea.powi(3) - eb.powi(3)));
        fourth.add(sf.powi(4) * 0.25 * k2 * (ea.powi(4) - eb.powi(4)));
        let (va, vb) = (sf * ea, sf * eb);
        let (pmin, pmax) = (va.min(vb), va.max(vb));
        lo = lo.min(pmin);
        hi = hi.max(pmax);
        if pmin < edges[0] || pmax > edges[nb] {
            outside.get_or_insert(if pmin < edges[0] { pmin } else { pmax });
            return;
        }
        let (i0, i1) = (bin_of(pmin), bin_of(pmax));
        if s == 0 || i0 == i1 {
            acc[i0].add(yb - ya);
            return;
        }
        // phi runs monotonically through bins i0..=i1; the y at which it
        // crosses edge e is -2k ln(e / S)
        let cross = |e: f64| (-k2 * (e / sf).ln()).clamp(ya, yb);
        let mut prev = ya;
        let order: Box<dyn Iterator<Item = usize>> = if s > 0 {
            Box::new((i0..=i1).rev())
        } else {
            Box::new(i0..=i1)
        };
        for i in order {
            let next = if s > 0 {
                if i == i0 { yb } else { cross(edges[i]) }
            } else if i == i1 {
                yb
            } else {
                cross(edges[i + 1])
            };
            acc[i].add(next - prev);
            prev = next;
        }
    })?;
    if let Some(v) = outside {
        return Err(Error::OutOfRange {
            value: v,
            range: format!("[{}, {}]", edges[0], edges[nb]),
        });
    }
    let measure = y1 - y0;
    Ok(EmpiricalDistribution {
        edges: edges.to_vec(),
        masses: acc.iter().map(|a| a.value() / measure).collect(),
        support: (lo, hi),
        measure,
        mean: first.value() / measure,
        second_moment: second.value() / measure,
        third_moment: third.value() / measure,
        fourth_moment: fourth.value() / measure,
    })
}

/// Kolmogorov-Smirnov distance between the piecewise-linear CDFs, taken
/// over the union of both edge sets.
pub fn ks_distance(d1: &EmpiricalDistribution, d2: &EmpiricalDistribution) -> f64 {
    let mut points: Vec<f64> = d1.edges.iter().chain(&d2.edges).copied().collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
        .iter()
        .map(|&x| (d1.cdf(x) - d2.cdf(x)).abs())
        .fold(0.0, f64::max)
        .min(1.0)
}

/// KS distance between the windows `[y0, Y]` and `[y0, Y/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowStability {
    pub y: f64,
    pub ks_half: f64,
    pub mean: f64,
    pub variance: f64,
}

pub fn window_stability(series: &StepSeries, y0: f64, ys: &[f64], bins: usize) -> Result<Vec<WindowStability>> {
    ys.iter()
        .map(|&y| {
            let full = exact_log_distribution(series, y0, y, bins)?;
            let half = exact_log_distribution(series, y0, 0.5 * y, bins)?;
            Ok(WindowStability {
                y,
                ks_half: ks_distance(&full, &half),
                mean: full.mean,
                variance: full.variance(),
            })
        })
        .collect()
}

/// `int_a^b (S_f(x) / x^{1/2k})^2 dx / x`, exact on each step.
pub fn variance_integral_between(series: &StepSeries, a: f64, b: f64) -> Result<f64> {
    if !(a >= 1.0) || !(b >= a) {
        return Err(Error::InvalidParameter(format!("need 1 <= a <= b, got [{a}, {b}]")));
    }
    let kf = series.k() as f64;
    let e = -1.0 / kf;
    let mut acc = CompensatedSum::new();
    series.for_each_piece(a, b, |lo, hi, s| {
        let s = s as f64;
        acc.add(s * s * kf * (lo.powf(e) - hi.powf(e)));
    })?;
    Ok(acc.value())
}

pub fn variance_integral(series: &StepSeries, x: f64) -> Result<f64> {
    if !(x > 2.0) {
        return Err(Error::InvalidParameter(format!("X must exceed 2, got {x}")));
    }
    variance_integral_between(series, 2.0, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaVerdict {
    /// The extrapolated tail is below 1% of the partial sum.
    Converged,
    /// Tail finite but not yet negligible.
    Converging,
    /// The fitted decay is too slow for `sum |c|^2` to converge.
    Divergent,
    /// Too few terms to fit a decay.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaReport {
    /// `(gamma, 2 sum_{gamma' <= gamma} |c|^2)` in term order.
    pub partial_sums: Vec<(f64, f64)>,
    pub partial: f64,
    pub decay_exponent: Option<f64>,
    pub tail_estimate: Option<f64>,
    /// Spread of the tail between fits on all terms and on the upper half.
    pub tail_bound: Option<f64>,
    pub total: f64,
    pub verdict: BetaVerdict,
}

/// `int_T^inf g^{-e} dN(g)` with the zero density `dN = ln(q g / 2 pi) dg / 2 pi`;
/// `None` unless `e > 1`.
pub fn zero_weighted_power_tail(e: f64, t: f64, q: f64) -> Option<f64> {
    let b = e - 1.0;
    if !(b > 0.0) || !(t > 0.0) {
        return None;
    }
    Some(t.powf(-b) / b * ((q * t / (2.0 * PI)).ln() + 1.0 / b) / (2.0 * PI))
}

fn beta_tail(amp2: f64, a: f64, t: f64, q: f64) -> Option<f64> {
    zero_weighted_power_tail(2.0 * a, t, q).map(|i| 2.0 * amp2 * i)
}

fn fitted_tail(terms: &[ResidueTerm], t: f64, q: f64) -> Option<(f64, f64)> {
    let fit = coefficient_decay_fit(terms)?;
    let a = -fit.slope;
    // amplitude matched on second moments rather than on log |c|
    let amp2 = terms
        .iter()
        .map(|r| r.coeff.norm_sqr() * r.gamma.powf(2.0 * a))
        .sum::<f64>()
        / terms.len() as f64;
    beta_tail(amp2, a, t, q).map(|tail| (a, tail))
}

/// Running partial sums of `2 sum |c_rho|^2` plus a power-law tail. `q` is
/// the conductor of the function whose zeros index the terms.
pub fn beta_k(terms: &[ResidueTerm], q: u64) -> BetaReport {
    let mut acc = CompensatedSum::new();
    let partial_sums: Vec<(f64, f64)> = terms
        .iter()
        .map(|r| {
            acc.add(2.0 * r.coeff.norm_sqr());
            (r.gamma, acc.value())
        })
        .collect();
    let partial = acc.value();
    let q = q.max(1) as f64;
    let t = terms.last().map_or(0.0, |r| r.gamma);
    let (decay_exponent, tail_estimate, tail_bound, verdict) = if terms.len() < 4 {
        (None, None, None, BetaVerdict::Undetermined)
    } else {
        match fitted_tail(terms, t, q) {
            None => (coefficient_decay_fit(terms).map(|f| -f.slope), None, None, BetaVerdict::Divergent),
            Some((a, tail)) => {
                let upper = fitted_tail(&terms[terms.len() / 2..], t, q);
                let bound = upper.map_or(tail, |(_, u)| (u - tail).abs());
                let verdict = if tail + bound <= 0.01 * partial {
                    BetaVerdict::Converged
                } else {
                    BetaVerdict::Converging
                };
                (Some(a), Some(tail), Some(bound), verdict)
            }
        }
    };
    BetaReport {
        partial_sums,
        partial,
        decay_exponent,
        total: partial + tail_estimate.unwrap_or(0.0),
        tail_estimate,
        tail_bound,
        verdict,
    }
}

/// `variance_integral(X) / ln X` on a grid of `X`, with a fit of the ratio
/// against `1 / ln X` whose intercept estimates the limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceTrend {
    pub points: Vec<(f64, f64)>,
    pub extrapolated: Option<f64>,
}

pub fn variance_trend(series: &StepSeries, xs: &[f64]) -> Result<VarianceTrend> {
    let mut points = Vec::with_capacity(xs.len());
    for &x in xs {
        points.push((x, variance_integral(series, x)? / x.ln()));
    }
    let inv: Vec<f64> = points.iter().map(|p| 1.0 / p.0.ln()).collect();
    let ratio: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(VarianceTrend {
        extrapolated: fit_line(&inv, &ratio).map(|f| f.intercept),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthReport {
    pub sup_ratio: f64,
    pub argmax_x: f64,
    pub exceedance_log_measure: f64,
    pub c_tilde: f64,
    pub epsilon: f64,
    pub x_max: f64,
}

fn ln_envelope(y: f64, hk: f64, p: f64) -> f64 {
    hk * y + p * y.ln()
}

/// Solves `y / 2k + p ln y = level` on `[lo, hi]`, the left side being
/// increasing there.
fn envelope_crossing(level: f64, hk: f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut y = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = ln_envelope(y, hk, p) - level;
        if f > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let step = f / (hk + p / y);
        if step.abs() < 1e-15 * y {
            return y - step;
        }
        let next = y - step;
        y = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    y
}

/// Supremum of `|S_f(x)| / (x^{1/2k} (ln x)^{1/2 + eps})` over `[e^2, X]` and
/// the log-measure of the set where the ratio is at least `c_tilde`.
pub fn growth_envelope(series: &StepSeries, c_tilde: f64, eps: f64, x_max: f64) -> Result<GrowthReport> {
    if !(c_tilde >= 0.0) {
        return Err(Error::InvalidParameter(format!("C~ must be >= 0, got {c_tilde}")));
    }
    if !(eps > -0.5) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps must exceed -1/2, got {eps}")));
    }
    let y_max = x_max.ln();
    if !(y_max > 2.0) {
        return Err(Error::InvalidParameter(format!("X must exceed e^2, got {x_max}")));
    }
    window_check(series, 2.0, y_max)?;
    let hk = 0.5 / series.k() as f64;
    let p = 0.5 + eps;
    let mut sup = 0.0;
    let mut arg = 2.0;
    let mut measure = CompensatedSum::new();
    let ln_c = c_tilde.ln();
    for_each_log_piece(series, 2.0, y_max, |ya, yb, s| {
        let abs = (s as f64).abs();
        // the envelope increases in y, so the ratio peaks at the left end
        let r = abs / ln_envelope(ya, hk, p).exp();
        if r > sup {
            sup = r;
            arg = ya;
        }
        if c_tilde == 0.0 {
            measure.add(yb - ya);
        } else if abs > 0.0 && c_tilde.is_finite() {
            let level = abs.ln() - ln_c;
            if ln_envelope(ya, hk, p) <= level {
                if ln_envelope(yb, hk, p) <= level {
                    measure.add(yb - ya);
                } else {
                    measure.add(envelope_crossing(level, hk, p, ya, yb) - ya);
                }
            }
        }
    })?;
    Ok(GrowthReport {
        sup_ratio: sup,
        argmax_x: arg.exp().round(),
        exceedance_log_measure: measure.value().max(0.0),
        c_tilde,
        epsilon: eps,
        x_max,
    })
}

/// Smallest `C~` (to relative precision `1e-6`) whose exceedance set has
/// log-measure below `target`.
pub fn exceedance_threshold(series: &StepSeries, eps: f64, x_max: f64, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::InvalidParameter(format!("target must be positive, got {target}")));
    }
    let base = growth_envelope(series, 0.0, eps, x_max)?;
    if base.exceedance_log_measure < target {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, base.sup_ratio * (1.0 + 1e-12) + f64::MIN_POSITIVE);
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if growth_envelope(series, mid, eps, x_max)?.exceedance_log_measure < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest `x` accepted by [`conjecture_normalizer`].
pub const NORMALIZER_MIN_X: f64 = 16.0;

/// `x^{1/2k} (ln ln x)^{1/2 - 1/2k} (ln ln ln x)^{1/4k}`.
pub fn conjecture_normalizer(x: f64, k: u32) -> Result<f64> {
    if !(x > NORMALIZER_MIN_X) || !x.is_finite() {
        return Err(Error::OutOfRange {
            value: x,
            range: format!("({NORMALIZER_MIN_X}, inf)"),
        });
    }
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    let kf = k as f64;
    let ll = x.ln().ln();
    Ok((x.ln() / (2.0 * kf)).exp() * ll.powf(0.5 - 0.5 / kf) * ll.ln().powf(0.25 / kf))
}

/// `d/dy ln N(e^y)`; positive for every `y > e`.
pub fn normalizer_log_slope(y: f64, k: u32) -> f64 {
    let kf = k as f64;
    let l = y.ln();
    0.5 / kf + (0.5 - 0.5 / kf) / (y * l) + 0.25 / kf / (y * l * l.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizerCheckpoint {
    pub x: f64,
    pub running_max: f64,
    pub running_min: f64,
    pub running_max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizerSweep {
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub max_abs_ratio: f64,
    pub argmax_abs: f64,
    /// Running extrema at each power of ten up to `X`, and at `X`.
    pub checkpoints: Vec<NormalizerCheckpoint>,
}

/// Running extrema of `S_f(x) / N(x)` over `(16, X]`. `N` increases there,
/// so on each step the extremes sit at the left end.
pub fn normalizer_sweep(series: &StepSeries, x_max: f64) -> Result<NormalizerSweep> {
    if !(x_max > NORMALIZER_MIN_X) {
        return Err(Error::InvalidParameter(format!("X must exceed 16, got {x_max}")));
    }
    let k = series.k();
    let mut marks: Vec<f64> = (2..)
        .map(|e| 10f64.powi(e))
        .take_while(|&m| m < x_max)
        .collect();
    marks.push(x_max);
    let mut sweep = NormalizerSweep {
        max_ratio: f64::NEG_INFINITY,
        min_ratio: f64::INFINITY,
        max_abs_ratio: 0.0,
        argmax_abs: NORMALIZER_MIN_X,
        checkpoints: Vec::with_capacity(marks.len()),
    };
    let mut next = 0;
    let mut err = None;
    series.for_each_piece(NORMALIZER_MIN_X, x_max, |a, _, s| {
        while next < marks.len() && marks[next] <= a {
            sweep.checkpoints.push(NormalizerCheckpoint {
                x: marks[next],
                running_max: sweep.max_ratio,
                running_min: sweep.min_ratio,
                running_max_abs: sweep.max_abs_ratio,
            });
            next += 1;
        }
        // the left end of the first piece is 16 itself; nudge inside
        let x = if a == NORMALIZER_MIN_X { a * (1.0 + 1e-15) } else { a };
        let n = match conjecture_normalizer(x, k) {
            Ok(n) => n,
            Err(e) => {
                err.get_or_insert(e);
                return;
            }
        };
        let r = s as f64 / n;
        sweep.max_ratio = sweep.max_ratio.max(r);
        sweep.min_ratio = sweep.min_ratio.min(r);
        if r.abs() > sweep.max_abs_ratio {
            sweep.max_abs_ratio = r.abs();
            sweep.argmax_abs = a;
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    for &m in &marks[next..] {
        sweep.checkpoints.push(NormalizerCheckpoint {
            x: m,
            running_max: sweep.max_ratio,
            running_min: sweep.min_ratio,
            running_max_abs: sweep.max_abs_ratio,
        });
    }
    Ok(sweep)
}

/// `e^{e^e}`, where every nested logarithm in the normaliser is at least 1.
pub fn normalizer_fixed_point() -> f64 {
    E.powf(E.powf(E))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characters::DirichletCharacter;
    use crate::kfree::{cumulative_series, KFreeSieve, SummandSpec};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn constant_one(limit: u64) -> StepSeries {
        StepSeries::from_jumps(2, limit, vec![(1, 1)]).unwrap()
    }

    fn real_series(n: u64) -> StepSeries {
        let chi = DirichletCharacter::from_discriminant(-3).unwrap();
        let spec = SummandSpec::new(2, chi, false).unwrap();
        let sieve = KFreeSieve::new(2, n).unwrap();
        cumulative_series(&spec, n, &sieve).unwrap()
    }

    #[test]
    fn constant_series_closed_form() {
        let s = constant_one(100_000);
        let (y0, y1) = (1.0, 10.0);
        let d = exact_log_distribution(&s, y0, y1, 10).unwrap();
        assert!((d.support.0 - (-y1 / 4.0).exp()).abs() < 1e-15);
        assert!((d.support.1 - (-y0 / 4.0).exp()).abs() < 1e-15);
        // mass of [u, v] is 4 ln(v / u) / (Y - y0)
        for i in 0..10 {
            let want = 4.0 * (d.edges[i + 1] / d.edges[i]).ln() / (y1 - y0);
            assert!((d.masses[i] - want).abs() < 1e-13, "bin {i}");
        }
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        let mean = 4.0 * ((-y0 / 4.0).exp() - (-y1 / 4.0).exp()) / (y1 - y0);
        assert!((d.mean - mean).abs() < 1e-15);
    }

    #[test]
    fn single_bin_holds_everything() {
        let s = real_series(10_000);
        let d = exact_log_distribution(&s, DEFAULT_Y0, 9.0, 1).unwrap();
        assert_eq!(d.bins(), 1);
        assert!((d.masses[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn real_series_mean_matches_quadrature() {
        let s = real_series(200_000);
        let (y0, y1) = (DEFAULT_Y0, 200_000f64.ln());
        let d = exact_log_distribution(&s, y0, y1, DEFAULT_BINS).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        let n = 200_000;
        let h = (y1 - y0) / n as f64;
        let mut q = 0.0;
        for i in 0..n {
            let y = y0 + (i as f64 + 0.5) * h;
            q += s.value_at(y.exp()).unwrap() as f64 * (-y / 4.0).exp();
        }
        q /= n as f64;
        assert!((d.mean - q).abs() < 1e-3, "{} vs {q}", d.mean);
        assert!((d.binned_mean() - d.mean).abs() < 0.05);
    }

    #[test]
    fn window_split_is_a_mixture() {
        let s = real_series(50_000);
        let (y0, ym, y1) = (DEFAULT_Y0, 6.3, 50_000f64.ln());
        let full = exact_log_distribution(&s, y0, y1, 50).unwrap();
        let a = exact_log_distribution_on(&s, y0, ym, &full.edges).unwrap();
        let b = exact_log_distribution_on(&s, ym, y1, &full.edges).unwrap();
        let mix = a.mixture(&b).unwrap();
        for (x, y) in mix.masses.iter().zip(&full.masses) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((mix.mean - full.mean).abs() < 1e-12);
    }

    #[test]
    fn edges_must_cover_values() {
        let s = constant_one(1000);
        assert!(matches!(
            exact_log_distribution_on(&s, 0.0, 5.0, &[0.5, 0.9]),
            Err(Error::OutOfRange { .. })
        ));
        assert!(exact_log_distribution(&s, 0.0, 20.0, 10).is_err());
        assert!(exact_log_distribution(&s, 3.0, 2.0, 10).is_err());
    }

    #[test]
    fn ks_examples() {
        let d = EmpiricalDistribution::new(vec![0.0, 1.0, 2.0], vec![0.3, 0.7]).unwrap();
        assert_eq!(ks_distance(&d, &d), 0.0);
        let p = EmpiricalDistribution::new(vec![0.0, 1e-9], vec![1.0]).unwrap();
        let q = EmpiricalDistribution::new(vec![1.0, 1.0 + 1e-9], vec![1.0]).unwrap();
        assert_eq!(ks_distance(&p, &q), 1.0);
    }

    #[test]
    fn variance_integral_examples() {
        let zero = StepSeries::from_jumps(2, 100, vec![]).unwrap();
        assert_eq!(variance_integral(&zero, 50.0).unwrap(), 0.0);
        let one = constant_one(1000);
        for k in [2u32, 3] {
            let s = StepSeries::from_jumps(k, 1000, vec![(1, 1)]).unwrap();
            let kf = k as f64;
            let want = kf * (2f64.powf(-1.0 / kf) - 500f64.powf(-1.0 / kf));
            assert!((variance_integral(&s, 500.0).unwrap() - want).abs() < 1e-14);
        }
        assert!(variance_integral(&one, 2.0).is_err());
        assert!(variance_integral(&one, 5000.0).is_err());
    }

    #[test]
    fn variance_is_additive() {
        let s = real_series(20_000);
        let whole = variance_integral(&s, 20_000.0).unwrap();
        for x1 in [2.5, 17.0, 1234.5, 19_999.0] {
            let a = variance_integral_between(&s, 2.0, x1).unwrap();
            let b = variance_integral_between(&s, x1, 20_000.0).unwrap();
            assert!((a + b - whole).abs() < 1e-10);
        }
    }

    #[test]
    fn beta_examples() {
        let empty = beta_k(&[], 1);
        assert_eq!(empty.total, 0.0);
        assert_eq!(empty.verdict, BetaVerdict::Undetermined);
        let one = beta_k(
            &[ResidueTerm {
                gamma: 14.1,
                coeff: Complex64::new(0.3, -0.4),
            }],
            1,
        );
        assert!((one.total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn beta_tail_matches_power_law() {
        // |c| = g^{-1}: tail = 2/(2 pi) int_T^inf g^{-2} ln(g / 2 pi) dg
        let terms: Vec<ResidueTerm> = (1..=200)
            .map(|i| {
                let g = 10.0 + i as f64;
                ResidueTerm {
                    gamma: g,
                    coeff: Complex64::new(1.0 / g, 0.0),
                }
            })
            .collect();
        let r = beta_k(&terms, 1);
        let t: f64 = 210.0;
        let want = 2.0 / (2.0 * PI) * ((t / (2.0 * PI)).ln() + 1.0) / t;
        assert!((r.decay_exponent.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.tail_estimate.unwrap() - want).abs() < 1e-12);
        assert!(r.tail_bound.unwrap() < 1e-12);
        assert_eq!(r.partial_sums.len(), 200);
        let slow: Vec<ResidueTerm> = terms
            .iter()
            .map(|r| ResidueTerm {
                gamma: r.gamma,
                coeff: Complex64::new(r.gamma.powf(-0.4), 0.0),
            })
            .collect();
        assert_eq!(beta_k(&slow, 1).verdict, BetaVerdict::Divergent);
    }

    #[test]
    fn growth_extreme_thresholds() {
        let s = real_series(100_000);
        let x = 99_000.5;
        let all = growth_envelope(&s, 0.0, 0.1, x).unwrap();
        assert!((all.exceedance_log_measure - (x.ln() - 2.0)).abs() < 1e-12);
        let none = growth_envelope(&s, f64::INFINITY, 0.1, x).unwrap();
        assert_eq!(none.exceedance_log_measure, 0.0);
        let above = growth_envelope(&s, all.sup_ratio * 1.0001, 0.1, x).unwrap();
        assert_eq!(above.exceedance_log_measure, 0.0);
        assert!(growth_envelope(&s, 0.0, 0.1, 7.0).is_err());
    }

    #[test]
    fn growth_constant_series_crossing() {
        // S = 1: exceedance is where y/4 + 0.6 ln y <= -ln C
        let s = constant_one(1_000_000);
        let c = 0.05;
        let r = growth_envelope(&s, c, 0.1, 999_999.0).unwrap();
        let y = r.exceedance_log_measure + 2.0;
        assert!((y / 4.0 + 0.6 * y.ln() + c.ln()).abs() < 1e-12);
        assert!((r.sup_ratio - 1.0 / (0.5f64.exp() * 2f64.powf(0.6))).abs() < 1e-14);
    }

    #[test]
    fn threshold_sweep_brackets_target() {
        let s = real_series(100_000);
        let c = exceedance_threshold(&s, 0.1, 99_000.0, 0.01).unwrap();
        assert!(growth_envelope(&s, c, 0.1, 99_000.0).unwrap().exceedance_log_measure < 0.01);
        assert!(growth_envelope(&s, c * 0.999, 0.1, 99_000.0).unwrap().exceedance_log_measure >= 0.01);
    }

    #[test]
    fn normalizer_fixed_point_value() {
        let x = normalizer_fixed_point();
        let want = x.powf(0.25) * 0.25f64.exp();
        assert!((conjecture_normalizer(x, 2).unwrap() / want - 1.0).abs() < 1e-13);
        assert!(conjecture_normalizer(16.0, 2).is_err());
        assert!(conjecture_normalizer(f64::NAN, 2).is_err());
    }

    #[test]
    fn normalizer_increases_past_threshold() {
        for k in [2u32, 3, 5] {
            let mut prev = conjecture_normalizer(16.01, k).unwrap();
            let mut y = 16.01f64.ln();
            while y < 40.0 {
                y += 1e-3;
                let n = conjecture_normalizer(y.exp(), k).unwrap();
                assert!(n > prev, "k={k} y={y}");
                assert!(normalizer_log_slope(y, k) > 0.0);
                prev = n;
            }
        }
    }

    #[test]
    fn normalizer_sweep_tracks_extrema() {
        let s = real_series(100_000);
        let sw = normalizer_sweep(&s, 100_000.0).unwrap();
        assert_eq!(sw.checkpoints.len(), 4);
        assert!(sw.max_abs_ratio >= sw.max_ratio.abs().max(sw.min_ratio.abs()) - 1e-15);
        let mut brute: f64 = 0.0;
        for n in 17..100_000u64 {
            let r = s.value_at_int(n) as f64 / conjecture_normalizer(n as f64, 2).unwrap();
            brute = brute.max(r.abs());
        }
        assert!((brute - sw.max_abs_ratio).abs() < 1e-12);
        for w in sw.checkpoints.windows(2) {
            assert!(w[1].running_max_abs >= w[0].running_max_abs);
        }
    }

    fn arb_dist() -> impl Strategy<Value = EmpiricalDistribution> {
        (prop::collection::vec(0.01f64..1.0, 1..12), prop::collection::vec(0.0f64..1.0, 12), -3.0f64..3.0).prop_map(
            |(widths, masses, start)| {
                let mut edges = vec![start];
                for w in &widths {
                    edges.push(edges.last().unwrap() + w);
                }
                let mut m: Vec<f64> = masses[..widths.len()].to_vec();
                m[0] += 1e-3;
                EmpiricalDistribution::new(edges, m).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn ks_triangle(a in arb_dist(), b in arb_dist(), c in arb_dist()) {
            let ab = ks_distance(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ks_distance(&b, &a)).abs() < 1e-15);
            prop_assert!(ks_distance(&a, &c) <= ab + ks_distance(&b, &c) + 1e-12);
        }

        #[test]
        fn exceedance_monotone(c1 in 0.0f64..2.0, dc in 0.0f64..1.0, e1 in 0.0f64..0.5, de in 0.0f64..0.5) {
            let s = real_series(5_000);
            let m = |c: f64, e: f64| growth_envelope(&s, c, e, 4_999.0).unwrap().exceedance_log_measure;
            let base = m(c1, e1);
            prop_assert!(base >= 0.0);
            prop_assert!(m(c1 + dc, e1) <= base + 1e-12);
            prop_assert!(m(c1, e1 + de) <= base + 1e-12);
        }

        #[test]
        fn masses_sum_to_one(y1 in 3.0f64..8.5, bins in 1usize..300) {
            let s = real_series(5_000);
            let d = exact_log_distribution(&s, DEFAULT_Y0, y1, bins).unwrap();
            prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!(d.masses.iter().all(|&m| m >= 0.0));
        }
    }
}
