//! The random model `X = sum_gamma r_gamma sin(2 pi theta_gamma)` with
//! independent uniform phases, its Fourier transform, tail bounds and a
//! comparison against the exact empirical distribution.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distribution::{ks_distance, zero_weighted_power_tail, EmpiricalDistribution};
use crate::explicit::ResidueTerm;
use crate::numeric::{fit_line, CompensatedSum};
use crate::special::bessel_j0;
use crate::{Error, Result};

/// Samples drawn per RNG stream.
pub const BATCH_SIZE: usize = 4096;
pub const LARGE_DEVIATION_LABEL: &str = "consistency probe, not asymptotics";
pub const MIN_TAIL_COUNT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailSource {
    /// Supplied by the caller.
    Given,
    /// `|c| ~ A gamma^{-exponent}` integrated against the zero density.
    FittedDecay { exponent: f64, amplitude_sq: f64, modulus: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelAmplitudes {
    pub gammas: Vec<f64>,
    pub r: Vec<f64>,
    pub truncation: f64,
    /// Estimate of `sum_{gamma > T} r_gamma^2`.
    pub tail_sum: f64,
    pub tail_bracket: (f64, f64),
    pub tail_source: TailSource,
}

impl ModelAmplitudes {
    /// Amplitudes given directly, with a known tail of squares.
    pub fn from_amplitudes(r: Vec<f64>, tail_sum: f64) -> Result<Self> {
        if r.is_empty() || r.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("amplitudes must be positive and finite".into()));
        }
        if !(tail_sum >= 0.0) || !tail_sum.is_finite() {
            return Err(Error::InvalidParameter(format!("tail sum must be >= 0, got {tail_sum}")));
        }
        Ok(Self {
            gammas: (1..=r.len()).map(|i| i as f64).collect(),
            truncation: r.len() as f64,
            r,
            tail_sum,
            tail_bracket: (tail_sum, tail_sum),
            tail_source: TailSource::Given,
        })
    }

    /// `r = 2 |c_rho|`, with the tail past the last ordinate extrapolated from
    /// `|c| ~ A gamma^{-(1/2 + 1/2k)}`. `q` is the conductor of the function
    /// whose zeros index the terms.
    pub fn from_terms(terms: &[ResidueTerm], k: u32, q: u64) -> Result<Self> {
        let kept: Vec<&ResidueTerm> = terms.iter().filter(|t| t.coeff.norm() > 0.0).collect();
        if kept.is_empty() {
            return Err(Error::InsufficientData("no non-zero residue terms".into()));
        }
        let gammas: Vec<f64> = kept.iter().map(|t| t.gamma).collect();
        let r: Vec<f64> = kept.iter().map(|t| 2.0 * t.coeff.norm()).collect();
        let t = *gammas.last().unwrap();
        let e = 0.5 + 0.5 / k.max(2) as f64;
        let amp2 = |from: usize| {
            let s = &kept[from..];
            s.iter().map(|t| t.coeff.norm_sqr() * t.gamma.powf(2.0 * e)).sum::<f64>() / s.len() as f64
        };
        let q = q.max(1);
        let integral = zero_weighted_power_tail(2.0 * e, t, q as f64)
            .ok_or_else(|| Error::InvalidParameter("decay too slow for a finite tail".into()))?;
        let (all, upper) = (amp2(0), amp2(kept.len() / 2));
        // 4 |c|^2 = r^2
        let tail = |a2: f64| 4.0 * a2 * integral;
        let (lo, hi) = (tail(all.min(upper)), tail(all.max(upper)));
        Ok(Self {
            gammas,
            r,
            truncation: t,
            tail_sum: tail(all),
            tail_bracket: (lo, hi),
            tail_source: TailSource::FittedDecay {
                exponent: e,
                amplitude_sq: all,
                modulus: q,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn sum_squares(&self) -> f64 {
        self.r.iter().map(|r| r * r).collect::<CompensatedSum>().value()
    }

    /// Variance of the truncated model, `sum r^2 / 2`.
    pub fn variance(&self) -> f64 {
        0.5 * self.sum_squares()
    }

    /// Variance including the extrapolated tail.
    pub fn variance_with_tail(&self) -> f64 {
        0.5 * (self.sum_squares() + self.tail_sum)
    }

    /// `sum r`, the largest value the truncated model can take.
    pub fn max_value(&self) -> f64 {
        self.r.iter().sum()
    }

    /// `X` at the given phases.
    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.r.len() {
            return Err(Error::InvalidParameter(format!(
                "{} phases for {} amplitudes",
                theta.len(),
                self.r.len()
            )));
        }
        Ok(self.r.iter().zip(theta).map(|(r, t)| r * (2.0 * PI * t).sin()).sum())
    }
}

/// `count` draws of the truncated model. Batch `b` of `BATCH_SIZE` samples
/// uses ChaCha8 seeded from `seed` on stream `b`, so the output depends on
/// `seed` and `count` only.
pub fn sample_x(amps: &ModelAmplitudes, count: usize, seed: u64) -> Vec<f64> {
    let batches = count.div_ceil(BATCH_SIZE);
    (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let n = BATCH_SIZE.min(count - b * BATCH_SIZE);
            (0..n)
                .map(|_| {
                    amps.r
                        .iter()
                        .map(|r| r * (2.0 * PI * rng.random::<f64>()).sin())
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourierValue {
    pub xi: f64,
    /// `prod J0(xi r)` over the catalog terms.
    pub truncated: f64,
    /// `-xi^2 / 4 * sum_{gamma > T} r^2`, the small-argument value of the
    /// omitted `sum ln J0`.
    pub tail_log: f64,
    pub with_tail: f64,
}

pub fn fourier_nu(amps: &ModelAmplitudes, xi: f64) -> FourierValue {
    let truncated = amps.r.iter().map(|r| bessel_j0(xi * r)).product::<f64>();
    let tail_log = -0.25 * xi * xi * amps.tail_sum;
    FourierValue {
        xi,
        truncated,
        tail_log,
        with_tail: truncated * tail_log.exp(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MontgomeryBounds {
    pub k_terms: usize,
    /// `sum_{l <= K} r_l` over the largest amplitudes.
    pub head_sum: f64,
    /// `sum_{l > K} r_l^2`: remaining catalog terms plus the tail estimate.
    pub rest_sq: f64,
    pub upper_threshold: f64,
    pub upper_bound: f64,
    pub lower_threshold: f64,
    pub lower_bound: f64,
    /// Bounds with the tail taken at either end of its bracket; the first
    /// entry is the smaller value.
    pub upper_range: (f64, f64),
    pub lower_range: (f64, f64),
    /// The upper bound is exactly zero because nothing remains past `K`.
    pub upper_underflow: bool,
}

/// `P(X >= 2 H) <= exp(-3/4 H^2 / R)` and
/// `P(X >= H / 2) >= 2^{-40} exp(-100 H^2 / R)` with `H` the sum of the `K`
/// largest amplitudes and `R` the sum of the remaining squares.
pub fn montgomery_bounds(amps: &ModelAmplitudes, k_terms: usize) -> Result<MontgomeryBounds> {
    if k_terms < 1 || k_terms > amps.len() {
        return Err(Error::InvalidParameter(format!(
            "K = {k_terms} outside [1, {}]",
            amps.len()
        )));
    }
    let mut sorted = amps.r.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let head: f64 = sorted[..k_terms].iter().copied().collect::<CompensatedSum>().value();
    let rest_catalog: f64 = sorted[k_terms..].iter().map(|r| r * r).collect::<CompensatedSum>().value();
    let h2 = head * head;
    let upper = |rest: f64| if rest > 0.0 { (-0.75 * h2 / rest).exp() } else { 0.0 };
    let lower = |rest: f64| {
        if rest > 0.0 {
            2f64.powi(-40) * (-100.0 * h2 / rest).exp()
        } else {
            0.0
        }
    };
    let rest = rest_catalog + amps.tail_sum;
    let (lo, hi) = (rest_catalog + amps.tail_bracket.0, rest_catalog + amps.tail_bracket.1);
    Ok(MontgomeryBounds {
        k_terms,
        head_sum: head,
        rest_sq: rest,
        upper_threshold: 2.0 * head,
        upper_bound: upper(rest),
        lower_threshold: 0.5 * head,
        lower_bound: lower(rest),
        upper_range: (upper(lo), upper(hi)),
        lower_range: (lower(lo), lower(hi)),
        upper_underflow: rest == 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub v: f64,
    pub probability: f64,
    pub std_error: f64,
    pub count: usize,
}

/// Fraction of `samples` at or above `v` with its binomial standard error.
pub fn tail_from_samples(samples: &[f64], v: f64) -> TailEstimate {
    let n = samples.len();
    let hits = samples.iter().filter(|&&x| x >= v).count();
    let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    TailEstimate {
        v,
        probability: p,
        std_error: if n == 0 { 0.0 } else { (p * (1.0 - p) / n as f64).sqrt() },
        count: n,
    }
}

pub fn tail_probability(amps: &ModelAmplitudes, v: f64, count: usize, seed: u64) -> Result<TailEstimate> {
    if count < MIN_TAIL_COUNT {
        return Err(Error::InvalidParameter(format!(
            "tail estimates need at least {MIN_TAIL_COUNT} samples, got {count}"
        )));
    }
    Ok(tail_from_samples(&sample_x(amps, count, seed), v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationPoint {
    pub v: f64,
    pub probability: f64,
    pub std_error: f64,
    pub resolvable: bool,
    /// `-ln P` minus the fitted line; zero for unresolvable points.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeDeviationFit {
    pub k: u32,
    /// `2k / (k - 1)`: the fit is of `-ln P` against `V^power`.
    pub power: f64,
    pub c: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<DeviationPoint>,
    /// Set when the fit cannot say anything about the tail shape: the
    /// model has bounded support and the grid reaches its upper half, or
    /// fewer than two points are resolvable, or the slope is not positive.
    pub degenerate: bool,
    pub label: &'static str,
}

pub fn large_deviation_fit(
    amps: &ModelAmplitudes,
    k: u32,
    v_grid: &[f64],
    count: usize,
    seed: u64,
) -> Result<LargeDeviationFit> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    let power = 2.0 * k as f64 / (k as f64 - 1.0);
    let samples = sample_x(amps, count, seed);
    let floor = 10.0 / count as f64;
    let mut points: Vec<DeviationPoint> = v_grid
        .iter()
        .map(|&v| {
            let t = tail_from_samples(&samples, v);
            DeviationPoint {
                v,
                probability: t.probability,
                std_error: t.std_error,
                resolvable: v > 0.0 && t.probability >= floor,
                residual: 0.0,
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.resolvable)
        .map(|p| (p.v.powf(power), -p.probability.ln()))
        .unzip();
    if xs.is_empty() {
        return Err(Error::InsufficientData("no resolvable tail point on the V grid".into()));
    }
    let fit = fit_line(&xs, &ys);
    let (c, intercept, r_squared) = fit.map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.slope, f.intercept, f.r_squared));
    for p in points.iter_mut().filter(|p| p.resolvable) {
        p.residual = -p.probability.ln() - (intercept + c * p.v.powf(power));
    }
    let max_v = xs.iter().copied().fold(0.0, f64::max).powf(1.0 / power);
    let bounded = amps.tail_sum == 0.0 && max_v >= 0.5 * amps.max_value();
    Ok(LargeDeviationFit {
        k,
        power,
        c,
        intercept,
        r_squared,
        points,
        degenerate: bounded || fit.is_none() || !(c > 0.0),
        label: LARGE_DEVIATION_LABEL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub kurtosis: f64,
}

impl Moments {
    fn of(d: &EmpiricalDistribution) -> Self {
        Self {
            mean: d.mean,
            variance: d.variance(),
            kurtosis: d.kurtosis(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub ks: f64,
    pub empirical: Moments,
    pub model: Moments,
    /// `sum r^2 / 2` over the catalog, equal to the partial `beta_k`.
    pub model_variance: f64,
    pub model_variance_with_tail: f64,
    pub count: usize,
    pub seed: u64,
}

/// KS distance and moments between an empirical distribution and `count`
/// model draws binned like it.
pub fn empirical_vs_model(
    dist: &EmpiricalDistribution,
    amps: &ModelAmplitudes,
    count: usize,
    seed: u64,
) -> Result<ModelComparison> {
    let samples = sample_x(amps, count, seed);
    let model = EmpiricalDistribution::from_samples(&samples, dist.bins())?;
    Ok(ModelComparison {
        ks: ks_distance(dist, &model),
        empirical: Moments::of(dist),
        model: Moments::of(&model),
        model_variance: amps.variance(),
        model_variance_with_tail: amps.variance_with_tail(),
        count,
        seed,
    })
}
