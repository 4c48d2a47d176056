use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::gamma::{gamma, rgamma};
use super::zeta::bernoulli_ratios;
use crate::numeric::{primes_up_to, CompensatedSum};
use crate::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Largest allowed deviation of the last Euler factor of `alpha(r)` from 1.
pub const ALPHA_FACTOR_TOLERANCE: f64 = 1e-3;

/// `sum_{n >= 0} (w + n)^{-s}` for real `s > 1` and `w >= 20`.
fn real_tail_zeta(s: f64, w: f64) -> f64 {
    const DIRECT: usize = 16;
    let mut head = 0.0;
    for n in (0..DIRECT).rev() {
        head += (w + n as f64).powf(-s);
    }
    let v = w + DIRECT as f64;
    let mut tail = v.powf(1.0 - s) / (s - 1.0) + 0.5 * v.powf(-s);
    let mut p = s;
    let mut pow = v.powf(-s - 1.0);
    for (j, &b) in bernoulli_ratios().iter().enumerate().take(20) {
        if j > 0 {
            p *= (s + (2 * j - 1) as f64) * (s + (2 * j) as f64);
            pow /= v * v;
        }
        let term = b * p * pow;
        tail += term;
        if term.abs() < 1e-19 * tail.abs() {
            break;
        }
    }
    head + tail
}

/// `ln G(1 + z)` from the Weierstrass product; the tail past `K` factors is
/// summed in closed form through `sum_{m>=3} (-1)^{m+1} z^m/m zeta(m-1, K+1)`.
fn ln_barnes_g1p(z: Complex64) -> Complex64 {
    let k_max = 20usize.max((4.0 * z.norm()).ceil() as usize);
    let mut acc = z * (0.5 * (2.0 * PI).ln()) - (z + z * z * (1.0 + EULER_GAMMA)) * 0.5;
    for k in 1..=k_max {
        let kf = k as f64;
        acc += (Complex64::new(1.0, 0.0) + z / kf).ln() * kf - z + z * z / (2.0 * kf);
    }
    let w = (k_max + 1) as f64;
    let mut zm = z * z * z;
    for m in 3..400 {
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        let term = zm * (sign * real_tail_zeta((m - 1) as f64, w) / m as f64);
        acc += term;
        if term.norm() < 1e-18 * acc.norm().max(1.0) {
            break;
        }
        zm *= z;
    }
    acc
}

/// Barnes `G`, normalised by `G(1) = 1` and `G(s + 1) = Gamma(s) G(s)`.
pub fn barnes_g(s: Complex64) -> Result<Complex64> {
    if !(s.re.is_finite() && s.im.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite argument {s}")));
    }
    if s.re.abs() > 170.0 {
        return Err(Error::OutOfRange {
            value: s.re,
            range: "[-170, 170]".into(),
        });
    }
    let mut factor = Complex64::new(1.0, 0.0);
    let mut w = s;
    while w.re > 1.5 {
        w -= 1.0;
        factor *= gamma(w)?;
    }
    while w.re < 0.5 {
        // G(w) = G(w + 1) / Gamma(w)
        factor *= rgamma(w);
        w += 1.0;
    }
    Ok(factor * ln_barnes_g1p(w - 1.0).exp())
}

/// Truncated `alpha(r)` with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaValue {
    pub value: f64,
    /// Estimated relative size of the omitted factors `p > cutoff`.
    pub residual: f64,
    /// `|f(p) - 1|` for the last prime used.
    pub last_factor_deviation: f64,
    pub prime_cutoff: u64,
}

/// Local factor `(1 - 1/p)^{r^2} sum_m a_m^2 p^{-m}` with
/// `a_m = Gamma(m + r) / (m! Gamma(r))`.
fn alpha_factor(r: f64, p: f64) -> f64 {
    let x = 1.0 / p;
    let mut a = 1.0;
    let mut xm = 1.0;
    let mut sum = 1.0;
    for m in 1..100_000 {
        let mf = m as f64;
        a *= (r + mf - 1.0) / mf;
        xm *= x;
        let term = a * a * xm;
        sum += term;
        if term.abs() < 1e-18 * sum && mf > 2.0 * r.abs() {
            break;
        }
        if a == 0.0 {
            break;
        }
    }
    (r * r * (-x).ln_1p()).exp() * sum
}

/// `alpha(r)` as an Euler product over `p <= prime_cutoff`.
pub fn alpha_r(r: f64, prime_cutoff: u64) -> Result<AlphaValue> {
    if !r.is_finite() {
        return Err(Error::InvalidParameter("r must be finite".into()));
    }
    if prime_cutoff < 2 {
        return Err(Error::InvalidParameter("prime cutoff must be >= 2".into()));
    }
    let primes = primes_up_to(prime_cutoff);
    let mut log_sum = CompensatedSum::new();
    let mut last = 1.0;
    for &p in &primes {
        last = alpha_factor(r, p as f64);
        log_sum.add(last.ln());
    }
    let deviation = (last - 1.0).abs();
    if deviation > ALPHA_FACTOR_TOLERANCE {
        return Err(Error::CutoffTooSmall { deviation });
    }
    // ln f(p) ~ C / p^2 and sum_{p > P} p^{-2} ~ 1 / (P ln P)
    let p_last = *primes.last().unwrap() as f64;
    let c = last.ln().abs() * p_last * p_last;
    let residual = c / (prime_cutoff as f64 * (prime_cutoff as f64).ln());
    Ok(AlphaValue {
        value: log_sum.value().exp(),
        residual,
        last_factor_deviation: deviation,
        prime_cutoff,
    })
}

/// The leading constant `G^2(r+2) / G(2r+3) * alpha(r) / (2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HkoValue {
    pub value: f64,
    pub gamma_part: f64,
    pub alpha: AlphaValue,
}

pub fn hko_constant(r: f64, prime_cutoff: u64) -> Result<HkoValue> {
    if !(r > -1.5) {
        return Err(Error::InvalidParameter(format!("r must exceed -3/2, got {r}")));
    }
    let g1 = barnes_g(Complex64::new(r + 2.0, 0.0))?;
    let g2 = barnes_g(Complex64::new(2.0 * r + 3.0, 0.0))?;
    let gamma_part = (g1 * g1 / g2).re;
    let alpha = alpha_r(r, prime_cutoff)?;
    Ok(HkoValue {
        value: gamma_part * alpha.value / (2.0 * PI),
        gamma_part,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(re: f64, im: f64) -> Complex64 {
        barnes_g(Complex64::new(re, im)).unwrap()
    }

    #[test]
    fn base_cases() {
        for s in [1.0, 2.0, 3.0] {
            assert!((g(s, 0.0) - 1.0).norm() < 1e-14, "G({s})");
        }
        assert!((g(4.0, 0.0) - 2.0).norm() < 1e-13);
        assert!((g(5.0, 0.0) - 12.0).norm() < 1e-12);
        assert!(g(0.0, 0.0).norm() < 1e-300);
        assert!(g(-2.0, 0.0).norm() < 1e-300);
    }

    #[test]
    fn reference_values() {
        assert!((g(0.5, 0.0).re - 0.603244281209446206).abs() < 1e-14);
        assert!((g(2.5, 0.0).re - 0.947573901083825777).abs() < 1e-14);
        assert!((g(3.7, 0.0).re - 1.47004087379182047).abs() < 1e-13);
        assert!((g(-0.7, 0.0).re + 0.0836788878655055887).abs() < 1e-14);
        let v = g(1.0, 1.0);
        assert!((v - Complex64::new(1.80387672692513793, 0.00671757057971002953)).norm() < 1e-13);
        let v = g(0.2, 2.0);
        assert!((v - Complex64::new(26.9227095840703906, -12.3917138106706583)).norm() < 1e-11);
    }

    #[test]
    fn recurrence_holds() {
        for &(re, im) in &[(0.3, 0.4), (1.7, -2.0), (-1.3, 0.5)] {
            let s = Complex64::new(re, im);
            let lhs = barnes_g(s + 1.0).unwrap();
            let rhs = gamma(s).unwrap() * barnes_g(s).unwrap();
            assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn alpha_examples() {
        let a0 = alpha_r(0.0, 1000).unwrap();
        assert_eq!(a0.value, 1.0);
        // r = -1: each factor is 1 - p^{-2}, so alpha = 6/pi^2
        let a = alpha_r(-1.0, 100_000).unwrap();
        assert!((a.value - 6.0 / (PI * PI)).abs() < 1e-5);
        assert!(a.residual < 1e-4);
        assert!(matches!(alpha_r(-1.0, 5), Err(Error::CutoffTooSmall { .. })));
    }

    #[test]
    fn alpha_drift_between_cutoffs() {
        for r in [-1.0, -0.5, 0.5, 1.0] {
            let a = alpha_r(r, 10_000).unwrap().value;
            let b = alpha_r(r, 100_000).unwrap().value;
            assert!(((a - b) / b).abs() < 1e-3, "r={r}");
        }
    }

    #[test]
    fn hko_examples() {
        let h0 = hko_constant(0.0, 1000).unwrap();
        assert!((h0.value - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let h = hko_constant(-1.0, 100_000).unwrap();
        assert!(h.value > 0.0);
        assert!((h.value - 3.0 / PI.powi(3)).abs() < 1e-5);
        assert!((hko_constant(1.0, 1000).unwrap().gamma_part - 1.0 / 12.0).abs() < 1e-13);
        assert!(hko_constant(-1.6, 1000).is_err());
    }
}
