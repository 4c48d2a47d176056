use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `B_{2j} / (2j (2j - 1))` for the Stirling series, j = 1..=12.
const STIRLING: [f64; 12] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
    43867.0 / 244188.0,
    -174611.0 / 125400.0,
    77683.0 / 5796.0,
    -236364091.0 / 1506960.0,
];

const SHIFT_TO: f64 = 12.0;

fn stirling(z: Complex64) -> Complex64 {
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut pow = inv;
    let mut series = Complex64::new(0.0, 0.0);
    for c in STIRLING {
        series += pow * c;
        pow *= inv2;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series
}

/// `ln sin(pi z)` without overflow for large `|Im z|`, up to a multiple of
/// `2 pi i`.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    if z.im.abs() < 10.0 {
        return (z * PI).sin().ln();
    }
    let i = Complex64::i();
    if z.im > 0.0 {
        // sin(pi z) = (i/2) e^{-i pi z} (1 - e^{2 pi i z})
        -i * PI * z + (Complex64::new(1.0, 0.0) - (i * 2.0 * PI * z).exp()).ln()
            + Complex64::new(0.5, 0.0).ln()
            + i * (PI / 2.0)
    } else {
        ln_sin_pi(z.conj()).conj()
    }
}

/// Log-gamma. For `Re z > 0` this is the branch continuous from the positive
/// axis; for `Re z < 1/2` the reflection formula is used and the imaginary
/// part is only meaningful modulo `2 pi`.
pub fn ln_gamma(z: Complex64) -> Result<Complex64> {
    if z.re <= 0.0 && z.im == 0.0 && z.re == z.re.round() {
        return Err(Error::PoleProximity(format!("Gamma pole at {}", z.re)));
    }
    if z.re < 0.5 {
        let one_minus = Complex64::new(1.0, 0.0) - z;
        return Ok(Complex64::new(PI.ln(), 0.0) - ln_sin_pi(z) - ln_gamma(one_minus)?);
    }
    let mut shift = Complex64::new(0.0, 0.0);
    let mut w = z;
    while w.re < SHIFT_TO && w.norm() < 2.0 * SHIFT_TO {
        shift += w.ln();
        w += 1.0;
    }
    Ok(stirling(w) - shift)
}

pub fn gamma(z: Complex64) -> Result<Complex64> {
    Ok(ln_gamma(z)?.exp())
}

/// `1 / Gamma(z)`, entire; exactly zero at the non-positive integers.
pub fn rgamma(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return Complex64::new(0.0, 0.0);
    }
    if z.re < 0.5 {
        let one_minus = Complex64::new(1.0, 0.0) - z;
        let l = ln_gamma(one_minus).expect("Re(1 - z) > 1/2") + ln_sin_pi(z);
        return l.exp() / PI;
    }
    (-ln_gamma(z).expect("poles handled above")).exp()
}

fn near_nonpositive_integer(z: Complex64, tol: f64) -> bool {
    z.re <= tol && (z - z.re.round()).norm() < tol
}

/// The gamma-factor ratio of the functional equation,
/// `pi^{s-1/2} Gamma((1-s+delta)/2) / Gamma((s+delta)/2)`.
pub fn delta_ratio(s: Complex64, delta: u8) -> Result<Complex64> {
    if delta > 1 {
        return Err(Error::InvalidParameter(format!("parity must be 0 or 1, got {delta}")));
    }
    let d = delta as f64;
    let top = (Complex64::new(1.0 + d, 0.0) - s) * 0.5;
    let bottom = (s + d) * 0.5;
    if near_nonpositive_integer(top, 1e-9) {
        return Err(Error::PoleProximity(format!("gamma ratio pole near s = {s}")));
    }
    let top_ln = ln_gamma(top)?;
    let log_pi = (s - 0.5) * PI.ln();
    if near_nonpositive_integer(bottom, 1e-12) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let bottom_ln = ln_gamma(bottom)?;
    Ok((log_pi + top_ln - bottom_ln).exp())
}

/// Full factor `(q/pi)^{1/2-s} Gamma((1-s+delta)/2) / Gamma((s+delta)/2)`
/// relating `L(s)` and `L(1-s)` for a primitive character of conductor `q`.
pub fn conductor_delta_ratio(s: Complex64, delta: u8, q: u64) -> Result<Complex64> {
    let lq = (q as f64).ln();
    Ok(delta_ratio(s, delta)? * ((Complex64::new(0.5, 0.0) - s) * lq).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ln_gamma_reference_values() {
        let v = ln_gamma(c(0.3, 5.0)).unwrap();
        assert!((v - c(-7.256648818321825, 2.737370890453828)).norm() < 1e-12);
        assert!(ln_gamma(c(1.0, 0.0)).unwrap().norm() < 1e-13);
        assert!((ln_gamma(c(0.5, 0.0)).unwrap().re - 0.5 * PI.ln()).abs() < 1e-14);
        assert!((gamma(c(5.0, 0.0)).unwrap().re - 24.0).abs() < 1e-11);
        assert!(ln_gamma(c(-2.0, 0.0)).is_err());
    }

    #[test]
    fn reflection_branch_values() {
        // Gamma(-0.5) = -2 sqrt(pi)
        let g = gamma(c(-0.5, 0.0)).unwrap();
        assert!((g - c(-2.0 * PI.sqrt(), 0.0)).norm() < 1e-12);
        // |Gamma(iy)|^2 = pi / (y sinh(pi y)) at large y
        let y: f64 = 40.0;
        let l = ln_gamma(c(-0.25, y)).unwrap();
        let l2 = ln_gamma(c(1.25, -y)).unwrap();
        // Gamma(z) Gamma(1 - z) = pi / sin(pi z)
        let prod = (l + l2).exp() * ((c(-0.25, y) * PI).sin());
        assert!(((prod / PI) - 1.0).norm() < 1e-10);
        assert_eq!(rgamma(c(-3.0, 0.0)), c(0.0, 0.0));
        assert!((rgamma(c(-0.5, 0.0)).re + 1.0 / (2.0 * PI.sqrt())).abs() < 1e-13);
    }

    #[test]
    fn delta_ratio_examples() {
        let v = delta_ratio(c(0.5, 0.0), 0).unwrap();
        assert!((v - 1.0).norm() < 1e-14);
        for &(sr, si) in &[(0.3, 2.0), (0.7, 25.0), (-0.4, 130.0), (1.3, 7.5)] {
            for delta in [0, 1] {
                let s = c(sr, si);
                let p = delta_ratio(s, delta).unwrap() * delta_ratio(c(1.0, 0.0) - s, delta).unwrap();
                assert!((p - 1.0).norm() < 1e-10, "{s} {delta} {p}");
            }
        }
        assert!(delta_ratio(c(1.0, 0.0), 0).is_err());
        assert!(delta_ratio(c(2.0, 0.0), 1).is_err());
        assert!(delta_ratio(c(0.5, 0.0), 2).is_err());
    }

    #[test]
    fn delta_ratio_stirling_size() {
        for delta in [0, 1] {
            for &t in &[10.0, 55.5, 300.0, 1000.0] {
                for &sigma in &[0.0, 0.25, 0.5, 1.0] {
                    let v = delta_ratio(c(sigma, t), delta).unwrap().norm() * (t / (2.0 * PI)).powf(sigma - 0.5);
                    assert!((0.5..=2.0).contains(&v), "delta={delta} t={t} sigma={sigma} -> {v}");
                }
            }
        }
    }
}
