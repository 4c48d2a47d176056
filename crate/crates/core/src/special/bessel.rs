use std::f64::consts::{FRAC_PI_4, PI};

const SERIES_LIMIT: f64 = 12.0;
const QUADRATURE_LIMIT: f64 = 30.0;

/// Power series `sum (-1)^m (z/2)^{2m} / (m!)^2`.
pub fn bessel_j0_series(z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut comp = 0.0;
    let mut m = 1.0;
    loop {
        term *= -q / (m * m);
        // Neumaier step; the terms alternate and peak near 4e3 at z = 12
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
        if term.abs() < 1e-18 * sum.abs().max(1e-3) && m > q.sqrt() {
            break;
        }
        m += 1.0;
    }
    sum + comp
}

/// Hankel asymptotic expansion, truncated at its smallest term.
pub fn bessel_j0_asymptotic(z: f64) -> f64 {
    let x = z.abs();
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0usize;
    loop {
        let term = a / x.powi(k as i32);
        if term.abs() > prev || k > 200 {
            break;
        }
        prev = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        k += 1;
        let kf = k as f64;
        a *= -(2.0 * kf - 1.0).powi(2) / (8.0 * kf);
        if term.abs() < 1e-18 {
            break;
        }
    }
    let phase = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * phase.cos() - q * phase.sin())
}

/// Trapezoid rule on `(1/pi) int_0^pi cos(z cos t) dt`; the integrand is
/// periodic so the rule converges geometrically once the node count exceeds
/// `z`.
fn bessel_j0_quadrature(z: f64) -> f64 {
    let n = (z.abs() as usize) + 40;
    let h = PI / n as f64;
    let mut sum = 0.5 * (z.cos() + (-z).cos());
    for j in 1..n {
        sum += (z * (j as f64 * h).cos()).cos();
    }
    sum / n as f64
}

/// Bessel function of the first kind of order zero.
pub fn bessel_j0(z: f64) -> f64 {
    let x = z.abs();
    if x <= SERIES_LIMIT {
        bessel_j0_series(x)
    } else if x <= QUADRATURE_LIMIT {
        bessel_j0_quadrature(x)
    } else {
        bessel_j0_asymptotic(x)
    }
}
