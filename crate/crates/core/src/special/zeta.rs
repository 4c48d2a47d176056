use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;

use super::gamma::ln_gamma;
use super::EvalContext;
use crate::characters::DirichletCharacter;
use crate::numeric::CompensatedComplex;
use crate::{Error, Result};

pub(super) const MAX_BERNOULLI: usize = 60;
const MAX_CUTOFF: usize = 1 << 22;

/// `B_{2j} / (2j)!` for j = 1..=MAX_BERNOULLI, from
/// `B_{2j}/(2j)! = (-1)^{j+1} 2 zeta(2j) / (2 pi)^{2j}`.
pub(crate) fn bernoulli_ratios() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (1..=MAX_BERNOULLI)
            .map(|j| {
                let two_j = 2 * j as i32;
                let zeta_2j = match j {
                    1 => PI * PI / 6.0,
                    2 => PI.powi(4) / 90.0,
                    _ => {
                        // terms beyond 1000 are below 1e-15 relative for 2j >= 6
                        let mut s = 0.0;
                        for n in (1..=1000u32).rev() {
                            s += (n as f64).powi(-two_j);
                        }
                        s
                    }
                };
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * 2.0 * zeta_2j / (2.0 * PI).powi(two_j)
            })
            .collect()
    })
}

/// `R(s, a)` and `dR/ds` where `zeta(s, a) = R(s, a) + 1/(s - 1)`.
///
/// Removing the pole makes the character sums in `L(s, chi)` regular at
/// `s = 1`.
fn hurwitz_regular(s: Complex64, a: f64, ctx: &EvalContext) -> Result<(Complex64, Complex64)> {
    let mut cutoff = ctx.cutoff(s.im);
    loop {
        if let Some(v) = hurwitz_regular_at(s, a, cutoff, ctx) {
            return Ok(v);
        }
        cutoff *= 2;
        if cutoff > MAX_CUTOFF {
            return Err(Error::PrecisionUnreachable(format!(
                "Euler-Maclaurin tail for zeta(s, {a}) did not settle at s = {s}"
            )));
        }
    }
}

/// `(e^u - 1)/u` and its derivative in `u`, stable near 0.
fn expm1_ratio(u: Complex64) -> (Complex64, Complex64) {
    if u.norm() < 1e-3 {
        let e = 1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u / 120.0)));
        let de = 0.5 + u * (1.0 / 3.0 + u * (0.125 + u * (1.0 / 30.0 + u / 144.0)));
        (e, de)
    } else {
        let eu = u.exp();
        ((eu - 1.0) / u, (eu * (u - 1.0) + 1.0) / (u * u))
    }
}

fn hurwitz_regular_at(
    s: Complex64,
    a: f64,
    cutoff: usize,
    ctx: &EvalContext,
) -> Option<(Complex64, Complex64)> {
    let mut head = CompensatedComplex::new();
    let mut head_d = CompensatedComplex::new();
    for n in 0..cutoff {
        let w = n as f64 + a;
        let lw = w.ln();
        let term = (-s * lw).exp();
        head.add(term);
        head_d.add(-term * lw);
    }
    let w = cutoff as f64 + a;
    let lw = w.ln();
    let w_s = (-s * lw).exp();
    let one = Complex64::new(1.0, 0.0);

    // w^{1-s}/(s-1) - 1/(s-1) = -ln w (e^u - 1)/u with u = (1 - s) ln w
    let u = (one - s) * lw;
    let (e, de) = expm1_ratio(u);
    let mut value = head.value() - e * lw + w_s * 0.5;
    let mut deriv = head_d.value() + de * lw * lw - w_s * lw * 0.5;

    let tol = ctx.tolerance();
    let scale = value.norm().max(1.0);
    let inv_w2 = 1.0 / (w * w);
    // P_j = s (s+1) ... (s+2j-2), tracked with its derivative
    let mut p = s;
    let mut dp = one;
    let mut pow = w_s / w; // w^{-s-2j+1} at j = 1
    let mut prev = f64::INFINITY;
    for (j, &b) in bernoulli_ratios().iter().take(ctx.bernoulli_depth()).enumerate() {
        if j > 0 {
            let m1 = s + (2 * j - 1) as f64;
            let m2 = s + (2 * j) as f64;
            let f = m1 * m2;
            dp = dp * f + p * (m1 + m2);
            p *= f;
            pow *= inv_w2;
        }
        let term = p * pow * b;
        let term_d = (dp - p * lw) * pow * b;
        value += term;
        deriv += term_d;
        let size = term.norm().max(term_d.norm() / (1.0 + lw));
        if size <= tol * scale * 1e-2 {
            return Some((value, deriv));
        }
        if size > prev {
            return None;
        }
        prev = size;
    }
    None
}

/// Hurwitz zeta `zeta(s, a)` for `0 < a <= 1`.
pub fn hurwitz_zeta(s: Complex64, a: f64, ctx: &EvalContext) -> Result<Complex64> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidParameter(format!("Hurwitz shift must lie in (0, 1], got {a}")));
    }
    check_zeta_pole(s)?;
    let (r, _) = hurwitz_regular(s, a, ctx)?;
    Ok(r + (s - 1.0).inv())
}

fn check_zeta_pole(s: Complex64) -> Result<()> {
    if (s - 1.0).norm() < 1e-6 {
        return Err(Error::PoleProximity(format!("zeta pole at s = 1, got s = {s}")));
    }
    Ok(())
}

/// `(zeta(s), zeta'(s))`.
pub fn zeta_with_deriv(s: Complex64, ctx: &EvalContext) -> Result<(Complex64, Complex64)> {
    check_zeta_pole(s)?;
    let (r, dr) = hurwitz_regular(s, 1.0, ctx)?;
    let inv = (s - 1.0).inv();
    Ok((r + inv, dr - inv * inv))
}

pub fn zeta(s: Complex64, ctx: &EvalContext) -> Result<Complex64> {
    Ok(zeta_with_deriv(s, ctx)?.0)
}

pub fn zeta_deriv(s: Complex64, ctx: &EvalContext) -> Result<Complex64> {
    Ok(zeta_with_deriv(s, ctx)?.1)
}

/// `(L(s, chi), L'(s, chi))` through
/// `L(s, chi) = q^{-s} sum_a chi(a) zeta(s, a/q)`.
pub fn l_with_deriv(
    s: Complex64,
    chi: &DirichletCharacter,
    ctx: &EvalContext,
) -> Result<(Complex64, Complex64)> {
    let q = chi.modulus();
    let mut sum = CompensatedComplex::new();
    let mut sum_d = CompensatedComplex::new();
    for a in 1..=q {
        let c = chi.value(a);
        if c == 0 {
            continue;
        }
        let (r, dr) = hurwitz_regular(s, a as f64 / q as f64, ctx)?;
        sum.add(r * c as f64);
        sum_d.add(dr * c as f64);
    }
    let lq = (q as f64).ln();
    let q_s = (-s * lq).exp();
    let r = sum.value();
    Ok((q_s * r, q_s * (sum_d.value() - r * lq)))
}

pub fn l_function(s: Complex64, chi: &DirichletCharacter, ctx: &EvalContext) -> Result<Complex64> {
    Ok(l_with_deriv(s, chi, ctx)?.0)
}

pub fn l_deriv(s: Complex64, chi: &DirichletCharacter, ctx: &EvalContext) -> Result<Complex64> {
    Ok(l_with_deriv(s, chi, ctx)?.1)
}

/// The function whose zeros are sought: zeta or a real-character L-function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FunctionId {
    Zeta,
    Dirichlet(DirichletCharacter),
}

impl FunctionId {
    pub fn modulus(&self) -> u64 {
        match self {
            Self::Zeta => 1,
            Self::Dirichlet(chi) => chi.modulus(),
        }
    }

    pub fn delta(&self) -> u8 {
        match self {
            Self::Zeta => 0,
            Self::Dirichlet(chi) => chi.parity().delta(),
        }
    }

    pub fn eval_with_deriv(&self, s: Complex64, ctx: &EvalContext) -> Result<(Complex64, Complex64)> {
        match self {
            Self::Zeta => zeta_with_deriv(s, ctx),
            Self::Dirichlet(chi) => l_with_deriv(s, chi, ctx),
        }
    }

    pub fn eval(&self, s: Complex64, ctx: &EvalContext) -> Result<Complex64> {
        Ok(self.eval_with_deriv(s, ctx)?.0)
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zeta => write!(f, "zeta"),
            Self::Dirichlet(chi) => match chi.discriminant() {
                Some(d) => write!(f, "L(d={d})"),
                None => write!(f, "L(q={})", chi.modulus()),
            },
        }
    }
}

impl FromStr for FunctionId {
    type Err = Error;

    /// Accepts `zeta`, `L(d=<d>)` or `L:<d>`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("zeta") {
            return Ok(Self::Zeta);
        }
        let inner = t
            .strip_prefix("L(d=")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| t.strip_prefix("L:"))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown function id '{s}'")))?;
        let d: i64 = inner
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad discriminant in '{s}'")))?;
        Ok(Self::Dirichlet(DirichletCharacter::from_discriminant(d)?))
    }
}

/// Phase `theta(t)` making `e^{i theta(t)} F(1/2 + it)` real for `F` zeta or
/// an L-function of a real primitive character.
pub fn hardy_theta(source: &FunctionId, t: f64) -> f64 {
    let q = source.modulus() as f64;
    let d = source.delta() as f64;
    let lg = ln_gamma(Complex64::new((0.5 + d) / 2.0, t / 2.0)).expect("Re > 0");
    lg.im + 0.5 * t * (q / PI).ln()
}

/// Real-valued `Z(t) = e^{i theta(t)} F(1/2 + it)`.
pub fn hardy_z(source: &FunctionId, t: f64, ctx: &EvalContext) -> Result<f64> {
    let v = source.eval(Complex64::new(0.5, t), ctx)?;
    let rot = Complex64::from_polar(1.0, hardy_theta(source, t));
    Ok((rot * v).re)
}

#[cfg(test)]
mod tests {
    use super::super::gamma::{conductor_delta_ratio, delta_ratio};
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ctx() -> EvalContext {
        EvalContext::default()
    }

    fn chi(d: i64) -> DirichletCharacter {
        DirichletCharacter::from_discriminant(d).unwrap()
    }

    #[test]
    fn bernoulli_table_matches_rationals() {
        let b = bernoulli_ratios();
        assert!((b[0] * 12.0 - 1.0).abs() < 1e-15);
        assert!((b[1] * 720.0 + 1.0).abs() < 1e-15);
        assert!((b[2] * 30240.0 - 1.0).abs() < 1e-15);
        assert!((b[5] / (-(691.0 / 2730.0) / 479001600.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zeta_classical_values() {
        // tail-corrected direct series: sum_{n<=N} n^-2 + 1/N - 1/(2N^2) + 1/(6N^3)
        let n = 100_000u64;
        let mut direct = 0.0;
        for k in (1..=n).rev() {
            direct += 1.0 / (k as f64 * k as f64);
        }
        let nf = n as f64;
        direct += 1.0 / nf - 0.5 / (nf * nf) + 1.0 / (6.0 * nf * nf * nf);
        let z2 = zeta(c(2.0, 0.0), &ctx()).unwrap();
        assert!((z2.re - direct).abs() < 1e-14);
        assert!((z2.re - PI * PI / 6.0).abs() < 1e-14);
        assert!(z2.im.abs() < 1e-15);
        let z0 = zeta(c(0.0, 0.0), &ctx()).unwrap();
        assert!((z0 - c(-0.5, 0.0)).norm() < 1e-14);
        assert!(zeta(c(1.0, 5e-7), &ctx()).is_err());
    }

    #[test]
    fn zeta_reference_values() {
        let (z, dz) = zeta_with_deriv(c(2.0, 3.0), &ctx()).unwrap();
        assert!((z - c(0.7980219851462757, -0.1137443080529385)).norm() < 1e-13);
        assert!((dz - c(0.1401295901174865, 0.0215146782791967)).norm() < 1e-13);
        let z = zeta(c(-0.5, 40.0), &ctx()).unwrap();
        assert!((z - c(0.1706070745578407, -5.816616681681107)).norm() < 1e-11);
        let rho = c(0.5, 14.1347251417346938);
        assert!(zeta(rho, &ctx()).unwrap().norm() < 1e-12);
        let d = zeta_deriv(rho, &ctx()).unwrap();
        assert!((d - c(0.7832965118670309, 0.1246998297481711)).norm() < 1e-12);
    }

    #[test]
    fn zeta_deriv_matches_finite_difference() {
        let s = c(2.0, 3.0);
        let h = 1e-5;
        let fd = (zeta(s + h, &ctx()).unwrap() - zeta(s - h, &ctx()).unwrap()) / (2.0 * h);
        assert!((fd - zeta_deriv(s, &ctx()).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn l_function_reference_values() {
        let l1 = l_function(c(1.0, 0.0), &chi(-4), &ctx()).unwrap();
        assert!((l1 - c(PI / 4.0, 0.0)).norm() < 1e-12);
        let v = l_function(c(0.25, 7.0), &chi(-3), &ctx()).unwrap();
        assert!((v - c(0.3433179995894499, -1.3349451954774231)).norm() < 1e-12);
        let (l, dl) = l_with_deriv(c(0.3, 20.0), &chi(-4), &ctx()).unwrap();
        assert!((l - c(3.750328069984207, -0.564051233114215)).norm() < 1e-11);
        assert!((dl - c(-5.562061834053685, 1.235042647844098)).norm() < 1e-11);
        for g in [6.0209489046975966549, 10.243770304166554552] {
            assert!(l_function(c(0.5, g), &chi(-4), &ctx()).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn l_function_matches_dirichlet_series_at_three() {
        for d in [-3, -4, 5, 8, -7, 12] {
            let ch = chi(d);
            let mut direct = 0.0;
            for n in (1..=200_000u64).rev() {
                direct += ch.value(n) as f64 / (n as f64).powi(3);
            }
            let v = l_function(c(3.0, 0.0), &ch, &ctx()).unwrap();
            assert!((v.re - direct).abs() < 1e-12, "d={d}");
            assert!(v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn functional_equation_grid() {
        let sigmas = [-0.5, 0.0, 0.25, 0.5, 0.75, 1.5];
        let ts = [1.0, 5.0, 14.0, 50.0];
        for d in [-3, -4, 5, 8, -8, 13] {
            let ch = chi(d);
            let eps = ch.root_number().unwrap();
            let delta = ch.parity().delta();
            for &sigma in &sigmas {
                for &t in &ts {
                    let s = c(sigma, t);
                    let lhs = l_function(s, &ch, &ctx()).unwrap();
                    let rhs = eps * conductor_delta_ratio(s, delta, ch.modulus()).unwrap()
                        * l_function(c(1.0, 0.0) - s, &ch, &ctx()).unwrap();
                    assert!((lhs - rhs).norm() < 1e-8, "d={d} s={s} {lhs} {rhs}");
                }
            }
        }
        for &sigma in &sigmas {
            for &t in &ts {
                let s = c(sigma, t);
                let lhs = zeta(s, &ctx()).unwrap();
                let rhs = delta_ratio(s, 0).unwrap() * zeta(c(1.0, 0.0) - s, &ctx()).unwrap();
                assert!((lhs - rhs).norm() < 1e-8, "s={s}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        let ch = chi(-3);
        for _ in 0..20 {
            let s = c(rng.random_range(-1.0..2.0), rng.random_range(-100.0..100.0));
            if (s - 1.0).norm() < 0.1 {
                continue;
            }
            let dz = zeta_deriv(s, &ctx()).unwrap();
            let fd = (zeta(s + h, &ctx()).unwrap() - zeta(s - h, &ctx()).unwrap()) / (2.0 * h);
            assert!((dz - fd).norm() <= 1e-6 * dz.norm().max(1.0), "zeta' at {s}");
            let dl = l_deriv(s, &ch, &ctx()).unwrap();
            let fd = (l_function(s + h, &ch, &ctx()).unwrap() - l_function(s - h, &ch, &ctx()).unwrap())
                / (2.0 * h);
            assert!((dl - fd).norm() <= 1e-6 * dl.norm().max(1.0), "L' at {s}");
        }
    }

    #[test]
    fn function_id_round_trip() {
        for id in [FunctionId::Zeta, FunctionId::Dirichlet(chi(-3)), FunctionId::Dirichlet(chi(12))] {
            assert_eq!(id.to_string().parse::<FunctionId>().unwrap(), id);
        }
        assert_eq!("L:-4".parse::<FunctionId>().unwrap(), FunctionId::Dirichlet(chi(-4)));
        assert!("L(d=6)".parse::<FunctionId>().is_err());
        assert!("eta".parse::<FunctionId>().is_err());
    }

    #[test]
    fn hardy_z_is_real_rotation() {
        let src = FunctionId::Dirichlet(chi(-4));
        for t in [3.0, 17.5, 123.4] {
            let v = src.eval(c(0.5, t), &ctx()).unwrap();
            let rot = Complex64::from_polar(1.0, hardy_theta(&src, t)) * v;
            assert!(rot.im.abs() < 1e-10 * rot.norm().max(1.0), "t={t}");
        }
        let z = FunctionId::Zeta;
        assert!(hardy_z(&z, 14.0, &ctx()).unwrap() * hardy_z(&z, 14.3, &ctx()).unwrap() < 0.0);
    }
}
