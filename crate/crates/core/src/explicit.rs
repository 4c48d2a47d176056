//! The explicit formula `S_f(x) ~ 2 Re sum_{0 < gamma < T} c_rho x^{rho/k}`
//! with `c_rho = L(rho/k, chi) Z_f(rho) / rho`, its error bookkeeping, and
//! two independent checks: Perron's integral and the window variance of
//! bands of zeros.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::kfree::{StepSeries, SummandSpec};
use crate::numeric::{fit_line, gauss_legendre, nnls, CompensatedComplex, CompensatedSum, LineFit};
use crate::special::{bernoulli_ratios, l_function, zeta, EvalContext, FiniteEulerProduct, FunctionId};
use crate::zeros::ZeroCatalog;
use crate::{Error, Result};

/// Derivatives smaller than this are treated as a possible multiple zero.
pub const SIMPLICITY_THRESHOLD: f64 = 1e-12;

/// The function whose zeros carry the explicit formula: zeta for even `k`,
/// `L(s, chi)` for odd `k`.
pub fn required_function(spec: &SummandSpec) -> FunctionId {
    if spec.k() % 2 == 0 {
        FunctionId::Zeta
    } else {
        FunctionId::Dirichlet(spec.character().clone())
    }
}

/// `Z_f(rho)` given the derivative `d` of the zero-carrying function at `rho`.
pub fn zf_value(spec: &SummandSpec, rho: Complex64, deriv: Option<Complex64>) -> Result<Complex64> {
    let d = deriv.ok_or(Error::MissingDerivative(rho.im))?;
    if d.norm() < SIMPLICITY_THRESHOLD {
        return Err(Error::MultipleZero {
            gamma: rho.im,
            magnitude: d.norm(),
        });
    }
    let p = FiniteEulerProduct::new(spec.character().modulus())?;
    let k = spec.k() as f64;
    let even = spec.k() % 2 == 0;
    Ok(match (even, spec.is_modified()) {
        (true, false) => p.eval(rho)? / d,
        (false, false) => d.inv(),
        (true, true) => p.eval(rho / k)? / d,
        (false, true) => p.eval(rho / k)? / (d * p.eval(rho)?),
    })
}

/// One explicit-formula coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidueTerm {
    pub gamma: f64,
    #[serde(serialize_with = "serialize_complex")]
    pub coeff: Complex64,
}

fn serialize_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// `c_rho` for every ordinate `0 < gamma < T` of the catalog.
pub fn residue_coefficients(
    spec: &SummandSpec,
    catalog: &ZeroCatalog,
    t: f64,
    ctx: &EvalContext,
) -> Result<Vec<ResidueTerm>> {
    let needed = required_function(spec);
    if *catalog.function() != needed {
        return Err(Error::CatalogMismatch(format!(
            "k = {} needs zeros of {needed}, catalog holds {}",
            spec.k(),
            catalog.function()
        )));
    }
    if t > catalog.t_max() {
        return Err(Error::OutOfRange {
            value: t,
            range: format!("(0, {}] covered by the catalog", catalog.t_max()),
        });
    }
    let k = spec.k() as f64;
    let records: Vec<_> = catalog.records().iter().filter(|r| r.gamma < t).copied().collect();
    records
        .par_iter()
        .map(|r| {
            let rho = r.rho();
            let zf = zf_value(spec, rho, r.deriv)?;
            let l = l_function(rho / k, spec.character(), ctx)?;
            Ok(ResidueTerm {
                gamma: r.gamma,
                coeff: l * zf / rho,
            })
        })
        .collect()
}

/// Least-squares fit of `log |c_rho|` against `log gamma`; the slope is to
/// be compared with `-(1/2 + 1/(2k))`.
pub fn coefficient_decay_fit(terms: &[ResidueTerm]) -> Option<LineFit> {
    let xs: Vec<f64> = terms.iter().map(|t| t.gamma.ln()).collect();
    let ys: Vec<f64> = terms.iter().map(|t| t.coeff.norm().ln()).collect();
    fit_line(&xs, &ys)
}

/// `max |c_rho| gamma^{1/2 + 1/(2k)}` over the terms.
pub fn coefficient_decay_constant(terms: &[ResidueTerm], k: u32) -> f64 {
    let e = 0.5 + 0.5 / k as f64;
    terms
        .iter()
        .map(|t| t.coeff.norm() * t.gamma.powf(e))
        .fold(0.0, f64::max)
}

/// `2 sum Re(c_rho x^{rho/k})`, summed with compensation in term order.
pub fn explicit_sum(terms: &[ResidueTerm], x: f64, k: u32) -> f64 {
    let lx = x.ln();
    let kf = k as f64;
    let parts: Vec<f64> = terms
        .par_iter()
        .map(|t| {
            let e = Complex64::new(0.5, t.gamma) * (lx / kf);
            2.0 * (t.coeff * e.exp()).re
        })
        .collect();
    parts.into_iter().collect::<CompensatedSum>().value()
}

/// The same sum taken over `rho` and `conj(rho)` separately, without
/// folding into real parts. Its imaginary part measures the pairing error.
pub fn explicit_sum_unfolded(terms: &[ResidueTerm], x: f64, k: u32) -> Complex64 {
    let lx = x.ln();
    let kf = k as f64;
    let mut acc = CompensatedComplex::new();
    for t in terms {
        let rho = Complex64::new(0.5, t.gamma);
        acc.add(t.coeff * (rho * (lx / kf)).exp());
        acc.add(t.coeff.conj() * (rho.conj() * (lx / kf)).exp());
    }
    acc.value()
}

/// `S_f(x)` minus the explicit sum.
pub fn residual(series: &StepSeries, terms: &[ResidueTerm], x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return Err(Error::OutOfRange {
            value: x,
            range: "(1, limit]".into(),
        });
    }
    let s = series.value_at(x)?;
    Ok(s as f64 - explicit_sum(terms, x, series.k()))
}

/// Names of the five envelope terms, in order.
pub const ENVELOPE_TERMS: [&str; 5] = ["constant", "perron", "vertical", "horizontal", "tail"];

/// Fitted constants of the error envelope
/// `c1 + c2 x log x/T + c3 x/(T^{1-eps} log x) + c4 x^eps T^eps + c5 x^{1/2k} (log T)^{1/2}/T^eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorModel {
    pub k: u32,
    pub epsilon: f64,
    pub constants: [f64; 5],
}

impl ErrorModel {
    pub fn new(k: u32, epsilon: f64, constants: [f64; 5]) -> Result<Self> {
        if k < 2 || !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("bad envelope parameters k={k}, eps={epsilon}")));
        }
        if constants.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter("envelope constants must be non-negative".into()));
        }
        Ok(Self { k, epsilon, constants })
    }

    /// Default `eps = 1/(4k)`.
    pub fn default_epsilon(k: u32) -> f64 {
        0.25 / k as f64
    }

    /// Fit non-negative constants to `(x, T, |residual|)` samples, then scale
    /// the whole envelope so it covers every calibration sample. Constants
    /// that come out zero are floored to a tiny positive value.
    pub fn fit(k: u32, epsilon: f64, samples: &[(f64, f64, f64)]) -> Result<Self> {
        if samples.len() < ENVELOPE_TERMS.len() {
            return Err(Error::InsufficientData(format!(
                "need at least {} calibration samples, got {}",
                ENVELOPE_TERMS.len(),
                samples.len()
            )));
        }
        let rows: Vec<Vec<f64>> = samples
            .iter()
            .map(|&(x, t, _)| envelope_terms(k, epsilon, x, t).to_vec())
            .collect();
        let b: Vec<f64> = samples.iter().map(|s| s.2.abs()).collect();
        let sol = nnls(&rows, &b);
        let scale_ref = sol.iter().copied().fold(0.0, f64::max).max(1e-6);
        let mut constants = [0.0; 5];
        for (c, v) in constants.iter_mut().zip(&sol) {
            *c = v.max(1e-9 * scale_ref);
        }
        let mut model = Self::new(k, epsilon, constants)?;
        let cover = samples
            .iter()
            .map(|&(x, t, r)| r.abs() / error_envelope(&model, x, t))
            .fold(1.0, f64::max);
        for c in model.constants.iter_mut() {
            *c *= cover;
        }
        Ok(model)
    }

    /// Index into [`ENVELOPE_TERMS`] of the largest contribution.
    pub fn dominant_term(&self, x: f64, t: f64) -> usize {
        let terms = envelope_terms(self.k, self.epsilon, x, t);
        (0..5)
            .max_by(|&a, &b| (self.constants[a] * terms[a]).total_cmp(&(self.constants[b] * terms[b])))
            .unwrap()
    }
}

/// The five unscaled envelope terms at `(x, T)`.
pub fn envelope_terms(k: u32, eps: f64, x: f64, t: f64) -> [f64; 5] {
    let lx = x.ln();
    [
        1.0,
        x * lx / t,
        x / (t.powf(1.0 - eps) * lx),
        x.powf(eps) * t.powf(eps),
        x.powf(0.5 / k as f64) * t.ln().sqrt() / t.powf(eps),
    ]
}

pub fn error_envelope(model: &ErrorModel, x: f64, t: f64) -> f64 {
    envelope_terms(model.k, model.epsilon, x, t)
        .iter()
        .zip(&model.constants)
        .map(|(a, c)| a * c)
        .sum()
}

/// Generating Dirichlet series of the summand at `s`:
/// `L(s) P(ks)/zeta(ks)` or `L(s)/L(ks)` for `mu^(k) chi`, and
/// `L(s) P(s)/zeta(ks)` or `L(s) P(s)/(L(ks) P(ks))` for `mu^(k) g_chi`.
pub fn generating_series(spec: &SummandSpec, s: Complex64, ctx: &EvalContext) -> Result<Complex64> {
    let chi = spec.character();
    let p = FiniteEulerProduct::new(chi.modulus())?;
    let k = spec.k() as f64;
    let ks = s * k;
    let l = l_function(s, chi, ctx)?;
    Ok(match (spec.k() % 2 == 0, spec.is_modified()) {
        (true, false) => l * p.eval(ks)? / zeta(ks, ctx)?,
        (false, false) => l / l_function(ks, chi, ctx)?,
        (true, true) => l * p.eval(s)? / zeta(ks, ctx)?,
        (false, true) => l * p.eval(s)? / (l_function(ks, chi, ctx)? * p.eval(ks)?),
    })
}

/// Result of a truncated Perron integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerronValue {
    pub value: f64,
    pub sigma0: f64,
    pub t: f64,
    /// Difference between the rule used and the same rule on half the nodes
    /// per panel, a rough quadrature error indicator.
    pub quadrature_error: f64,
    pub nodes: usize,
}

/// `sum_{n >= 0} (w + n)^{-s}` minus its head, i.e. the Euler–Maclaurin tail
/// `w^{1-s}/(s-1) + w^{-s}/2 + sum_j B_2j/(2j)! s(s+1)..(s+2j-2) w^{-s-2j+1}`.
fn em_tail(s: Complex64, w: f64, ctx: &EvalContext) -> Result<Complex64> {
    let lw = w.ln();
    let w_s = (-s * lw).exp();
    let mut value = w_s * w / (s - 1.0) + w_s * 0.5;
    let mut p = s;
    let mut pow = w_s / w;
    let tol = ctx.tolerance() * 1e-2;
    for (j, &b) in bernoulli_ratios().iter().take(ctx.bernoulli_depth()).enumerate() {
        if j > 0 {
            p *= (s + (2 * j - 1) as f64) * (s + (2 * j) as f64);
            pow /= w * w;
        }
        let term = p * pow * b;
        value += term;
        if term.norm() <= tol * value.norm().max(1.0) {
            return Ok(value);
        }
    }
    Err(Error::PrecisionUnreachable(format!("Euler-Maclaurin tail at s = {s}, w = {w}")))
}

/// Running head sums `sum_m c_m e^{-s lambda_m}` along `s = sigma + i t_j`
/// for an arithmetic progression `t_j`, advanced by one rotation per term.
struct HeadSums {
    coeffs: Vec<f64>,
    logs: Vec<f64>,
    rotations: Vec<Complex64>,
    state: Vec<Complex64>,
    active: usize,
}

impl HeadSums {
    fn new(coeffs: Vec<f64>, logs: Vec<f64>, step: f64) -> Self {
        let rotations = logs.iter().map(|&l| Complex64::from_polar(1.0, -step * l)).collect();
        let state = vec![Complex64::new(0.0, 0.0); coeffs.len()];
        Self {
            coeffs,
            logs,
            rotations,
            state,
            active: 0,
        }
    }

    fn exact(&self, m: usize, s: Complex64) -> Complex64 {
        (-s * self.logs[m]).exp() * self.coeffs[m]
    }

    /// Make the first `n` terms live at `s`, recomputing every term exactly
    /// when `reanchor` is set.
    fn activate(&mut self, n: usize, s: Complex64, reanchor: bool) {
        let n = n.min(self.coeffs.len());
        let from = if reanchor { 0 } else { self.active };
        for m in from..n.max(self.active) {
            self.state[m] = self.exact(m, s);
        }
        self.active = self.active.max(n);
    }

    fn sum_and_advance(&mut self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (st, rot) in self.state[..self.active].iter_mut().zip(&self.rotations) {
            acc += *st;
            *st *= rot;
        }
        acc
    }
}

/// Evaluates the generating series at `sigma + i(t0 + j h)`, j = 0, 1, ...
///
/// `L(s)` is split as a head `sum_{m <= qN} chi(m) m^{-s}` plus the
/// Hurwitz tails `q^{-s} sum_a chi(a) tail(s, N + a/q)`; the denominator is
/// treated the same way at `ks`. `N` only grows along the line.
struct VerticalLine<'a> {
    spec: &'a SummandSpec,
    ctx: &'a EvalContext,
    sigma: f64,
    t0: f64,
    step: f64,
    j: usize,
    l_head: HeadSums,
    l_blocks: u64,
    z_head: HeadSums,
    z_blocks: u64,
    max_l_blocks: u64,
    max_z_blocks: u64,
    primes: FiniteEulerProduct,
}

const REANCHOR_EVERY: usize = 256;

impl<'a> VerticalLine<'a> {
    fn new(spec: &'a SummandSpec, ctx: &'a EvalContext, sigma: f64, t0: f64, step: f64, t_max: f64) -> Result<Self> {
        let chi = spec.character();
        let q = chi.modulus();
        let k = spec.k() as f64;
        let even = spec.k() % 2 == 0;
        let max_l_blocks = ctx.cutoff(t_max + t0) as u64;
        let max_z_blocks = ctx.cutoff(k * (t_max + t0)) as u64;
        let (mut lc, mut ll) = (Vec::new(), Vec::new());
        for m in 1..=q * max_l_blocks {
            let c = chi.value(m);
            if c != 0 {
                lc.push(c as f64);
                ll.push((m as f64).ln());
            }
        }
        // zeta(ks) has period 1 in the block decomposition
        let z_period = if even { 1 } else { q };
        let (mut zc, mut zl) = (Vec::new(), Vec::new());
        for m in 1..=z_period * max_z_blocks {
            let c = if even { 1 } else { chi.value(m) };
            if c != 0 {
                zc.push(c as f64);
                zl.push(k * (m as f64).ln());
            }
        }
        Ok(Self {
            spec,
            ctx,
            sigma,
            t0,
            step,
            j: 0,
            l_head: HeadSums::new(lc, ll, step),
            l_blocks: 0,
            z_head: HeadSums::new(zc, zl, step),
            z_blocks: 0,
            max_l_blocks,
            max_z_blocks,
            primes: FiniteEulerProduct::new(q)?,
        })
    }

    /// Head plus Hurwitz tails for a character-weighted series at `s` with
    /// `blocks` full periods in the head.
    fn tails(&self, s: Complex64, period: u64, blocks: u64, weighted: bool) -> Result<Complex64> {
        let chi = self.spec.character();
        let pf = period as f64;
        let mut tail = CompensatedComplex::new();
        for a in 1..=period {
            let c = if weighted { chi.value(a) } else { 1 };
            if c != 0 {
                tail.add(em_tail(s, blocks as f64 + a as f64 / pf, self.ctx)? * c as f64);
            }
        }
        Ok((-s * pf.ln()).exp() * tail.value())
    }

    fn next(&mut self) -> Result<(f64, Complex64)> {
        let t = self.t0 + self.j as f64 * self.step;
        let s = Complex64::new(self.sigma, t);
        let reanchor = self.j % REANCHOR_EVERY == 0;
        self.j += 1;
        let q = self.spec.character().modulus();
        let k = self.spec.k() as f64;
        let even = self.spec.k() % 2 == 0;
        let ks = s * k;

        self.l_blocks = self.l_blocks.max(self.ctx.cutoff(t) as u64).min(self.max_l_blocks);
        let edge = ((q * self.l_blocks) as f64 + 0.5).ln();
        let n = self.l_head.logs.partition_point(|&l| l < edge);
        self.l_head.activate(n, s, reanchor);
        let l = self.l_head.sum_and_advance() + self.tails(s, q, self.l_blocks, true)?;

        let z_period = if even { 1 } else { q };
        self.z_blocks = self.z_blocks.max(self.ctx.cutoff(k * t) as u64).min(self.max_z_blocks);
        let edge = k * ((z_period * self.z_blocks) as f64 + 0.5).ln();
        let n = self.z_head.logs.partition_point(|&l| l < edge);
        self.z_head.activate(n, s, reanchor);
        let den = self.z_head.sum_and_advance() + self.tails(ks, z_period, self.z_blocks, !even)?;

        let f = match (even, self.spec.is_modified()) {
            (true, false) => l * self.primes.eval(ks)? / den,
            (false, false) => l / den,
            (true, true) => l * self.primes.eval(s)? / den,
            (false, true) => l * self.primes.eval(s)? / (den * self.primes.eval(ks)?),
        };
        Ok((t, f))
    }
}

/// Panel width and node count of the Perron rule.
const PERRON_PANEL: f64 = 0.25;
const PERRON_ORDER: usize = 12;

/// `(1/2 pi i) int_{sigma0 - iT}^{sigma0 + iT} F(s) x^s / s ds` for the
/// generating series `F` of the summand, folded onto `[0, T]` by conjugate
/// symmetry and integrated with composite Gauss-Legendre panels. `sigma0`
/// defaults to `1 + 1/log x`.
pub fn perron_integral(
    spec: &SummandSpec,
    x: f64,
    t: f64,
    sigma0: Option<f64>,
    ctx: &EvalContext,
) -> Result<PerronValue> {
    if !(x > 1.0) || (x - x.round()).abs() < 1e-9 {
        return Err(Error::InvalidParameter(format!("x must be a non-integer above 1, got {x}")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {t}")));
    }
    let lx = x.ln();
    let sigma0 = sigma0.unwrap_or(1.0 + 1.0 / lx);
    if !(sigma0 > 1.0) {
        return Err(Error::InvalidParameter(format!("sigma0 must exceed 1, got {sigma0}")));
    }
    let n_panels = (t / PERRON_PANEL).ceil() as usize;
    let h = t / n_panels as f64;
    let (nodes, weights) = gauss_legendre(PERRON_ORDER);
    let (half_nodes, half_weights) = gauss_legendre(PERRON_ORDER / 2);
    let xs = x.powf(sigma0);
    let integrate = |nodes: &[f64], weights: &[f64]| -> Result<f64> {
        let per_node: Vec<Result<f64>> = nodes
            .par_iter()
            .zip(weights)
            .map(|(&u, &w)| {
                let mut line = VerticalLine::new(spec, ctx, sigma0, 0.5 * h * (u + 1.0), h, t)?;
                let mut acc = CompensatedSum::new();
                for _ in 0..n_panels {
                    let (tt, f) = line.next()?;
                    let s = Complex64::new(sigma0, tt);
                    acc.add((f * Complex64::from_polar(xs, tt * lx) / s).re);
                }
                Ok(0.5 * h * w * acc.value())
            })
            .collect();
        let mut total = CompensatedSum::new();
        for v in per_node {
            total.add(v?);
        }
        Ok(total.value() / std::f64::consts::PI)
    };
    let value = integrate(&nodes, &weights)?;
    let coarse = integrate(&half_nodes, &half_weights)?;
    Ok(PerronValue {
        value,
        sigma0,
        t,
        quadrature_error: (value - coarse).abs(),
        nodes: n_panels * PERRON_ORDER,
    })
}

/// `int_Z^{Z+1} |sum_{T_lo < gamma <= T_hi} c_rho e^{i y gamma/k}|^2 dy` by
/// composite Gauss-Legendre quadrature fine enough for the top frequency.
pub fn window_variance(terms: &[ResidueTerm], t_lo: f64, t_hi: f64, z: f64, k: u32) -> Result<f64> {
    if !(t_lo < t_hi) {
        return Err(Error::InvalidParameter(format!("empty height band ({t_lo}, {t_hi}]")));
    }
    let band: Vec<&ResidueTerm> = terms.iter().filter(|t| t.gamma > t_lo && t.gamma <= t_hi).collect();
    if band.is_empty() {
        return Ok(0.0);
    }
    let kf = k as f64;
    let top = band.iter().map(|t| t.gamma).fold(0.0, f64::max) / kf;
    let panels = (top / std::f64::consts::PI).ceil() as usize + 2;
    let (nodes, weights) = gauss_legendre(16);
    let h = 1.0 / panels as f64;
    let ys: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let a = z + p as f64 * h;
            nodes
                .iter()
                .zip(&weights)
                .map(move |(x, w)| (a + 0.5 * h * (x + 1.0), 0.5 * h * w))
                .collect::<Vec<_>>()
        })
        .collect();
    let values: Vec<f64> = ys
        .par_iter()
        .map(|&(y, w)| {
            let mut acc = CompensatedComplex::new();
            for t in &band {
                acc.add(t.coeff * Complex64::from_polar(1.0, y * t.gamma / kf));
            }
            w * acc.value().norm_sqr()
        })
        .collect();
    Ok(values.into_iter().collect::<CompensatedSum>().value().max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characters::DirichletCharacter;
    use crate::kfree::{cumulative_series, KFreeSieve};
    use crate::special::{l_deriv, p_product, zeta_deriv};
    use crate::zeros::{parse_zero_text, ZeroFileFormat, ZeroRecord, ZeroSource};

    fn spec(k: u32, d: i64, modified: bool) -> SummandSpec {
        SummandSpec::new(k, DirichletCharacter::from_discriminant(d).unwrap(), modified).unwrap()
    }

    fn rho1() -> Complex64 {
        Complex64::new(0.5, 14.134725141734694)
    }

    #[test]
    fn zf_case_table() {
        let d = Complex64::new(0.78, 0.12);
        let rho = rho1();
        let v = zf_value(&spec(2, -3, false), rho, Some(d)).unwrap();
        assert!((v - p_product(3, rho).unwrap() / d).norm() < 1e-15);
        let m = zf_value(&spec(2, -3, true), rho, Some(d)).unwrap();
        let ratio = m / v;
        let expected = p_product(3, rho / 2.0).unwrap() / p_product(3, rho).unwrap();
        assert!((ratio - expected).norm() < 1e-14);
        let odd = zf_value(&spec(3, -4, false), rho, Some(d)).unwrap();
        assert!((odd - d.inv()).norm() < 1e-15);
        let oddm = zf_value(&spec(3, -4, true), rho, Some(d)).unwrap();
        let expected = p_product(4, rho / 3.0).unwrap() / (d * p_product(4, rho).unwrap());
        assert!((oddm - expected).norm() < 1e-15);
        assert!(matches!(zf_value(&spec(2, -3, false), rho, None), Err(Error::MissingDerivative(_))));
        assert!(matches!(
            zf_value(&spec(2, -3, false), rho, Some(Complex64::new(1e-13, 0.0))),
            Err(Error::MultipleZero { .. })
        ));
    }

    fn enriched_zeta(t: f64) -> ZeroCatalog {
        let text = include_str!("../data/zeta_zeros.txt");
        let c = parse_zero_text(text, "zeros", ZeroFileFormat::Plain, FunctionId::Zeta).unwrap();
        c.truncated(t).unwrap().enrich(&EvalContext::default()).unwrap()
    }

    #[test]
    fn first_coefficient_matches_composition() {
        let ctx = EvalContext::default();
        let cat = enriched_zeta(30.0);
        let s = spec(2, -3, false);
        let terms = residue_coefficients(&s, &cat, 30.0, &ctx).unwrap();
        assert_eq!(terms.len(), cat.len());
        let rho = rho1();
        let expected = l_function(rho / 2.0, s.character(), &ctx).unwrap() * p_product(3, rho).unwrap()
            / (zeta_deriv(rho, &ctx).unwrap() * rho);
        assert!((terms[0].coeff - expected).norm() < 1e-12 * expected.norm());
        // k odd needs the L catalog
        assert!(matches!(
            residue_coefficients(&spec(3, -3, false), &cat, 30.0, &ctx),
            Err(Error::CatalogMismatch(_))
        ));
        let empty = ZeroCatalog::new(FunctionId::Zeta, vec![], 10.0).unwrap();
        assert!(residue_coefficients(&s, &empty, 10.0, &ctx).unwrap().is_empty());
    }

    #[test]
    fn modified_terms_differ_by_p_ratio() {
        let ctx = EvalContext::default();
        let cat = enriched_zeta(60.0);
        let a = residue_coefficients(&spec(2, 5, false), &cat, 60.0, &ctx).unwrap();
        let b = residue_coefficients(&spec(2, 5, true), &cat, 60.0, &ctx).unwrap();
        for (u, m) in a.iter().zip(&b) {
            let rho = Complex64::new(0.5, u.gamma);
            let ratio = p_product(5, rho / 2.0).unwrap() / p_product(5, rho).unwrap();
            assert!((m.coeff / u.coeff - ratio).norm() < 1e-12);
        }
    }

    #[test]
    fn odd_k_uses_l_zeros() {
        let ctx = EvalContext::default();
        let chi = DirichletCharacter::from_discriminant(-4).unwrap();
        let g = 6.0209489046975966549;
        let d = l_deriv(Complex64::new(0.5, g), &chi, &ctx).unwrap();
        let rec = ZeroRecord {
            gamma: g,
            deriv: Some(d),
            source: ZeroSource::Computed,
        };
        let cat = ZeroCatalog::new(FunctionId::Dirichlet(chi.clone()), vec![rec], 7.0).unwrap();
        let terms = residue_coefficients(&spec(3, -4, false), &cat, 7.0, &ctx).unwrap();
        let rho = Complex64::new(0.5, g);
        let expected = l_function(rho / 3.0, &chi, &ctx).unwrap() / (d * rho);
        assert!((terms[0].coeff - expected).norm() < 1e-14);
    }

    #[test]
    fn explicit_sum_basics() {
        assert_eq!(explicit_sum(&[], 10.0, 2), 0.0);
        let one = [ResidueTerm {
            gamma: 7.3,
            coeff: Complex64::new(1.0, 0.0),
        }];
        assert_eq!(explicit_sum(&one, 1.0, 2), 2.0);
        let terms: Vec<ResidueTerm> = (1..200)
            .map(|i| ResidueTerm {
                gamma: 10.0 + i as f64 * 1.37,
                coeff: Complex64::new((i as f64).sin(), (i as f64 * 0.7).cos()) / i as f64,
            })
            .collect();
        let folded = explicit_sum(&terms, 1234.5, 2);
        let unfolded = explicit_sum_unfolded(&terms, 1234.5, 2);
        assert!(unfolded.im.abs() < 1e-10);
        assert!((unfolded.re - folded).abs() < 1e-12);
        let mut rev = terms.clone();
        rev.reverse();
        assert!((explicit_sum(&rev, 1234.5, 2) - folded).abs() < 1e-12);
    }

    #[test]
    fn residual_without_zeros_is_the_sum() {
        let sieve = KFreeSieve::new(2, 2000).unwrap();
        let s = spec(2, -3, false);
        let series = cumulative_series(&s, 2000, &sieve).unwrap();
        assert_eq!(residual(&series, &[], 1000.5).unwrap(), series.value_at(1000.5).unwrap() as f64);
        assert!(residual(&series, &[], 3000.0).is_err());
    }

    #[test]
    fn envelope_arithmetic() {
        let zero = ErrorModel::new(2, 0.125, [0.0; 5]).unwrap();
        assert_eq!(error_envelope(&zero, 1e4, 100.0), 0.0);
        let m = ErrorModel::new(2, 0.125, [1.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let mut prev = f64::INFINITY;
        for t in [10.0, 20.0, 50.0, 100.0, 1000.0] {
            let v = error_envelope(&m, 1e4, t);
            assert!(v < prev);
            prev = v;
        }
        let all = ErrorModel::new(2, 0.125, [1.0; 5]).unwrap();
        assert_eq!(ENVELOPE_TERMS[all.dominant_term(1e6, 1e2)], "perron");
        assert_eq!(ENVELOPE_TERMS[all.dominant_term(1e2, 1e3)], "horizontal");
        assert!(ErrorModel::new(2, 0.125, [-1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn fitted_envelope_covers_calibration() {
        let samples: Vec<(f64, f64, f64)> = (0..30)
            .map(|i| {
                let x = 100.0 * 1.2f64.powi(i);
                let t = 100.0 + 10.0 * i as f64;
                (x, t, 0.5 + 0.3 * x.ln() + (i as f64).sin().abs())
            })
            .collect();
        let m = ErrorModel::fit(2, 0.125, &samples).unwrap();
        assert!(m.constants.iter().all(|&c| c > 0.0));
        for &(x, t, r) in &samples {
            assert!(error_envelope(&m, x, t) >= r * (1.0 - 1e-12));
        }
    }

    #[test]
    fn perron_single_term() {
        let ctx = EvalContext::default();
        let s = spec(2, -3, false);
        let v = perron_integral(&s, 1.5, 200.0, None, &ctx).unwrap();
        let bound = 1.0 + 1.5 * 1.5f64.ln() / 200.0;
        assert!((v.value - 1.0).abs() <= bound, "{}", v.value);
        assert!(perron_integral(&s, 3.0, 200.0, None, &ctx).is_err());
        assert!(perron_integral(&s, 3.5, 200.0, Some(0.9), &ctx).is_err());
    }

    #[test]
    fn vertical_line_matches_direct_evaluation() {
        let ctx = EvalContext::default();
        for (k, d, modified) in [(2, -3, false), (2, 5, true), (3, -4, false), (3, -3, true)] {
            let sp = spec(k, d, modified);
            let mut line = VerticalLine::new(&sp, &ctx, 1.2, 0.3, 0.7, 400.0).unwrap();
            for j in 0..570 {
                let (t, f) = line.next().unwrap();
                if j % 37 == 0 || j == 569 {
                    let g = generating_series(&sp, Complex64::new(1.2, t), &ctx).unwrap();
                    assert!((f - g).norm() < 1e-10 * g.norm().max(1.0), "k={k} t={t} {f} {g}");
                }
            }
        }
    }

    #[test]
    fn generating_series_matches_dirichlet_series() {
        let ctx = EvalContext::default();
        let sieve = KFreeSieve::new(2, 200_000).unwrap();
        for (k, modified) in [(2, false), (2, true), (3, false), (3, true)] {
            let sp = spec(k, -3, modified);
            let sieve = if k == 2 { sieve.clone() } else { KFreeSieve::new(3, 200_000).unwrap() };
            let s = Complex64::new(3.0, 1.5);
            let mut direct = CompensatedComplex::new();
            for n in 1..=200_000u64 {
                let f = sp.value(n, &sieve);
                if f != 0 {
                    direct.add((-s * (n as f64).ln()).exp() * f as f64);
                }
            }
            let g = generating_series(&sp, s, &ctx).unwrap();
            assert!((g - direct.value()).norm() < 1e-10, "k={k} modified={modified}");
        }
    }

    #[test]
    fn window_variance_matches_closed_form() {
        let terms: Vec<ResidueTerm> = (1..40)
            .map(|i| ResidueTerm {
                gamma: 12.0 + 2.9 * i as f64,
                coeff: Complex64::new(1.0 / i as f64, 0.3 / (i as f64).sqrt()),
            })
            .collect();
        let (lo, hi, z, k) = (20.0, 90.0, 5.0, 2u32);
        let band: Vec<&ResidueTerm> = terms.iter().filter(|t| t.gamma > lo && t.gamma <= hi).collect();
        // int_Z^{Z+1} e^{i y D} dy = e^{i Z D} (e^{i D} - 1) / (i D), and 1 for D = 0
        let mut exact = Complex64::new(0.0, 0.0);
        for a in &band {
            for b in &band {
                let dlt = (a.gamma - b.gamma) / k as f64;
                let int = if dlt == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, z * dlt) * (Complex64::from_polar(1.0, dlt) - 1.0)
                        / Complex64::new(0.0, dlt)
                };
                exact += a.coeff * b.coeff.conj() * int;
            }
        }
        let v = window_variance(&terms, lo, hi, z, k).unwrap();
        assert!((v - exact.re).abs() < 1e-12 * exact.re.max(1.0));
        assert_eq!(window_variance(&terms, 500.0, 600.0, 0.0, 2).unwrap(), 0.0);
        assert!(window_variance(&terms, 60.0, 50.0, 0.0, 2).is_err());
    }
}
