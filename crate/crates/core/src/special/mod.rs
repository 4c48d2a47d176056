//! Complex-analytic kernel: zeta, Dirichlet L-functions and their derivatives,
//! gamma ratios, the finite Euler product `P(s)`, Bessel `J0`, Barnes `G` and
//! the arithmetic factor `alpha(r)`.
//!
//! Everything is evaluated in `f64`. Zeta and L use Euler–Maclaurin summation
//! with a cutoff proportional to `|Im s|`; derivatives come from the
//! differentiated series.

mod barnes;
mod bessel;
mod euler;
mod gamma;
mod zeta;

pub use barnes::{alpha_r, barnes_g, hko_constant, AlphaValue, HkoValue};
pub use bessel::{bessel_j0, bessel_j0_asymptotic, bessel_j0_series};
pub use euler::{p_product, FiniteEulerProduct};
pub use gamma::{conductor_delta_ratio, delta_ratio, gamma, ln_gamma, rgamma};
pub(crate) use zeta::bernoulli_ratios;
pub use zeta::{
    hardy_theta, hardy_z, hurwitz_zeta, l_deriv, l_function, l_with_deriv, zeta, zeta_deriv,
    zeta_with_deriv, FunctionId,
};

use crate::{Error, Result};

/// Digits reachable in double precision; requests above this are clamped.
pub const HARDWARE_DIGITS: u32 = 16;

/// Evaluation knobs shared by the zeta and L kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalContext {
    precision: u32,
    cutoff_base: usize,
    cutoff_scale: f64,
    bernoulli_depth: usize,
}

impl Default for EvalContext {
    fn default() -> Self {
        Self {
            precision: 30,
            cutoff_base: 24,
            cutoff_scale: 0.5,
            bernoulli_depth: 30,
        }
    }
}

impl EvalContext {
    pub fn new(precision: u32, cutoff_base: usize, cutoff_scale: f64, bernoulli_depth: usize) -> Result<Self> {
        if precision < 15 {
            return Err(Error::InvalidParameter(format!(
                "precision must be at least 15 digits, got {precision}"
            )));
        }
        if cutoff_base < 4 || !(cutoff_scale > 0.0) || cutoff_scale.is_infinite() {
            return Err(Error::InvalidParameter(
                "cutoff base must be >= 4 and the scale positive".into(),
            ));
        }
        if !(2..=zeta::MAX_BERNOULLI).contains(&bernoulli_depth) {
            return Err(Error::InvalidParameter(format!(
                "Bernoulli depth must lie in [2, {}]",
                zeta::MAX_BERNOULLI
            )));
        }
        Ok(Self {
            precision,
            cutoff_base,
            cutoff_scale,
            bernoulli_depth,
        })
    }

    /// Same context with a different cutoff scale.
    pub fn with_cutoff_scale(self, scale: f64) -> Result<Self> {
        Self::new(self.precision, self.cutoff_base, scale, self.bernoulli_depth)
    }

    pub fn with_precision(self, precision: u32) -> Result<Self> {
        Self::new(precision, self.cutoff_base, self.cutoff_scale, self.bernoulli_depth)
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Digits actually targeted.
    pub fn effective_digits(&self) -> u32 {
        self.precision.min(HARDWARE_DIGITS)
    }

    pub fn tolerance(&self) -> f64 {
        10f64.powi(-(self.effective_digits() as i32))
    }

    pub fn cutoff_base(&self) -> usize {
        self.cutoff_base
    }

    pub fn cutoff_scale(&self) -> f64 {
        self.cutoff_scale
    }

    pub fn bernoulli_depth(&self) -> usize {
        self.bernoulli_depth
    }

    /// Euler–Maclaurin cutoff for height `t`.
    pub fn cutoff(&self, t: f64) -> usize {
        self.cutoff_base + (self.cutoff_scale * t.abs()).ceil() as usize
    }
}
