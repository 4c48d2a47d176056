use std::f64::consts::PI;

use num_complex::Complex64;

use crate::numeric::prime_factors;
use crate::{Error, Result};

/// `P(s) = prod_{p | q} (1 - p^{-s})^{-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteEulerProduct {
    modulus: u64,
    primes: Vec<u64>,
}

impl FiniteEulerProduct {
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::InvalidParameter("modulus must be positive".into()));
        }
        Ok(Self {
            modulus,
            primes: prime_factors(modulus),
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let mut out = Complex64::new(1.0, 0.0);
        for &p in &self.primes {
            let lp = (p as f64).ln();
            if s.re.abs() < 1e-9 {
                let k = s.im * lp / (2.0 * PI);
                if (k - k.round()).abs() * 2.0 * PI / lp < 1e-9 {
                    return Err(Error::PoleProximity(format!(
                        "P(s) has a pole at s = {}i (p = {p})",
                        2.0 * PI * k.round() / lp
                    )));
                }
            }
            out /= Complex64::new(1.0, 0.0) - (-s * lp).exp();
        }
        Ok(out)
    }

    /// `prod (1 - p^{-sigma0})^{-1}`, the bound for `|P(s)|` on `Re s >= sigma0`.
    pub fn bound(&self, sigma0: f64) -> f64 {
        self.primes
            .iter()
            .map(|&p| 1.0 / (1.0 - (p as f64).powf(-sigma0)))
            .product()
    }
}

/// `P(s)` for the modulus `q`.
pub fn p_product(q: u64, s: Complex64) -> Result<Complex64> {
    FiniteEulerProduct::new(q)?.eval(s)
}
