//! Real Dirichlet characters and the modified characters `g_chi`.
//!
//! Characters are built either from a fundamental discriminant through the
//! Kronecker symbol, or from an explicit table of values on `0..q`. They are
//! immutable once constructed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::numeric::{gcd, prime_factors, CompensatedComplex};
use crate::{Error, Result};

/// The Kronecker symbol `(a | n)`, defined for every pair of integers.
pub fn kronecker(a: i64, n: i64) -> i8 {
    if n == 0 {
        return if a == 1 || a == -1 { 1 } else { 0 };
    }
    let mut result: i8 = 1;
    let mut n = n;
    if n < 0 {
        n = -n;
        if a < 0 {
            result = -result;
        }
    }
    let twos = n.trailing_zeros();
    if twos > 0 {
        if a % 2 == 0 {
            return 0;
        }
        n >>= twos;
        if twos % 2 == 1 {
            let r = a.rem_euclid(8);
            if r == 3 || r == 5 {
                result = -result;
            }
        }
    }
    // Jacobi symbol for odd positive n
    let mut a = a.rem_euclid(n);
    let mut n = n;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            let r = n % 8;
            if r == 3 || r == 5 {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            result = -result;
        }
        a %= n;
    }
    if n == 1 {
        result
    } else {
        0
    }
}

fn is_squarefree(mut n: u64) -> bool {
    let mut p = 2;
    while p * p <= n {
        if n % (p * p) == 0 {
            return false;
        }
        if n % p == 0 {
            n /= p;
        }
        p += 1;
    }
    true
}

/// True when `d` is a fundamental discriminant other than 1.
pub fn is_fundamental_discriminant(d: i64) -> bool {
    if d == 0 || d == 1 {
        return false;
    }
    match d.rem_euclid(4) {
        1 => is_squarefree(d.unsigned_abs()),
        0 => {
            let m = d / 4;
            matches!(m.rem_euclid(4), 2 | 3) && is_squarefree(m.unsigned_abs())
        }
        _ => false,
    }
}

/// Fundamental discriminants `d` with `|d| = q`, i.e. the real primitive
/// characters of modulus `q`.
pub fn discriminants_for_modulus(q: u64) -> Vec<i64> {
    let q = q as i64;
    [-q, q]
        .into_iter()
        .filter(|&d| is_fundamental_discriminant(d))
        .collect()
}

/// Parity of a character: `delta = 0` for even characters, `1` for odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn delta(self) -> u8 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

/// A real (quadratic) non-principal Dirichlet character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirichletCharacter {
    modulus: u64,
    values: Vec<i8>,
    parity: Parity,
    primitive: bool,
    discriminant: Option<i64>,
}

impl DirichletCharacter {
    /// The character `n -> (d | n)` attached to a fundamental discriminant.
    pub fn from_discriminant(d: i64) -> Result<Self> {
        if !is_fundamental_discriminant(d) {
            return Err(Error::InvalidCharacter(format!(
                "{d} is not a fundamental discriminant"
            )));
        }
        let q = d.unsigned_abs();
        let values = (0..q).map(|n| kronecker(d, n as i64)).collect();
        let mut chi = Self::from_table(values)?;
        chi.discriminant = Some(d);
        Ok(chi)
    }

    /// Build from the values `chi(0), chi(1), ..., chi(q-1)`.
    pub fn from_table(values: Vec<i8>) -> Result<Self> {
        let q = values.len() as u64;
        if q < 3 {
            return Err(Error::InvalidCharacter(format!(
                "modulus must be at least 3, got {q}"
            )));
        }
        for (n, &v) in values.iter().enumerate() {
            if !(-1..=1).contains(&v) {
                return Err(Error::InvalidCharacter(format!(
                    "value {v} at {n} is not in {{-1, 0, 1}}"
                )));
            }
            let coprime = gcd(n as u64, q) == 1;
            if coprime == (v == 0) {
                return Err(Error::InvalidCharacter(format!(
                    "value at {n} must vanish exactly when gcd(n, {q}) > 1"
                )));
            }
        }
        for a in 1..q as usize {
            for b in a..q as usize {
                let ab = (a * b) % q as usize;
                if values[ab] != values[a] * values[b] {
                    return Err(Error::InvalidCharacter(format!(
                        "not multiplicative at ({a}, {b})"
                    )));
                }
            }
        }
        let total: i64 = values.iter().map(|&v| v as i64).sum();
        if total != 0 {
            return Err(Error::InvalidCharacter(
                "principal characters are not supported".into(),
            ));
        }
        let parity = if values[(q - 1) as usize] == 1 {
            Parity::Even
        } else {
            Parity::Odd
        };
        let primitive = !(1..q)
            .filter(|d| q % d == 0)
            .any(|d| induced_from(&values, d));
        Ok(Self {
            modulus: q,
            values,
            parity,
            primitive,
            discriminant: None,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn is_primitive(&self) -> bool {
        self.primitive
    }

    /// The discriminant this character was built from, if any.
    pub fn discriminant(&self) -> Option<i64> {
        self.discriminant.or_else(|| {
            // a primitive real character is the Kronecker symbol of +-q
            if !self.primitive {
                return None;
            }
            discriminants_for_modulus(self.modulus)
                .into_iter()
                .find(|&d| (0..self.modulus).all(|n| kronecker(d, n as i64) == self.values[n as usize]))
        })
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    #[inline]
    pub fn value(&self, n: u64) -> i8 {
        self.values[(n % self.modulus) as usize]
    }

    /// Value at a possibly negative integer.
    #[inline]
    pub fn value_i64(&self, n: i64) -> i8 {
        self.values[n.rem_euclid(self.modulus as i64) as usize]
    }

    /// Distinct primes dividing the modulus.
    pub fn modulus_primes(&self) -> Vec<u64> {
        prime_factors(self.modulus)
    }

    /// The Gauss sum `sum_{n=1}^{q} chi(n) e^{2 pi i n / q}`.
    pub fn gauss_sum(&self) -> Result<Complex64> {
        if !self.primitive {
            return Err(Error::NotPrimitive(self.modulus));
        }
        let q = self.modulus as f64;
        let mut acc = CompensatedComplex::new();
        for n in 1..=self.modulus {
            let v = self.value(n);
            if v != 0 {
                acc.add(Complex64::from_polar(v as f64, 2.0 * PI * n as f64 / q));
            }
        }
        Ok(acc.value())
    }

    /// The root-number factor `tau(chi) / (i^delta sqrt(q))`.
    pub fn root_number(&self) -> Result<Complex64> {
        let tau = self.gauss_sum()?;
        let i_delta = match self.parity {
            Parity::Even => Complex64::new(1.0, 0.0),
            Parity::Odd => Complex64::new(0.0, 1.0),
        };
        Ok(tau / (i_delta * (self.modulus as f64).sqrt()))
    }
}

/// True when the values are induced from a character of modulus `d`, i.e.
/// `chi(a) = 1` for every unit `a = 1 mod d`.
fn induced_from(values: &[i8], d: u64) -> bool {
    let q = values.len() as u64;
    (1..q)
        .filter(|&a| a % d == 1 % d && gcd(a, q) == 1)
        .all(|a| values[a as usize] == 1)
}

impl fmt::Display for DirichletCharacter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.discriminant() {
            Some(d) => write!(f, "q={}, kind=kronecker, d={}", self.modulus, d),
            None => {
                let table: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
                write!(f, "{}", table.join(","))
            }
        }
    }
}

impl FromStr for DirichletCharacter {
    type Err = Error;

    /// Accepts `q=<int>, kind=kronecker, d=<disc>` or a comma-separated
    /// value table starting at `chi(0)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains('=') {
            let mut q = None;
            let mut kind = None;
            let mut d = None;
            for part in s.split(',') {
                let (key, value) = part.split_once('=').ok_or_else(|| {
                    Error::InvalidCharacter(format!("expected key=value, got {part:?}"))
                })?;
                let value = value.trim();
                match key.trim() {
                    "q" => q = Some(parse_int::<u64>(value)?),
                    "kind" => kind = Some(value.to_string()),
                    "d" => d = Some(parse_int::<i64>(value)?),
                    other => {
                        return Err(Error::InvalidCharacter(format!("unknown key {other:?}")))
                    }
                }
            }
            if kind.as_deref().unwrap_or("kronecker") != "kronecker" {
                return Err(Error::InvalidCharacter(format!(
                    "unsupported kind {:?}",
                    kind.unwrap_or_default()
                )));
            }
            let d = match (d, q) {
                (Some(d), _) => d,
                (None, Some(q)) => {
                    let candidates = discriminants_for_modulus(q);
                    match candidates.as_slice() {
                        [d] => *d,
                        [] => {
                            return Err(Error::InvalidCharacter(format!(
                                "no real primitive character has modulus {q}"
                            )))
                        }
                        _ => {
                            return Err(Error::InvalidCharacter(format!(
                                "modulus {q} is ambiguous, pass d (one of {candidates:?})"
                            )))
                        }
                    }
                }
                (None, None) => {
                    return Err(Error::InvalidCharacter("missing q or d".into()));
                }
            };
            if let Some(q) = q {
                if d.unsigned_abs() != q {
                    return Err(Error::InvalidCharacter(format!(
                        "|d| = {} does not match q = {q}",
                        d.unsigned_abs()
                    )));
                }
            }
            Self::from_discriminant(d)
        } else {
            let values = s
                .split(',')
                .map(|v| parse_int::<i8>(v.trim()))
                .collect::<Result<Vec<_>>>()?;
            Self::from_table(values)
        }
    }
}

fn parse_int<T: FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidCharacter(format!("not an integer: {s:?}")))
}

/// The completely multiplicative function equal to `chi(p)` for `p` not
/// dividing `q`, and to 1 for `p | q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModifiedCharacter {
    base: DirichletCharacter,
    primes: Vec<u64>,
}

impl ModifiedCharacter {
    pub fn new(base: DirichletCharacter) -> Self {
        let primes = base.modulus_primes();
        Self { base, primes }
    }

    pub fn base(&self) -> &DirichletCharacter {
        &self.base
    }

    /// Strips the q-smooth part of `n` and evaluates `chi` on the rest.
    #[inline]
    pub fn value(&self, mut n: u64) -> i8 {
        debug_assert!(n >= 1);
        for &p in &self.primes {
            while n % p == 0 {
                n /= p;
            }
        }
        self.base.value(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chi(d: i64) -> DirichletCharacter {
        DirichletCharacter::from_discriminant(d).unwrap()
    }

    fn brute_legendre(a: i64, p: i64) -> i8 {
        let a = a.rem_euclid(p);
        if a == 0 {
            return 0;
        }
        if (1..p).any(|x| (x * x) % p == a) {
            1
        } else {
            -1
        }
    }

    #[test]
    fn kronecker_small_cases() {
        assert_eq!(kronecker(1, 1), 1);
        assert_eq!(kronecker(2, 3), -1);
        assert_eq!(kronecker(2, 3), brute_legendre(2, 3));
        assert_eq!(kronecker(-4, 3), -1);
        assert_eq!(kronecker(5, 0), 0);
        assert_eq!(kronecker(-1, 0), 1);
        assert_eq!(kronecker(3, 2), -1);
        assert_eq!(kronecker(4, 2), 0);
        assert_eq!(kronecker(-3, -1), -1);
    }

    #[test]
    fn kronecker_matches_legendre_for_odd_primes() {
        for p in [3, 5, 7, 11, 13, 17, 19, 23, 29] {
            for a in -40..40 {
                assert_eq!(kronecker(a, p), brute_legendre(a, p), "({a}|{p})");
            }
        }
    }

    proptest! {
        #[test]
        fn kronecker_multiplicative_in_top(a in -500i64..500, b in -500i64..500, n in -300i64..300) {
            prop_assert_eq!(kronecker(a * b, n), kronecker(a, n) * kronecker(b, n));
        }

        #[test]
        fn kronecker_multiplicative_in_bottom(a in -500i64..500, m in (-300i64..300).prop_filter("nonzero", |v| *v != 0), n in (-300i64..300).prop_filter("nonzero", |v| *v != 0)) {
            prop_assert_eq!(kronecker(a, m * n), kronecker(a, m) * kronecker(a, n));
        }
    }

    #[test]
    fn character_mod_3() {
        let c = chi(-3);
        assert_eq!(c.modulus(), 3);
        assert_eq!(c.value(2), -1);
        assert_eq!(c.value(1), 1);
        for k in 1..20 {
            assert_eq!(c.value(3 * k), 0);
        }
        for n in 1..50 {
            assert_eq!(c.value(n + 3), c.value(n));
        }
        assert_eq!(c.parity(), Parity::Odd);
        assert!(c.is_primitive());
    }

    #[test]
    fn characters_are_orthogonal_and_quadratic() {
        for d in [-3, -4, 5, -7, 8, -8, -11, 12, 13, -15] {
            let c = chi(d);
            let total: i64 = (1..=c.modulus()).map(|n| c.value(n) as i64).sum();
            assert_eq!(total, 0);
            for n in 0..200 {
                let v = c.value(n);
                assert!(v * v <= 1);
            }
            assert_eq!(c.value(c.modulus() - 1), if d < 0 { -1 } else { 1 });
        }
    }

    #[test]
    fn gauss_sums_by_direct_evaluation() {
        // tau(chi_-3) = e^{2 pi i/3} - e^{4 pi i/3} = i sqrt 3
        let t = chi(-3).gauss_sum().unwrap();
        assert!((t - Complex64::new(0.0, 3f64.sqrt())).norm() < 1e-14);
        // tau(chi_-4) = i - (-i) = 2i
        let t = chi(-4).gauss_sum().unwrap();
        assert!((t - Complex64::new(0.0, 2.0)).norm() < 1e-14);
        for d in [-3, -4, 5, -7, 8, -8, -11] {
            let c = chi(d);
            let t = c.gauss_sum().unwrap();
            assert!((t.norm_sqr() - c.modulus() as f64).abs() < 1e-10);
            // real primitive characters have root number 1
            assert!((c.root_number().unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn imprimitive_table_is_flagged() {
        // chi_-4 induced to modulus 12: zero on multiples of 2 and 3
        let values: Vec<i8> = (0..12)
            .map(|n: i64| if gcd(n as u64, 12) == 1 { kronecker(-4, n) } else { 0 })
            .collect();
        let c = DirichletCharacter::from_table(values).unwrap();
        assert!(!c.is_primitive());
        assert!(matches!(c.gauss_sum(), Err(Error::NotPrimitive(12))));
    }

    #[test]
    fn invalid_tables_are_rejected() {
        assert!(DirichletCharacter::from_table(vec![0, 1, 1]).is_err()); // principal
        assert!(DirichletCharacter::from_table(vec![0, 1, 0]).is_err()); // zero on a unit
        assert!(DirichletCharacter::from_table(vec![0, 1, 2]).is_err());
        assert!(DirichletCharacter::from_table(vec![0, 1, -1, 1, -1]).is_err()); // not multiplicative
        assert!(DirichletCharacter::from_discriminant(-12).is_err());
        assert!(DirichletCharacter::from_discriminant(1).is_err());
    }

    #[test]
    fn parses_config_forms() {
        let c: DirichletCharacter = "q=3, kind=kronecker, d=-3".parse().unwrap();
        assert_eq!(c, chi(-3));
        let c: DirichletCharacter = "0,1,-1".parse().unwrap();
        assert_eq!(c.values(), chi(-3).values());
        assert_eq!(c.discriminant(), Some(-3));
        let c: DirichletCharacter = "q=5".parse().unwrap();
        assert_eq!(c.discriminant(), Some(5));
        assert!("q=8".parse::<DirichletCharacter>().is_err());
        assert!("q=4, d=-3".parse::<DirichletCharacter>().is_err());
        let round: DirichletCharacter = chi(8).to_string().parse().unwrap();
        assert_eq!(round, chi(8));
    }

    fn naive_gchi(c: &DirichletCharacter, mut n: u64) -> i8 {
        // multiply over the full prime factorization
        let mut result = 1i8;
        let mut p = 2;
        while p * p <= n {
            while n % p == 0 {
                result *= if c.modulus() % p == 0 { 1 } else { c.value(p) };
                n /= p;
            }
            p += 1;
        }
        if n > 1 {
            result *= if c.modulus() % n == 0 { 1 } else { c.value(n) };
        }
        result
    }

    #[test]
    fn modified_character_values() {
        let g = ModifiedCharacter::new(chi(-3));
        assert_eq!(g.value(3), 1);
        assert_eq!(g.value(6), -1);
        assert_eq!(g.value(9), 1);
        for n in 1..200 {
            if gcd(n, 3) == 1 {
                assert_eq!(g.value(n), g.base().value(n));
            }
        }
    }

    #[test]
    fn modified_character_matches_factorization_oracle() {
        for d in [-3, -4, 5, 12] {
            let c = chi(d);
            let g = ModifiedCharacter::new(c.clone());
            for n in 1..=100_000u64 {
                let v = g.value(n);
                assert_eq!(v.abs(), 1);
                assert_eq!(v, naive_gchi(&c, n), "d={d}, n={n}");
            }
        }
    }
}
