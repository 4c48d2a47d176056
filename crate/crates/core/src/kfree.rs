//! The k-free sieve and exact partial sums of `mu^(k) chi` and `mu^(k) g_chi`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::characters::{DirichletCharacter, ModifiedCharacter};
use crate::numeric::primes_up_to;
use crate::{Error, Result};

const CACHE_MAGIC: &[u8; 8] = b"KFSIEVE1";
const SEGMENT_BITS: u64 = 1 << 22;
/// Largest supported limit; sums then fit comfortably in `i64`.
pub const MAX_LIMIT: u64 = 1 << 62;

/// Bit-packed indicator of the k-free integers in `[0, limit]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KFreeSieve {
    k: u32,
    limit: u64,
    words: Vec<u64>,
}

/// Largest `r` with `r^k <= n`.
fn integer_root(n: u64, k: u32) -> u64 {
    let mut r = (n as f64).powf(1.0 / k as f64) as u64;
    while r > 0 && r.checked_pow(k).map_or(true, |v| v > n) {
        r -= 1;
    }
    while (r + 1).checked_pow(k).is_some_and(|v| v <= n) {
        r += 1;
    }
    r
}

impl KFreeSieve {
    /// Sieve the k-free integers up to `limit` by striding over multiples of
    /// `p^k`, one segment at a time.
    pub fn new(k: u32, limit: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
        }
        if limit < 1 {
            return Err(Error::InvalidParameter("sieve limit must be >= 1".into()));
        }
        let words_needed = limit / 64 + 1;
        if limit >= MAX_LIMIT || words_needed > (isize::MAX as u64) / 8 {
            return Err(Error::SieveOverflow { limit });
        }
        let mut words = vec![u64::MAX; words_needed as usize];
        words[0] &= !1; // 0 is not k-free
        let tail_bits = (limit + 1) % 64;
        if tail_bits != 0 {
            *words.last_mut().unwrap() &= (1u64 << tail_bits) - 1;
        }
        let prime_powers: Vec<u64> = primes_up_to(integer_root(limit, k))
            .into_iter()
            .map(|p| p.pow(k))
            .collect();
        let mut lo = 0;
        while lo <= limit {
            let hi = (lo + SEGMENT_BITS).min(limit + 1);
            sieve_segment(&mut words, &prime_powers, lo, hi);
            lo = hi;
        }
        Ok(Self { k, limit, words })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    #[inline]
    pub fn is_kfree(&self, n: u64) -> bool {
        debug_assert!(n <= self.limit);
        (self.words[(n / 64) as usize] >> (n % 64)) & 1 == 1
    }

    /// Number of k-free integers in `[1, limit]`.
    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Write the sieve as `magic | k (u32) | 0 (u32) | limit (u64) | words`,
    /// all little endian. The word array starts 8-byte aligned.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut out = BufWriter::new(fs::File::create(&tmp)?);
            out.write_all(CACHE_MAGIC)?;
            out.write_all(&self.k.to_le_bytes())?;
            out.write_all(&0u32.to_le_bytes())?;
            out.write_all(&self.limit.to_le_bytes())?;
            for w in &self.words {
                out.write_all(&w.to_le_bytes())?;
            }
            out.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let bad = |reason: &str| Error::BadCache {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 24 || &bytes[..8] != CACHE_MAGIC {
            return Err(bad("missing magic header"));
        }
        let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let limit = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        if k < 2 || limit < 1 || limit >= MAX_LIMIT {
            return Err(bad("invalid header fields"));
        }
        let nwords = (limit / 64 + 1) as usize;
        if bytes.len() != 24 + 8 * nwords {
            return Err(bad("truncated bit array"));
        }
        let words = bytes[24..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { k, limit, words })
    }

    /// Cache file name for the pair `(k, limit)`.
    pub fn cache_file_name(k: u32, limit: u64) -> String {
        format!("kfree-k{k}-n{limit}.sieve")
    }

    /// Load the sieve from `dir` if a valid cache exists, otherwise build and
    /// store it there.
    pub fn load_or_build(dir: &Path, k: u32, limit: u64) -> Result<Self> {
        let path: PathBuf = dir.join(Self::cache_file_name(k, limit));
        if path.exists() {
            if let Ok(sieve) = Self::read_cache(&path) {
                if sieve.k == k && sieve.limit == limit {
                    return Ok(sieve);
                }
            }
        }
        let sieve = Self::new(k, limit)?;
        fs::create_dir_all(dir)?;
        sieve.write_cache(&path)?;
        Ok(sieve)
    }
}

fn sieve_segment(words: &mut [u64], prime_powers: &[u64], lo: u64, hi: u64) {
    for &pk in prime_powers {
        if pk >= hi {
            break;
        }
        let mut m = lo.div_ceil(pk).max(1) * pk;
        while m < hi {
            words[(m / 64) as usize] &= !(1u64 << (m % 64));
            m += pk;
        }
    }
}

/// Which arithmetic function is summed: `mu^(k) chi` or `mu^(k) g_chi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummandSpec {
    k: u32,
    character: DirichletCharacter,
    modified: Option<ModifiedCharacter>,
}

impl SummandSpec {
    pub fn new(k: u32, character: DirichletCharacter, modified: bool) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
        }
        if !character.is_primitive() {
            return Err(Error::NotPrimitive(character.modulus()));
        }
        let modified = modified.then(|| ModifiedCharacter::new(character.clone()));
        Ok(Self {
            k,
            character,
            modified,
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn character(&self) -> &DirichletCharacter {
        &self.character
    }

    pub fn is_modified(&self) -> bool {
        self.modified.is_some()
    }

    /// Character part of the summand, ignoring the k-free restriction.
    #[inline]
    pub fn char_part(&self, n: u64) -> i8 {
        match &self.modified {
            Some(g) => g.value(n),
            None => self.character.value(n),
        }
    }

    /// The summand `f(n)` read off a sieve.
    #[inline]
    pub fn value(&self, n: u64, sieve: &KFreeSieve) -> i8 {
        if sieve.is_kfree(n) {
            self.char_part(n)
        } else {
            0
        }
    }

    fn check_sieve(&self, sieve: &KFreeSieve, needed: u64) -> Result<()> {
        if sieve.k() != self.k {
            return Err(Error::SieveMismatch {
                sieve_k: sieve.k(),
                spec_k: self.k,
            });
        }
        if needed > sieve.limit() {
            return Err(Error::SieveTooSmall {
                needed,
                limit: sieve.limit(),
            });
        }
        Ok(())
    }
}

/// Integer part of `x`, snapping values within rounding of an integer onto it
/// so that `exp(log n)` lands on `n`.
pub fn floor_snapped(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r as u64
    } else {
        x.floor() as u64
    }
}

/// Exact `sum_{n <= x} f(n)`; the summand at `floor(x)` is included.
pub fn partial_sum(spec: &SummandSpec, x: f64, sieve: &KFreeSieve) -> Result<i64> {
    if !(x >= 1.0) {
        return Err(Error::OutOfRange {
            value: x,
            range: "[1, limit]".into(),
        });
    }
    let n_max = floor_snapped(x);
    spec.check_sieve(sieve, n_max)?;
    Ok((1..=n_max).map(|n| spec.value(n, sieve) as i64).sum())
}

/// `S_f` on `[1, limit]` stored by its jump points only: `S_f(x) = sums[j]`
/// for `positions[j] <= x < positions[j + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSeries {
    k: u32,
    limit: u64,
    positions: Vec<u64>,
    sums: Vec<i64>,
}

impl StepSeries {
    /// Build directly from jump points. Positions must be strictly increasing
    /// and `>= 1`.
    pub fn from_jumps(k: u32, limit: u64, jumps: Vec<(u64, i64)>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
        }
        let mut positions = Vec::with_capacity(jumps.len());
        let mut sums = Vec::with_capacity(jumps.len());
        for (n, s) in jumps {
            if n < 1 || n > limit || positions.last().is_some_and(|&p| p >= n) {
                return Err(Error::InvalidParameter(format!(
                    "jump positions must increase within [1, {limit}], got {n}"
                )));
            }
            positions.push(n);
            sums.push(s);
        }
        Ok(Self {
            k,
            limit,
            positions,
            sums,
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn jump_count(&self) -> usize {
        self.positions.len()
    }

    pub fn jumps(&self) -> impl Iterator<Item = (u64, i64)> + '_ {
        self.positions.iter().copied().zip(self.sums.iter().copied())
    }

    /// `S_f(n)` for an integer `0 <= n <= limit`.
    pub fn value_at_int(&self, n: u64) -> i64 {
        match self.positions.partition_point(|&p| p <= n) {
            0 => 0,
            j => self.sums[j - 1],
        }
    }

    /// `S_f(x)` for real `x` in `[0, limit + 1)`.
    pub fn value_at(&self, x: f64) -> Result<i64> {
        if !(x >= 0.0) || x >= (self.limit + 1) as f64 {
            return Err(Error::OutOfRange {
                value: x,
                range: format!("[0, {})", self.limit + 1),
            });
        }
        Ok(self.value_at_int(floor_snapped(x)))
    }

    /// Maximal intervals `[a, b)` of constant `S_f` covering `[lo, hi)`,
    /// as `(a, b, S)` with real endpoints. `hi` may be at most `limit + 1`.
    pub fn pieces(&self, lo: f64, hi: f64) -> Result<Vec<(f64, f64, i64)>> {
        let mut out = Vec::new();
        self.for_each_piece(lo, hi, |a, b, s| out.push((a, b, s)))?;
        Ok(out)
    }

    /// Visits the constant pieces `(a, b, S)` covering `[lo, hi)` in order.
    pub fn for_each_piece<F: FnMut(f64, f64, i64)>(&self, lo: f64, hi: f64, mut f: F) -> Result<()> {
        if !(lo >= 1.0) || !(hi <= (self.limit + 1) as f64) || !(lo <= hi) {
            return Err(Error::OutOfRange {
                value: if lo < 1.0 { lo } else { hi },
                range: format!("[1, {}]", self.limit + 1),
            });
        }
        if lo == hi {
            return Ok(());
        }
        let start = floor_snapped(lo).max(1);
        let mut j = self.positions.partition_point(|&p| p <= start);
        let mut a = lo;
        let mut current = if j == 0 { 0 } else { self.sums[j - 1] };
        while j < self.positions.len() && (self.positions[j] as f64) < hi {
            let b = self.positions[j] as f64;
            if b > a {
                f(a, b, current);
                a = b;
            }
            current = self.sums[j];
            j += 1;
        }
        f(a, hi, current);
        Ok(())
    }
}

/// One pass over `1..=n_max` producing the jump points of `S_f`.
pub fn cumulative_series(spec: &SummandSpec, n_max: u64, sieve: &KFreeSieve) -> Result<StepSeries> {
    spec.check_sieve(sieve, n_max)?;
    let mut positions = Vec::new();
    let mut sums = Vec::new();
    let mut s = 0i64;
    for n in 1..=n_max {
        let v = spec.value(n, sieve);
        if v != 0 {
            s += v as i64;
            positions.push(n);
            sums.push(s);
        }
    }
    Ok(StepSeries {
        k: spec.k(),
        limit: n_max,
        positions,
        sums,
    })
}

/// `phi(y) = e^{-y/2k} S_f(e^y)`.
pub fn normalized_phi(series: &StepSeries, y: f64) -> Result<f64> {
    let x = y.exp();
    let s = series.value_at(x).map_err(|_| Error::OutOfRange {
        value: y,
        range: format!("[0, log({}))", series.limit() + 1),
    })?;
    Ok((-y / (2.0 * series.k() as f64)).exp() * s as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chi3() -> DirichletCharacter {
        DirichletCharacter::from_discriminant(-3).unwrap()
    }

    fn is_kfree_naive(mut n: u64, k: u32) -> bool {
        let mut p = 2;
        while p * p <= n {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            if e >= k {
                return false;
            }
            p += 1;
        }
        true
    }

    #[test]
    fn indicator_examples() {
        let s = KFreeSieve::new(2, 100).unwrap();
        assert!(!s.is_kfree(4));
        assert!(s.is_kfree(6));
        assert!(!s.is_kfree(12));
        assert!(s.is_kfree(1));
        assert_eq!(s.count(), 61);
        let naive = (1..=100).filter(|&n| is_kfree_naive(n, 2)).count();
        assert_eq!(naive, 61);
        let s3 = KFreeSieve::new(3, 100).unwrap();
        assert!(s3.is_kfree(4));
        assert!(!s3.is_kfree(8));
    }

    #[test]
    fn sieve_matches_trial_division_across_segments() {
        for k in [2, 3, 4] {
            let s = KFreeSieve::new(k, 20_000).unwrap();
            for n in 1..=20_000 {
                assert_eq!(s.is_kfree(n), is_kfree_naive(n, k), "k={k} n={n}");
            }
        }
        // a limit straddling several segments
        let s = KFreeSieve::new(2, 3 * SEGMENT_BITS + 17).unwrap();
        for n in (SEGMENT_BITS - 50)..(SEGMENT_BITS + 50) {
            assert_eq!(s.is_kfree(n), is_kfree_naive(n, 2));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KFreeSieve::new(1, 10).is_err());
        assert!(KFreeSieve::new(2, 0).is_err());
        assert!(matches!(
            KFreeSieve::new(2, MAX_LIMIT),
            Err(Error::SieveOverflow { .. })
        ));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = KFreeSieve::new(3, 1234).unwrap();
        let path = dir.path().join("s.sieve");
        s.write_cache(&path).unwrap();
        assert_eq!(KFreeSieve::read_cache(&path).unwrap(), s);
        fs::write(&path, b"garbage").unwrap();
        assert!(KFreeSieve::read_cache(&path).is_err());
        let loaded = KFreeSieve::load_or_build(dir.path(), 2, 999).unwrap();
        assert_eq!(loaded, KFreeSieve::new(2, 999).unwrap());
        assert!(dir.path().join(KFreeSieve::cache_file_name(2, 999)).exists());
    }

    #[test]
    fn partial_sum_examples() {
        let sieve = KFreeSieve::new(2, 100).unwrap();
        let spec = SummandSpec::new(2, chi3(), false).unwrap();
        // +1 -1 0 0 -1 0 +1 0 0 +1
        assert_eq!(partial_sum(&spec, 10.0, &sieve).unwrap(), 1);
        assert_eq!(partial_sum(&spec, 10.7, &sieve).unwrap(), 1);
        assert_eq!(partial_sum(&spec, 1.0, &sieve).unwrap(), 1);
        let modified = SummandSpec::new(2, chi3(), true).unwrap();
        // g(3) = 1, g(6) = -1 and 9 is not squarefree
        assert_eq!(partial_sum(&modified, 10.0, &sieve).unwrap(), 1 + 1 + (-1));
        assert!(matches!(
            partial_sum(&spec, 101.0, &sieve),
            Err(Error::SieveTooSmall { .. })
        ));
        let sieve3 = KFreeSieve::new(3, 100).unwrap();
        assert!(matches!(
            partial_sum(&spec, 10.0, &sieve3),
            Err(Error::SieveMismatch { .. })
        ));
    }

    #[test]
    fn series_agrees_with_partial_sum() {
        let sieve = KFreeSieve::new(2, 1000).unwrap();
        let spec = SummandSpec::new(2, chi3(), false).unwrap();
        let series = cumulative_series(&spec, 1000, &sieve).unwrap();
        assert_eq!(series.value_at(10.0).unwrap(), 1);
        for n in 1..=1000 {
            assert_eq!(
                series.value_at_int(n),
                partial_sum(&spec, n as f64, &sieve).unwrap()
            );
        }
        for (n, _) in series.jumps() {
            assert_ne!(spec.value(n, &sieve), 0);
        }
        let d = series.value_at_int(1000) - series.value_at_int(999);
        assert!((-1..=1).contains(&d));
    }

    #[test]
    fn pieces_cover_the_window() {
        let sieve = KFreeSieve::new(2, 100).unwrap();
        let spec = SummandSpec::new(2, chi3(), false).unwrap();
        let series = cumulative_series(&spec, 100, &sieve).unwrap();
        let pieces = series.pieces(2.5, 20.25).unwrap();
        assert_eq!(pieces.first().unwrap().0, 2.5);
        assert_eq!(pieces.last().unwrap().1, 20.25);
        for w in pieces.windows(2) {
            assert_eq!(w[0].1, w[1].0);
            assert_ne!(w[0].2, w[1].2);
        }
        for &(a, b, s) in &pieces {
            let mid = 0.5 * (a + b);
            assert_eq!(series.value_at(mid).unwrap(), s);
        }
    }

    #[test]
    fn normalized_phi_examples() {
        let sieve = KFreeSieve::new(2, 100).unwrap();
        let spec = SummandSpec::new(2, chi3(), false).unwrap();
        let series = cumulative_series(&spec, 100, &sieve).unwrap();
        assert_eq!(normalized_phi(&series, 0.0).unwrap(), 1.0);
        let v = normalized_phi(&series, 10f64.ln()).unwrap();
        assert!((v - 10f64.powf(-0.25)).abs() < 1e-12);
        assert!((v - 0.5623).abs() < 1e-4);
        // jump-free stretch [10, 11): phi scales by e^{-dy/4}
        let (y1, y2) = (10.1f64.ln(), 10.9f64.ln());
        let ratio = normalized_phi(&series, y2).unwrap() / normalized_phi(&series, y1).unwrap();
        assert!((ratio - (-(y2 - y1) / 4.0).exp()).abs() < 1e-12);
        assert!(normalized_phi(&series, 101f64.ln()).is_err());
    }
}
