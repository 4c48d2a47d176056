use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kfcl_core::characters::{discriminants_for_modulus, DirichletCharacter, Parity};
use kfcl_core::explicit::required_function;
use kfcl_core::kfree::SummandSpec;
use kfcl_core::special::EvalContext;
use kfcl_core::zeros::{FunctionId, BUNDLED_ZETA_ZEROS};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MIN_SIEVE_LIMIT: u64 = 1000;
pub const CACHE_ENV: &str = "KFCL_CACHE";

/// Settings a command may take from a config file; every field is optional
/// so flags can be layered on top.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub k: Option<u32>,
    pub q: Option<u64>,
    pub d: Option<i64>,
    pub kind: Option<String>,
    pub modified: Option<bool>,
    pub catalog: Option<String>,
    pub zeros: Option<PathBuf>,
    pub n: Option<u64>,
    pub precision: Option<u32>,
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub seed: Option<u64>,
    pub t: Option<f64>,
    pub bins: Option<usize>,
    pub y0: Option<f64>,
    pub samples: Option<usize>,
    pub eps: Option<f64>,
    pub ctilde: Option<f64>,
}

macro_rules! layer {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Overrides {
    /// Fields set in `top` replace those in `self`.
    pub fn layered(mut self, top: &Overrides) -> Self {
        layer!(self, top, k, q, d, kind, modified, catalog, zeros, n, precision, out, cache, seed, t, bins, y0, samples, eps, ctilde);
        self
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config line {line}: bad value '{value}' for {key}")))
}

/// Reads a flat `key = value` file with optional `[section]` headers. Keys
/// are looked up as `section.key` or bare `key`; relative paths resolve
/// against the file's directory.
pub fn parse_config_text(text: &str, base: &Path) -> CliResult<Overrides> {
    let mut o = Overrides::default();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_ascii_lowercase();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {line_no}: expected key = value")))?;
        let key = key.trim();
        let value = value.trim();
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        let bare = full.rsplit('.').next().unwrap();
        match bare.to_ascii_lowercase().as_str() {
            "k" => o.k = Some(parse_value(&full, value, line_no)?),
            "q" => o.q = Some(parse_value(&full, value, line_no)?),
            "d" => o.d = Some(parse_value(&full, value, line_no)?),
            "kind" => o.kind = Some(value.to_string()),
            "modified" => o.modified = Some(parse_value(&full, value, line_no)?),
            "catalog" => o.catalog = Some(value.to_string()),
            "zeros" => o.zeros = Some(base.join(value)),
            "n" => o.n = Some(parse_value(&full, value, line_no)?),
            "precision" => o.precision = Some(parse_value(&full, value, line_no)?),
            "out" => o.out = Some(base.join(value)),
            "cache" => o.cache = Some(base.join(value)),
            "seed" => o.seed = Some(parse_value(&full, value, line_no)?),
            "t" => o.t = Some(parse_value(&full, value, line_no)?),
            "bins" => o.bins = Some(parse_value(&full, value, line_no)?),
            "y0" => o.y0 = Some(parse_value(&full, value, line_no)?),
            "samples" => o.samples = Some(parse_value(&full, value, line_no)?),
            "eps" => o.eps = Some(parse_value(&full, value, line_no)?),
            "ctilde" => o.ctilde = Some(parse_value(&full, value, line_no)?),
            _ => {
                return Err(CliError::Usage(format!("config line {line_no}: unknown key '{full}'")));
            }
        }
    }
    Ok(o)
}

pub fn read_config_file(path: &Path) -> CliResult<Overrides> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_config_text(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: u32,
    pub character: DirichletCharacter,
    pub modified: bool,
    pub catalog: FunctionId,
    pub zeros: Option<PathBuf>,
    pub n: u64,
    pub precision: u32,
    pub out: PathBuf,
    pub cache: PathBuf,
    pub seed: u64,
    pub t: f64,
    pub bins: usize,
    pub y0: f64,
    pub samples: usize,
    pub eps: f64,
    pub ctilde: f64,
}

fn resolve_character(q: Option<u64>, d: Option<i64>, kind: Option<&str>) -> CliResult<DirichletCharacter> {
    if let Some(d) = d {
        if q.is_some_and(|q| q != d.unsigned_abs()) {
            return Err(CliError::Usage(format!("--d {d} does not have modulus {}", q.unwrap())));
        }
        return Ok(DirichletCharacter::from_discriminant(d)?);
    }
    let q = q.ok_or_else(|| CliError::Usage("the character needs --q or --d".into()))?;
    let want = match kind.map(|k| k.to_ascii_lowercase()) {
        None => None,
        Some(k) if k == "odd" => Some(Parity::Odd),
        Some(k) if k == "even" => Some(Parity::Even),
        Some(k) => return Err(CliError::Usage(format!("character kind must be odd or even, got '{k}'"))),
    };
    let mut found: Vec<DirichletCharacter> = discriminants_for_modulus(q)
        .into_iter()
        .map(DirichletCharacter::from_discriminant)
        .collect::<Result<_, _>>()?;
    if let Some(p) = want {
        found.retain(|c| c.parity() == p);
    }
    match found.len() {
        0 => Err(CliError::Usage(format!("no real primitive character of modulus {q} matches"))),
        1 => Ok(found.pop().unwrap()),
        _ => Err(CliError::Usage(format!("modulus {q} has an odd and an even character; pass --kind"))),
    }
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> CliResult<Self> {
        let k = o.k.unwrap_or(2);
        if k < 2 {
            return Err(CliError::Usage(format!("k must be >= 2, got {k}")));
        }
        let q = if o.d.is_some() { o.q } else { Some(o.q.unwrap_or(3)) };
        let character = resolve_character(q, o.d, o.kind.as_deref())?;
        let modified = o.modified.unwrap_or(false);
        let spec = SummandSpec::new(k, character.clone(), modified)?;
        let needed = required_function(&spec);
        let catalog = match &o.catalog {
            Some(c) => c.parse::<FunctionId>()?,
            None => needed.clone(),
        };
        if catalog != needed {
            return Err(CliError::Usage(format!(
                "k = {k} needs the zeros of {needed}, but the catalog is {catalog}"
            )));
        }
        let n = o.n.unwrap_or(1_000_000);
        if n < MIN_SIEVE_LIMIT {
            return Err(CliError::Usage(format!("N must be >= {MIN_SIEVE_LIMIT}, got {n}")));
        }
        let precision = o.precision.unwrap_or(30);
        EvalContext::default().with_precision(precision)?;
        let out = o.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let cache = o
            .cache
            .clone()
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
            .unwrap_or_else(|| out.join(".cache"));
        let t = o.t.unwrap_or(500.0);
        if !(t > 14.0) {
            return Err(CliError::Usage(format!("T must exceed 14, got {t}")));
        }
        let bins = o.bins.unwrap_or(201);
        if bins == 0 {
            return Err(CliError::Usage("bins must be positive".into()));
        }
        let y0 = o.y0.unwrap_or(std::f64::consts::LN_2);
        let samples = o.samples.unwrap_or(100_000);
        if samples == 0 {
            return Err(CliError::Usage("samples must be positive".into()));
        }
        let eps = o.eps.unwrap_or(0.1);
        let ctilde = o.ctilde.unwrap_or(1.0);
        if !(eps > 0.0) || !(ctilde >= 0.0) {
            return Err(CliError::Usage("eps must be positive and Ctilde non-negative".into()));
        }
        Ok(Self {
            k,
            character,
            modified,
            catalog,
            zeros: o.zeros.clone(),
            n,
            precision,
            out,
            cache,
            seed: o.seed.unwrap_or(1),
            t,
            bins,
            y0,
            samples,
            eps,
            ctilde,
        })
    }

    pub fn spec(&self) -> SummandSpec {
        SummandSpec::new(self.k, self.character.clone(), self.modified).expect("validated in resolve")
    }

    pub fn context(&self) -> EvalContext {
        EvalContext::default().with_precision(self.precision).expect("validated in resolve")
    }

    pub fn discriminant(&self) -> i64 {
        self.character.discriminant().expect("built from a discriminant")
    }

    /// Text of the zero catalog: the configured file, or the bundled zeta
    /// table. `None` means the zeros have to be computed.
    pub fn zero_text(&self) -> CliResult<Option<(String, String)>> {
        match &self.zeros {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                Ok(Some((p.display().to_string(), text)))
            }
            None if self.catalog == FunctionId::Zeta => Ok(Some(("bundled".into(), BUNDLED_ZETA_ZEROS.to_string()))),
            None => Ok(None),
        }
    }

    /// Everything that can change a result, one `key=value` per line.
    /// Output and cache locations are left out.
    pub fn canonical(&self) -> CliResult<String> {
        let zeros = match self.zero_text()? {
            Some((_, text)) => hex(&Sha256::digest(text.as_bytes())),
            None => "computed".into(),
        };
        let mut m = BTreeMap::new();
        m.insert("k", self.k.to_string());
        m.insert("d", self.discriminant().to_string());
        m.insert("modified", self.modified.to_string());
        m.insert("catalog", self.catalog.to_string());
        m.insert("zeros_sha256", zeros);
        m.insert("n", self.n.to_string());
        m.insert("precision", self.precision.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("t", format!("{:?}", self.t));
        m.insert("bins", self.bins.to_string());
        m.insert("y0", format!("{:?}", self.y0));
        m.insert("samples", self.samples.to_string());
        m.insert("eps", format!("{:?}", self.eps));
        m.insert("ctilde", format!("{:?}", self.ctilde));
        let mut s = String::new();
        for (k, v) in m {
            writeln!(s, "{k}={v}").unwrap();
        }
        Ok(s)
    }

    pub fn hash(&self) -> CliResult<String> {
        Ok(hex(&Sha256::digest(self.canonical()?.as_bytes())))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_layering() {
        let text = "# run\n[spec]\nk = 3\nq = 4\n[run]\nseed = 9 # inline\nT = 100\n";
        let file = parse_config_text(text, Path::new("/tmp")).unwrap();
        assert_eq!(file.k, Some(3));
        assert_eq!(file.t, Some(100.0));
        let flags = Overrides {
            seed: Some(4),
            ..Default::default()
        };
        let merged = file.layered(&flags);
        assert_eq!(merged.seed, Some(4));
        assert_eq!(merged.q, Some(4));
        assert!(parse_config_text("[x]\nbogus = 1\n", Path::new(".")).is_err());
        assert!(parse_config_text("k 2\n", Path::new(".")).is_err());
    }

    #[test]
    fn parity_rule() {
        let odd = Overrides {
            k: Some(3),
            catalog: Some("zeta".into()),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&odd), Err(CliError::Usage(_))));
        let ok = Overrides {
            k: Some(3),
            ..Default::default()
        };
        let c = RunConfig::resolve(&ok).unwrap();
        assert_eq!(c.catalog.to_string(), "L(d=-3)");
    }

    #[test]
    fn character_resolution() {
        assert_eq!(resolve_character(Some(5), None, None).unwrap().discriminant(), Some(5));
        assert!(resolve_character(Some(8), None, None).is_err());
        assert_eq!(resolve_character(Some(8), None, Some("odd")).unwrap().discriminant(), Some(-8));
        assert!(resolve_character(Some(6), None, None).is_err());
        assert!(resolve_character(Some(4), Some(5), None).is_err());
    }

    #[test]
    fn hash_ignores_locations() {
        let a = RunConfig::resolve(&Overrides {
            out: Some("a".into()),
            ..Default::default()
        })
        .unwrap();
        let b = RunConfig::resolve(&Overrides {
            out: Some("b".into()),
            cache: Some("c".into()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let c = RunConfig::resolve(&Overrides {
            seed: Some(2),
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }
}
