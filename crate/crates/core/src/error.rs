use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid character: {0}")]
    InvalidCharacter(String),

    #[error("character mod {0} is not primitive")]
    NotPrimitive(u64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sieve limit {limit} cannot be addressed on this platform")]
    SieveOverflow { limit: u64 },

    #[error("sieve too small: need {needed}, have {limit}")]
    SieveTooSmall { needed: u64, limit: u64 },

    #[error("sieve was built for k = {sieve_k}, summand needs k = {spec_k}")]
    SieveMismatch { sieve_k: u32, spec_k: u32 },

    #[error("argument {value} outside the supported range {range}")]
    OutOfRange { value: f64, range: String },

    #[error("evaluation too close to a pole at {0}")]
    PoleProximity(String),

    #[error("precision unreachable: {0}")]
    PrecisionUnreachable(String),

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },

    #[error("derivative {magnitude:e} below simplicity threshold near gamma = {gamma}")]
    MultipleZero { gamma: f64, magnitude: f64 },

    #[error("missing derivative for zero at gamma = {0}")]
    MissingDerivative(f64),

    #[error("catalog mismatch: {0}")]
    CatalogMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cutoff too small: last factor deviates from 1 by {deviation:e}")]
    CutoffTooSmall { deviation: f64 },

    #[error("bad cache file {path:?}: {reason}")]
    BadCache { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by input files or datasets rather than by parameters.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Io(_)
                | Error::BadCache { .. }
                | Error::MissingDerivative(_)
                | Error::InsufficientData(_)
        )
    }
}
