//! Numerical laboratory for partial sums of quadratic Dirichlet characters
//! (and their modified companions) restricted to the k-free integers.
//!
//! The crate is organised bottom-up:
//!
//! * [`characters`]: Kronecker symbols, real characters and the modified
//!   character `g_chi`.
//! * [`kfree`]: the k-free sieve, exact partial sums and their step-function
//!   representation.
//! * [`special`]: zeta, Dirichlet L-functions, gamma-factor ratios, Bessel
//!   `J0`, Barnes `G` and the moment constant built from them.
//! * [`zeros`]: zero catalogs, Newton refinement, counting and discrete
//!   moments.
//! * [`explicit`]: residue coefficients, the truncated explicit formula,
//!   error envelopes and Perron cross-checks.
//! * [`distribution`]: exact logarithmic-measure distributions, the mean
//!   square integral, `beta_k` and growth envelopes.
//! * [`limodel`]: the random model on the infinite torus.

pub mod characters;
pub mod distribution;
mod error;
pub mod explicit;
pub mod kfree;
pub mod limodel;
pub mod numeric;
pub mod special;
pub mod zeros;

pub use error::{Error, Result};

pub use num_complex::Complex64;
