//! Numerical workbench for elliptic homogenization with randomly deformed
//! periodic coefficients.
//!
//! The coefficient under study is a periodic field composed with the inverse
//! of a random diffeomorphism whose derivative is stationary under integer
//! shifts. The crate provides
//!
//! - [`model`]: periodic coefficient fields, source terms, and the random
//!   deformation law (per-cell i.i.d. amplitudes times a periodic shape),
//! - [`exact1d`]: quadrature-exact one-dimensional objects — the effective
//!   coefficient, oscillatory two-point solutions, the corrector, residual
//!   kernels and the residual decomposition,
//! - [`mcstats`]: Monte Carlo ensembles over deformation realizations with
//!   statistical checks (CLT shape, covariance against the Gaussian limit,
//!   moment-bound ratios, convergence-rate fits),
//! - [`fem`]: periodic first-order finite elements for the truncated
//!   corrector problem on `(0, N)^d`, `d ∈ {1, 2}`,
//! - [`homogenize`]: effective-matrix estimates from truncated correctors
//!   and the associated convergence study.
//!
//! All sampling is counter-based: every random quantity is a pure function of
//! a 64-bit seed and an integer index (see [`rng`]), so ensembles are
//! reproducible bit-for-bit regardless of the worker count. With the
//! `parallel` feature (on by default) embarrassingly parallel loops run on
//! rayon; without it the same code runs sequentially with identical results.

// index loops over small fixed-size matrix blocks read better than
// iterator/enumerate chains
#![allow(clippy::needless_range_loop)]

pub mod exact1d;
pub mod fem;
pub mod homogenize;
pub mod mat;
pub mod mcstats;
pub mod model;
pub mod quad;
pub mod rng;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("sample {index}: {source}")]
    InSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_sample(index: usize) -> impl Fn(Error) -> Error {
        move |e| Error::InSample {
            index,
            source: Box::new(e),
        }
    }
}

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
///
/// Results are collected in index order and the reported error, if any, is
/// the one with the smallest index, so the outcome does not depend on
/// scheduling.
pub fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let results: Vec<Result<T>> = (0..n).into_par_iter().map(&f).collect();
        results.into_iter().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential version of [`map_indexed`], kept available for benchmarks and
/// as the reference path for determinism tests.
pub fn map_indexed_serial<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

/// Sets the global worker count for parallel loops. `0` keeps the default
/// (one worker per core). Must be called before the first parallel loop;
/// later calls are ignored. A no-op without the `parallel` feature — results
/// are identical either way by the seeding contract.
pub fn configure_workers(workers: usize) {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
    }
}
