//! Numerical laboratory for multiscale periodic homogenization.
//!
//! The crate covers simultaneous Diophantine approximation and
//! reperiodization of multiscale coefficients, periodic cell problems and
//! (reiterated) effective matrices, Dirichlet solvers on the interval and the
//! unit square, smoothing and averaging operators, the one-scale reduction
//! pipeline, and a sweep harness for uniform gradient estimates.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod cell;
pub mod coefficients;
pub mod diophantine;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod operators;
mod q1;
pub mod quadrature;
pub mod reduction;

pub use error::{Error, Result};
