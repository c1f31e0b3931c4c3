use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("search cap exceeded: ceil(Q^m) = {needed} > cap {cap}")]
    CapExceeded { needed: u64, cap: u64 },

    #[error("no denominator below {bound} satisfies the residual bound")]
    NoApproximation { bound: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("periodicity violation at {pos}: {msg}")]
    PeriodicityViolation { pos: usize, msg: String },

    #[error("frequency matrix has no nonzero entry")]
    DegenerateMatrix,

    #[error("coefficient is not elliptic: minimum {min}")]
    NonElliptic { min: f64 },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("grid spacing {h:e} does not resolve scale {scale:e} (need h <= {required:e})")]
    UnresolvedScale { h: f64, scale: f64, required: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("radius window is empty: [{lo}, {hi}]")]
    WindowEmpty { lo: f64, hi: f64 },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("grid file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
