use thiserror::Error;

/// Errors produced by the linear-algebra kernels, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch ({}x{} vs {}x{})", .left.0, .left.1, .right.0, .right.1)]
    DimensionMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },

    #[error("{op}: expected a square matrix, got {rows}x{cols}")]
    NotSquare { op: &'static str, rows: usize, cols: usize },

    #[error("{op}: data length {len} does not match {rows}x{cols}")]
    BadLength { op: &'static str, rows: usize, cols: usize, len: usize },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("{op}: rank deficient input (pivot {pivot:e} below threshold {threshold:e})")]
    RankDeficient { op: &'static str, pivot: f64, threshold: f64 },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e} > {tolerance:e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("{op}: no convergence after {sweeps} sweeps")]
    NoConvergence { op: &'static str, sweeps: usize },

    #[error("point is off the manifold (gap {gap:e} > {tolerance:e})")]
    OffManifold { gap: f64, tolerance: f64 },

    #[error("point outside {region} ({value:e} > {limit:e})")]
    OutsideRegion { region: &'static str, value: f64, limit: f64 },

    #[error("step size {alpha:e} exceeds the safe step {alpha_safe:e}")]
    UnsafeStep { alpha: f64, alpha_safe: f64 },

    #[error("eigengap too small between eigenvalues {index} and {} ({gap:e})", .index + 1)]
    DegenerateEigengap { index: usize, gap: f64 },

    #[error("all {samples} samples were skipped")]
    AllSamplesSkipped { samples: usize },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("metric converged below float range at iteration {iter}")]
    ConvergedBelowFloat { iter: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
