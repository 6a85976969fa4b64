//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "dataset needs at least n+1 points for a unique fit (got N={n_points}, n={dim})"
    )]
    TooFewPoints { n_points: usize, dim: usize },

    #[error("partition requires N = K·N̄ with block size > n+1 (N={n_points}, K={k}, n={dim})")]
    BadPartition { n_points: usize, k: usize, dim: usize },

    #[error(
        "minimum cross-block squared distance is zero (duplicate locations in \
         different blocks); bounds that divide by it are undefined"
    )]
    ZeroCrossDistance,

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("interior-point subproblem failed in block {block}: {source}")]
    Subproblem {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("adaptive step backtracking exceeded {cap} trials (gradient/curvature mismatch)")]
    BacktrackingCap { cap: usize },

    #[error("degenerate geometry: point {index} has a singular difference block")]
    SingularBlock { index: usize },

    #[error("divergence detected: {0}")]
    Divergence(String),

    #[error("instance too large for the dense reference solver: N={n_points} > cap {cap}")]
    OracleCap { n_points: usize, cap: usize },

    #[error("reference solution failed verification: {0}")]
    OracleVerification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("file format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
