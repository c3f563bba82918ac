use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("{0} did not converge within its iteration cap")]
    NoConvergence(&'static str),
    #[error("empty data")]
    EmptyData,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("degenerate denominator: |h|^2 + mu must be positive")]
    DegenerateDenominator,
    #[error("matrix has no entry above the zero threshold")]
    ZeroMatrix,
    #[error("fold count {folds} invalid for {n} samples")]
    BadFoldCount { n: usize, folds: usize },
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("sparsity target infeasible: {0}")]
    InfeasibleSparsity(String),
    #[error("model has no noise component")]
    MissingNoiseModel,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("reconstruction is exact; SNR is infinite")]
    PerfectReconstruction,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Format(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::ShapeMismatch(_)
                | Error::DimensionMismatch { .. }
                | Error::BadFoldCount { .. }
                | Error::EmptyGrid
                | Error::InfeasibleSparsity(_)
                | Error::MissingNoiseModel
                | Error::EmptyData
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
