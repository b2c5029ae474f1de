use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("image file holds {images} records but label file holds {labels}")]
    DimensionMismatch { images: usize, labels: usize },

    #[error("{path}: truncated, expected {expected} bytes but found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("class {class}: requested {requested} rows but only {available} available")]
    InsufficientClassMembers {
        class: u8,
        requested: usize,
        available: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("shape mismatch: expected {expected} columns, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("zero reachability density at row {index}: too many coincident points")]
    DuplicateDegeneracy { index: usize },

    #[error("too few points: have {n}, need more than {required}")]
    TooFewPoints { n: usize, required: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("solver did not converge after {iterations} iterations (gap {gap:.3e})")]
    SolverDidNotConverge { gap: f64, iterations: usize },

    #[error("flag sets refer to different datasets ({0} vs {1} rows)")]
    MixedDatasets(usize, usize),

    #[error("scores cover {found} rows but the sample has {expected}")]
    CoverageMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {n} rows")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("report has no detector rows")]
    EmptyReport,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidTarget(_)
                | Error::InvalidParams(_)
                | Error::ShapeMismatch { .. }
                | Error::InsufficientClassMembers { .. }
                | Error::MixedDatasets(..)
                | Error::CoverageMismatch { .. }
                | Error::IndexOutOfRange { .. }
                | Error::TooFewPoints { .. }
                | Error::EmptyReport
                | Error::Parse(_)
                | Error::Toml(_)
        )
    }
}
