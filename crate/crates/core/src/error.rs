//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Errors produced while loading data, estimating models, or forecasting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data could not be read or parsed.
    #[error("data error: {0}")]
    Data(String),

    /// File-system failure, tagged with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        /// Path that was being read or written.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },

    /// CSV encoding or decoding failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Operand shapes do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// Where the mismatch was detected.
        context: &'static str,
        /// Expected size.
        expected: usize,
        /// Size that was supplied.
        actual: usize,
    },

    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Model parameters are outside the admissible region.
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    /// Not enough observations for the requested computation.
    #[error("insufficient data: need at least {required}, got {actual}")]
    InsufficientData {
        /// Minimum required count.
        required: usize,
        /// Available count.
        actual: usize,
    },

    /// A matrix that must be symmetric is not.
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    /// A numerical routine failed (non-convergence, singular system, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in the input data rather than the numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Self::Data(_)
                | Self::Io { .. }
                | Self::Csv(_)
                | Self::InsufficientData { .. }
                | Self::DimensionMismatch { .. }
        )
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
