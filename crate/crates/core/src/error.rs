//! Error type shared across the library.
//!
//! Two failure families matter to callers: bad input (shapes, ranges,
//! unparseable files) and numerical degeneracy discovered mid-computation
//! (collapsed spectra, singular covariances, zero-width intervals). The CLI
//! maps the first family to exit code 2 and the second to exit code 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape mismatch between arguments.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Argument outside its documented domain (rank, index, level, config).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Numerical degeneracy: the requested quantity is not defined for this
    /// input (zero spectrum, singular covariance, zero standard error).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Malformed file or config contents.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures discovered inside the numerics rather than at
    /// argument validation; the CLI distinguishes the two by exit code.
    pub fn is_degeneracy(&self) -> bool {
        matches!(self, Error::Degenerate(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
