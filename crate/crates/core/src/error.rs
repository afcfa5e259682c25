use thiserror::Error;

/// Errors raised while decoding or encoding image files.
#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    #[error("unsupported image: {0}")]
    Unsupported(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config key `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("numerical failure in {context} at iteration {iteration}")]
    Numerical { context: String, iteration: usize },

    #[error("{solve} solve did not converge at stage {stage}: relative residual {residual:e} after {iterations} iterations")]
    NotConverged {
        stage: usize,
        solve: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error(transparent)]
    Image(#[from] ImageIoError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub(crate) fn dims_error(expected: (usize, usize, usize), found: (usize, usize, usize)) -> Error {
    Error::shape(crate::image::dims_str(expected), crate::image::dims_str(found))
}
