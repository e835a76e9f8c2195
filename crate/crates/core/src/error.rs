use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode {mode} for a tensor of order {order}")]
    InvalidMode { mode: usize, order: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("stack and mask are not congruent: {0}")]
    Congruence(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("patch reference out of bounds: {0}")]
    OutOfBounds(String),

    #[error("no candidate patch with a defined similarity around anchor ({row}, {col})")]
    DegenerateGroup { row: usize, col: usize },

    #[error("group has no observed entry")]
    Unobserved,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("detection undefined: {0}")]
    DetectionUndefined(String),

    #[error("empty degradation geometry: {0}")]
    EmptyGeometry(String),

    #[error("{count} entries could not be completed, first at {first:?}")]
    Uncompleted {
        count: usize,
        first: Vec<(usize, usize, usize)>,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical kernels, as opposed to bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Uncompleted { .. } | Error::DetectionUndefined(_)
        )
    }
}
