use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate projection for primitive {index}: det = {det:e}")]
    DegenerateProjection { index: usize, det: f64 },

    #[error("numerical overflow at primitive {index}: {what}")]
    NumericalOverflow { index: usize, what: String },

    #[error("stale or missing forward state: {0}")]
    State(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("dataset record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("malformed PLY: {0}")]
    Ply(String),

    #[error("PLY is missing properties: {}", .0.join(", "))]
    MissingProperties(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateProjection { .. }
                | Error::NumericalOverflow { .. }
                | Error::Diverged { .. }
        )
    }
}
