use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate hypergraph: {0}")]
    DegenerateHypergraph(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("no eligible feature cell left to select")]
    SelectionExhausted,

    #[error("cell ({node}, {feature}) holds {value}, which is not binary")]
    ModeMismatch { node: usize, feature: usize, value: f64 },

    #[error("cell ({node}, {feature}) has already been modified")]
    AlreadyTouched { node: usize, feature: usize },

    #[error("all {0} repeats failed; first failure: {1}")]
    AllRepeatsFailed(usize, String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: shape mismatch: {msg}", path.display())]
    Shape { path: PathBuf, msg: String },

    #[error("{}: non-binary value {value} at ({row}, {col}) in a discrete dataset", path.display())]
    NonBinary {
        path: PathBuf,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Whether the error stems from user-supplied configuration rather than
    /// a failure while running.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParameter(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
