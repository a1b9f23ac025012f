use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: constraint violation: {msg}")]
    Constraint {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty training mask")]
    EmptyTrainMask,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("node index {index} out of range (n = {n})")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("internal consistency: {0}")]
    Inconsistent(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}
