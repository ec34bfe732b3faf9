use thiserror::Error;

/// Errors raised by the modelling, solver, tuning and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("column {0} has zero median absolute deviation")]
    ZeroMadColumn(usize),

    #[error("restricted design matrix is rank deficient")]
    RankDeficient,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("candidate ensemble is empty")]
    EmptyEnsemble,

    #[error("node has no undecided indicator")]
    NoUndecided,

    #[error("fold too small: {0}")]
    FoldTooSmall(String),

    #[error("invalid config at `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("{0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
