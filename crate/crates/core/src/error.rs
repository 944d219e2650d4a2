use thiserror::Error;

/// Errors raised anywhere in the screening toolkit.
///
/// The variants map onto process exit codes in the CLI and onto HTTP status
/// codes in the advisor service.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller handed in arguments that violate a precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// An experiment or campaign configuration is malformed.
    #[error("configuration error: {0}")]
    Config(String),
    /// A dataset or log file is malformed or inconsistent.
    #[error("data error: {0}")]
    Data(String),
    /// A factorization or solve failed.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A referenced arm or campaign does not exist.
    #[error("not found: {0}")]
    NotFound(String),
    /// The request conflicts with recorded state (e.g. a repeated observation).
    #[error("conflict: {0}")]
    Conflict(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Data(format!("{other:?}")),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Config(err.to_string())
    }
}
