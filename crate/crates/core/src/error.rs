//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration value is missing, malformed or out of range.
    #[error("config error: {0}")]
    Config(String),

    /// Input data is malformed or cannot support the requested computation.
    #[error("data error: {0}")]
    Data(String),

    /// A lookup hit a cell or entry that has no supporting data.
    #[error("missing data: {0}")]
    MissingData(String),

    /// The training objective has no unique optimum (e.g. single-class labels).
    #[error("unlearnable objective: {0}")]
    Unlearnable(String),

    /// A linear system could not be solved.
    #[error("singular system: {0}")]
    Singular(String),

    /// A structural requirement on an enumerable model failed.
    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True when the error stems from configuration rather than data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
