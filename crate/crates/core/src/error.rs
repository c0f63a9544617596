use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid/domain mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("non-finite sample at replica {replica}")]
    NonFiniteSample { replica: usize },

    #[error("stability coupling violated: {0}")]
    Stability(String),

    #[error("too few replicas: {0}")]
    TooFewReplicas(String),

    #[error("mollification saturates the smallest probed scale: {0}")]
    Saturation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
