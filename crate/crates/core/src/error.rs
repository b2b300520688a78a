use thiserror::Error;

/// A point fell outside the open feasible region of a model.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain violation in block `{block}`: {reason}")]
pub struct DomainError {
    pub block: String,
    pub reason: String,
}

impl DomainError {
    pub fn new(block: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            block: block.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("invalid network: {0}")]
    Network(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema validation failed for {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
