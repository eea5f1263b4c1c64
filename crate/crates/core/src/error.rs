use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum GrouError {
    #[error("index out of range: {0}")]
    Index(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("process is not stationary: {0}")]
    Stationarity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("not enough observations: {0}")]
    Length(String),

    #[error("invalid noise specification: {0}")]
    Spec(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("pre-averaging window error: {0}")]
    Window(String),

    #[error("ingestion failed: {0}")]
    Ingestion(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl GrouError {
    /// Broad class of the failure, used for CLI exit codes.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            GrouError::Config(_) | GrouError::Format(_) | GrouError::Io { .. } | GrouError::Index(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        GrouError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, GrouError>;
