use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("transport error: {0}")]
    Transport(String),

    /// A fetch that was intentionally not attempted (blocked domain, robots.txt).
    #[error("skipped {url}: {reason}")]
    Skipped { url: String, reason: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("span not projectable: {0}")]
    NotProjectable(String),

    #[error("extraction failed for query {query_id}: {message}")]
    Extraction { query_id: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("invalid proposal {id}: {reason}")]
    InvalidProposal { id: String, reason: String },

    #[error("missing upstream artifact {}: run `{producer}` first", path.display())]
    UpstreamMissing { path: PathBuf, producer: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
