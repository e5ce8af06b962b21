use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("record `{id}`: {message}")]
    Record { id: String, message: String },

    #[error("no embedding for key `{0}`")]
    MissingEmbedding(String),

    #[error("no structural encoding for entity `{0}`")]
    MissingEncoding(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid binary file: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("request to {url} failed after {attempts} attempt(s): {message}")]
    Network {
        url: String,
        attempts: u32,
        message: String,
    },

    #[error("request to {url} returned HTTP {status} after {attempts} attempt(s)")]
    HttpStatus {
        url: String,
        status: u16,
        attempts: u32,
    },

    #[error("request to {url} timed out after {attempts} attempt(s)")]
    Timeout { url: String, attempts: u32 },

    #[error("malformed service response: {0}")]
    Protocol(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (last finite loss {last_loss})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        last_loss: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` needs `{missing}` output; run `kgrag {missing}` first")]
    Prerequisite { stage: String, missing: String },

    #[error("artifact {artifact} was built with a different configuration (expected fingerprint {expected:016x}, found {found:016x}); re-run `{rerun}`")]
    FingerprintMismatch {
        artifact: String,
        expected: u64,
        found: u64,
        rerun: String,
    },

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error came from an external HTTP service (encoder or LLM).
    pub fn is_external_service(&self) -> bool {
        matches!(
            self,
            Error::Network { .. } | Error::HttpStatus { .. } | Error::Timeout { .. } | Error::Protocol(_)
        )
    }
}
