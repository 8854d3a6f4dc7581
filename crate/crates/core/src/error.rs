use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by language-model adapters.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),

    #[error("server returned HTTP {status}: {body}")]
    Status {
        status: u16,
        body: String,
        retry_after: Option<Duration>,
    },

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error(
        "server response carries no token offsets; score with an inference server \
         that returns `text_offset` for echoed prompts"
    )]
    MissingOffsets,

    #[error("malformed server response: {0}")]
    MalformedResponse(String),

    #[error("invalid score span {start}..{end} for a prompt of {len} bytes")]
    InvalidSpan { start: usize, end: usize, len: usize },

    #[error("no tokens start inside the score span")]
    EmptySpan,

    #[error("non-finite log-probability {value} for token {token:?}")]
    NonFinite { token: String, value: f64 },

    #[error("operation `{operation}` is not supported by backend `{model_id}`")]
    Unsupported { operation: String, model_id: String },

    #[error("backend returned empty output")]
    EmptyOutput,
}

impl BackendError {
    /// Transport failures, 5xx and 429 are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("neutralization of `{doc_id}` failed: {reason}")]
    NeutralizationFailed { doc_id: String, reason: String },

    #[error("{failed} of {total} documents failed to neutralize")]
    BatchFailed {
        failed: usize,
        total: usize,
        outcome: Box<crate::neutralizer::CorpusNeutralization>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Whether the failure originated in a language-model backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Backend(_) | Error::NeutralizationFailed { .. } | Error::BatchFailed { .. }
        )
    }
}
