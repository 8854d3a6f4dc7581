//! Language-model adapters.
//!
//! Every backend answers two questions: how likely is each token of a
//! caller-supplied string (echo scoring), and what does the model write for
//! an instruction (generation, used for neutral rewrites). Log-probabilities
//! are natural-log at this boundary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error, Result};
use crate::model::{content_hash, ByteSpan, TokenLogprob};

mod ngram;
mod remote;
mod uniform;

pub use ngram::{train_offline, NgramModel, NgramOptions, MAX_ORDER};
pub use remote::{RemoteModel, RetryPolicy, DEFAULT_CONCURRENCY};
pub use uniform::UniformModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteHttp,
    OfflineNgram,
}

/// Identity and request configuration of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_kind: BackendKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub request_params: BTreeMap<String, serde_json::Value>,
}

impl BackendDescriptor {
    pub fn remote(model_id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        BackendDescriptor {
            backend_kind: BackendKind::RemoteHttp,
            model_id: model_id.into(),
            endpoint: Some(endpoint.into()),
            request_params: BTreeMap::new(),
        }
    }

    pub fn offline(model_id: impl Into<String>) -> Self {
        BackendDescriptor {
            backend_kind: BackendKind::OfflineNgram,
            model_id: model_id.into(),
            endpoint: None,
            request_params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: serde_json::Value) -> Self {
        self.request_params.insert(key.into(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.backend_kind, &self.endpoint) {
            (BackendKind::RemoteHttp, None) => {
                Err(Error::invalid("remote_http backend requires an endpoint"))
            }
            (BackendKind::OfflineNgram, Some(_)) => {
                Err(Error::invalid("offline_ngram backend must not set an endpoint"))
            }
            _ if self.model_id.is_empty() => Err(Error::invalid("model_id must not be empty")),
            _ => Ok(()),
        }
    }

    /// Stable hash of the full descriptor. Field order is fixed by the struct and
    /// `request_params` is a sorted map, so the JSON form is canonical.
    pub fn fingerprint(&self) -> String {
        content_hash(&serde_json::to_string(self).expect("descriptor serializes"))
    }
}

/// Echo-scoring request: score the tokens of `full_prompt` that start inside `score_span`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EchoScoreRequest {
    full_prompt: String,
    score_span: ByteSpan,
}

impl EchoScoreRequest {
    pub fn new(full_prompt: impl Into<String>, score_span: ByteSpan) -> Result<Self, BackendError> {
        let full_prompt = full_prompt.into();
        let invalid = || BackendError::InvalidSpan {
            start: score_span.start,
            end: score_span.end,
            len: full_prompt.len(),
        };
        if score_span.is_empty()
            || score_span.end > full_prompt.len()
            || !full_prompt.is_char_boundary(score_span.start)
            || !full_prompt.is_char_boundary(score_span.end)
        {
            return Err(invalid());
        }
        Ok(EchoScoreRequest {
            full_prompt,
            score_span,
        })
    }

    pub fn full_prompt(&self) -> &str {
        &self.full_prompt
    }

    pub fn score_span(&self) -> ByteSpan {
        self.score_span
    }
}

/// A causal language model reachable for scoring and generation.
pub trait LanguageModel: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Log-probabilities of every token whose start offset lies inside the span.
    fn echo_score(&self, req: &EchoScoreRequest) -> Result<Vec<TokenLogprob>, BackendError>;

    /// Free-form generation for an instruction prompt.
    fn generate(&self, instruction_prompt: &str) -> Result<String, BackendError>;

    /// Upper bound on simultaneous requests worth issuing.
    fn concurrency_limit(&self) -> usize {
        usize::MAX
    }
}

/// Keeps the tokens whose start offset falls inside `span`; rejects an empty selection
/// and non-finite values.
pub(crate) fn select_span(
    tokens: Vec<TokenLogprob>,
    span: ByteSpan,
) -> Result<Vec<TokenLogprob>, BackendError> {
    let selected: Vec<TokenLogprob> = tokens
        .into_iter()
        .filter(|t| span.contains(t.byte_offset))
        .collect();
    if selected.is_empty() {
        return Err(BackendError::EmptySpan);
    }
    if let Some(bad) = selected.iter().find(|t| !t.logprob.is_finite()) {
        return Err(BackendError::NonFinite {
            token: bad.token_text.clone(),
            value: bad.logprob,
        });
    }
    Ok(selected)
}

/// Splits a string into per-character tokens carrying their byte offsets.
pub(crate) fn char_tokens(text: &str) -> impl Iterator<Item = (usize, char)> + '_ {
    text.char_indices()
}
