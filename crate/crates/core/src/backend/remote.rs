//! HTTP adapter for OpenAI-compatible inference servers.
//!
//! Scoring uses the legacy completions endpoint with `echo: true`,
//! `logprobs: 1` and `max_tokens: 0`, which returns the prompt's own tokens
//! with their log-probabilities and `text_offset`s. Generation uses the chat
//! completions endpoint.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{select_span, BackendDescriptor, BackendKind, EchoScoreRequest, LanguageModel};
use crate::error::{BackendError, Error, Result};
use crate::model::TokenLogprob;

pub const DEFAULT_CONCURRENCY: usize = 4;
pub const API_KEY_ENV: &str = "OSST_API_KEY";

/// Request params that configure the adapter itself and are never forwarded.
const LOCAL_PARAMS: &[&str] = &["text_offset_unit", "concurrency"];

/// Exponential backoff on transport errors, 5xx and 429.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Wait before retry number `attempt` (0-based). A server-provided
    /// `Retry-After` replaces the backoff; both are capped at `max_delay`.
    pub fn delay(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let backoff = retry_after.unwrap_or_else(|| {
            self.base_delay
                .checked_mul(1u32.checked_shl(attempt).unwrap_or(u32::MAX))
                .unwrap_or(self.max_delay)
        });
        backoff.min(self.max_delay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OffsetUnit {
    /// Unicode scalar values, as reported by Python-based servers.
    Chars,
    Bytes,
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Limiter {
    available: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            available: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.released.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.released.notify_one();
    }
}

pub struct RemoteModel {
    descriptor: BackendDescriptor,
    agent: ureq::Agent,
    api_key: Option<String>,
    retry: RetryPolicy,
    limiter: Limiter,
    concurrency: usize,
    offset_unit: OffsetUnit,
}

impl std::fmt::Debug for RemoteModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteModel")
            .field("descriptor", &self.descriptor)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("retry", &self.retry)
            .field("concurrency", &self.concurrency)
            .finish()
    }
}

impl RemoteModel {
    /// Builds the adapter; the bearer token comes from `OSST_API_KEY` when set.
    pub fn new(descriptor: BackendDescriptor) -> Result<Self> {
        descriptor.validate()?;
        if descriptor.backend_kind != BackendKind::RemoteHttp {
            return Err(Error::invalid("RemoteModel needs a remote_http descriptor"));
        }
        let offset_unit = match descriptor
            .request_params
            .get("text_offset_unit")
            .and_then(Value::as_str)
        {
            None | Some("chars") => OffsetUnit::Chars,
            Some("bytes") => OffsetUnit::Bytes,
            Some(other) => {
                return Err(Error::invalid(format!(
                    "text_offset_unit must be `chars` or `bytes`, got `{other}`"
                )))
            }
        };
        let concurrency = descriptor
            .request_params
            .get("concurrency")
            .and_then(Value::as_u64)
            .map_or(DEFAULT_CONCURRENCY, |n| n as usize)
            .max(1);
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build();
        Ok(RemoteModel {
            descriptor,
            agent: ureq::Agent::new_with_config(config),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry: RetryPolicy::default(),
            limiter: Limiter::new(concurrency),
            concurrency,
            offset_unit,
        })
    }

    pub fn with_api_key(mut self, api_key: Option<String>) -> Self {
        self.api_key = api_key;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self.limiter = Limiter::new(self.concurrency);
        self
    }

    fn url(&self, path: &str) -> String {
        let base = self.descriptor.endpoint.as_deref().unwrap_or_default();
        format!("{}/{}", base.trim_end_matches('/'), path)
    }

    fn post_once(&self, url: &str, body: &str) -> Result<Value, BackendError> {
        let mut request = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| BackendError::MalformedResponse(format!("invalid JSON: {e}"))),
            429 | 500..=599 => Err(BackendError::Status {
                status,
                body: text,
                retry_after,
            }),
            _ => Err(BackendError::InvalidRequest(format!("HTTP {status}: {text}"))),
        }
    }

    fn post_json(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = self.url(path);
        let body = body.to_string();
        let _permit = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            match self.post_once(&url, &body) {
                Err(err) if err.is_retryable() && attempt + 1 < self.retry.max_attempts => {
                    let retry_after = match &err {
                        BackendError::Status { retry_after, .. } => *retry_after,
                        _ => None,
                    };
                    let wait = self.retry.delay(attempt, retry_after);
                    log::warn!("{url}: {err}; retrying in {wait:?}");
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// Request body for echo scoring.
    pub fn completions_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.descriptor.model_id,
            "prompt": prompt,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 1,
        })
    }

    /// Request body for generation: forwarded request params, temperature defaulting to 0.
    pub fn chat_body(&self, instruction_prompt: &str) -> Value {
        let mut body = Map::new();
        for (k, v) in &self.descriptor.request_params {
            if !LOCAL_PARAMS.contains(&k.as_str()) {
                body.insert(k.clone(), v.clone());
            }
        }
        body.entry("temperature").or_insert(json!(0.0));
        body.insert("model".into(), json!(self.descriptor.model_id));
        body.insert(
            "messages".into(),
            json!([{ "role": "user", "content": instruction_prompt }]),
        );
        Value::Object(body)
    }

    fn parse_echo(&self, prompt: &str, response: &Value) -> Result<Vec<TokenLogprob>, BackendError> {
        let logprobs = response
            .pointer("/choices/0/logprobs")
            .filter(|v| !v.is_null())
            .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].logprobs".into()))?;
        let tokens = logprobs
            .get("tokens")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::MalformedResponse("missing logprobs.tokens".into()))?;
        let values = logprobs
            .get("token_logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::MalformedResponse("missing logprobs.token_logprobs".into()))?;
        let offsets = logprobs
            .get("text_offset")
            .and_then(Value::as_array)
            .ok_or(BackendError::MissingOffsets)?;
        if tokens.len() != values.len() || tokens.len() != offsets.len() {
            return Err(BackendError::MalformedResponse(format!(
                "length mismatch: {} tokens, {} logprobs, {} offsets",
                tokens.len(),
                values.len(),
                offsets.len()
            )));
        }

        let mut byte_offsets = Vec::with_capacity(offsets.len());
        for raw in offsets {
            let raw = raw
                .as_u64()
                .ok_or_else(|| BackendError::MalformedResponse(format!("bad text_offset {raw}")))?
                as usize;
            let byte = match self.offset_unit {
                OffsetUnit::Bytes => Some(raw).filter(|&b| prompt.is_char_boundary(b)),
                OffsetUnit::Chars => prompt
                    .char_indices()
                    .map(|(b, _)| b)
                    .chain(std::iter::once(prompt.len()))
                    .nth(raw),
            }
            .filter(|&b| b < prompt.len())
            .ok_or_else(|| {
                BackendError::MalformedResponse(format!("text_offset {raw} outside the prompt"))
            })?;
            if byte_offsets.last().is_some_and(|&prev| byte <= prev) {
                return Err(BackendError::MalformedResponse(
                    "text_offset values are not strictly increasing".into(),
                ));
            }
            byte_offsets.push(byte);
        }

        let mut out = Vec::with_capacity(tokens.len());
        for (i, &start) in byte_offsets.iter().enumerate() {
            let end = byte_offsets.get(i + 1).copied().unwrap_or(prompt.len());
            // null (first token) becomes NaN and is rejected if it falls in the span
            let logprob = values[i].as_f64().unwrap_or(f64::NAN);
            out.push(TokenLogprob {
                token_text: prompt[start..end].to_string(),
                logprob,
                byte_offset: start,
            });
        }
        Ok(out)
    }
}

impl LanguageModel for RemoteModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn echo_score(&self, req: &EchoScoreRequest) -> Result<Vec<TokenLogprob>, BackendError> {
        let response = self.post_json("completions", &self.completions_body(req.full_prompt()))?;
        let tokens = self.parse_echo(req.full_prompt(), &response)?;
        select_span(tokens, req.score_span())
    }

    fn generate(&self, instruction_prompt: &str) -> Result<String, BackendError> {
        let response = self.post_json("chat/completions", &self.chat_body(instruction_prompt))?;
        let content = response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                BackendError::MalformedResponse("missing choices[0].message.content".into())
            })?;
        if content.trim().is_empty() {
            return Err(BackendError::EmptyOutput);
        }
        Ok(content.to_string())
    }

    fn concurrency_limit(&self) -> usize {
        self.concurrency
    }
}
