//! Neutral-style rewrites of documents.
//!
//! Remote backends are prompted with a versioned instruction template.
//! Offline backends cannot generate, so they get a deterministic rule-based
//! rewrite instead. Either way the result is cached under the generator
//! fingerprint and the document's content hash.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{BackendKind, LanguageModel};
use crate::error::{BackendError, Error, Result};
use crate::model::{content_hash, Corpus, Document, NeutralizationRecord};
use crate::store::{cache_key, Store};

pub const DEFAULT_TEMPLATE_VERSION: &str = "v1";

const TEMPLATE_V1: &str = "\
Rewrite the text below in a plain, neutral style. Keep its meaning, content \
and approximate length, and change only the style: use simple standard \
wording, regular punctuation and no distinctive vocabulary, spelling, \
formatting or tone. Reply with the rewritten text only, without any \
introduction or comment.

Text:
{text}

Rewritten text:";

/// Neutral output longer than this multiple of the input (in characters) is rejected.
pub const MAX_LENGTH_RATIO: usize = 4;

/// Generation attempts per document when the model returns empty output.
const MAX_GENERATION_ATTEMPTS: u32 = 3;

/// Share of failed documents above which a corpus batch fails.
const MAX_FAILURE_RATE: f64 = 0.10;

/// Renders the instruction prompt for a text.
pub fn instruction_prompt(template_version: &str, text: &str) -> Result<String> {
    match template_version {
        "v1" => Ok(TEMPLATE_V1.replacen("{text}", text, 1)),
        other => Err(Error::invalid(format!("unknown neutralization template `{other}`"))),
    }
}

/// Lowercases, drops punctuation except sentence-final periods and collapses
/// whitespace. A period is sentence-final when followed by whitespace or the
/// end of the text.
pub fn rule_based_neutral(text: &str) -> String {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut kept = String::with_capacity(lower.len());
    for (i, &c) in chars.iter().enumerate() {
        let final_period = c == '.' && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if c.is_alphanumeric() || c.is_whitespace() || final_period {
            kept.push(c);
        }
    }
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Request params that change what the generator writes.
fn sampling_params(params: &BTreeMap<String, Value>) -> BTreeMap<String, Value> {
    let mut out: BTreeMap<String, Value> = params
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "text_offset_unit" | "concurrency"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    out.entry("temperature".into()).or_insert(json!(0.0));
    out
}

/// Hash of backend kind, model, template version and sampling params.
pub fn generator_fingerprint(backend: &dyn LanguageModel, template_version: &str) -> String {
    let d = backend.descriptor();
    let method = match d.backend_kind {
        BackendKind::OfflineNgram => "rule_based",
        BackendKind::RemoteHttp => "generate",
    };
    let canonical = json!({
        "backend_kind": d.backend_kind,
        "model_id": d.model_id,
        "method": method,
        "template_version": template_version,
        "sampling": sampling_params(&d.request_params),
    });
    content_hash(&canonical.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralizationFailure {
    pub doc_id: String,
    pub error: String,
}

/// Per-document outcome of a batch run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusNeutralization {
    pub records: BTreeMap<String, NeutralizationRecord>,
    pub failures: Vec<NeutralizationFailure>,
}

pub struct Neutralizer<'a> {
    backend: &'a dyn LanguageModel,
    store: &'a Store,
    template_version: String,
    fingerprint: String,
}

impl<'a> Neutralizer<'a> {
    pub fn new(backend: &'a dyn LanguageModel, store: &'a Store, template_version: &str) -> Result<Self> {
        // reject unknown templates up front
        instruction_prompt(template_version, "")?;
        Ok(Neutralizer {
            backend,
            store,
            template_version: template_version.to_string(),
            fingerprint: generator_fingerprint(backend, template_version),
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn template_version(&self) -> &str {
        &self.template_version
    }

    pub fn neutralize(&self, doc: &Document) -> Result<NeutralizationRecord> {
        if doc.text.is_empty() {
            return Err(Error::invalid(format!("document `{}` has empty text", doc.id)));
        }
        let key = cache_key("neutralize", &[&self.fingerprint, &content_hash(&doc.text)]);
        if let Some(mut cached) = self.store.get::<NeutralizationRecord>(&key)? {
            cached.doc_id = doc.id.clone();
            return Ok(cached);
        }
        let neutral_text = match self.backend.descriptor().backend_kind {
            BackendKind::OfflineNgram => {
                let neutral = rule_based_neutral(&doc.text);
                if neutral.is_empty() {
                    return Err(Error::NeutralizationFailed {
                        doc_id: doc.id.clone(),
                        reason: "rule-based rewrite left no text".into(),
                    });
                }
                neutral
            }
            BackendKind::RemoteHttp => self.generate(doc)?,
        };
        let record = NeutralizationRecord {
            doc_id: doc.id.clone(),
            neutral_text,
            generator_fingerprint: self.fingerprint.clone(),
        };
        self.store.put(&key, "neutralize", &record)?;
        Ok(record)
    }

    fn generate(&self, doc: &Document) -> Result<String> {
        let prompt = instruction_prompt(&self.template_version, &doc.text)?;
        let limit = MAX_LENGTH_RATIO * doc.text.chars().count();
        let fail = |reason: String| Error::NeutralizationFailed {
            doc_id: doc.id.clone(),
            reason,
        };
        let mut too_long = 0;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.backend.generate(&prompt) {
                Ok(out) => {
                    let out = out.trim();
                    if out.is_empty() {
                        if attempts >= MAX_GENERATION_ATTEMPTS {
                            return Err(fail("empty output".into()));
                        }
                    } else if out.chars().count() > limit {
                        too_long += 1;
                        if too_long > 1 {
                            return Err(fail(format!(
                                "output too long twice ({} chars, limit {limit})",
                                out.chars().count()
                            )));
                        }
                    } else {
                        return Ok(out.to_string());
                    }
                }
                Err(BackendError::EmptyOutput) if attempts < MAX_GENERATION_ATTEMPTS => {}
                Err(BackendError::EmptyOutput) => return Err(fail("empty output".into())),
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Neutralizes every document, fanning out in parallel. Each record is
    /// cached as soon as it is produced, so an interrupted run resumes from
    /// the cache. Fails when more than 10% of documents fail; the error
    /// carries the partial outcome.
    pub fn neutralize_corpus(&self, corpus: &Corpus) -> Result<CorpusNeutralization> {
        let results: Vec<(String, Result<NeutralizationRecord>)> = corpus
            .documents
            .par_iter()
            .map(|doc| (doc.id.clone(), self.neutralize(doc)))
            .collect();
        let mut outcome = CorpusNeutralization::default();
        for (doc_id, result) in results {
            match result {
                Ok(record) => {
                    outcome.records.insert(doc_id, record);
                }
                Err(e) => {
                    log::warn!("neutralization of `{doc_id}` failed: {e}");
                    outcome.failures.push(NeutralizationFailure {
                        doc_id,
                        error: e.to_string(),
                    });
                }
            }
        }
        let total = corpus.documents.len();
        let failed = outcome.failures.len();
        if total > 0 && failed as f64 > MAX_FAILURE_RATE * total as f64 {
            return Err(Error::BatchFailed {
                failed,
                total,
                outcome: Box::new(outcome),
            });
        }
        Ok(outcome)
    }
}
