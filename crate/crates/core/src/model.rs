//! Domain types shared by every module. No I/O and no model access here.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of a string's UTF-8 bytes.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collection_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            author_id: None,
            collection_id: None,
            lang: None,
        }
    }

    pub fn with_author(mut self, author_id: impl Into<String>) -> Self {
        self.author_id = Some(author_id.into());
        self
    }
}

/// Ordered documents plus an author index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub authors: BTreeMap<String, Vec<String>>,
}

impl Corpus {
    /// Builds the author index from each document's `author_id`.
    ///
    /// Fails on duplicate ids or empty texts.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut authors: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::data(format!("duplicate document id `{}`", doc.id)));
            }
            if doc.text.is_empty() {
                return Err(Error::data(format!("document `{}` has empty text", doc.id)));
            }
            if let Some(author) = &doc.author_id {
                authors.entry(author.clone()).or_default().push(doc.id.clone());
            }
        }
        Ok(Corpus { documents, authors })
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn author_of(&self, id: &str) -> Option<&str> {
        self.get(id).and_then(|d| d.author_id.as_deref())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Checks the author index against the document list.
    pub fn validate(&self) -> Result<()> {
        let ids: HashSet<&str> = self.documents.iter().map(|d| d.id.as_str()).collect();
        if ids.len() != self.documents.len() {
            return Err(Error::data("corpus contains duplicate document ids"));
        }
        for (author, docs) in &self.authors {
            if docs.is_empty() {
                return Err(Error::data(format!("author `{author}` has no documents")));
            }
            if let Some(missing) = docs.iter().find(|id| !ids.contains(id.as_str())) {
                return Err(Error::data(format!(
                    "author `{author}` references unknown document `{missing}`"
                )));
            }
        }
        Ok(())
    }
}

/// A document's neutral-style rewrite and the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeutralizationRecord {
    pub doc_id: String,
    pub neutral_text: String,
    pub generator_fingerprint: String,
}

/// A document paired with its neutralization; the unit every prompt is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralizedText {
    document: Document,
    neutral: NeutralizationRecord,
}

impl NeutralizedText {
    pub fn new(document: Document, neutral: NeutralizationRecord) -> Result<Self> {
        if document.text.is_empty() {
            return Err(Error::invalid(format!("document `{}` has empty text", document.id)));
        }
        if neutral.neutral_text.is_empty() {
            return Err(Error::invalid(format!(
                "neutral text for `{}` is empty",
                document.id
            )));
        }
        if neutral.doc_id != document.id {
            return Err(Error::invalid(format!(
                "neutralization record for `{}` paired with document `{}`",
                neutral.doc_id, document.id
            )));
        }
        Ok(NeutralizedText { document, neutral })
    }

    pub fn id(&self) -> &str {
        &self.document.id
    }

    pub fn text(&self) -> &str {
        &self.document.text
    }

    pub fn neutral_text(&self) -> &str {
        &self.neutral.neutral_text
    }

    pub fn document(&self) -> &Document {
        &self.document
    }

    pub fn record(&self) -> &NeutralizationRecord {
        &self.neutral
    }
}

/// Half-open byte range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ByteSpan {
    pub start: usize,
    pub end: usize,
}

impl ByteSpan {
    pub fn new(start: usize, end: usize) -> Self {
        ByteSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, offset: usize) -> bool {
        offset >= self.start && offset < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token_text: String,
    /// Natural log.
    pub logprob: f64,
    pub byte_offset: usize,
}

/// Token log-probabilities of one styled target, with their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferScore {
    pub target_doc_id: String,
    /// `None` for the zero-shot prompt.
    #[serde(default)]
    pub conditioning_doc_id: Option<String>,
    pub token_logprobs: Vec<TokenLogprob>,
    pub mean_logprob: f64,
}

impl TransferScore {
    /// Computes `mean_logprob` by left-to-right summation.
    pub fn new(
        target_doc_id: impl Into<String>,
        conditioning_doc_id: Option<String>,
        token_logprobs: Vec<TokenLogprob>,
    ) -> Result<Self> {
        if token_logprobs.is_empty() {
            return Err(Error::invalid("transfer score needs at least one token"));
        }
        let sum: f64 = token_logprobs.iter().map(|t| t.logprob).sum();
        Ok(TransferScore {
            target_doc_id: target_doc_id.into(),
            conditioning_doc_id,
            mean_logprob: sum / token_logprobs.len() as f64,
            token_logprobs,
        })
    }

    /// Joint log-probability of the span.
    pub fn sum_logprob(&self) -> f64 {
        self.token_logprobs.iter().map(|t| t.logprob).sum()
    }
}

/// Target x candidate matrix; `values[i][j]` scores target `i` conditioned on candidate `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub targets: Vec<String>,
    pub candidates: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(targets: Vec<String>, candidates: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let table = ScoreTable {
            targets,
            candidates,
            values,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.targets.len() {
            return Err(Error::data(format!(
                "score table has {} rows for {} targets",
                self.values.len(),
                self.targets.len()
            )));
        }
        for (row, id) in self.values.iter().zip(&self.targets) {
            if row.len() != self.candidates.len() {
                return Err(Error::data(format!(
                    "row `{id}` has {} values for {} candidates",
                    row.len(),
                    self.candidates.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::data(format!("row `{id}` contains non-finite value {v}")));
            }
        }
        Ok(())
    }

    pub fn row(&self, target_id: &str) -> Option<&[f64]> {
        self.targets
            .iter()
            .position(|t| t == target_id)
            .map(|i| self.values[i].as_slice())
    }
}

/// Decision threshold chosen on calibration data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// May be `-inf` (accept all) or `+inf` (reject all); serialized as strings then.
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    pub objective_value: f64,
    pub objective_name: String,
    pub n_calibration: usize,
    /// Number of thresholds evaluated by the sweep.
    pub n_candidates: usize,
    /// Number of candidates that reached the optimum.
    pub n_optimal: usize,
}

/// JSON has no infinities; encode them as `"-inf"` / `"inf"`.
pub mod threshold_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if *value == f64::INFINITY {
            serializer.serialize_str("inf")
        } else if *value == f64::NEG_INFINITY {
            serializer.serialize_str("-inf")
        } else {
            serializer.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("invalid threshold `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_score_mean() {
        let toks = vec![
            TokenLogprob { token_text: "a".into(), logprob: -1.0, byte_offset: 0 },
            TokenLogprob { token_text: "b".into(), logprob: -2.0, byte_offset: 1 },
        ];
        let s = TransferScore::new("t", None, toks).unwrap();
        assert!((s.mean_logprob + 1.5).abs() < 1e-12);
        assert!((s.sum_logprob() + 3.0).abs() < 1e-12);
        assert!(TransferScore::new("t", None, vec![]).is_err());
    }

    #[test]
    fn corpus_rejects_duplicates_and_empty_text() {
        let docs = vec![Document::new("a", "x"), Document::new("a", "y")];
        assert!(Corpus::from_documents(docs).is_err());
        assert!(Corpus::from_documents(vec![Document::new("a", "")]).is_err());
    }

    #[test]
    fn corpus_author_index() {
        let docs = vec![
            Document::new("d1", "x").with_author("A"),
            Document::new("d2", "y").with_author("B"),
            Document::new("d3", "z").with_author("A"),
            Document::new("u", "w"),
        ];
        let corpus = Corpus::from_documents(docs).unwrap();
        assert_eq!(corpus.authors["A"], vec!["d1", "d3"]);
        assert_eq!(corpus.author_of("d2"), Some("B"));
        assert_eq!(corpus.author_of("u"), None);
        corpus.validate().unwrap();
    }

    #[test]
    fn score_table_checks_shape_and_finiteness() {
        assert!(ScoreTable::new(vec!["t".into()], vec!["c".into()], vec![vec![1.0]]).is_ok());
        assert!(ScoreTable::new(vec!["t".into()], vec!["c".into()], vec![vec![1.0, 2.0]]).is_err());
        assert!(ScoreTable::new(vec!["t".into()], vec!["c".into()], vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn neutralized_text_preconditions() {
        let rec = |id: &str, t: &str| NeutralizationRecord {
            doc_id: id.into(),
            neutral_text: t.into(),
            generator_fingerprint: "fp".into(),
        };
        assert!(NeutralizedText::new(Document::new("a", "A"), rec("a", "a")).is_ok());
        assert!(NeutralizedText::new(Document::new("a", ""), rec("a", "a")).is_err());
        assert!(NeutralizedText::new(Document::new("a", "A"), rec("a", "")).is_err());
        assert!(NeutralizedText::new(Document::new("a", "A"), rec("b", "a")).is_err());
    }

    #[test]
    fn calibration_result_infinite_threshold_roundtrip() {
        for t in [f64::NEG_INFINITY, f64::INFINITY, 0.15] {
            let r = CalibrationResult {
                threshold: t,
                objective_value: 0.5,
                objective_name: "macro_f1".into(),
                n_calibration: 3,
                n_candidates: 4,
                n_optimal: 1,
            };
            let json = serde_json::to_string(&r).unwrap();
            let back: CalibrationResult = serde_json::from_str(&json).unwrap();
            assert_eq!(back, r);
        }
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn serde_roundtrip(
                id in "[a-z0-9]{1,8}",
                text in "\\PC{1,40}",
                author in proptest::option::of("[A-Z]{1,4}"),
                logprobs in proptest::collection::vec(-20.0f64..0.0, 1..10),
            ) {
                let doc = Document { id: id.clone(), text: text.clone(), author_id: author, collection_id: None, lang: Some("en".into()) };
                let back: Document = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
                prop_assert_eq!(back, doc);

                let toks: Vec<TokenLogprob> = logprobs.iter().enumerate()
                    .map(|(i, &lp)| TokenLogprob { token_text: "x".into(), logprob: lp, byte_offset: i })
                    .collect();
                let score = TransferScore::new(id.clone(), Some("c".into()), toks).unwrap();
                let back: TransferScore = serde_json::from_str(&serde_json::to_string(&score).unwrap()).unwrap();
                prop_assert_eq!(back, score);

                let table = ScoreTable::new(vec![id], vec!["c".into()], vec![vec![logprobs[0]]]).unwrap();
                let back: ScoreTable = serde_json::from_str(&serde_json::to_string(&table).unwrap()).unwrap();
                prop_assert_eq!(back, table);
            }
        }
    }
}
