//! OSST and its normalized variants.
//!
//! Every score is a mean per-token natural-log probability of the styled
//! target span, so differences between scores are per-token quantities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{EchoScoreRequest, LanguageModel};
use crate::error::{Error, Result};
use crate::model::{content_hash, NeutralizedText, ScoreTable, TransferScore};
use crate::prompting::{build_one_shot, build_zero_shot, TransferPrompt, LAYOUT_VERSION};
use crate::store::{cache_key, Store};

/// How a raw OSST value is normalized before comparing across targets.
#[derive(Debug, Clone, Copy)]
pub enum Normalization<'a> {
    /// Subtract the zero-shot log-probability of the target.
    ZeroShot,
    /// Subtract the mean OSST of the target over fixed anchor texts.
    Anchors(&'a [NeutralizedText]),
}

/// Which value fills a score table cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    Osst,
    NosstZs,
    NosstRs,
}

pub struct Scorer<'a> {
    backend: &'a dyn LanguageModel,
    store: &'a Store,
    backend_fingerprint: String,
}

impl<'a> Scorer<'a> {
    pub fn new(backend: &'a dyn LanguageModel, store: &'a Store) -> Self {
        Scorer {
            backend,
            store,
            backend_fingerprint: backend.descriptor().fingerprint(),
        }
    }

    pub fn backend(&self) -> &dyn LanguageModel {
        self.backend
    }

    fn score_prompt(
        &self,
        key: &str,
        prompt: TransferPrompt,
        target: &NeutralizedText,
        conditioning: Option<&NeutralizedText>,
    ) -> Result<TransferScore> {
        let conditioning_id = conditioning.map(|c| c.id().to_string());
        if let Some(mut cached) = self.store.get::<TransferScore>(key)? {
            cached.target_doc_id = target.id().to_string();
            cached.conditioning_doc_id = conditioning_id;
            return Ok(cached);
        }
        let req = EchoScoreRequest::new(prompt.full_text, prompt.target_span)?;
        let tokens = self.backend.echo_score(&req)?;
        let score = TransferScore::new(target.id(), conditioning_id, tokens)?;
        self.store.put(key, "transfer_score", &score)?;
        Ok(score)
    }

    /// `OSST(target | conditioning)`.
    pub fn osst(&self, conditioning: &NeutralizedText, target: &NeutralizedText) -> Result<TransferScore> {
        let (fc, ft) = (
            &conditioning.record().generator_fingerprint,
            &target.record().generator_fingerprint,
        );
        if fc != ft {
            return Err(Error::invalid(format!(
                "`{}` and `{}` were neutralized by different generators",
                conditioning.id(),
                target.id()
            )));
        }
        let key = cache_key(
            "osst",
            &[
                &self.backend_fingerprint,
                LAYOUT_VERSION,
                &content_hash(conditioning.text()),
                &content_hash(conditioning.neutral_text()),
                fc,
                &content_hash(target.text()),
                &content_hash(target.neutral_text()),
                ft,
            ],
        );
        self.score_prompt(&key, build_one_shot(conditioning, target), target, Some(conditioning))
    }

    /// Log-probability of the target given only its neutral version.
    pub fn zero_shot(&self, target: &NeutralizedText) -> Result<TransferScore> {
        let key = cache_key(
            "zero_shot",
            &[
                &self.backend_fingerprint,
                LAYOUT_VERSION,
                &content_hash(target.text()),
                &content_hash(target.neutral_text()),
                &target.record().generator_fingerprint,
            ],
        );
        self.score_prompt(&key, build_zero_shot(target), target, None)
    }

    pub fn nosst_zs(&self, conditioning: &NeutralizedText, target: &NeutralizedText) -> Result<f64> {
        Ok(self.osst(conditioning, target)?.mean_logprob - self.zero_shot(target)?.mean_logprob)
    }

    pub fn nosst_rs(
        &self,
        conditioning: &NeutralizedText,
        target: &NeutralizedText,
        anchors: &[NeutralizedText],
    ) -> Result<f64> {
        if anchors.is_empty() {
            return Err(Error::invalid("nOSST-RS needs at least one anchor"));
        }
        if let Some(a) = anchors
            .iter()
            .find(|a| a.id() == target.id() || a.id() == conditioning.id())
        {
            return Err(Error::invalid(format!(
                "anchor `{}` coincides with a scored text",
                a.id()
            )));
        }
        let osst = self.osst(conditioning, target)?.mean_logprob;
        let mut sum = 0.0;
        for anchor in anchors {
            sum += self.osst(anchor, target)?.mean_logprob;
        }
        Ok(osst - sum / anchors.len() as f64)
    }

    pub fn normalized(
        &self,
        conditioning: &NeutralizedText,
        target: &NeutralizedText,
        normalization: Normalization<'_>,
    ) -> Result<f64> {
        match normalization {
            Normalization::ZeroShot => self.nosst_zs(conditioning, target),
            Normalization::Anchors(anchors) => self.nosst_rs(conditioning, target, anchors),
        }
    }

    /// Mean of both directional normalized scores.
    pub fn symmetric_score(
        &self,
        t1: &NeutralizedText,
        t2: &NeutralizedText,
        normalization: Normalization<'_>,
    ) -> Result<f64> {
        let forward = self.normalized(t1, t2, normalization)?;
        let backward = self.normalized(t2, t1, normalization)?;
        Ok(0.5 * (forward + backward))
    }

    /// Raw OSST table: `values[i][j] = OSST(targets[i] | candidates[j])`.
    pub fn score_table(&self, targets: &[NeutralizedText], candidates: &[NeutralizedText]) -> Result<ScoreTable> {
        self.score_table_with(targets, candidates, None)
    }

    /// Score table whose cells are raw (`None`) or normalized OSST values.
    pub fn score_table_with(
        &self,
        targets: &[NeutralizedText],
        candidates: &[NeutralizedText],
        normalization: Option<Normalization<'_>>,
    ) -> Result<ScoreTable> {
        let n_cols = candidates.len();
        let cells: Vec<f64> = (0..targets.len() * n_cols)
            .into_par_iter()
            .map(|cell| {
                let (target, candidate) = (&targets[cell / n_cols], &candidates[cell % n_cols]);
                match normalization {
                    None => self.osst(candidate, target).map(|s| s.mean_logprob),
                    Some(n) => self.normalized(candidate, target, n),
                }
            })
            .collect::<Result<_>>()?;
        let values = if n_cols == 0 {
            vec![Vec::new(); targets.len()]
        } else {
            cells.chunks(n_cols).map(<[f64]>::to_vec).collect()
        };
        ScoreTable::new(
            targets.iter().map(|t| t.id().to_string()).collect(),
            candidates.iter().map(|c| c.id().to_string()).collect(),
            values,
        )
    }
}
