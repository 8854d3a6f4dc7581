//! Evaluation metrics and the token-position diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TransferScore;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{a} predictions for {b} gold labels")));
    }
    if a == 0 {
        return Err(Error::invalid("metric over an empty set"));
    }
    Ok(())
}

pub fn accuracy<T: PartialEq>(predictions: &[T], gold: &[T]) -> Result<f64> {
    check_lengths(predictions.len(), gold.len())?;
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / gold.len() as f64)
}

/// `1 - (r - 1) / (n - 1)` for the 1-based position `r` of `gold` in `ranking`;
/// `1.0` when there is a single candidate.
pub fn normalized_rank<S: AsRef<str>>(ranking: &[S], gold: &str, n_candidates: usize) -> Result<f64> {
    let position = ranking
        .iter()
        .position(|a| a.as_ref() == gold)
        .ok_or_else(|| Error::invalid(format!("gold author `{gold}` missing from ranking")))?;
    let r = position + 1;
    if n_candidates == 0 || r > n_candidates {
        return Err(Error::invalid(format!(
            "rank {r} out of range for {n_candidates} candidates"
        )));
    }
    if n_candidates == 1 {
        return Ok(1.0);
    }
    Ok(1.0 - (r - 1) as f64 / (n_candidates - 1) as f64)
}

/// Binary confusion counts with `true` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_decisions(decisions: &[bool], gold: &[bool]) -> Result<Self> {
        check_lengths(decisions.len(), gold.len())?;
        let mut c = Confusion::default();
        for (&d, &g) in decisions.iter().zip(gold) {
            match (d, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// F1 of the positive class; 0 when precision + recall is 0.
    pub fn f1_positive(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }

    /// F1 of the negative class.
    pub fn f1_negative(&self) -> f64 {
        f1(self.tn, self.fn_, self.fp)
    }

    pub fn macro_f1(&self) -> f64 {
        0.5 * (self.f1_positive() + self.f1_negative())
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Unweighted mean of the per-class F1 scores for a binary task.
pub fn binary_macro_f1(decisions: &[bool], gold: &[bool]) -> Result<f64> {
    Ok(Confusion::from_decisions(decisions, gold)?.macro_f1())
}

pub fn f1_positive(decisions: &[bool], gold: &[bool]) -> Result<f64> {
    Ok(Confusion::from_decisions(decisions, gold)?.f1_positive())
}

/// Median normalized token log-probability per target position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionProfile {
    /// `None` where no aligned sample reaches the position.
    pub medians: Vec<Option<f64>>,
    /// Number of aligned samples contributing at each position.
    pub counts: Vec<usize>,
    pub n_samples: usize,
    /// Pairs skipped because their tokenizations disagree.
    pub skipped: usize,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    })
}

/// For each position `p < max_position`, the median over samples of
/// `one_shot[p] - zero_shot[p]`. Pairs whose token counts over the span
/// differ cannot be aligned and are skipped.
pub fn position_profile(pairs: &[(TransferScore, TransferScore)], max_position: usize) -> Result<PositionProfile> {
    if pairs.is_empty() {
        return Err(Error::invalid("position profile needs at least one sample"));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); max_position];
    let mut skipped = 0;
    for (one_shot, zero_shot) in pairs {
        if one_shot.token_logprobs.len() != zero_shot.token_logprobs.len() {
            skipped += 1;
            continue;
        }
        for (p, (a, b)) in one_shot
            .token_logprobs
            .iter()
            .zip(&zero_shot.token_logprobs)
            .take(max_position)
            .enumerate()
        {
            columns[p].push(a.logprob - b.logprob);
        }
    }
    let counts = columns.iter().map(Vec::len).collect();
    let medians = columns.iter_mut().map(|c| median(c)).collect();
    Ok(PositionProfile {
        medians,
        counts,
        n_samples: pairs.len() - skipped,
        skipped,
    })
}
