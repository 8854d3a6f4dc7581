//! Exact threshold sweep for binary decisions `score >= threshold`.
//!
//! Candidate thresholds are `-inf`, the midpoint between every pair of
//! consecutive distinct scores, and `+inf`. Together they realize every
//! distinct decision vector, so the sweep is exhaustive. Ties in the
//! objective go to the smallest threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Confusion;
use crate::model::CalibrationResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean of positive- and negative-class F1.
    #[default]
    #[serde(alias = "binary_macro_f1")]
    MacroF1,
    F1Positive,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::MacroF1 => "macro_f1",
            Objective::F1Positive => "f1_positive",
        }
    }

    pub fn evaluate(self, counts: &Confusion) -> f64 {
        match self {
            Objective::MacroF1 => counts.macro_f1(),
            Objective::F1Positive => counts.f1_positive(),
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro_f1" | "binary_macro_f1" => Ok(Objective::MacroF1),
            "f1_positive" => Ok(Objective::F1Positive),
            other => Err(Error::invalid(format!("unknown objective `{other}`"))),
        }
    }
}

/// A threshold strictly between `lo` and `hi` when one is representable, else `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo / 2.0 + hi / 2.0;
    if m > lo && m <= hi {
        m
    } else {
        hi
    }
}

/// Finds the threshold maximizing `objective` over labeled scores.
pub fn calibrate(scores: &[f64], labels: &[bool], objective: Objective) -> Result<CalibrationResult> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::invalid("calibration set is empty"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite calibration score {s}")));
    }

    let mut order: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    // everything accepted at -inf
    let positives = labels.iter().filter(|&&l| l).count();
    let mut counts = Confusion {
        tp: positives,
        fp: labels.len() - positives,
        fn_: 0,
        tn: 0,
    };
    let mut best = (f64::NEG_INFINITY, objective.evaluate(&counts));
    let mut n_candidates = 1;
    let mut n_optimal = 1;

    let mut i = 0;
    while i < order.len() {
        let value = order[i].0;
        // reject the whole group of equal scores
        while i < order.len() && order[i].0 == value {
            if order[i].1 {
                counts.tp -= 1;
                counts.fn_ += 1;
            } else {
                counts.fp -= 1;
                counts.tn += 1;
            }
            i += 1;
        }
        let threshold = match order.get(i) {
            Some(&(next, _)) => midpoint(value, next),
            None => f64::INFINITY,
        };
        let objective_value = objective.evaluate(&counts);
        n_candidates += 1;
        if objective_value > best.1 {
            best = (threshold, objective_value);
            n_optimal = 1;
        } else if objective_value == best.1 {
            n_optimal += 1;
        }
    }

    Ok(CalibrationResult {
        threshold: best.0,
        objective_value: best.1,
        objective_name: objective.name().to_string(),
        n_calibration: scores.len(),
        n_candidates,
        n_optimal,
    })
}
