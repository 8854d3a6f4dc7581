//! Same-author decisions for text pairs.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, Objective};
use crate::error::{Error, Result};
use crate::metrics::Confusion;
use crate::model::{CalibrationResult, NeutralizedText};
use crate::scoring::{Normalization, Scorer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationInstance {
    pub id: String,
    pub pair: (String, String),
    /// Same author.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

impl VerificationInstance {
    pub fn new(id: impl Into<String>, first: impl Into<String>, second: impl Into<String>, label: Option<bool>) -> Result<Self> {
        let (first, second) = (first.into(), second.into());
        if first == second {
            return Err(Error::invalid(format!("pair repeats document `{first}`")));
        }
        Ok(VerificationInstance {
            id: id.into(),
            pair: (first, second),
            label,
        })
    }
}

/// Accept at or above the threshold.
pub fn decide(score: f64, threshold: f64) -> bool {
    score >= threshold
}

/// Symmetric normalized score of a pair and the decision at `threshold`.
pub fn verify_pair(
    scorer: &Scorer<'_>,
    t1: &NeutralizedText,
    t2: &NeutralizedText,
    normalization: Normalization<'_>,
    threshold: f64,
) -> Result<(f64, bool)> {
    let score = scorer.symmetric_score(t1, t2, normalization)?;
    Ok((score, decide(score, threshold)))
}

fn lookup<'t>(texts: &'t BTreeMap<String, NeutralizedText>, id: &str) -> Result<&'t NeutralizedText> {
    texts
        .get(id)
        .ok_or_else(|| Error::data(format!("no neutralized text for document `{id}`")))
}

/// Symmetric scores of all instances, in input order.
pub fn score_instances(
    scorer: &Scorer<'_>,
    instances: &[VerificationInstance],
    texts: &BTreeMap<String, NeutralizedText>,
    normalization: Normalization<'_>,
) -> Result<Vec<f64>> {
    instances
        .par_iter()
        .map(|inst| {
            let t1 = lookup(texts, &inst.pair.0)?;
            let t2 = lookup(texts, &inst.pair.1)?;
            scorer.symmetric_score(t1, t2, normalization)
        })
        .collect()
}

fn labels(instances: &[VerificationInstance]) -> Result<Vec<bool>> {
    instances
        .iter()
        .map(|inst| {
            inst.label
                .ok_or_else(|| Error::data(format!("instance `{}` has no label", inst.id)))
        })
        .collect()
}

/// Threshold maximizing `objective` on labeled instances with precomputed scores.
pub fn calibrate_threshold(
    instances: &[VerificationInstance],
    scores: &[f64],
    objective: Objective,
) -> Result<CalibrationResult> {
    calibrate(scores, &labels(instances)?, objective)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub n: usize,
    #[serde(with = "crate::model::threshold_serde")]
    pub threshold: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_positive: f64,
    pub confusion: Confusion,
}

/// Metrics of decisions at `threshold` against instance labels.
pub fn evaluate(instances: &[VerificationInstance], scores: &[f64], threshold: f64) -> Result<VerificationReport> {
    let gold = labels(instances)?;
    let decisions: Vec<bool> = scores.iter().map(|&s| decide(s, threshold)).collect();
    let confusion = Confusion::from_decisions(&decisions, &gold)?;
    Ok(VerificationReport {
        n: gold.len(),
        threshold,
        accuracy: (confusion.tp + confusion.tn) as f64 / gold.len() as f64,
        macro_f1: confusion.macro_f1(),
        f1_positive: confusion.f1_positive(),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub k_values: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub k: usize,
    pub runs: usize,
    pub mean: f64,
    /// Population standard deviation across runs.
    pub std: f64,
    pub objectives: Vec<f64>,
    /// Anchor ids drawn in each run (empty for k = 0).
    pub anchors: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub objective: String,
    pub seed: u64,
    pub generator: String,
    pub entries: Vec<AblationEntry>,
}

/// Name of the anchor sampling scheme, recorded in reports.
pub const SAMPLER_NAME: &str =
    "ChaCha8Rng::seed_from_u64 + partial Fisher-Yates (j = i + next_u64 % (n - i))";

/// Draws `k` distinct indices from `0..n` by a partial Fisher-Yates shuffle.
pub fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = i + (rng.next_u64() % (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k.min(n));
    idx
}

/// Verification objective as a function of the number of anchors.
///
/// `k = 0` scores with the zero-shot normalization. Each `k > 0` draws `k`
/// anchors from the pool without replacement, `repeats` times, from one
/// generator seeded with `config.seed` and consumed in `k_values` order.
/// Every run recalibrates its own threshold and records the objective it
/// reaches on the instances.
pub fn anchor_ablation(
    scorer: &Scorer<'_>,
    instances: &[VerificationInstance],
    texts: &BTreeMap<String, NeutralizedText>,
    anchor_pool: &[NeutralizedText],
    config: &AblationConfig,
) -> Result<AblationReport> {
    if config.repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    if let Some(&k) = config.k_values.iter().find(|&&k| k > anchor_pool.len()) {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the anchor pool of {}",
            anchor_pool.len()
        )));
    }
    for inst in instances {
        for id in [&inst.pair.0, &inst.pair.1] {
            if anchor_pool.iter().any(|a| a.id() == id) {
                return Err(Error::invalid(format!(
                    "anchor pool contains scored document `{id}`"
                )));
            }
        }
    }
    let gold = labels(instances)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut entries = Vec::with_capacity(config.k_values.len());
    for &k in &config.k_values {
        let mut objectives = Vec::new();
        let mut drawn = Vec::new();
        if k == 0 {
            let scores = score_instances(scorer, instances, texts, Normalization::ZeroShot)?;
            objectives.push(calibrate(&scores, &gold, config.objective)?.objective_value);
            drawn.push(Vec::new());
        } else {
            for _ in 0..config.repeats {
                let anchors: Vec<NeutralizedText> = sample_indices(&mut rng, anchor_pool.len(), k)
                    .into_iter()
                    .map(|i| anchor_pool[i].clone())
                    .collect();
                let scores = score_instances(scorer, instances, texts, Normalization::Anchors(&anchors))?;
                objectives.push(calibrate(&scores, &gold, config.objective)?.objective_value);
                drawn.push(anchors.iter().map(|a| a.id().to_string()).collect());
            }
        }
        let n = objectives.len() as f64;
        let mean = objectives.iter().sum::<f64>() / n;
        let std = (objectives.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / n).sqrt();
        entries.push(AblationEntry {
            k,
            runs: objectives.len(),
            mean,
            std,
            objectives,
            anchors: drawn,
        });
    }
    Ok(AblationReport {
        objective: config.objective.name().to_string(),
        seed: config.seed,
        generator: SAMPLER_NAME.to_string(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::UniformModel;
    use crate::model::{Document, NeutralizationRecord};
    use crate::store::Store;

    fn nt(id: &str, text: &str) -> NeutralizedText {
        NeutralizedText::new(
            Document::new(id, text),
            NeutralizationRecord {
                doc_id: id.into(),
                neutral_text: text.to_lowercase(),
                generator_fingerprint: "fp".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn instance_ids_must_differ() {
        assert!(VerificationInstance::new("i", "a", "a", None).is_err());
        assert!(VerificationInstance::new("i", "a", "b", Some(true)).is_ok());
    }

    #[test]
    fn uniform_pair_accepted_at_zero() {
        let m = UniformModel::new(4).unwrap();
        let store = Store::memory();
        let s = Scorer::new(&m, &store);
        let (score, accept) = verify_pair(&s, &nt("a", "Abc"), &nt("b", "Xyz"), Normalization::ZeroShot, 0.0).unwrap();
        assert_eq!(score, 0.0);
        assert!(accept);
    }

    #[test]
    fn rs_anchor_overlap_rejected() {
        let m = UniformModel::new(4).unwrap();
        let store = Store::memory();
        let s = Scorer::new(&m, &store);
        let (a, b) = (nt("a", "Abc"), nt("b", "Xyz"));
        let anchors = [a.clone()];
        assert!(verify_pair(&s, &a, &b, Normalization::Anchors(&anchors), 0.0).is_err());
    }

    #[test]
    fn decision_monotone_in_threshold() {
        let mut thresholds: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.25).collect();
        thresholds.sort_by(f64::total_cmp);
        for score in [-3.0, -0.1, 0.0, 0.3, 4.0] {
            let d: Vec<bool> = thresholds.iter().map(|&t| decide(score, t)).collect();
            assert!(d.windows(2).all(|w| !( !w[0] && w[1])));
        }
    }

    #[test]
    fn calibrate_requires_labels() {
        let inst = vec![VerificationInstance::new("i", "a", "b", None).unwrap()];
        assert!(calibrate_threshold(&inst, &[0.0], Objective::MacroF1).is_err());
        let inst = vec![
            VerificationInstance::new("i", "a", "b", Some(true)).unwrap(),
            VerificationInstance::new("j", "a", "c", Some(true)).unwrap(),
            VerificationInstance::new("k", "b", "c", Some(false)).unwrap(),
        ];
        let r = calibrate_threshold(&inst, &[0.5, 0.7, -0.2], Objective::MacroF1).unwrap();
        assert!((r.threshold - 0.15).abs() < 1e-15);
        assert_eq!(r.n_calibration, 3);
        let report = evaluate(&inst, &[0.5, 0.7, -0.2], r.threshold).unwrap();
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn sampler_draws_distinct_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..=10 {
            let mut s = sample_indices(&mut rng, 10, k);
            assert_eq!(s.len(), k);
            s.sort();
            s.dedup();
            assert_eq!(s.len(), k);
        }
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_indices(&mut a, 10, 4), sample_indices(&mut b, 10, 4));
    }
}
