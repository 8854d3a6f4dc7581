//! Closed- and open-set authorship attribution over a score table.
//!
//! An author's score for a target is the mean of the target's row over the
//! author's candidate texts. Open-set attribution first z-scores the row
//! across all candidate texts (population standard deviation) so one global
//! threshold applies to every target.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, Objective};
use crate::error::{Error, Result};
use crate::model::{CalibrationResult, Corpus, ScoreTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorScore {
    pub author_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub target_id: String,
    /// Descending by score, ties by author id.
    pub ranking: Vec<AuthorScore>,
    /// `None` when open-set rejection fired.
    pub predicted: Option<String>,
    pub standardized: bool,
    /// The top two authors scored exactly equal.
    pub tie: bool,
}

/// Population z-scores; a row without variance maps to zeros.
pub fn standardize(row: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let (min, max) = row
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if row.is_empty() || min == max {
        return vec![0.0; row.len()];
    }
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    row.iter().map(|v| (v - mean) / std).collect()
}

/// Mean (optionally standardized) score per candidate author, ordered by author id.
pub fn author_scores(
    table: &ScoreTable,
    corpus: &Corpus,
    target_id: &str,
    standardized: bool,
) -> Result<Vec<AuthorScore>> {
    let row = table
        .row(target_id)
        .ok_or_else(|| Error::invalid(format!("target `{target_id}` not in score table")))?;
    if row.is_empty() {
        return Err(Error::invalid("score table has no candidate texts"));
    }
    let values = if standardized { standardize(row) } else { row.to_vec() };
    let mut per_author: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (candidate, value) in table.candidates.iter().zip(values) {
        let author = corpus.author_of(candidate).ok_or_else(|| {
            Error::data(format!("candidate text `{candidate}` has no author in the corpus"))
        })?;
        let entry = per_author.entry(author).or_insert((0.0, 0));
        entry.0 += value;
        entry.1 += 1;
    }
    Ok(per_author
        .into_iter()
        .map(|(author, (sum, n))| AuthorScore {
            author_id: author.to_string(),
            score: sum / n as f64,
        })
        .collect())
}

fn rank(mut scores: Vec<AuthorScore>) -> (Vec<AuthorScore>, bool) {
    scores.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.author_id.cmp(&b.author_id))
    });
    let tie = scores.len() > 1 && scores[0].score == scores[1].score;
    (scores, tie)
}

/// Highest raw author score wins.
pub fn attribute_closed(table: &ScoreTable, corpus: &Corpus, target_id: &str) -> Result<AttributionResult> {
    let (ranking, tie) = rank(author_scores(table, corpus, target_id, false)?);
    Ok(AttributionResult {
        target_id: target_id.to_string(),
        predicted: ranking.first().map(|a| a.author_id.clone()),
        ranking,
        standardized: false,
        tie,
    })
}

/// Highest standardized author score wins if it reaches `threshold`.
pub fn attribute_open(
    table: &ScoreTable,
    corpus: &Corpus,
    target_id: &str,
    threshold: f64,
) -> Result<AttributionResult> {
    let (ranking, tie) = rank(author_scores(table, corpus, target_id, true)?);
    let predicted = ranking
        .first()
        .filter(|top| top.score >= threshold)
        .map(|top| top.author_id.clone());
    Ok(AttributionResult {
        target_id: target_id.to_string(),
        ranking,
        predicted,
        standardized: true,
        tie,
    })
}

/// One labeled target for open-set threshold calibration.
#[derive(Debug, Clone, Copy)]
pub struct OpenSetCase<'a> {
    pub table: &'a ScoreTable,
    pub corpus: &'a Corpus,
    pub target_id: &'a str,
    /// True author, `None` when it is not among the candidates.
    pub gold: Option<&'a str>,
}

/// Maximum standardized author score of a target.
pub fn max_standardized_score(table: &ScoreTable, corpus: &Corpus, target_id: &str) -> Result<f64> {
    Ok(author_scores(table, corpus, target_id, true)?
        .iter()
        .map(|a| a.score)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Threshold on the maximum standardized author score separating targets whose
/// author is among the candidates from those whose author is not.
pub fn calibrate_open_threshold(cases: &[OpenSetCase<'_>], objective: Objective) -> Result<CalibrationResult> {
    if cases.is_empty() {
        return Err(Error::invalid("open-set calibration set is empty"));
    }
    let mut scores = Vec::with_capacity(cases.len());
    let mut present = Vec::with_capacity(cases.len());
    for case in cases {
        let authors = author_scores(case.table, case.corpus, case.target_id, true)?;
        scores.push(authors.iter().map(|a| a.score).fold(f64::NEG_INFINITY, f64::max));
        present.push(
            case.gold
                .is_some_and(|g| authors.iter().any(|a| a.author_id == g)),
        );
    }
    calibrate(&scores, &present, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Document;
    use proptest::prelude::*;

    fn fixture(row: Vec<f64>) -> (ScoreTable, Corpus) {
        let corpus = Corpus::from_documents(vec![
            Document::new("c1", "x").with_author("A"),
            Document::new("c2", "y").with_author("A"),
            Document::new("c3", "z").with_author("B"),
            Document::new("t", "w"),
        ])
        .unwrap();
        let table = ScoreTable::new(
            vec!["t".into()],
            vec!["c1".into(), "c2".into(), "c3".into()],
            vec![row],
        )
        .unwrap();
        (table, corpus)
    }

    fn scores(v: &[AuthorScore]) -> Vec<(String, f64)> {
        v.iter().map(|a| (a.author_id.clone(), a.score)).collect()
    }

    #[test]
    fn raw_author_means() {
        let (table, corpus) = fixture(vec![1.0, 2.0, 3.0]);
        let s = author_scores(&table, &corpus, "t", false).unwrap();
        assert_eq!(scores(&s), vec![("A".into(), 1.5), ("B".into(), 3.0)]);
    }

    #[test]
    fn standardized_author_means() {
        // population std of [1,2,3] is sqrt(2/3); z = [-1.2247, 0, 1.2247]
        let z1 = 1.0 / (2.0f64 / 3.0).sqrt();
        let (table, corpus) = fixture(vec![1.0, 2.0, 3.0]);
        let s = author_scores(&table, &corpus, "t", true).unwrap();
        assert!((s[0].score + z1 / 2.0).abs() < 1e-12);
        assert!((s[1].score - z1).abs() < 1e-12);
        assert!((s[0].score + 0.6124).abs() < 1e-4);
        assert!((s[1].score - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn constant_row_standardizes_to_zero() {
        let (table, corpus) = fixture(vec![5.0, 5.0, 5.0]);
        let s = author_scores(&table, &corpus, "t", true).unwrap();
        assert!(s.iter().all(|a| a.score == 0.0));
        let (table, corpus) = fixture(vec![0.1, 0.1, 0.1]);
        assert!(standardize(table.row("t").unwrap()).iter().all(|&z| z == 0.0));
        assert!(author_scores(&table, &corpus, "t", true).unwrap().iter().all(|a| a.score == 0.0));
    }

    #[test]
    fn closed_set_prediction_and_ties() {
        let (table, corpus) = fixture(vec![1.0, 2.0, 3.0]);
        let r = attribute_closed(&table, &corpus, "t").unwrap();
        assert_eq!(r.predicted.as_deref(), Some("B"));
        assert!(!r.tie);
        assert_eq!(r.ranking.len(), 2);

        let (table, corpus) = fixture(vec![1.0, 3.0, 2.0]);
        let r = attribute_closed(&table, &corpus, "t").unwrap();
        assert_eq!(r.predicted.as_deref(), Some("A"));
        assert!(r.tie);
    }

    #[test]
    fn single_author_candidates() {
        let corpus = Corpus::from_documents(vec![Document::new("c", "x").with_author("Solo")]).unwrap();
        let table = ScoreTable::new(vec!["t".into()], vec!["c".into()], vec![vec![-2.0]]).unwrap();
        assert_eq!(attribute_closed(&table, &corpus, "t").unwrap().predicted.as_deref(), Some("Solo"));
        // one candidate text: standardized score 0
        assert_eq!(attribute_open(&table, &corpus, "t", 0.0).unwrap().predicted.as_deref(), Some("Solo"));
        assert_eq!(attribute_open(&table, &corpus, "t", 0.1).unwrap().predicted, None);
    }

    #[test]
    fn open_set_threshold() {
        let (table, corpus) = fixture(vec![1.0, 2.0, 3.0]);
        assert_eq!(attribute_open(&table, &corpus, "t", 0.0).unwrap().predicted.as_deref(), Some("B"));
        assert_eq!(attribute_open(&table, &corpus, "t", 2.0).unwrap().predicted, None);
    }

    #[test]
    fn unknown_candidate_author_is_error() {
        let corpus = Corpus::from_documents(vec![Document::new("c1", "x")]).unwrap();
        let table = ScoreTable::new(vec!["t".into()], vec!["c1".into()], vec![vec![1.0]]).unwrap();
        assert!(author_scores(&table, &corpus, "t", false).is_err());
        assert!(author_scores(&table, &corpus, "missing", false).is_err());
    }

    #[test]
    fn open_calibration_midpoint() {
        // max standardized scores: positives {1, 2}, negative {-1}
        let corpus = Corpus::from_documents(vec![
            Document::new("c1", "x").with_author("A"),
            Document::new("c2", "y").with_author("B"),
        ])
        .unwrap();
        // two candidates with z = [-1, 1] -> max 1; use pure tables of a single author for others
        let t_pos1 = ScoreTable::new(vec!["p1".into()], vec!["c1".into(), "c2".into()], vec![vec![0.0, 2.0]]).unwrap();
        let solo = Corpus::from_documents(vec![
            Document::new("s1", "x").with_author("S"),
            Document::new("s2", "y").with_author("S"),
            Document::new("o1", "z").with_author("O"),
            Document::new("o2", "w").with_author("O"),
            Document::new("o3", "v").with_author("O"),
            Document::new("o4", "u").with_author("O"),
        ])
        .unwrap();
        // z of [x, 0,0,0,0, ...]: pick rows whose max author score is exactly 2 and -1
        let cands: Vec<String> = ["s1", "o1", "o2", "o3", "o4"].iter().map(|s| s.to_string()).collect();
        // [4,-1,-1,-1,-1]: mean 0, pop std 2 -> z = [2, -.5 x4]; S = 2
        let t_pos2 = ScoreTable::new(vec!["p2".into()], cands.clone(), vec![vec![4.0, -1.0, -1.0, -1.0, -1.0]]).unwrap();
        let cands2: Vec<String> = ["s1", "s2", "o1"].iter().map(|s| s.to_string()).collect();
        // [-1,-1,2]: mean 0, pop std sqrt(2); S = -1/sqrt(2), O = sqrt(2)
        let t_neg = ScoreTable::new(vec!["n".into()], cands2, vec![vec![-1.0, -1.0, 2.0]]).unwrap();
        let cases = [
            OpenSetCase { table: &t_pos1, corpus: &corpus, target_id: "p1", gold: Some("A") },
            OpenSetCase { table: &t_pos2, corpus: &solo, target_id: "p2", gold: Some("S") },
            OpenSetCase { table: &t_neg, corpus: &solo, target_id: "n", gold: None },
        ];
        let maxes: Vec<f64> = cases
            .iter()
            .map(|c| max_standardized_score(c.table, c.corpus, c.target_id).unwrap())
            .collect();
        assert!((maxes[0] - 1.0).abs() < 1e-12 && (maxes[1] - 2.0).abs() < 1e-12);
        let r = calibrate_open_threshold(&cases, Objective::MacroF1).unwrap();
        // negative max sqrt(2) sits between the positives: best is to accept only >= 2
        assert_eq!(r.n_calibration, 3);
        assert!(r.threshold > maxes[2] && r.threshold < maxes[1]);
        assert!(calibrate_open_threshold(&[], Objective::MacroF1).is_err());
    }

    proptest! {
        #[test]
        fn affine_invariance(
            row in proptest::collection::vec(-50.0f64..0.0, 3),
            alpha in 0.01f64..100.0,
            beta in -100.0f64..100.0,
        ) {
            let (table, corpus) = fixture(row.clone());
            let mapped: Vec<f64> = row.iter().map(|x| alpha * x + beta).collect();
            let (table2, _) = fixture(mapped.clone());
            let a = attribute_closed(&table, &corpus, "t").unwrap();
            let b = attribute_closed(&table2, &corpus, "t").unwrap();
            if !a.tie && (a.ranking[0].score - a.ranking[1].score).abs() > 1e-9 {
                prop_assert_eq!(a.predicted, b.predicted);
            }
            for (z1, z2) in standardize(&row).iter().zip(standardize(&mapped)) {
                prop_assert!((z1 - z2).abs() < 1e-9);
            }
        }
    }
}
