//! Synthetic authors with disjoint preferred-bigram sets.
//!
//! Each author is a first-order Markov source over [`SYMBOLS`]. From every
//! symbol it moves to one of its two preferred successors with probability
//! 6/10 and to a uniformly drawn symbol otherwise. For every symbol the
//! preferred successors of different authors are disjoint, so the sources
//! differ only in which bigrams they favor. Part of each preferred set is
//! punctuation, which the rule-based neutralizer removes.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use osst::verification::VerificationInstance;
use osst::Document;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const N_AUTHORS: usize = 5;
pub const TRAIN_PER_AUTHOR: usize = 10;
pub const TARGETS_PER_AUTHOR: usize = 10;
pub const POOL_PER_AUTHOR: usize = 2;
pub const SYMBOLS: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z', ' ', ',', ';', '!', '?', '-', '\'',
];
const PREFERRED: usize = 2;
const PREFERRED_IN_TEN: u64 = 6;

fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// `successors[author][symbol]` are the author's preferred next symbols.
pub fn preferred_successors(seed: u64) -> Vec<Vec<[usize; PREFERRED]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = SYMBOLS.len();
    let mut table = vec![vec![[0; PREFERRED]; n]; N_AUTHORS];
    for s in 0..n {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in 0..n - 1 {
            let j = i + below(&mut rng, n - i);
            perm.swap(i, j);
        }
        for (a, row) in table.iter_mut().enumerate() {
            row[s] = [perm[PREFERRED * a], perm[PREFERRED * a + 1]];
        }
    }
    table
}

pub fn sample_text(successors: &[[usize; PREFERRED]], len: usize, rng: &mut ChaCha8Rng) -> String {
    let mut s = below(rng, 26);
    let mut out = String::with_capacity(len);
    out.push(SYMBOLS[s]);
    while out.len() < len {
        s = if rng.next_u64() % 10 < PREFERRED_IN_TEN {
            successors[s][below(rng, PREFERRED)]
        } else {
            below(rng, SYMBOLS.len())
        };
        out.push(SYMBOLS[s]);
    }
    out
}

pub fn author_id(a: usize) -> String {
    format!("author{a}")
}

#[derive(Debug, Clone)]
pub struct Pair {
    pub id: String,
    pub first: Document,
    pub second: Document,
    pub same: bool,
}

pub struct Synthetic {
    /// Candidate texts, author-labeled.
    pub train: Vec<Document>,
    /// Texts of unknown authorship with heterogeneous lengths; `author_id` is the gold label.
    pub targets: Vec<Document>,
    /// Anchor pool, disjoint from every pair.
    pub pool: Vec<Document>,
    /// Calibration pairs drawn from the training texts.
    pub calibration_pairs: Vec<Pair>,
    /// Test pairs drawn from the targets.
    pub test_pairs: Vec<Pair>,
}

fn pairs(docs: &[Document], n: usize, prefix: &str, rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let per_author = docs.len() / N_AUTHORS;
    (0..n)
        .map(|i| {
            let same = i % 2 == 0;
            let a = below(rng, N_AUTHORS);
            let b = if same { a } else { (a + 1 + below(rng, N_AUTHORS - 1)) % N_AUTHORS };
            let x = below(rng, per_author);
            let mut y = below(rng, per_author);
            if same {
                y = (x + 1 + below(rng, per_author - 1)) % per_author;
            }
            Pair {
                id: format!("{prefix}{i:03}"),
                first: docs[a * per_author + x].clone(),
                second: docs[b * per_author + y].clone(),
                same,
            }
        })
        .collect()
}

/// The full fixture: 5 authors, 10 training texts and 10 targets each, a
/// 10-text anchor pool, 100 calibration pairs and 100 test pairs.
pub fn synthetic(seed: u64) -> Synthetic {
    let successors = preferred_successors(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut make = |kind: &str, count: usize, len: &mut dyn FnMut(&mut ChaCha8Rng) -> usize| {
        let mut docs = Vec::new();
        for (a, succ) in successors.iter().enumerate() {
            for i in 0..count {
                let n = len(&mut rng);
                docs.push(
                    Document::new(format!("a{a}-{kind}-{i:02}"), sample_text(succ, n, &mut rng))
                        .with_author(author_id(a)),
                );
            }
        }
        docs
    };
    let train = make("train", TRAIN_PER_AUTHOR, &mut |_| 400);
    let targets = make("target", TARGETS_PER_AUTHOR, &mut |r| 120 + below(r, 481));
    let pool = make("pool", POOL_PER_AUTHOR, &mut |_| 300);
    let calibration_pairs = pairs(&train, 100, "cal", &mut rng);
    let test_pairs = pairs(&targets, 100, "test", &mut rng);
    Synthetic {
        train,
        targets,
        pool,
        calibration_pairs,
        test_pairs,
    }
}

/// Pair instances and their documents, ids as produced by the JSONL loader.
pub fn pair_instances(pairs: &[Pair]) -> (Vec<VerificationInstance>, Vec<Document>) {
    let mut instances = Vec::new();
    let mut docs = Vec::new();
    for p in pairs {
        let (a, b) = (format!("{}/0", p.id), format!("{}/1", p.id));
        docs.push(Document::new(a.clone(), p.first.text.clone()));
        docs.push(Document::new(b.clone(), p.second.text.clone()));
        instances.push(VerificationInstance::new(p.id.clone(), a, b, Some(p.same)).unwrap());
    }
    (instances, docs)
}

pub fn write_docs(path: &Path, docs: &[Document]) {
    let mut out = String::new();
    for d in docs {
        writeln!(out, "{}", serde_json::to_string(d).unwrap()).unwrap();
    }
    fs::write(path, out).unwrap();
}

/// Targets without their gold labels.
pub fn write_unlabeled(path: &Path, docs: &[Document]) {
    let stripped: Vec<Document> = docs.iter().map(|d| Document::new(d.id.clone(), d.text.clone())).collect();
    write_docs(path, &stripped);
}

pub fn write_pairs(path: &Path, pairs: &[Pair], with_labels: bool) {
    let mut out = String::new();
    for p in pairs {
        let mut line = json!({ "id": p.id, "pair": [p.first.text, p.second.text] });
        if with_labels {
            line["same"] = json!(p.same);
        }
        writeln!(out, "{line}").unwrap();
    }
    fs::write(path, out).unwrap();
}

/// Author-free text drawn uniformly over [`SYMBOLS`], for training base models.
pub fn background(seed: u64, len: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| SYMBOLS[below(&mut rng, SYMBOLS.len())]).collect()
}
