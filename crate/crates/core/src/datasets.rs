//! Corpus loaders and text cleaners.
//!
//! Token budgets count whitespace-delimited tokens. Paragraphs are separated
//! by blank lines.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Corpus, Document};
use crate::verification::VerificationInstance;

pub const MAX_TOKENS: usize = 384;
pub const MIN_EMAIL_CHARS: usize = 20;
pub const MAX_TEXTS_PER_AUTHOR: usize = 50;

/// Name of the folder holding texts of unknown authorship.
pub const UNKNOWN_FOLDER: &str = "unknown";
/// Ground-truth label meaning "none of the candidates".
pub const NO_AUTHOR: &str = "<UNK>";

/// Prefix of `text` ending with its `max_tokens`-th whitespace token.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    let mut count = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token && count == max_tokens {
                return &text[..i];
            }
            in_token = false;
        } else if !in_token {
            in_token = true;
            count += 1;
            if count > max_tokens {
                return text[..i].trim_end();
            }
        }
    }
    text
}

fn has_alphabetic(s: &str) -> bool {
    s.chars().any(char::is_alphabetic)
}

/// Drops lines without alphabetic characters, joins the remaining lines with
/// spaces, and keeps whole paragraphs while they fit in [`MAX_TOKENS`]. A
/// first paragraph that alone exceeds the budget is cut at the token limit.
pub fn clean_fanfiction(text: &str) -> String {
    let mut paragraphs: Vec<String> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut flush = |current: &mut Vec<&str>| {
        if !current.is_empty() {
            paragraphs.push(current.join(" "));
            current.clear();
        }
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            flush(&mut current);
        } else if has_alphabetic(line) {
            current.push(line.trim());
        }
    }
    flush(&mut current);

    let mut kept: Vec<&str> = Vec::new();
    let mut used = 0;
    for paragraph in &paragraphs {
        let n = paragraph.split_whitespace().count();
        if used + n <= MAX_TOKENS {
            kept.push(paragraph);
            used += n;
        } else {
            if kept.is_empty() {
                kept.push(truncate_tokens(paragraph, MAX_TOKENS));
            }
            break;
        }
    }
    kept.join(" ")
}

/// Trims, truncates to [`MAX_TOKENS`] and drops texts under [`MIN_EMAIL_CHARS`] characters.
pub fn clean_emails(text: &str) -> Option<String> {
    let cleaned = truncate_tokens(text.trim(), MAX_TOKENS);
    (cleaned.chars().count() >= MIN_EMAIL_CHARS).then(|| cleaned.to_string())
}

/// Drops paragraphs without any alphabetic character.
pub fn clean_style_change(paragraph: &str) -> Option<String> {
    has_alphabetic(paragraph).then(|| paragraph.to_string())
}

/// Keeps the first `max_per_author` documents of each author, in corpus order.
/// Documents without an author are kept.
pub fn cap_author_texts(corpus: &Corpus, max_per_author: usize) -> Result<Corpus> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let documents = corpus
        .documents
        .iter()
        .filter(|doc| match doc.author_id.as_deref() {
            Some(author) => {
                let n = seen.entry(author).or_default();
                *n += 1;
                *n <= max_per_author
            }
            None => true,
        })
        .cloned()
        .collect();
    Corpus::from_documents(documents)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cleaner {
    #[default]
    None,
    Fanfiction,
    Email,
    StyleChange,
}

impl Cleaner {
    pub fn apply(self, text: &str) -> Option<String> {
        let out = match self {
            Cleaner::None => Some(text.to_string()),
            Cleaner::Fanfiction => Some(clean_fanfiction(text)),
            Cleaner::Email => clean_emails(text),
            Cleaner::StyleChange => clean_style_change(text),
        };
        out.filter(|t| !t.is_empty())
    }
}

impl std::str::FromStr for Cleaner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Cleaner::None),
            "fanfiction" => Ok(Cleaner::Fanfiction),
            "email" => Ok(Cleaner::Email),
            "style_change" | "style-change" => Ok(Cleaner::StyleChange),
            other => Err(Error::invalid(format!("unknown cleaner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadOptions {
    pub cleaner: Cleaner,
    pub max_per_author: Option<usize>,
}

/// Candidate texts, unknown texts and optional ground truth of one attribution problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionDataset {
    pub candidates: Corpus,
    pub targets: Vec<Document>,
    /// Target id to true author (`None`: not among the candidates).
    pub ground_truth: Option<BTreeMap<String, Option<String>>>,
}

#[derive(Deserialize)]
struct GroundTruthFile {
    ground_truth: Vec<GroundTruthEntry>,
}

#[derive(Deserialize)]
struct GroundTruthEntry {
    #[serde(rename = "unknown-text")]
    unknown_text: String,
    #[serde(rename = "true-author")]
    true_author: String,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    Ok(entries)
}

fn text_files(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect())
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads `<root>/<candidate>/*.txt`, `<root>/unknown/*.txt` and, if present,
/// `<root>/ground-truth.json`. Document ids are `<folder>/<file name>`.
pub fn load_attribution_dir(root: &Path, options: &LoadOptions) -> Result<AttributionDataset> {
    if !root.is_dir() {
        return Err(Error::data(format!("{} is not a directory", root.display())));
    }
    let unknown_dir = root.join(UNKNOWN_FOLDER);
    if !unknown_dir.is_dir() {
        return Err(Error::data(format!("missing folder {}", unknown_dir.display())));
    }

    let mut documents = Vec::new();
    let mut n_authors = 0;
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let author = file_name(&dir);
        if author == UNKNOWN_FOLDER {
            continue;
        }
        let files = text_files(&dir)?;
        if files.is_empty() {
            return Err(Error::data(format!("author folder {} has no .txt files", dir.display())));
        }
        n_authors += 1;
        let before = documents.len();
        for file in files {
            if let Some(text) = options.cleaner.apply(&read_text(&file)?) {
                documents.push(
                    Document::new(format!("{author}/{}", file_name(&file)), text).with_author(&author),
                );
            }
        }
        if documents.len() == before {
            log::warn!("all texts of author `{author}` were removed by cleaning");
        }
    }
    if n_authors == 0 {
        return Err(Error::data(format!("no candidate folders under {}", root.display())));
    }
    let mut candidates = Corpus::from_documents(documents)?;
    if let Some(max) = options.max_per_author {
        candidates = cap_author_texts(&candidates, max)?;
    }

    let mut targets = Vec::new();
    let mut kept_names = HashSet::new();
    for file in text_files(&unknown_dir)? {
        if let Some(text) = options.cleaner.apply(&read_text(&file)?) {
            kept_names.insert(file_name(&file));
            targets.push(Document::new(format!("{UNKNOWN_FOLDER}/{}", file_name(&file)), text));
        }
    }

    let truth_path = root.join("ground-truth.json");
    let ground_truth = if truth_path.is_file() {
        let parsed: GroundTruthFile = serde_json::from_str(&read_text(&truth_path)?)
            .map_err(|e| Error::data(format!("{}: {e}", truth_path.display())))?;
        let mut truth = BTreeMap::new();
        for entry in parsed.ground_truth {
            if !kept_names.contains(&entry.unknown_text) {
                continue;
            }
            let author = (entry.true_author != NO_AUTHOR).then_some(entry.true_author);
            truth.insert(format!("{UNKNOWN_FOLDER}/{}", entry.unknown_text), author);
        }
        Some(truth)
    } else {
        None
    };

    Ok(AttributionDataset {
        candidates,
        targets,
        ground_truth,
    })
}

#[derive(Debug, Deserialize)]
struct PairLine {
    id: String,
    pair: (String, String),
    #[serde(default)]
    same: Option<bool>,
}

/// Verification pairs and the documents they reference.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationDataset {
    pub instances: Vec<VerificationInstance>,
    /// Two per instance, ids `<instance id>/0` and `<instance id>/1`.
    pub documents: Vec<Document>,
}

/// Parses `{"id": str, "pair": [str, str], "same": bool?}` per line; blank lines are skipped.
pub fn load_verification_jsonl(path: &Path) -> Result<VerificationDataset> {
    let content = read_text(path)?;
    let mut instances = Vec::new();
    let mut documents = Vec::new();
    let mut ids = HashSet::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| Error::data(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let parsed: PairLine = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        if !ids.insert(parsed.id.clone()) {
            return Err(at(format!("duplicate pair id `{}`", parsed.id)));
        }
        if parsed.pair.0.is_empty() || parsed.pair.1.is_empty() {
            return Err(at("pair contains an empty text".into()));
        }
        let (a, b) = (format!("{}/0", parsed.id), format!("{}/1", parsed.id));
        documents.push(Document::new(a.clone(), parsed.pair.0));
        documents.push(Document::new(b.clone(), parsed.pair.1));
        instances.push(VerificationInstance::new(parsed.id, a, b, parsed.same)?);
    }
    Ok(VerificationDataset {
        instances,
        documents,
    })
}

/// One [`Document`] JSON object per line.
pub fn load_documents_jsonl(path: &Path) -> Result<Vec<Document>> {
    let content = read_text(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        docs.push(doc);
    }
    // validates ids and texts
    Corpus::from_documents(docs.clone())?;
    Ok(docs)
}
