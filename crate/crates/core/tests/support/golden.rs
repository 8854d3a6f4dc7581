//! Checks the cleaners against the recorded preprocessing golden cases.

use std::path::Path;

use osst::datasets::{cap_author_texts, clean_emails, clean_fanfiction, clean_style_change};
use osst::model::{Corpus, Document};
use serde::Deserialize;
use serde_json::Value;

#[derive(Deserialize)]
struct GoldenFile {
    cases: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    name: String,
    rule: String,
    input: Value,
    expected: Value,
}

fn run(case: &Case) -> Result<Value, String> {
    let text = || case.input.as_str().ok_or("input is not a string");
    Ok(match case.rule.as_str() {
        "fanfiction" => Value::from(clean_fanfiction(text()?)),
        "email" => clean_emails(text()?).map_or(Value::Null, Value::from),
        "style_change" => clean_style_change(text()?).map_or(Value::Null, Value::from),
        "cap" => {
            let pairs: Vec<(String, String)> =
                serde_json::from_value(case.input.clone()).map_err(|e| e.to_string())?;
            let docs = pairs
                .into_iter()
                .map(|(id, author)| Document::new(id, "text").with_author(author))
                .collect();
            let corpus = Corpus::from_documents(docs).map_err(|e| e.to_string())?;
            let capped = cap_author_texts(&corpus, 50).map_err(|e| e.to_string())?;
            Value::from(capped.documents.iter().map(|d| d.id.clone()).collect::<Vec<_>>())
        }
        other => return Err(format!("unknown rule {other}")),
    })
}

/// Number of cases and the names of those that disagree with the golden output.
pub fn check_golden(path: &Path) -> (usize, Vec<String>) {
    let file: GoldenFile = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let failures = file
        .cases
        .iter()
        .filter_map(|case| match run(case) {
            Ok(got) if got == case.expected => None,
            Ok(got) => Some(format!("{}: got {got}", case.name)),
            Err(e) => Some(format!("{}: {e}", case.name)),
        })
        .collect();
    (file.cases.len(), failures)
}
