//! `osst`: one-shot style transfer scoring from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 backend failure, 4 data error.
//! Failures are reported as one JSON object on stderr.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use osst::calibration::Objective;
use osst::datasets::Cleaner;
use serde_json::json;

mod commands;
mod config;
mod output;

/// Invalid invocation or configuration (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "osst", version, about = "One-shot style transfer authorship scoring")]
pub struct Cli {
    /// Backend configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub backend: Option<PathBuf>,
    /// Cache directory; overrides `cache_dir` from the config file.
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Keep the cache in memory for this run only.
    #[arg(long, global = true)]
    pub no_cache: bool,
    /// Directory receiving report artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write CSV versions of tabular artifacts (requires --out).
    #[arg(long, global = true)]
    pub emit_csv: bool,
    /// Overrides `endpoint` from the config file.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Overrides `model_id` from the config file.
    #[arg(long, global = true)]
    pub model_id: Option<String>,
    /// Overrides `concurrency` from the config file.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rewrite documents into neutral style and cache the records.
    Neutralize(NeutralizeArgs),
    /// Score targets against candidate texts.
    Score(ScoreArgs),
    /// Attribute target texts to candidate authors.
    Attribute(AttributeArgs),
    /// Same-author decisions for text pairs.
    Verify(VerifyArgs),
    /// Verification quality as a function of the number of anchors.
    AblateAnchors(AblateArgs),
    /// Median per-position gain of one-shot over zero-shot scoring.
    DiagnosePositions(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreModeArg {
    Osst,
    NosstZs,
    NosstRs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttributeMode {
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Zs,
    Rs,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: osst::Error| e.to_string())
}

fn parse_cleaner(s: &str) -> Result<Cleaner, String> {
    s.parse().map_err(|e: osst::Error| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KValues(pub Vec<usize>);

/// `a..b` (inclusive), `a..=b`, or a comma-separated list.
fn parse_k_values(s: &str) -> Result<KValues, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.trim_start_matches('='))?);
        if lo > hi {
            return Err(format!("empty range {s}"));
        }
        return Ok(KValues((lo..=hi).collect()));
    }
    s.split(',').map(num).collect::<Result<_, _>>().map(KValues)
}

#[derive(Debug, Args)]
pub struct NeutralizeArgs {
    /// Documents as JSONL, or a candidate-folder dataset directory.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_cleaner, default_value = "none")]
    pub cleaner: Cleaner,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, value_enum, default_value = "osst")]
    pub mode: ScoreModeArg,
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    /// Anchor documents (JSONL) for nosst-rs.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long, value_enum)]
    pub mode: AttributeMode,
    /// Candidate-folder dataset directory with an `unknown` folder.
    #[arg(long, conflicts_with_all = ["candidates", "targets"])]
    pub dataset: Option<PathBuf>,
    /// Candidate documents (JSONL) with `author_id`.
    #[arg(long, requires = "targets")]
    pub candidates: Option<PathBuf>,
    /// Target documents (JSONL); an `author_id` is used as the gold label.
    #[arg(long, requires = "candidates")]
    pub targets: Option<PathBuf>,
    /// Score filling the table before author aggregation.
    #[arg(long, value_enum, default_value = "osst")]
    pub score: ScoreModeArg,
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    /// Open-set rejection threshold on the top standardized author score.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "calibrate")]
    pub threshold: Option<f64>,
    /// Labeled targets (JSONL, scored against the same candidates) or a
    /// dataset directory with ground truth, used to fit the open-set threshold.
    #[arg(long)]
    pub calibrate: Option<PathBuf>,
    #[arg(long, value_parser = parse_objective, default_value = "macro_f1")]
    pub objective: Objective,
    #[arg(long, value_parser = parse_cleaner, default_value = "none")]
    pub cleaner: Cleaner,
    #[arg(long)]
    pub max_per_author: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub variant: Variant,
    /// Pairs to decide (JSONL).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Anchor documents (JSONL) for the rs variant.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true, conflicts_with = "calibrate")]
    pub threshold: Option<f64>,
    /// Labeled pairs (JSONL) used to fit the threshold.
    #[arg(long)]
    pub calibrate: Option<PathBuf>,
    #[arg(long, value_parser = parse_objective, default_value = "macro_f1")]
    pub objective: Objective,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Labeled pairs (JSONL).
    #[arg(long)]
    pub pairs: PathBuf,
    /// Anchor pool (JSONL).
    #[arg(long)]
    pub pool: PathBuf,
    /// Anchor counts: `0..10` (inclusive) or `0,1,5`.
    #[arg(long, value_parser = parse_k_values, default_value = "0..10")]
    pub k: KValues,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_objective, default_value = "macro_f1")]
    pub objective: Objective,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub targets: PathBuf,
    /// Conditioning documents (JSONL); defaults to the targets themselves.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub max_pos: usize,
}

/// Exit code and error kind for a failed run.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return (2, "usage");
        }
        if let Some(e) = cause.downcast_ref::<osst::Error>() {
            return if e.is_backend() { (3, "backend") } else { (4, "data") };
        }
        if cause.is::<osst::BackendError>() {
            return (3, "backend");
        }
    }
    (4, "data")
}

fn report_error(kind: &str, message: String, code: u8) -> ExitCode {
    let body = json!({ "error": { "kind": kind, "message": message }, "exit_code": code });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error("usage", e.to_string().trim_end().to_string(), 2),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            report_error(kind, format!("{err:#}"), code)
        }
    }
}
