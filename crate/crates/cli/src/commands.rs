//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use osst::attribution::{
    attribute_closed, attribute_open, calibrate_open_threshold, AttributionResult, OpenSetCase,
};
use osst::backend::{BackendDescriptor, LanguageModel};
use osst::datasets::{
    cap_author_texts, load_attribution_dir, load_documents_jsonl, load_verification_jsonl, Cleaner,
    LoadOptions, VerificationDataset,
};
use osst::metrics::{self, normalized_rank, position_profile, PositionProfile};
use osst::neutralizer::{NeutralizationFailure, Neutralizer};
use osst::scoring::{Normalization, Scorer};
use osst::store::Store;
use osst::verification::{
    anchor_ablation, calibrate_threshold, decide, evaluate, score_instances, AblationConfig,
    AblationReport, VerificationReport,
};
use osst::{CalibrationResult, Corpus, Document, NeutralizationRecord, NeutralizedText, ScoreTable};
use serde::Serialize;

use crate::config::BackendConfig;
use crate::output::{fmt_f64, opt_threshold, Output};
use crate::{
    AblateArgs, AttributeArgs, AttributeMode, Cli, Command, DiagnoseArgs, NeutralizeArgs, ScoreArgs,
    ScoreModeArg, UsageError, Variant, VerifyArgs,
};

struct Ctx {
    config: BackendConfig,
    no_cache: bool,
    out: Output,
}

/// A trained or connected backend together with its cache.
struct Session {
    backend: Box<dyn LanguageModel>,
    store: Store,
    template_version: String,
}

impl Ctx {
    /// `training` feeds the offline model when no training corpus is configured.
    fn session(&self, training: &[&[Document]]) -> anyhow::Result<Session> {
        let texts: Vec<String> = training
            .iter()
            .flat_map(|docs| docs.iter().map(|d| d.text.clone()))
            .collect();
        Ok(Session {
            backend: self.config.build_backend(&texts)?,
            store: self.config.open_store(self.no_cache)?,
            template_version: self.config.template_version.clone(),
        })
    }
}

impl Session {
    fn descriptor(&self) -> BackendDescriptor {
        self.backend.descriptor().clone()
    }

    fn neutralizer(&self) -> anyhow::Result<Neutralizer<'_>> {
        Ok(Neutralizer::new(self.backend.as_ref(), &self.store, &self.template_version)?)
    }

    fn scorer(&self) -> Scorer<'_> {
        Scorer::new(self.backend.as_ref(), &self.store)
    }

    /// Neutralizes every document; any failure aborts the command.
    fn neutralize(&self, docs: &[Document]) -> anyhow::Result<Vec<NeutralizedText>> {
        let corpus = Corpus::from_documents(docs.to_vec())?;
        let outcome = self.neutralizer()?.neutralize_corpus(&corpus)?;
        if let Some(failure) = outcome.failures.first() {
            return Err(osst::Error::NeutralizationFailed {
                doc_id: failure.doc_id.clone(),
                reason: failure.error.clone(),
            }
            .into());
        }
        docs.iter()
            .map(|doc| {
                let record = outcome.records[&doc.id].clone();
                Ok(NeutralizedText::new(doc.clone(), record)?)
            })
            .collect()
    }

    fn neutralize_map(&self, docs: &[Document]) -> anyhow::Result<BTreeMap<String, NeutralizedText>> {
        Ok(self
            .neutralize(docs)?
            .into_iter()
            .map(|t| (t.id().to_string(), t))
            .collect())
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.backend {
        Some(path) => BackendConfig::load(path)?,
        None => BackendConfig::default(),
    };
    if cli.cache_dir.is_some() {
        config.cache_dir = cli.cache_dir.clone();
    }
    if cli.endpoint.is_some() {
        config.endpoint = cli.endpoint.clone();
    }
    if cli.model_id.is_some() {
        config.model_id = cli.model_id.clone();
    }
    if cli.concurrency.is_some() {
        config.concurrency = cli.concurrency;
    }
    let ctx = Ctx {
        config,
        no_cache: cli.no_cache,
        out: Output::new(cli.out.clone(), cli.emit_csv)?,
    };
    match &cli.command {
        Command::Neutralize(args) => neutralize(&ctx, args),
        Command::Score(args) => score(&ctx, args),
        Command::Attribute(args) => attribute(&ctx, args),
        Command::Verify(args) => verify(&ctx, args),
        Command::AblateAnchors(args) => ablate(&ctx, args),
        Command::DiagnosePositions(args) => diagnose(&ctx, args),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_docs(path: &Path) -> anyhow::Result<Vec<Document>> {
    load_documents_jsonl(path).with_context(|| format!("loading documents from {}", path.display()))
}

fn clean_docs(docs: Vec<Document>, cleaner: Cleaner) -> Vec<Document> {
    docs.into_iter()
        .filter_map(|mut doc| {
            doc.text = cleaner.apply(&doc.text)?;
            Some(doc)
        })
        .collect()
}

fn load_pairs(path: &Path) -> anyhow::Result<VerificationDataset> {
    load_verification_jsonl(path).with_context(|| format!("loading pairs from {}", path.display()))
}

fn csv_row<const N: usize>(cells: [String; N]) -> Vec<String> {
    cells.to_vec()
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

// ---------------------------------------------------------------- neutralize

#[derive(Serialize)]
struct NeutralizeReport {
    backend: BackendDescriptor,
    generator_fingerprint: String,
    template_version: String,
    n_documents: usize,
    n_records: usize,
    failures: Vec<NeutralizationFailure>,
}

fn neutralize(ctx: &Ctx, args: &NeutralizeArgs) -> anyhow::Result<()> {
    let docs = if args.corpus.is_dir() {
        let options = LoadOptions {
            cleaner: args.cleaner,
            max_per_author: None,
        };
        let ds = load_attribution_dir(&args.corpus, &options)?;
        let mut docs = ds.candidates.documents;
        docs.extend(ds.targets);
        docs
    } else {
        clean_docs(load_docs(&args.corpus)?, args.cleaner)
    };
    let session = ctx.session(&[&docs])?;
    let corpus = Corpus::from_documents(docs)?;
    let neutralizer = session.neutralizer()?;
    let (outcome, error) = match neutralizer.neutralize_corpus(&corpus) {
        Ok(outcome) => (outcome, None),
        Err(osst::Error::BatchFailed { failed, total, outcome }) => {
            let err = osst::Error::BatchFailed {
                failed,
                total,
                outcome: outcome.clone(),
            };
            (*outcome, Some(err))
        }
        Err(e) => return Err(e.into()),
    };
    let records: Vec<&NeutralizationRecord> = corpus
        .documents
        .iter()
        .filter_map(|d| outcome.records.get(&d.id))
        .collect();
    ctx.out.jsonl("neutralizations.jsonl", &records)?;
    let report = NeutralizeReport {
        backend: session.descriptor(),
        generator_fingerprint: neutralizer.fingerprint().to_string(),
        template_version: neutralizer.template_version().to_string(),
        n_documents: corpus.len(),
        n_records: records.len(),
        failures: outcome.failures.clone(),
    };
    match error {
        // partial records are kept; the report goes next to them
        Some(err) => {
            ctx.out.json("neutralization_report.json", &report)?;
            Err(err.into())
        }
        None => ctx.out.report("neutralization_report.json", &report),
    }
}

// ---------------------------------------------------------------- score

fn table_csv(ctx: &Ctx, name: &str, table: &ScoreTable) -> anyhow::Result<()> {
    let mut head = vec!["target".to_string()];
    head.extend(table.candidates.iter().cloned());
    let rows: Vec<Vec<String>> = table
        .targets
        .iter()
        .zip(&table.values)
        .map(|(t, row)| {
            let mut r = vec![t.clone()];
            r.extend(row.iter().map(|&v| fmt_f64(v)));
            r
        })
        .collect();
    ctx.out.csv(name, &head, &rows)
}

fn anchors_for(mode: ScoreModeArg, anchors: &Option<std::path::PathBuf>) -> anyhow::Result<Vec<Document>> {
    match (mode, anchors) {
        (ScoreModeArg::NosstRs, Some(path)) => load_docs(path),
        (ScoreModeArg::NosstRs, None) => Err(usage("nosst-rs needs --anchors")),
        (_, Some(_)) => Err(usage("--anchors only applies to nosst-rs")),
        (_, None) => Ok(Vec::new()),
    }
}

fn normalization(mode: ScoreModeArg, anchors: &[NeutralizedText]) -> Option<Normalization<'_>> {
    match mode {
        ScoreModeArg::Osst => None,
        ScoreModeArg::NosstZs => Some(Normalization::ZeroShot),
        ScoreModeArg::NosstRs => Some(Normalization::Anchors(anchors)),
    }
}

fn mode_name(mode: ScoreModeArg) -> &'static str {
    match mode {
        ScoreModeArg::Osst => "osst",
        ScoreModeArg::NosstZs => "nosst-zs",
        ScoreModeArg::NosstRs => "nosst-rs",
    }
}

fn score(ctx: &Ctx, args: &ScoreArgs) -> anyhow::Result<()> {
    let targets = load_docs(&args.targets)?;
    let candidates = load_docs(&args.candidates)?;
    let anchors = anchors_for(args.mode, &args.anchors)?;
    let session = ctx.session(&[&candidates, &targets, &anchors])?;
    let nt_targets = session.neutralize(&targets)?;
    let nt_candidates = session.neutralize(&candidates)?;
    let nt_anchors = session.neutralize(&anchors)?;
    let table = session
        .scorer()
        .score_table_with(&nt_targets, &nt_candidates, normalization(args.mode, &nt_anchors))?;
    ctx.out.report("score_table.json", &table)?;
    table_csv(ctx, "score_table.csv", &table)
}

// ---------------------------------------------------------------- attribute

/// Candidates, targets, and gold labels for the labeled targets
/// (`None`: the true author is not a candidate).
struct AttributionInputs {
    candidates: Corpus,
    targets: Vec<Document>,
    gold: BTreeMap<String, Option<String>>,
}

fn attribution_from_dir(path: &Path, options: &LoadOptions) -> anyhow::Result<AttributionInputs> {
    let ds = load_attribution_dir(path, options)?;
    let gold = ds
        .ground_truth
        .unwrap_or_default()
        .into_iter()
        .map(|(target, author)| {
            let present = author.filter(|a| ds.candidates.authors.contains_key(a));
            (target, present)
        })
        .collect();
    Ok(AttributionInputs {
        candidates: ds.candidates,
        targets: ds.targets,
        gold,
    })
}

fn labeled_targets(path: &Path, cleaner: Cleaner, candidates: &Corpus) -> anyhow::Result<AttributionInputs> {
    let targets = clean_docs(load_docs(path)?, cleaner);
    let gold = targets
        .iter()
        .filter_map(|t| {
            let author = t.author_id.as_ref()?;
            let present = candidates.authors.contains_key(author).then(|| author.clone());
            Some((t.id.clone(), present))
        })
        .collect();
    Ok(AttributionInputs {
        candidates: candidates.clone(),
        targets,
        gold,
    })
}

fn attribution_inputs(args: &AttributeArgs) -> anyhow::Result<AttributionInputs> {
    let options = LoadOptions {
        cleaner: args.cleaner,
        max_per_author: args.max_per_author,
    };
    match (&args.dataset, &args.candidates, &args.targets) {
        (Some(dir), _, _) => attribution_from_dir(dir, &options),
        (None, Some(cands), Some(targets)) => {
            let docs = clean_docs(load_docs(cands)?, args.cleaner);
            if let Some(doc) = docs.iter().find(|d| d.author_id.is_none()) {
                return Err(osst::Error::data(format!("candidate `{}` has no author_id", doc.id)).into());
            }
            let mut corpus = Corpus::from_documents(docs)?;
            if let Some(max) = args.max_per_author {
                corpus = cap_author_texts(&corpus, max)?;
            }
            labeled_targets(targets, args.cleaner, &corpus)
        }
        _ => Err(usage("attribute needs --dataset, or --candidates with --targets")),
    }
}

#[derive(Serialize)]
struct AttributionReport {
    mode: &'static str,
    score: &'static str,
    backend: BackendDescriptor,
    n_authors: usize,
    n_candidate_texts: usize,
    n_targets: usize,
    n_labeled: usize,
    /// Targets entering accuracy: closed-set uses those whose author is a
    /// candidate, open-set uses every labeled target.
    n_evaluated: usize,
    accuracy: Option<f64>,
    normalized_rank: Option<f64>,
    binary_macro_f1: Option<f64>,
    #[serde(serialize_with = "opt_threshold")]
    threshold: Option<f64>,
    calibration: Option<CalibrationResult>,
    n_ties: usize,
}

struct Metrics {
    n_evaluated: usize,
    accuracy: Option<f64>,
    normalized_rank: Option<f64>,
    binary_macro_f1: Option<f64>,
}

fn attribution_metrics(
    results: &[AttributionResult],
    gold: &BTreeMap<String, Option<String>>,
    n_authors: usize,
    open: bool,
) -> anyhow::Result<Metrics> {
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    let mut ranks = Vec::new();
    for result in results {
        let Some(label) = gold.get(&result.target_id) else { continue };
        if let Some(author) = label {
            let ranking: Vec<&str> = result.ranking.iter().map(|a| a.author_id.as_str()).collect();
            ranks.push(normalized_rank(&ranking, author, n_authors)?);
        }
        if open || label.is_some() {
            predicted.push(result.predicted.clone());
            truth.push(label.clone());
        }
    }
    let accuracy = if truth.is_empty() { None } else { Some(metrics::accuracy(&predicted, &truth)?) };
    let binary_macro_f1 = if open && !truth.is_empty() {
        let decisions: Vec<bool> = predicted.iter().map(Option::is_some).collect();
        let present: Vec<bool> = truth.iter().map(Option::is_some).collect();
        Some(metrics::binary_macro_f1(&decisions, &present)?)
    } else {
        None
    };
    Ok(Metrics {
        n_evaluated: truth.len(),
        accuracy,
        normalized_rank: mean(&ranks),
        binary_macro_f1,
    })
}

fn attribute(ctx: &Ctx, args: &AttributeArgs) -> anyhow::Result<()> {
    let open = args.mode == AttributeMode::Open;
    if !open && (args.threshold.is_some() || args.calibrate.is_some()) {
        return Err(usage("--threshold and --calibrate apply to --mode open"));
    }
    if open && args.threshold.is_none() && args.calibrate.is_none() {
        return Err(usage("open-set attribution needs --threshold or --calibrate"));
    }
    let inputs = attribution_inputs(args)?;
    let calib = match &args.calibrate {
        Some(path) if path.is_dir() => Some(attribution_from_dir(
            path,
            &LoadOptions {
                cleaner: args.cleaner,
                max_per_author: args.max_per_author,
            },
        )?),
        Some(path) => Some(labeled_targets(path, args.cleaner, &inputs.candidates)?),
        None => None,
    };
    let anchors = anchors_for(args.score, &args.anchors)?;

    let mut training: Vec<&[Document]> = vec![&inputs.candidates.documents, &inputs.targets, &anchors];
    if let Some(c) = &calib {
        training.push(&c.candidates.documents);
        training.push(&c.targets);
    }
    let session = ctx.session(&training)?;
    let scorer = session.scorer();
    let nt_anchors = session.neutralize(&anchors)?;
    let norm = normalization(args.score, &nt_anchors);
    let nt_candidates = session.neutralize(&inputs.candidates.documents)?;
    let nt_targets = session.neutralize(&inputs.targets)?;
    let table = scorer.score_table_with(&nt_targets, &nt_candidates, norm)?;

    let calibration = match &calib {
        Some(c) => {
            let labeled: Vec<Document> = c
                .targets
                .iter()
                .filter(|t| c.gold.contains_key(&t.id))
                .cloned()
                .collect();
            if labeled.is_empty() {
                return Err(osst::Error::data("calibration set has no labeled targets").into());
            }
            let calib_table = scorer.score_table_with(
                &session.neutralize(&labeled)?,
                &session.neutralize(&c.candidates.documents)?,
                norm,
            )?;
            let cases: Vec<OpenSetCase<'_>> = labeled
                .iter()
                .map(|t| OpenSetCase {
                    table: &calib_table,
                    corpus: &c.candidates,
                    target_id: &t.id,
                    gold: c.gold[&t.id].as_deref(),
                })
                .collect();
            Some(calibrate_open_threshold(&cases, args.objective)?)
        }
        None => None,
    };
    let threshold = args.threshold.or(calibration.as_ref().map(|c| c.threshold));

    let results: Vec<AttributionResult> = inputs
        .targets
        .iter()
        .map(|t| match threshold {
            Some(th) if open => attribute_open(&table, &inputs.candidates, &t.id, th),
            _ => attribute_closed(&table, &inputs.candidates, &t.id),
        })
        .collect::<osst::Result<_>>()?;
    let n_authors = inputs.candidates.authors.len();
    let m = attribution_metrics(&results, &inputs.gold, n_authors, open)?;

    ctx.out.jsonl("attributions.jsonl", &results)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let top = r.ranking.first();
            csv_row([
                r.target_id.clone(),
                r.predicted.clone().unwrap_or_default(),
                top.map(|a| a.author_id.clone()).unwrap_or_default(),
                top.map(|a| fmt_f64(a.score)).unwrap_or_default(),
                r.tie.to_string(),
                inputs.gold.get(&r.target_id).cloned().flatten().unwrap_or_default(),
            ])
        })
        .collect();
    ctx.out.csv(
        "attributions.csv",
        &header(&["target_id", "predicted", "top_author", "top_score", "tie", "gold"]),
        &rows,
    )?;
    let report = AttributionReport {
        mode: if open { "open" } else { "closed" },
        score: mode_name(args.score),
        backend: session.descriptor(),
        n_authors,
        n_candidate_texts: inputs.candidates.len(),
        n_targets: inputs.targets.len(),
        n_labeled: inputs.gold.len(),
        n_evaluated: m.n_evaluated,
        accuracy: m.accuracy,
        normalized_rank: m.normalized_rank,
        binary_macro_f1: m.binary_macro_f1,
        threshold,
        calibration,
        n_ties: results.iter().filter(|r| r.tie).count(),
    };
    ctx.out.report("attribution_report.json", &report)
}

// ---------------------------------------------------------------- verify

#[derive(Serialize)]
struct Decision {
    id: String,
    score: f64,
    same: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<bool>,
}

#[derive(Serialize)]
struct VerifyReport {
    variant: &'static str,
    backend: BackendDescriptor,
    #[serde(serialize_with = "opt_threshold")]
    threshold: Option<f64>,
    calibration: Option<CalibrationResult>,
    n_pairs: usize,
    /// Present when every pair is labeled.
    metrics: Option<VerificationReport>,
}

fn verify(ctx: &Ctx, args: &VerifyArgs) -> anyhow::Result<()> {
    if args.pairs.is_none() && args.calibrate.is_none() {
        return Err(usage("verify needs --pairs, --calibrate, or both"));
    }
    if args.pairs.is_some() && args.threshold.is_none() && args.calibrate.is_none() {
        return Err(usage("verify needs --threshold or --calibrate"));
    }
    let anchors = match (args.variant, &args.anchors) {
        (Variant::Rs, Some(path)) => load_docs(path)?,
        (Variant::Rs, None) => return Err(usage("the rs variant needs --anchors")),
        (Variant::Zs, Some(_)) => return Err(usage("--anchors only applies to the rs variant")),
        (Variant::Zs, None) => Vec::new(),
    };
    let pairs = args.pairs.as_deref().map(load_pairs).transpose()?;
    let calib = args.calibrate.as_deref().map(load_pairs).transpose()?;

    let mut training: Vec<&[Document]> = vec![&anchors];
    training.extend(pairs.iter().map(|p| p.documents.as_slice()));
    training.extend(calib.iter().map(|p| p.documents.as_slice()));
    let session = ctx.session(&training)?;
    let scorer = session.scorer();
    let nt_anchors = session.neutralize(&anchors)?;
    let norm = match args.variant {
        Variant::Zs => Normalization::ZeroShot,
        Variant::Rs => Normalization::Anchors(&nt_anchors),
    };

    let calibration = match &calib {
        Some(c) => {
            let texts = session.neutralize_map(&c.documents)?;
            let scores = score_instances(&scorer, &c.instances, &texts, norm)?;
            Some(calibrate_threshold(&c.instances, &scores, args.objective)?)
        }
        None => None,
    };
    let threshold = args.threshold.or(calibration.as_ref().map(|c| c.threshold));

    let mut n_pairs = 0;
    let mut metrics = None;
    if let (Some(p), Some(th)) = (&pairs, threshold) {
        let texts = session.neutralize_map(&p.documents)?;
        let scores = score_instances(&scorer, &p.instances, &texts, norm)?;
        let decisions: Vec<Decision> = p
            .instances
            .iter()
            .zip(&scores)
            .map(|(inst, &score)| Decision {
                id: inst.id.clone(),
                score,
                same: decide(score, th),
                label: inst.label,
            })
            .collect();
        ctx.out.jsonl("decisions.jsonl", &decisions)?;
        let rows: Vec<Vec<String>> = decisions
            .iter()
            .map(|d| {
                csv_row([
                    d.id.clone(),
                    fmt_f64(d.score),
                    d.same.to_string(),
                    d.label.map(|l| l.to_string()).unwrap_or_default(),
                ])
            })
            .collect();
        ctx.out.csv("decisions.csv", &header(&["id", "score", "same", "label"]), &rows)?;
        n_pairs = decisions.len();
        if p.instances.iter().all(|i| i.label.is_some()) && !p.instances.is_empty() {
            metrics = Some(evaluate(&p.instances, &scores, th)?);
        }
    }
    let report = VerifyReport {
        variant: match args.variant {
            Variant::Zs => "zs",
            Variant::Rs => "rs",
        },
        backend: session.descriptor(),
        threshold,
        calibration,
        n_pairs,
        metrics,
    };
    ctx.out.report("verification_report.json", &report)
}

// ---------------------------------------------------------------- ablate-anchors

#[derive(Serialize)]
struct AblateReport {
    backend: BackendDescriptor,
    #[serde(flatten)]
    ablation: AblationReport,
}

fn ablate(ctx: &Ctx, args: &AblateArgs) -> anyhow::Result<()> {
    let pairs = load_pairs(&args.pairs)?;
    let pool = load_docs(&args.pool)?;
    let session = ctx.session(&[&pairs.documents, &pool])?;
    let texts = session.neutralize_map(&pairs.documents)?;
    let nt_pool = session.neutralize(&pool)?;
    let config = AblationConfig {
        k_values: args.k.0.clone(),
        repeats: args.repeats,
        seed: args.seed,
        objective: args.objective,
    };
    let ablation = anchor_ablation(&session.scorer(), &pairs.instances, &texts, &nt_pool, &config)?;
    let rows: Vec<Vec<String>> = ablation
        .entries
        .iter()
        .map(|e| csv_row([e.k.to_string(), e.runs.to_string(), fmt_f64(e.mean), fmt_f64(e.std)]))
        .collect();
    ctx.out.csv("ablation.csv", &header(&["k", "runs", "mean", "std"]), &rows)?;
    let report = AblateReport {
        backend: session.descriptor(),
        ablation,
    };
    ctx.out.report("ablation_report.json", &report)
}

// ---------------------------------------------------------------- diagnose-positions

#[derive(Serialize)]
struct DiagnoseReport {
    backend: BackendDescriptor,
    max_position: usize,
    #[serde(flatten)]
    profile: PositionProfile,
}

fn diagnose(ctx: &Ctx, args: &DiagnoseArgs) -> anyhow::Result<()> {
    let targets = load_docs(&args.targets)?;
    let candidates = match &args.candidates {
        Some(path) => load_docs(path)?,
        None => targets.clone(),
    };
    let session = ctx.session(&[&targets, &candidates])?;
    let scorer = session.scorer();
    let nt_targets = session.neutralize(&targets)?;
    let nt_candidates = session.neutralize(&candidates)?;
    let mut pairs = Vec::new();
    for target in &nt_targets {
        let zero_shot = scorer.zero_shot(target)?;
        for cond in nt_candidates.iter().filter(|c| c.id() != target.id()) {
            pairs.push((scorer.osst(cond, target)?, zero_shot.clone()));
        }
    }
    if pairs.is_empty() {
        return Err(osst::Error::data("no (conditioning, target) pairs with distinct documents").into());
    }
    let profile = position_profile(&pairs, args.max_pos)?;
    let rows: Vec<Vec<String>> = profile
        .medians
        .iter()
        .zip(&profile.counts)
        .enumerate()
        .map(|(p, (m, c))| csv_row([p.to_string(), m.map(fmt_f64).unwrap_or_default(), c.to_string()]))
        .collect();
    ctx.out.csv("position_profile.csv", &header(&["position", "median", "count"]), &rows)?;
    let report = DiagnoseReport {
        backend: session.descriptor(),
        max_position: args.max_pos,
        profile,
    };
    ctx.out.report("position_profile.json", &report)
}
