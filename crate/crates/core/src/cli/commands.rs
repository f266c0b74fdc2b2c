use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{RankerKind, RunConfig};
use crate::corpus::{load_corpus, ApplicationKind, CategorySet, CitationCategory, Corpus, CorpusSummary, TextMode};
use crate::encoder::{embed_corpus, load_external_embeddings, EncoderParams, ModelProvider, TextEncoder};
use crate::error::{Error, Result};
use crate::evaluator::{
    ecdf_export, evaluate_model, format_metrics_table, format_pooling_table, paired_significance, write_ecdf, MetricsReport,
    Ranker,
};
use crate::jsonl;
use crate::pipeline::build_tokenizer;
use crate::miner::{
    dataset_stats, retain_samples_with_cpc, retain_with_cpc, sample_focals, split_dataset, DatasetStats, Miner, TestSample,
    Triplet,
};
use crate::synth;
use crate::trainer::{self, prepare_triplets, HistoryEntry, TrainState};

/// Files a command read and wrote, for its manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Distinguishes manifests of repeated runs sharing an output directory.
    pub tag: Option<String>,
}

impl Outcome {
    fn wrote(&mut self, path: PathBuf) -> &Path {
        self.outputs.push(path);
        self.outputs.last().unwrap()
    }
}

fn or_default(given: &Option<PathBuf>, cfg: &RunConfig, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.out.join(name))
}

/// An explicitly configured path, or the conventional file in `out` if it
/// exists.
fn optional(given: &Option<PathBuf>, cfg: &RunConfig, name: &str) -> Option<PathBuf> {
    given.clone().or_else(|| Some(cfg.out.join(name)).filter(|p| p.exists()))
}

/// Prints to stdout, ignoring a closed pipe.
pub(super) fn say(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn open_corpus(cfg: &RunConfig, outcome: &mut Outcome) -> Result<Corpus> {
    let records = or_default(&cfg.paths.records, cfg, "records.jsonl");
    let citations = or_default(&cfg.paths.citations, cfg, "citations.jsonl");
    let corpus = load_corpus(&records, &citations)?;
    outcome.inputs.extend([records, citations]);
    Ok(corpus)
}

fn read_triplets(path: PathBuf, outcome: &mut Outcome) -> Result<Vec<Triplet>> {
    let t = jsonl::read_values(&path)?;
    outcome.inputs.push(path);
    Ok(t)
}

fn read_test_set(cfg: &RunConfig, outcome: &mut Outcome) -> Result<Vec<TestSample>> {
    let path = or_default(&cfg.paths.test, cfg, "test.jsonl");
    let s = jsonl::read_values(&path)?;
    outcome.inputs.push(path);
    Ok(s)
}

/// Counts explaining why no focal qualified.
#[derive(Debug, Clone, Serialize)]
pub struct EligibilityDiagnostics {
    pub records: usize,
    pub of_focal_kind: usize,
    pub with_cpc: usize,
    pub with_enough_xyi: usize,
    pub eligible: usize,
}

fn diagnostics(corpus: &Corpus, cfg: &RunConfig, eligible: usize) -> EligibilityDiagnostics {
    let xyi = CategorySet::of(&[CitationCategory::X, CitationCategory::Y, CitationCategory::I]);
    let kind = |k: ApplicationKind| cfg.criteria.kinds.contains(&k);
    EligibilityDiagnostics {
        records: corpus.len(),
        of_focal_kind: corpus.records().iter().filter(|r| kind(r.application_kind)).count(),
        with_cpc: corpus.records().iter().filter(|r| !r.cpc_codes.is_empty()).count(),
        with_enough_xyi: corpus
            .records()
            .iter()
            .filter(|r| corpus.backward_citations(&r.patent_id, xyi).len() >= cfg.criteria.min_xyi)
            .count(),
        eligible,
    }
}

#[derive(Serialize)]
struct SynthSummary {
    corpus: CorpusSummary,
    eligibility: EligibilityDiagnostics,
}

pub fn synth(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let (records, edges) = synth::generate(&cfg.synth)?;
    let corpus = Corpus::new(records, edges)?;
    let eligible = Miner::new(&corpus, cfg.criteria.clone())?.eligible_focals().len();
    let eligibility = diagnostics(&corpus, cfg, eligible);
    if eligible == 0 {
        log::warn!(
            "synthetic corpus has no eligible focals: {} records, {} of a focal kind, {} with CPC, {} with >= {} X/Y/I citations",
            eligibility.records,
            eligibility.of_focal_kind,
            eligibility.with_cpc,
            eligibility.with_enough_xyi,
            cfg.criteria.min_xyi
        );
    }
    let records = cfg.out.join("records.jsonl");
    let citations = cfg.out.join("citations.jsonl");
    corpus.write(&records, &citations)?;
    outcome.outputs.extend([records, citations]);
    let summary = SynthSummary {
        corpus: corpus.summary(),
        eligibility,
    };
    write_json(outcome.wrote(cfg.out.join("synth.json")), &summary)?;
    Ok(outcome)
}

pub fn ingest(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let corpus = open_corpus(cfg, &mut outcome)?;
    let summary = corpus.summary();
    log::info!(
        "{} records in {} families, {} edges ({} dangling)",
        summary.records,
        summary.families,
        summary.edges,
        summary.dangling_edges
    );
    let records = cfg.out.join("records.jsonl");
    let citations = cfg.out.join("citations.jsonl");
    corpus.write(&records, &citations)?;
    outcome.outputs.extend([records, citations]);
    write_json(outcome.wrote(cfg.out.join("corpus.json")), &summary)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct MiningSummary {
    eligible_focals: usize,
    mined_focals: usize,
    skipped_focals: usize,
    excluded_ids: usize,
    dropped_without_cpc: usize,
    triplets: DatasetStats,
}

pub fn mine(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let corpus = open_corpus(cfg, &mut outcome)?;
    let mut excluded = BTreeSet::new();
    if let Some(path) = &cfg.paths.exclude {
        let samples: Vec<TestSample> = jsonl::read_values(path)?;
        outcome.inputs.push(path.clone());
        excluded.extend(samples.iter().flat_map(|s| s.all_ids().map(str::to_string)));
    }
    let excluded_ids = excluded.len();
    let miner = Miner::new(&corpus, cfg.criteria.clone())?.with_excluded(excluded);
    let eligible = miner.eligible_focals();
    if eligible.is_empty() {
        let d = diagnostics(&corpus, cfg, 0);
        return Err(Error::Insufficient(format!(
            "no eligible focals ({} records, {} of a focal kind, {} with CPC, {} with enough X/Y/I citations)",
            d.records, d.of_focal_kind, d.with_cpc, d.with_enough_xyi
        )));
    }
    let focals = if cfg.mining.max_focals > 0 {
        sample_focals(&eligible, cfg.mining.max_focals, cfg.seed)
    } else {
        eligible.clone()
    };
    let mined = miner.mine_all(&focals, cfg.mining.mix, cfg.seed);
    let (triplets, dropped) = match cfg.text.mode {
        TextMode::TitleCpc => retain_with_cpc(&corpus, &mined.triplets),
        TextMode::TitleAbstract => (mined.triplets, 0),
    };
    if dropped > 0 {
        log::info!("dropped {dropped} triplet(s) with a patent lacking CPC codes");
    }
    if triplets.is_empty() {
        return Err(Error::Insufficient("no triplets mined".into()));
    }
    log::info!(
        "{} triplets from {} focal(s); {} skipped",
        triplets.len(),
        focals.len() - mined.skipped.len(),
        mined.skipped.len()
    );
    jsonl::write(outcome.wrote(cfg.out.join("triplets.jsonl")), &triplets)?;
    jsonl::write(outcome.wrote(cfg.out.join("skipped.jsonl")), &mined.skipped)?;
    let summary = MiningSummary {
        eligible_focals: eligible.len(),
        mined_focals: focals.len() - mined.skipped.len(),
        skipped_focals: mined.skipped.len(),
        excluded_ids,
        dropped_without_cpc: dropped,
        triplets: dataset_stats(&triplets),
    };
    write_json(outcome.wrote(cfg.out.join("mining.json")), &summary)?;
    Ok(outcome)
}

pub fn split(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let triplets = read_triplets(or_default(&cfg.paths.triplets, cfg, "triplets.jsonl"), &mut outcome)?;
    let (train, val) = split_dataset(&triplets, cfg.split.train_fraction, cfg.seed)?;
    log::info!("{} train / {} validation rows", train.len(), val.len());
    jsonl::write(outcome.wrote(cfg.out.join("train.jsonl")), &train)?;
    jsonl::write(outcome.wrote(cfg.out.join("val.jsonl")), &val)?;
    let stats = serde_json::json!({ "train": dataset_stats(&train), "val": dataset_stats(&val) });
    write_json(outcome.wrote(cfg.out.join("split.json")), &stats)?;
    Ok(outcome)
}

pub fn build_testset(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let corpus = open_corpus(cfg, &mut outcome)?;
    let mut used = Vec::new();
    for path in [&cfg.paths.triplets, &cfg.paths.train, &cfg.paths.val].into_iter().flatten() {
        used.extend(read_triplets(path.clone(), &mut outcome)?);
    }
    let miner = Miner::new(&corpus, cfg.criteria.clone())?;
    let samples = miner.build_test_set(cfg.testset.samples, cfg.testset.shape, &used, cfg.seed)?;
    let built = samples.len();
    let (samples, dropped) = match cfg.text.mode {
        TextMode::TitleCpc => retain_samples_with_cpc(&corpus, &samples),
        TextMode::TitleAbstract => (samples, 0),
    };
    if dropped > 0 {
        log::info!("dropped {dropped} test sample(s) with a patent lacking CPC codes");
    }
    if samples.is_empty() {
        return Err(Error::Insufficient("empty test set".into()));
    }
    jsonl::write(outcome.wrote(cfg.out.join("test.jsonl")), &samples)?;
    let summary = serde_json::json!({
        "requested": cfg.testset.samples,
        "built": built,
        "dropped_without_cpc": dropped,
        "samples": samples.len(),
    });
    write_json(outcome.wrote(cfg.out.join("testset.json")), &summary)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct TrainingSummary {
    steps: u64,
    complete: bool,
    vocab: usize,
    initial: Option<HistoryEntry>,
    last: Option<HistoryEntry>,
}

pub fn train(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let corpus = open_corpus(cfg, &mut outcome)?;
    let train_rows = read_triplets(or_default(&cfg.paths.train, cfg, "train.jsonl"), &mut outcome)?;
    let val_rows = read_triplets(or_default(&cfg.paths.val, cfg, "val.jsonl"), &mut outcome)?;
    let tokenizer = build_tokenizer(&corpus, &[&train_rows, &val_rows], cfg)?;
    let train_set = prepare_triplets(&corpus, &tokenizer, &train_rows, cfg.text.mode)?;
    let val_set = prepare_triplets(&corpus, &tokenizer, &val_rows, cfg.text.mode)?;

    let state = match &cfg.paths.checkpoint {
        Some(path) => {
            let (state, saved) = TrainState::load_checkpoint(path)?;
            outcome.inputs.push(path.clone());
            if saved != cfg.train {
                log::warn!("checkpoint was written under a different training config; continuing with the current one");
            }
            if state.params.vocab_size != tokenizer.len() {
                return Err(Error::DimensionMismatch {
                    expected: tokenizer.len(),
                    actual: state.params.vocab_size,
                });
            }
            log::info!("resuming from step {}", state.step);
            state
        }
        None => TrainState::new(EncoderParams::init(tokenizer.len(), cfg.encoder.dim, cfg.encoder.out_dim, cfg.seed)),
    };
    let until = (cfg.stop_step > 0).then_some(cfg.stop_step);
    let state = trainer::resume(state, &train_set, &val_set, &cfg.train, until)?;
    let total = cfg.train.total_steps(train_set.len());
    if let (Some(first), Some(last)) = (state.history.first(), state.history.last()) {
        log::info!(
            "step {}/{total}: validation loss {:.4} -> {:.4}, accuracy {:.3} -> {:.3}",
            state.step,
            first.val_loss,
            last.val_loss,
            first.val_accuracy,
            last.val_accuracy
        );
    }

    let encoder = TextEncoder {
        tokenizer,
        params: state.params.clone(),
    };
    encoder.save(outcome.wrote(cfg.out.join("model.json")))?;
    state.save_checkpoint(outcome.wrote(cfg.out.join("checkpoint.json")), &cfg.train)?;
    trainer::write_history(outcome.wrote(cfg.out.join("history.tsv")), &state.history)?;
    let summary = TrainingSummary {
        steps: state.step,
        complete: state.step >= total,
        vocab: encoder.tokenizer.len(),
        initial: state.history.first().copied(),
        last: state.history.last().copied(),
    };
    write_json(outcome.wrote(cfg.out.join("training.json")), &summary)?;
    Ok(outcome)
}

fn load_model(cfg: &RunConfig, outcome: &mut Outcome) -> Result<TextEncoder> {
    let path = or_default(&cfg.paths.model, cfg, "model.json");
    let model = TextEncoder::load(&path)?;
    outcome.inputs.push(path);
    Ok(model)
}

pub fn embed(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let corpus = open_corpus(cfg, &mut outcome)?;
    let model = load_model(cfg, &mut outcome)?;
    let ids: Vec<String> = match &cfg.paths.test {
        Some(_) => {
            let samples = read_test_set(cfg, &mut outcome)?;
            let ids: BTreeSet<String> = samples.iter().flat_map(|s| s.all_ids().map(str::to_string)).collect();
            ids.into_iter().collect()
        }
        None => corpus.records().iter().map(|r| r.patent_id.clone()).collect(),
    };
    let provider = ModelProvider {
        corpus: &corpus,
        encoder: &model,
        pooling: cfg.eval.pooling,
        mode: cfg.text.mode,
    };
    let embedded = embed_corpus(&provider, &ids);
    if !embedded.missing.is_empty() {
        log::warn!("{} patent(s) could not be embedded; listed in missing.txt", embedded.missing.len());
    }
    embedded.table.write(outcome.wrote(cfg.out.join("embeddings.txt")))?;
    let missing: String = embedded.missing.iter().map(|id| format!("{id}\n")).collect();
    let path = outcome.wrote(cfg.out.join("missing.txt"));
    std::fs::write(path, missing).map_err(|e| Error::io(path, e))?;
    Ok(outcome)
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect()
}

pub fn evaluate(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let corpus = open_corpus(cfg, &mut outcome)?;
    let samples = read_test_set(cfg, &mut outcome)?;
    let samples = match cfg.text.mode {
        TextMode::TitleCpc => {
            let (kept, dropped) = retain_samples_with_cpc(&corpus, &samples);
            if dropped > 0 {
                log::info!("dropped {dropped} test sample(s) with a patent lacking CPC codes; {} remain", kept.len());
            }
            kept
        }
        TextMode::TitleAbstract => samples,
    };
    let label = |default: &str| if cfg.eval.name.is_empty() { default.to_string() } else { cfg.eval.name.clone() };
    let report = match cfg.eval.ranker {
        RankerKind::Model => {
            let model = load_model(cfg, &mut outcome)?;
            let provider = ModelProvider {
                corpus: &corpus,
                encoder: &model,
                pooling: cfg.eval.pooling,
                mode: cfg.text.mode,
            };
            let ranker = Ranker::Embeddings {
                provider: &provider,
                metric: cfg.eval.metric,
            };
            evaluate_model(&ranker, &samples, &label("model"), cfg.eval.pooling.label())?
        }
        RankerKind::Embeddings => {
            let path = or_default(&cfg.paths.embeddings, cfg, "embeddings.txt");
            let table = load_external_embeddings(&path)?;
            outcome.inputs.push(path);
            let ranker = Ranker::Embeddings {
                provider: &table,
                metric: cfg.eval.metric,
            };
            evaluate_model(&ranker, &samples, &label("embeddings"), "-")?
        }
        RankerKind::Bm25 => {
            let ranker = Ranker::Bm25 {
                corpus: &corpus,
                mode: cfg.text.mode,
                params: cfg.eval.bm25,
            };
            evaluate_model(&ranker, &samples, &label("bm25"), "-")?
        }
    };
    log::info!(
        "{} on {} samples: avg RFR {:.2}, MAP {:.2}, MRR@10 {:.2}",
        report.label(),
        report.samples,
        report.avg_rfr,
        report.map,
        report.mrr_at_10
    );
    let mut parts = vec![report.model.as_str()];
    parts.extend([report.pooling.as_str(), report.metric.as_str()].into_iter().filter(|p| !p.is_empty() && *p != "-" && *p != report.model));
    let stem = slug(&parts.join("-"));
    report.save(outcome.wrote(cfg.out.join(format!("report-{stem}.json"))))?;
    outcome.tag = Some(stem);
    Ok(outcome)
}

fn load_reports(cfg: &RunConfig, outcome: &mut Outcome) -> Result<Vec<MetricsReport>> {
    if cfg.paths.reports.is_empty() {
        return Err(Error::InvalidInput("no reports given".into()));
    }
    let reports = cfg.paths.reports.iter().map(|p| MetricsReport::load(p)).collect::<Result<Vec<_>>>()?;
    outcome.inputs.extend(cfg.paths.reports.iter().cloned());
    Ok(reports)
}

/// Metrics table, pooling table, and paired significance of every report
/// against the first.
pub fn compare(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let reports = load_reports(cfg, &mut outcome)?;
    let path = outcome.wrote(cfg.out.join("comparison.tsv"));
    std::fs::write(path, format_metrics_table(&reports)).map_err(|e| Error::io(path, e))?;
    let table = format_pooling_table(&reports);
    say(&table);
    let path = outcome.wrote(cfg.out.join("comparison.txt"));
    std::fs::write(path, &table).map_err(|e| Error::io(path, e))?;

    let kind = cfg.eval.significance_metric;
    let mut sig = String::from("baseline\tother\tmetric\tmean_difference\tp_value\n");
    let base = &reports[0];
    for other in &reports[1..] {
        let p = match paired_significance(other, base, kind, cfg.eval.resamples, cfg.seed) {
            Ok(p) => p.to_string(),
            Err(e) => {
                log::warn!("no significance for {} vs {}: {e}", base.label(), other.label());
                "n/a".into()
            }
        };
        let (a, b) = (other.per_sample.values(kind), base.per_sample.values(kind));
        let diff = if a.len() == b.len() && !a.is_empty() {
            format!("{}", a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64)
        } else {
            "n/a".into()
        };
        sig.push_str(&format!(
            "{}\t{}\t{}\t{diff}\t{p}\n",
            base.label(),
            other.label(),
            serde_json::to_value(kind)?.as_str().unwrap_or_default()
        ));
    }
    let path = outcome.wrote(cfg.out.join("significance.tsv"));
    std::fs::write(path, sig).map_err(|e| Error::io(path, e))?;
    Ok(outcome)
}

pub fn ecdf(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let reports = load_reports(cfg, &mut outcome)?;
    write_ecdf(outcome.wrote(cfg.out.join("ecdf.tsv")), &ecdf_export(&reports))?;
    Ok(outcome)
}

#[derive(Serialize, Default)]
struct Stats {
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<CorpusSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eligibility: Option<EligibilityDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    triplets: Option<DatasetStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<DatasetStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    val: Option<DatasetStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_samples: Option<usize>,
}

/// Summaries of whichever artifacts are present.
pub fn stats(cfg: &RunConfig) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let mut stats = Stats::default();
    let records = optional(&cfg.paths.records, cfg, "records.jsonl");
    let citations = optional(&cfg.paths.citations, cfg, "citations.jsonl");
    if records.is_some() && citations.is_some() {
        let corpus = open_corpus(cfg, &mut outcome)?;
        let eligible = Miner::new(&corpus, cfg.criteria.clone())?.eligible_focals().len();
        stats.eligibility = Some(diagnostics(&corpus, cfg, eligible));
        stats.corpus = Some(corpus.summary());
    }
    let mut triplets = |given: &Option<PathBuf>, name: &str| -> Result<Option<DatasetStats>> {
        optional(given, cfg, name)
            .map(|p| read_triplets(p, &mut outcome).map(|t| dataset_stats(&t)))
            .transpose()
    };
    stats.triplets = triplets(&cfg.paths.triplets, "triplets.jsonl")?;
    stats.train = triplets(&cfg.paths.train, "train.jsonl")?;
    stats.val = triplets(&cfg.paths.val, "val.jsonl")?;
    if let Some(path) = optional(&cfg.paths.test, cfg, "test.jsonl") {
        let samples: Vec<TestSample> = jsonl::read_values(&path)?;
        outcome.inputs.push(path);
        stats.test_samples = Some(samples.len());
    }
    let body = serde_json::to_string_pretty(&stats)?;
    say(&body);
    write_json(outcome.wrote(cfg.out.join("stats.json")), &stats)?;
    Ok(outcome)
}
