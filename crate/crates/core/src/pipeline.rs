//! The whole workflow in memory: a held-out test set first, training
//! triplets mined from the patents it leaves untouched, then training and
//! ranking. The command-line stages do the same through files.

use std::collections::BTreeSet;

use crate::config::RunConfig;
use crate::corpus::{Corpus, TextMode};
use crate::encoder::{ModelProvider, Pooling, TextEncoder, Tokenizer};
use crate::error::Result;
use crate::evaluator::{evaluate_model, format_pooling_table, MetricsReport, Ranker};
use crate::miner::{retain_samples_with_cpc, retain_with_cpc, sample_focals, split_dataset, Miner, TestSample, Triplet};
use crate::trainer::{self, prepare_triplets, TrainState};

/// Settings sized for the default synthetic corpus: a small test set, so
/// most focals stay available for training, and a 32-dimensional encoder.
pub fn desk_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.testset.samples = 30;
    c.mining.mix.easy = 12;
    c.mining.mix.hard = 6;
    c.encoder.dim = 32;
    c.encoder.out_dim = 32;
    c.train.learning_rate = 0.002;
    c.train.epochs = 2;
    c.train.margin = 0.05;
    c
}

/// Vocabulary over the texts of every patent in `triplets`, in id order so
/// the result does not depend on row order.
pub fn build_tokenizer(corpus: &Corpus, triplets: &[&[Triplet]], cfg: &RunConfig) -> Result<Tokenizer> {
    let ids: BTreeSet<&str> = triplets
        .iter()
        .flat_map(|t| t.iter())
        .flat_map(|t| [t.focal_id.as_str(), t.positive_id.as_str(), t.negative_id.as_str()])
        .collect();
    let texts = ids
        .into_iter()
        .map(|id| corpus.compose_text(id, cfg.text.mode))
        .collect::<Result<Vec<_>>>()?;
    Tokenizer::build(&texts, cfg.tokenizer.max_vocab, cfg.tokenizer.min_freq, cfg.tokenizer.max_len)
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub test: Vec<TestSample>,
    pub train: Vec<Triplet>,
    pub val: Vec<Triplet>,
    pub eligible_focals: usize,
    pub skipped_focals: usize,
}

/// Test set, then triplets from every eligible focal outside it (no test
/// patent appears in any pool), split by focal.
pub fn prepare(corpus: &Corpus, cfg: &RunConfig) -> Result<Prepared> {
    let miner = Miner::new(corpus, cfg.criteria.clone())?;
    let test = miner.build_test_set(cfg.testset.samples, cfg.testset.shape, &[], cfg.seed)?;
    let held: BTreeSet<String> = test.iter().flat_map(|s| s.all_ids().map(str::to_string)).collect();
    let miner = miner.with_excluded(held);
    let eligible = miner.eligible_focals();
    let focals = if cfg.mining.max_focals > 0 {
        sample_focals(&eligible, cfg.mining.max_focals, cfg.seed)
    } else {
        eligible.clone()
    };
    let mined = miner.mine_all(&focals, cfg.mining.mix, cfg.seed);
    let (train, val) = split_dataset(&mined.triplets, cfg.split.train_fraction, cfg.seed)?;
    Ok(Prepared {
        test,
        train,
        val,
        eligible_focals: eligible.len(),
        skipped_focals: mined.skipped.len(),
    })
}

#[derive(Debug, Clone)]
pub struct Fitted {
    /// The encoder before training, sharing the trained one's vocabulary.
    pub initial: TextEncoder,
    pub trained: TextEncoder,
    pub state: TrainState,
}

/// Builds the vocabulary from the training patents and trains from a
/// seeded random start, reading text in `cfg.text.mode`.
pub fn fit(corpus: &Corpus, train: &[Triplet], val: &[Triplet], cfg: &RunConfig) -> Result<Fitted> {
    let tokenizer = build_tokenizer(corpus, &[train, val], cfg)?;
    let train_set = prepare_triplets(corpus, &tokenizer, train, cfg.text.mode)?;
    let val_set = prepare_triplets(corpus, &tokenizer, val, cfg.text.mode)?;
    let initial = TextEncoder::new(tokenizer, cfg.encoder.dim, cfg.encoder.out_dim, cfg.seed);
    let state = trainer::train(initial.params.clone(), &train_set, &val_set, &cfg.train)?;
    let trained = TextEncoder {
        tokenizer: initial.tokenizer.clone(),
        params: state.params.clone(),
    };
    Ok(Fitted { initial, trained, state })
}

/// Ranks `samples` with `encoder` over text in `mode`.
pub fn rank_with(
    corpus: &Corpus,
    encoder: &TextEncoder,
    samples: &[TestSample],
    mode: TextMode,
    pooling: Pooling,
    cfg: &RunConfig,
    name: &str,
) -> Result<MetricsReport> {
    let provider = ModelProvider {
        corpus,
        encoder,
        pooling,
        mode,
    };
    let ranker = Ranker::Embeddings {
        provider: &provider,
        metric: cfg.eval.metric,
    };
    evaluate_model(&ranker, samples, name, pooling.label())
}

/// Both poolings for one encoder.
pub fn rank_both_poolings(
    corpus: &Corpus,
    encoder: &TextEncoder,
    samples: &[TestSample],
    mode: TextMode,
    cfg: &RunConfig,
    name: &str,
) -> Result<Vec<MetricsReport>> {
    [Pooling::First, Pooling::Mean]
        .into_iter()
        .map(|p| rank_with(corpus, encoder, samples, mode, p, cfg, name))
        .collect()
}

pub const ABLATION_ROWS: [&str; 4] = [
    "Original Model / Original Testset",
    "Original Model / Ablated Testset",
    "Ablated Model / Original Testset",
    "Ablated Model / Ablated Testset",
];

#[derive(Debug, Clone)]
pub struct Ablation {
    /// First- and mean-pooled reports for each of [`ABLATION_ROWS`].
    pub reports: Vec<MetricsReport>,
    pub table: String,
    pub dropped_train_triplets: usize,
    pub dropped_val_triplets: usize,
    pub dropped_test_samples: usize,
    pub ablated_test_samples: usize,
}

/// Swaps abstracts for CPC codes. The ablated model trains on title + CPC
/// text; the ablated test set keeps only samples whose patents all carry
/// CPC codes and reads them as title + CPC. Both models are ranked on both
/// test sets.
pub fn ablation(corpus: &Corpus, prepared: &Prepared, original: &TextEncoder, cfg: &RunConfig) -> Result<Ablation> {
    let (train, dropped_train) = retain_with_cpc(corpus, &prepared.train);
    let (val, dropped_val) = retain_with_cpc(corpus, &prepared.val);
    let (test, dropped_test) = retain_samples_with_cpc(corpus, &prepared.test);
    log::info!(
        "without CPC codes: dropped {dropped_train} training and {dropped_val} validation triplet(s), {dropped_test} test sample(s)"
    );
    let mut ablated_cfg = cfg.clone();
    ablated_cfg.text.mode = TextMode::TitleCpc;
    let ablated = fit(corpus, &train, &val, &ablated_cfg)?.trained;

    let cells = [
        (original, &prepared.test, TextMode::TitleAbstract),
        (original, &test, TextMode::TitleCpc),
        (&ablated, &prepared.test, TextMode::TitleAbstract),
        (&ablated, &test, TextMode::TitleCpc),
    ];
    let mut reports = Vec::new();
    for ((encoder, samples, mode), name) in cells.into_iter().zip(ABLATION_ROWS) {
        reports.extend(rank_both_poolings(corpus, encoder, samples, mode, cfg, name)?);
    }
    Ok(Ablation {
        table: format_pooling_table(&reports),
        reports,
        dropped_train_triplets: dropped_train,
        dropped_val_triplets: dropped_val,
        dropped_test_samples: dropped_test,
        ablated_test_samples: test.len(),
    })
}
