//! Ranks the held-out test set with several models, each under first-token
//! and mean pooling, and prints the side-by-side table.

use citembed::corpus::{Corpus, TextMode};
use citembed::evaluator::{evaluate_model, format_pooling_table, Bm25Params, Ranker};
use citembed::pipeline::{desk_config, fit, prepare, rank_both_poolings};
use citembed::synth::generate;

fn main() -> citembed::Result<()> {
    let cfg = desk_config();
    let (records, edges) = generate(&cfg.synth)?;
    let corpus = Corpus::new(records, edges)?;
    let prepared = prepare(&corpus, &cfg)?;
    let fitted = fit(&corpus, &prepared.train, &prepared.val, &cfg)?;
    let mode = TextMode::TitleAbstract;

    let mut reports = rank_both_poolings(&corpus, &fitted.initial, &prepared.test, mode, &cfg, "Random init")?;
    reports.extend(rank_both_poolings(&corpus, &fitted.trained, &prepared.test, mode, &cfg, "Trained")?);
    let bm25 = Ranker::Bm25 {
        corpus: &corpus,
        mode,
        params: Bm25Params::default(),
    };
    reports.push(evaluate_model(&bm25, &prepared.test, "BM25", "-")?);

    println!("{} test samples\n", prepared.test.len());
    print!("{}", format_pooling_table(&reports));
    Ok(())
}
