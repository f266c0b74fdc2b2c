//! Paired bootstrap between two rankers on the same test set, and the
//! cumulative RFR distribution of each.

use citembed::corpus::{Corpus, TextMode};
use citembed::evaluator::{ecdf_export, evaluate_model, paired_significance, Bm25Params, MetricKind, Ranker};
use citembed::pipeline::{desk_config, fit, prepare, rank_with};
use citembed::synth::generate;

fn main() -> citembed::Result<()> {
    let cfg = desk_config();
    let (records, edges) = generate(&cfg.synth)?;
    let corpus = Corpus::new(records, edges)?;
    let prepared = prepare(&corpus, &cfg)?;
    let fitted = fit(&corpus, &prepared.train, &prepared.val, &cfg)?;

    let mode = TextMode::TitleAbstract;
    let trained = rank_with(&corpus, &fitted.trained, &prepared.test, mode, cfg.eval.pooling, &cfg, "trained")?;
    let initial = rank_with(&corpus, &fitted.initial, &prepared.test, mode, cfg.eval.pooling, &cfg, "random init")?;
    let bm25 = evaluate_model(
        &Ranker::Bm25 {
            corpus: &corpus,
            mode,
            params: Bm25Params::default(),
        },
        &prepared.test,
        "bm25",
        "-",
    )?;

    for other in [&initial, &bm25] {
        for kind in [MetricKind::Ap, MetricKind::Rfr, MetricKind::Mrr10] {
            let p = paired_significance(&trained, other, kind, 10_000, cfg.seed)?;
            println!("trained vs {:<12} {kind:?}: p = {p:.4}", other.label());
        }
    }

    println!("\nmodel\trfr\tcum_fraction");
    for row in ecdf_export(&[trained, initial, bm25]) {
        println!("{}\t{}\t{:.3}", row.model, row.rfr, row.cum_fraction);
    }
    Ok(())
}
