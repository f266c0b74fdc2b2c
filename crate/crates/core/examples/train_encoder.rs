//! Trains a 32-dimensional encoder on triplets mined from a synthetic
//! corpus and compares it with its own random initialization.

use std::time::Instant;

use citembed::corpus::{Corpus, TextMode};
use citembed::encoder::Pooling;
use citembed::pipeline::{desk_config, fit, prepare, rank_with};
use citembed::synth::generate;

fn main() -> citembed::Result<()> {
    let cfg = desk_config();
    let (records, edges) = generate(&cfg.synth)?;
    let corpus = Corpus::new(records, edges)?;
    let prepared = prepare(&corpus, &cfg)?;
    println!(
        "{} test samples; {} train / {} validation triplets",
        prepared.test.len(),
        prepared.train.len(),
        prepared.val.len()
    );

    let start = Instant::now();
    let fitted = fit(&corpus, &prepared.train, &prepared.val, &cfg)?;
    println!("trained {} steps in {:.1?}", fitted.state.step, start.elapsed());
    println!("{:>6} {:>11} {:>9} {:>8}", "step", "train loss", "val loss", "val acc");
    for h in &fitted.state.history {
        println!("{:>6} {:>11.4} {:>9.4} {:>8.3}", h.step, h.train_loss, h.val_loss, h.val_accuracy);
    }

    for (name, encoder) in [("random init", &fitted.initial), ("trained", &fitted.trained)] {
        let r = rank_with(&corpus, encoder, &prepared.test, TextMode::TitleAbstract, Pooling::Mean, &cfg, name)?;
        println!("{name:>12}: avg RFR {:.2}  MAP {:.2}  MRR@10 {:.2}", r.avg_rfr, r.map, r.mrr_at_10);
    }
    Ok(())
}
