//! Replaces abstracts with CPC codes: trains a second model on title + CPC
//! text and ranks both models on both the original and the CPC test set.

use citembed::corpus::Corpus;
use citembed::pipeline::{ablation, desk_config, fit, prepare};
use citembed::synth::generate;

fn main() -> citembed::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = desk_config();
    let (records, edges) = generate(&cfg.synth)?;
    let corpus = Corpus::new(records, edges)?;
    let prepared = prepare(&corpus, &cfg)?;
    let original = fit(&corpus, &prepared.train, &prepared.val, &cfg)?.trained;

    let a = ablation(&corpus, &prepared, &original, &cfg)?;
    println!(
        "dropped for lacking CPC codes: {} train triplets, {} validation triplets, {} of {} test samples",
        a.dropped_train_triplets,
        a.dropped_val_triplets,
        a.dropped_test_samples,
        prepared.test.len()
    );
    println!();
    print!("{}", a.table);
    Ok(())
}
