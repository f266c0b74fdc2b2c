//! Generates the default synthetic corpus, writes it as JSONL, and shows
//! how many patents qualify as focals.
//!
//!     cargo run --release --example synthetic_corpus -- /tmp/corpus

use std::path::PathBuf;

use citembed::corpus::Corpus;
use citembed::miner::{FocalCriteria, Miner};
use citembed::synth::{generate, SynthSpec};

fn main() -> citembed::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synthetic-corpus".into()));
    std::fs::create_dir_all(&out).map_err(|e| citembed::Error::InvalidInput(e.to_string()))?;

    let spec = SynthSpec::default();
    let (records, edges) = generate(&spec)?;
    let corpus = Corpus::new(records, edges)?;
    corpus.write(&out.join("records.jsonl"), &out.join("citations.jsonl"))?;

    let s = corpus.summary();
    println!("{} records in {} families, {} citations", s.records, s.families, s.edges);
    println!("{} without CPC codes, {} with resolvable English text", s.without_cpc, s.english_resolvable);

    let miner = Miner::new(&corpus, FocalCriteria::default())?;
    println!("{} eligible focals", miner.eligible_focals().len());

    let sample = &corpus.records()[0];
    println!("\n{} [{}] {}", sample.patent_id, sample.cpc_codes.join(", "), sample.title.as_deref().unwrap_or("-"));
    println!("wrote {}", out.display());
    Ok(())
}
