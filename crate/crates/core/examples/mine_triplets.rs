//! Mines triplets from a synthetic corpus and prints the pools of one focal
//! and statistics of the train / validation split.

use citembed::corpus::Corpus;
use citembed::miner::{dataset_stats, split_dataset, FocalCriteria, Miner, TripletMix};
use citembed::synth::{generate, SynthSpec};

fn main() -> citembed::Result<()> {
    let (records, edges) = generate(&SynthSpec::default())?;
    let corpus = Corpus::new(records, edges)?;
    let miner = Miner::new(&corpus, FocalCriteria::default())?;
    let focals = miner.eligible_focals();

    let pools = miner.pools(&focals[0]);
    println!(
        "focal {}: {} positives, {} hard negatives, {} easy negatives",
        focals[0],
        pools.positives.len(),
        pools.hard.len(),
        pools.easy.len()
    );

    let mined = miner.mine_all(&focals, TripletMix::default(), 7);
    println!("{} triplets from {} focals, {} skipped", mined.triplets.len(), focals.len(), mined.skipped.len());
    for s in mined.skipped.iter().take(3) {
        println!("  skipped {}: {}", s.focal_id, s.reason);
    }

    let (train, val) = split_dataset(&mined.triplets, 0.85, 7)?;
    for (name, rows) in [("train", &train), ("val", &val)] {
        let st = dataset_stats(rows);
        println!(
            "{name}: {} rows, {} focals, {} hard / {} easy, {:.0}% of positives used once",
            st.rows,
            st.unique_focals,
            st.hard_negatives,
            st.easy_negatives,
            100.0 * st.positives_used_once
        );
    }
    Ok(())
}
