//! BM25 against a ranker that shuffles candidates uniformly, whose expected
//! MAP is estimated by Monte Carlo.

use citembed::corpus::{Corpus, TextMode};
use citembed::evaluator::{average_precision, evaluate_model, Bm25Params, RankedList, Ranker};
use citembed::miner::{FocalCriteria, Miner, TestShape};
use citembed::rng;
use citembed::synth::{generate, SynthSpec};

fn main() -> citembed::Result<()> {
    let (records, edges) = generate(&SynthSpec::default())?;
    let corpus = Corpus::new(records, edges)?;
    let miner = Miner::new(&corpus, FocalCriteria::default())?;
    let test = miner.build_test_set(200, TestShape::default(), &[], 7)?;

    for (k1, b) in [(1.2, 0.75), (0.9, 0.4), (2.0, 1.0)] {
        let ranker = Ranker::Bm25 {
            corpus: &corpus,
            mode: TextMode::TitleAbstract,
            params: Bm25Params { k1, b },
        };
        let r = evaluate_model(&ranker, &test, "bm25", "-")?;
        println!("BM25 k1={k1} b={b}: avg RFR {:.2}  MAP {:.2}  MRR@10 {:.2}", r.avg_rfr, r.map, r.mrr_at_10);
    }

    let shuffles = 100_000;
    let mut rng = rng::stream(7, "uniform-ranker");
    let positives: Vec<String> = (0..5).map(|i| format!("p{i}")).collect();
    let mut ids: Vec<String> = positives.iter().cloned().chain((0..25).map(|i| format!("n{i}"))).collect();
    let mut total = 0.0;
    for _ in 0..shuffles {
        rng::shuffle(&mut rng, &mut ids);
        let scored = ids.iter().enumerate().map(|(i, id)| (id.clone(), -(i as f64))).collect();
        total += average_precision(&RankedList::from_scores("q", scored), &positives)?;
    }
    println!("uniform shuffle ({shuffles} draws): MAP {:.2}", 100.0 * total / shuffles as f64);
    Ok(())
}
