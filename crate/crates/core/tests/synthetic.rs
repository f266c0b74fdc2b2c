use std::collections::{BTreeMap, BTreeSet};

use citembed::corpus::{ApplicationKind, Corpus};
use citembed::encoder::words;
use citembed::synth::{generate, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn default_corpus() -> Corpus {
    let (records, edges) = generate(&SynthSpec::default()).unwrap();
    Corpus::new(records, edges).unwrap()
}

#[test]
fn sizes_and_shapes() {
    let spec = SynthSpec::default();
    let corpus = default_corpus();
    assert_eq!(corpus.len(), spec.n_topics * spec.docs_per_topic);
    assert_eq!(corpus.dangling_count(), 0);
    let families: BTreeSet<&str> = corpus.records().iter().map(|r| r.family_id.as_str()).collect();
    for f in &families {
        let members: Vec<_> = corpus.records().iter().filter(|r| r.family_id == *f).collect();
        assert!((1..=3).contains(&members.len()));
        assert_eq!(members.iter().filter(|r| r.jurisdiction == "EP").count(), 1);
        assert!(members
            .iter()
            .all(|r| (r.jurisdiction == "EP") == (r.application_kind != ApplicationKind::Other)));
    }
    assert!(corpus.records().iter().any(|r| r.cpc_codes.is_empty()));
    assert!(corpus.records().iter().any(|r| r.language.as_deref() != Some("en")));
}

#[test]
fn citations_point_backwards_and_every_non_root_document_cites() {
    let spec = SynthSpec::default();
    let corpus = default_corpus();
    let mut out_degree: BTreeMap<&str, usize> = BTreeMap::new();
    for e in corpus.edges() {
        let (a, b) = (corpus.get(&e.citing_id).unwrap(), corpus.get(&e.cited_id).unwrap());
        assert_ne!(a.family_id, b.family_id);
        assert!(b.publication_date < a.filing_date, "{} cites later {}", a.patent_id, b.patent_id);
        *out_degree.entry(&e.citing_id).or_default() += 1;
    }
    let earliest_publication = corpus.records().iter().filter_map(|r| r.publication_date).min().unwrap();
    for r in corpus.records() {
        let n = out_degree.get(r.patent_id.as_str()).copied().unwrap_or(0);
        assert!(n <= spec.max_citations);
        let has_prior_art = r.filing_date.unwrap() > earliest_publication
            && corpus
                .records()
                .iter()
                .any(|c| c.family_id != r.family_id && c.publication_date < r.filing_date);
        if has_prior_art {
            assert!(n >= 1, "{} has prior art but cites nothing", r.patent_id);
        }
    }
}

#[test]
fn citations_mostly_stay_within_a_topic() {
    let corpus = default_corpus();
    let class = |id: &str| corpus.get(id).and_then(|r| r.cpc_codes.first()).map(|c| c[..4].to_string());
    let (mut same, mut known) = (0, 0);
    for e in corpus.edges() {
        if let (Some(a), Some(b)) = (class(&e.citing_id), class(&e.cited_id)) {
            known += 1;
            same += usize::from(a == b);
        }
    }
    let share = same as f64 / known as f64;
    assert!((0.85..=0.95).contains(&share), "intra-topic share {share}");
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    a.intersection(b).count() as f64 / a.union(b).count() as f64
}

#[test]
fn same_topic_documents_share_more_vocabulary() {
    let corpus = default_corpus();
    let docs: Vec<(String, BTreeSet<String>)> = corpus
        .records()
        .iter()
        .filter(|r| r.language.as_deref() == Some("en") && !r.cpc_codes.is_empty())
        .map(|r| {
            let text = format!("{} {}", r.title.as_deref().unwrap_or(""), r.abstract_text.as_deref().unwrap_or(""));
            (r.cpc_codes[0][..4].to_string(), words(&text).collect())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut within, mut across) = (Vec::new(), Vec::new());
    while within.len() < 2000 || across.len() < 2000 {
        let (i, j) = (rng.random_range(0..docs.len()), rng.random_range(0..docs.len()));
        if i == j {
            continue;
        }
        let s = jaccard(&docs[i].1, &docs[j].1);
        if docs[i].0 == docs[j].0 {
            within.push(s);
        } else {
            across.push(s);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&within) > mean(&across), "within {} across {}", mean(&within), mean(&across));
}

#[test]
fn generation_is_deterministic_per_seed() {
    let a = generate(&SynthSpec::default()).unwrap();
    let b = generate(&SynthSpec::default()).unwrap();
    assert_eq!(a, b);
    let c = generate(&SynthSpec {
        seed: 8,
        ..SynthSpec::default()
    })
    .unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn inconsistent_spec_is_rejected() {
    let spec = SynthSpec {
        min_citations: 9,
        max_citations: 2,
        ..SynthSpec::default()
    };
    assert!(generate(&spec).is_err());
}
