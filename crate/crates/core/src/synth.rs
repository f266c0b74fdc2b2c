//! Topic-clustered synthetic patent corpora for desk-scale runs.
//!
//! Each topic owns a pool of feature terms, a few general terms, and one CPC
//! subclass; neighbouring topics share a CPC class. Every document carries a
//! small set of its topic's features and mentions them in its text through
//! interchangeable surface forms, diluted by frequent shared filler words. Citations point backwards in time, mostly
//! within the topic, and strongly prefer documents sharing a feature. Feature
//! overlap is not transitive, so a cited document is lexically closer to the
//! citing one than a second-hop document is.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{Days, NaiveDate};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ApplicationKind, CitationCategory, CitationEdge, PatentRecord};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

const CLASSES: [&str; 8] = ["H01", "G06", "A61", "F16", "B60", "C07", "H04", "B01"];
const SUBCLASSES: [char; 8] = ['B', 'K', 'L', 'M', 'N', 'P', 'Q', 'R'];
const SIBLING_AUTHORITIES: [&str; 6] = ["US", "WO", "JP", "DE", "CN", "GB"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_topics: usize,
    pub docs_per_topic: usize,
    /// Feature concepts per topic.
    pub vocab_per_topic: usize,
    /// Interchangeable surface forms per feature concept.
    pub synonyms_per_feature: usize,
    /// General terms per topic; documents draw from these sparsely, so
    /// same-topic documents share meaning more than exact words.
    pub general_per_topic: usize,
    pub shared_vocab: usize,
    pub intra_topic_citation_prob: f64,
    /// Consecutive topics grouped under one CPC class, each with its own
    /// subclass.
    pub topics_per_class: usize,
    /// Features drawn per document from its topic's pool.
    pub features_per_doc: usize,
    /// Log-weight per shared feature when choosing intra-topic citations.
    pub feature_affinity: f64,
    /// Relative weights of family sizes 1, 2 and 3.
    pub family_size_weights: [f64; 3],
    pub min_citations: usize,
    pub max_citations: usize,
    /// Relative weights over citation categories.
    pub categories: BTreeMap<CitationCategory, f64>,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub cpc_codes_per_doc: usize,
    pub title_words: usize,
    pub abstract_words: usize,
    /// Share of abstract words drawn from the document's features, then from
    /// the topic's general terms; the remainder is shared filler.
    pub feature_word_share: f64,
    pub topic_word_share: f64,
    pub missing_cpc_prob: f64,
    pub non_english_prob: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        use CitationCategory::*;
        SynthSpec {
            n_topics: 8,
            docs_per_topic: 150,
            vocab_per_topic: 16,
            synonyms_per_feature: 8,
            general_per_topic: 100,
            shared_vocab: 100,
            intra_topic_citation_prob: 0.9,
            topics_per_class: 4,
            features_per_doc: 2,
            feature_affinity: 4.0,
            family_size_weights: [0.5, 0.3, 0.2],
            min_citations: 3,
            max_citations: 8,
            categories: [(X, 0.3), (Y, 0.15), (I, 0.1), (A, 0.3), (D, 0.1), (P, 0.05)].into_iter().collect(),
            start_date: NaiveDate::from_ymd_opt(1983, 1, 1).unwrap(),
            end_date: NaiveDate::from_ymd_opt(2020, 12, 31).unwrap(),
            cpc_codes_per_doc: 2,
            title_words: 6,
            abstract_words: 60,
            feature_word_share: 0.35,
            topic_word_share: 0.25,
            missing_cpc_prob: 0.05,
            non_english_prob: 0.1,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let counts = [
            ("n_topics", self.n_topics),
            ("docs_per_topic", self.docs_per_topic),
            ("vocab_per_topic", self.vocab_per_topic),
            ("general_per_topic", self.general_per_topic),
            ("synonyms_per_feature", self.synonyms_per_feature),
            ("shared_vocab", self.shared_vocab),
            ("max_citations", self.max_citations),
            ("cpc_codes_per_doc", self.cpc_codes_per_doc),
            ("topics_per_class", self.topics_per_class),
            ("title_words", self.title_words),
            ("abstract_words", self.abstract_words),
        ];
        for (name, v) in counts {
            if v == 0 {
                out.push(format!("{name} must be at least 1"));
            }
        }
        if self.features_per_doc == 0 || self.features_per_doc > self.vocab_per_topic {
            out.push(format!("features_per_doc must be in [1, vocab_per_topic], got {}", self.features_per_doc));
        }
        if !(self.feature_affinity >= 0.0 && self.feature_affinity.is_finite()) {
            out.push(format!("feature_affinity must be finite and non-negative, got {}", self.feature_affinity));
        }
        if self.min_citations > self.max_citations {
            out.push("min_citations exceeds max_citations".into());
        }
        let probs = [
            ("intra_topic_citation_prob", self.intra_topic_citation_prob),
            ("feature_word_share", self.feature_word_share),
            ("topic_word_share", self.topic_word_share),
            ("missing_cpc_prob", self.missing_cpc_prob),
            ("non_english_prob", self.non_english_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                out.push(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.feature_word_share + self.topic_word_share > 1.0 {
            out.push("feature_word_share + topic_word_share exceeds 1".into());
        }
        if self.family_size_weights.iter().any(|w| !(*w >= 0.0)) || self.family_size_weights.iter().sum::<f64>() <= 0.0 {
            out.push("family_size_weights must be non-negative with a positive sum".into());
        }
        if self.categories.values().any(|w| !(*w >= 0.0)) || self.categories.values().sum::<f64>() <= 0.0 {
            out.push("category weights must be non-negative with a positive sum".into());
        }
        if self.start_date >= self.end_date {
            out.push("start_date must precede end_date".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(p.join("; ")))
        }
    }
}

/// Distinct pronounceable lowercase words.
struct WordMint {
    seen: HashSet<String>,
    rng: StreamRng,
}

impl WordMint {
    fn word(&mut self) -> String {
        const C: &[u8] = b"bcdfghklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let syllables = 2 + rng::index(&mut self.rng, 3);
            let mut w = String::with_capacity(syllables * 2);
            for _ in 0..syllables {
                w.push(C[rng::index(&mut self.rng, C.len())] as char);
                w.push(V[rng::index(&mut self.rng, V.len())] as char);
            }
            if self.seen.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

struct Topic {
    class: String,
    /// Surface forms per feature concept.
    features: Vec<Vec<String>>,
    general: Vec<String>,
}

struct Doc {
    topic: usize,
    /// Sorted indices into the topic's feature pool.
    features: Vec<usize>,
    family: usize,
    record: PatentRecord,
}

fn pick<'a>(rng: &mut StreamRng, items: &'a [String]) -> &'a str {
    &items[rng::index(rng, items.len())]
}

/// Zipf-like draw over the shared vocabulary (rank r weighted 1/(r+1)).
fn zipf_pick<'a>(rng: &mut StreamRng, items: &'a [String], cumulative: &[f64]) -> &'a str {
    let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
    let i = cumulative.partition_point(|&c| c < u).min(items.len() - 1);
    &items[i]
}

fn weighted<T: Copy>(rng: &mut StreamRng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|i| i.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(item, w) in items {
        if u < w {
            return item;
        }
        u -= w;
    }
    items[items.len() - 1].0
}

fn shared_count(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|x| b.binary_search(x).is_ok()).count()
}

/// Generates records and citation edges. Deterministic in `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<PatentRecord>, Vec<CitationEdge>)> {
    spec.validate()?;
    let mut mint = WordMint {
        seen: HashSet::new(),
        rng: rng::stream(spec.seed, "words"),
    };
    let shared = mint.words(spec.shared_vocab);
    let foreign = mint.words(200);
    let cumulative: Vec<f64> = (0..shared.len())
        .scan(0.0, |acc, r| {
            *acc += 1.0 / (r as f64 + 1.0);
            Some(*acc)
        })
        .collect();

    let topics: Vec<Topic> = (0..spec.n_topics)
        .map(|t| Topic {
            class: format!("{}{}", CLASSES[(t / spec.topics_per_class.max(1)) % CLASSES.len()], SUBCLASSES[t % SUBCLASSES.len()]),
            features: (0..spec.vocab_per_topic).map(|_| mint.words(spec.synonyms_per_feature)).collect(),
            general: mint.words(spec.general_per_topic),
        })
        .collect();

    let mut rng = rng::stream(spec.seed, "documents");
    let span = (spec.end_date - spec.start_date).num_days().max(1) as u64;
    let mut docs: Vec<Doc> = Vec::new();
    let mut family = 0usize;
    let mut serial = 0usize;
    for (t, topic) in topics.iter().enumerate() {
        let mut made = 0;
        while made < spec.docs_per_topic {
            let [w1, w2, w3] = spec.family_size_weights;
            let size = weighted(&mut rng, &[(1usize, w1), (2, w2), (3, w3)]).min(spec.docs_per_topic - made);
            let mut features: Vec<usize> = rng::sample(&mut rng, &(0..spec.vocab_per_topic).collect::<Vec<_>>(), spec.features_per_doc);
            features.sort_unstable();
            let feature_word = |rng: &mut StreamRng| {
                let f = features[rng::index(rng, features.len())];
                pick(rng, &topic.features[f])
            };
            let filed = spec.start_date + Days::new(rng.random_range(0..span));
            let title_words: Vec<&str> = (0..spec.title_words)
                .map(|_| {
                    if rng.random::<f64>() < 0.7 {
                        feature_word(&mut rng)
                    } else {
                        pick(&mut rng, &topic.general)
                    }
                })
                .collect();
            let mut title = title_words.join(" ");
            if let Some(first) = title.get_mut(0..1) {
                first.make_ascii_uppercase();
            }
            let abstract_words: Vec<&str> = (0..spec.abstract_words)
                .map(|_| {
                    let u = rng.random::<f64>();
                    if u < spec.feature_word_share {
                        feature_word(&mut rng)
                    } else if u < spec.feature_word_share + spec.topic_word_share {
                        pick(&mut rng, &topic.general)
                    } else {
                        zipf_pick(&mut rng, &shared, &cumulative)
                    }
                })
                .collect();
            let abstract_text = abstract_words.join(" ") + ".";
            let cpc: Vec<String> = (0..spec.cpc_codes_per_doc)
                .map(|_| {
                    let group = 1 + features[0] * 4 / spec.vocab_per_topic * 10 + rng::index(&mut rng, 3);
                    format!("{}{}/{:02}", topic.class, group, rng::index(&mut rng, 10) * 2)
                })
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();

            for member in 0..size {
                serial += 1;
                let (jurisdiction, kind) = if member == 0 {
                    let kind = if rng.random::<bool>() { ApplicationKind::EPDirect } else { ApplicationKind::EuroPCT };
                    ("EP", kind)
                } else {
                    (SIBLING_AUTHORITIES[rng::index(&mut rng, SIBLING_AUTHORITIES.len())], ApplicationKind::Other)
                };
                let filing = filed + Days::new(rng.random_range(0..60));
                let published = filing + Days::new(540 + rng.random_range(0..180));
                // Non-English main records rely on an English sibling when
                // one exists; some Japanese siblings carry Japanese text.
                let foreign_text = (member == 0 && rng.random::<f64>() < spec.non_english_prob)
                    || (jurisdiction == "JP" && rng.random::<bool>());
                let (language, abstract_text) = if foreign_text {
                    let lang = if jurisdiction == "JP" { "ja" } else { "de" };
                    let text: Vec<&str> = (0..spec.abstract_words / 2).map(|_| pick(&mut rng, &foreign)).collect();
                    (lang.to_string(), text.join(" "))
                } else {
                    ("en".to_string(), abstract_text.clone())
                };
                let missing_cpc = if member == 0 { spec.missing_cpc_prob } else { (spec.missing_cpc_prob * 4.0).min(1.0) };
                let cpc_codes = if rng.random::<f64>() < missing_cpc { Vec::new() } else { cpc.clone() };
                docs.push(Doc {
                    topic: t,
                    features: features.clone(),
                    family,
                    record: PatentRecord {
                        patent_id: format!("{jurisdiction}{serial:07}"),
                        family_id: format!("F{family:06}"),
                        jurisdiction: jurisdiction.to_string(),
                        application_kind: kind,
                        filing_date: Some(filing),
                        publication_date: Some(published),
                        title: Some(title.clone()),
                        abstract_text: Some(abstract_text),
                        language: Some(language),
                        cpc_codes,
                    },
                });
            }
            family += 1;
            made += size;
        }
    }

    let categories: Vec<(CitationCategory, f64)> = spec.categories.iter().map(|(c, w)| (*c, *w)).collect();
    let mut by_date: Vec<usize> = (0..docs.len()).collect();
    by_date.sort_by_key(|&i| (docs[i].record.filing_date, i));
    let mut edges = Vec::new();
    let mut crng = rng::stream(spec.seed, "citations");
    for &i in &by_date {
        let d = &docs[i];
        let filed = d.record.filing_date.unwrap();
        let earlier: Vec<usize> = (0..docs.len())
            .filter(|&j| docs[j].family != d.family && docs[j].record.publication_date.unwrap() < filed)
            .collect();
        if earlier.is_empty() {
            continue;
        }
        let mut same_topic: Vec<(usize, f64)> = earlier
            .iter()
            .filter(|&&j| docs[j].topic == d.topic)
            .map(|&j| (j, (spec.feature_affinity * shared_count(&docs[j].features, &d.features) as f64).exp()))
            .collect();
        let mut other: Vec<usize> = earlier.iter().copied().filter(|&j| docs[j].topic != d.topic).collect();
        let lo = spec.min_citations.max(1);
        let want = (lo + rng::index(&mut crng, spec.max_citations.max(lo) - lo + 1)).min(earlier.len());
        let mut chosen: Vec<usize> = Vec::with_capacity(want);
        while chosen.len() < want {
            let intra = crng.random::<f64>() < spec.intra_topic_citation_prob;
            let j = if (intra || other.is_empty()) && !same_topic.is_empty() {
                let k = weighted(&mut crng, &same_topic.iter().enumerate().map(|(k, (_, w))| (k, *w)).collect::<Vec<_>>());
                same_topic.swap_remove(k).0
            } else if !other.is_empty() {
                other.swap_remove(rng::index(&mut crng, other.len()))
            } else {
                break;
            };
            chosen.push(j);
        }
        for j in chosen {
            edges.push(CitationEdge {
                citing_id: d.record.patent_id.clone(),
                cited_id: docs[j].record.patent_id.clone(),
                category: weighted(&mut crng, &categories),
            });
        }
    }

    Ok((docs.into_iter().map(|d| d.record).collect(), edges))
}
