//! Oracles shared by the integration tests. Everything here is written
//! against raw records and edges, never against the library's own indexes,
//! so agreement means something.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use citembed::corpus::{CitationCategory, Corpus, PatentRecord};
use citembed::encoder::EmbeddingProvider;
use citembed::miner::{NegativeKind, TestSample, Triplet};

// ---------------------------------------------------------------- metrics

/// Relevance flags of a ranked list, best first.
pub type Flags = Vec<bool>;

pub fn random_flags(rng: &mut ChaCha8Rng, len: usize, relevant: usize) -> Flags {
    let mut slots: Vec<usize> = Vec::new();
    while slots.len() < relevant {
        let s = rng.random_range(0..len);
        if !slots.contains(&s) {
            slots.push(s);
        }
    }
    (0..len).map(|i| slots.contains(&i)).collect()
}

/// Precision at each relevant rank, recounted from scratch every time.
pub fn oracle_ap(flags: &[bool]) -> f64 {
    let total = flags.iter().filter(|&&f| f).count();
    let mut sum = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            let above = flags[..=k].iter().filter(|&&f| f).count();
            sum += above as f64 / (k + 1) as f64;
        }
    }
    sum / total as f64
}

pub fn oracle_rfr(flags: &[bool]) -> usize {
    let mut k = 0;
    while !flags[k] {
        k += 1;
    }
    k + 1
}

pub fn oracle_rr(flags: &[bool], cutoff: usize) -> f64 {
    flags
        .iter()
        .take(cutoff)
        .enumerate()
        .find(|(_, &f)| f)
        .map_or(0.0, |(i, _)| 1.0 / (i + 1) as f64)
}

/// Expected AP of `relevant` items placed uniformly among `len`, by
/// Monte-Carlo over `shuffles` random placements.
pub fn monte_carlo_ap(len: usize, relevant: usize, shuffles: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..shuffles).map(|_| oracle_ap(&random_flags(&mut rng, len, relevant))).sum::<f64>() / shuffles as f64
}

/// `n` synthetic ranking samples over made-up ids: five positives and 25
/// negatives each.
pub fn toy_samples(n: usize) -> Vec<TestSample> {
    use citembed::miner::LabeledNegative;
    (0..n)
        .map(|s| TestSample {
            focal_id: format!("q{s:04}"),
            positive_ids: (0..5).map(|i| format!("q{s:04}-p{i}")).collect(),
            negatives: (0..25)
                .map(|i| LabeledNegative {
                    id: format!("q{s:04}-n{i:02}"),
                    kind: if i < 10 { NegativeKind::Hard } else { NegativeKind::Easy },
                })
                .collect(),
        })
        .collect()
}

/// Uniform random vectors keyed by `(seed, id)`: every id gets its
/// own independent draw, the same one on every call.
pub struct RandomProvider {
    pub seed: u64,
    pub dim: usize,
}

impl EmbeddingProvider for RandomProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, patent_id: &str) -> Option<Vec<f64>> {
        let key = patent_id.bytes().fold(self.seed ^ 0x9e37_79b9_7f4a_7c15, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        Some((0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect())
    }
}

use citembed::evaluator::{evaluate_model, paired_significance, MetricKind, MetricsReport, Ranker, SimilarityMetric};

pub fn random_report(seed: u64, samples: &[citembed::miner::TestSample]) -> MetricsReport {
    let provider = RandomProvider { seed, dim: 8 };
    let ranker = Ranker::Embeddings {
        provider: &provider,
        metric: SimilarityMetric::Cosine,
    };
    evaluate_model(&ranker, samples, &format!("random-{seed}"), "-").unwrap()
}

/// Share of repetitions, out of 100, where two unrelated random rankers
/// look different at the 5% level.
pub fn false_positive_rate() -> f64 {
    let samples = toy_samples(200);
    let hits = (0..100u64)
        .filter(|&r| {
            let a = random_report(1000 + 2 * r, &samples);
            let b = random_report(1001 + 2 * r, &samples);
            paired_significance(&a, &b, MetricKind::Ap, 2000, r).unwrap() < 0.05
        })
        .count();
    hits as f64 / 100.0
}

// ---------------------------------------------------------------- gradients

use citembed::encoder::{EncoderParams, Pooling};
use citembed::trainer::TokenTriplet;

/// Mean hinge loss over the batch, from encoded vectors; no library loss code.
pub fn loss(params: &EncoderParams, batch: &[TokenTriplet], margin: f64, pooling: Pooling) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let total: f64 = batch
        .iter()
        .map(|t| {
            let f = params.encode(&t.focal, pooling).unwrap();
            let p = params.encode(&t.positive, pooling).unwrap();
            let n = params.encode(&t.negative, pooling).unwrap();
            (dist(&f, &p) - dist(&f, &n) + margin).max(0.0)
        })
        .sum();
    total / batch.len() as f64
}

pub fn numeric_gradient(params: &EncoderParams, batch: &[TokenTriplet], margin: f64, pooling: Pooling) -> Vec<f64> {
    const H: f64 = 1e-5;
    let mut p = params.clone();
    let n = p.num_values();
    (0..n)
        .map(|k| {
            let orig = *p.values().nth(k).unwrap();
            *p.values_mut().nth(k).unwrap() = orig + H;
            let up = loss(&p, batch, margin, pooling);
            *p.values_mut().nth(k).unwrap() = orig - H;
            let down = loss(&p, batch, margin, pooling);
            *p.values_mut().nth(k).unwrap() = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn tokens(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<u32> {
    (0..rng.random_range(1..=6)).map(|_| rng.random_range(0..vocab as u32)).collect()
}

/// A random configuration with every parameter perturbed off its initial
/// structure, so projection and bias gradients are exercised too.
pub fn configuration(seed: u64) -> (EncoderParams, Vec<TokenTriplet>, f64, Pooling) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.random_range(4..=12);
    let dim = rng.random_range(1..=16);
    let out_dim = rng.random_range(1..=16);
    let mut params = EncoderParams::init(vocab, dim, out_dim, seed);
    for v in params.values_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let batch = (0..rng.random_range(1..=4))
        .map(|_| TokenTriplet {
            focal: tokens(&mut rng, vocab),
            positive: tokens(&mut rng, vocab),
            negative: tokens(&mut rng, vocab),
        })
        .collect();
    let pooling = if rng.random_bool(0.5) { Pooling::Mean } else { Pooling::First };
    let margin = rng.random_range(0.1..3.0);
    (params, batch, margin, pooling)
}

pub fn flat(g: &citembed::trainer::Gradients) -> Vec<f64> {
    g.values().copied().collect()
}

// ---------------------------------------------------------------- miner audit

/// A plain re-statement of the mining rules over raw records and edges.
pub struct Audit<'a> {
    records: HashMap<&'a str, &'a PatentRecord>,
    families: HashMap<&'a str, Vec<&'a PatentRecord>>,
    cites: HashMap<&'a str, Vec<(&'a str, CitationCategory)>>,
    excluded: BTreeSet<String>,
}

impl<'a> Audit<'a> {
    pub fn new(corpus: &'a Corpus, excluded: BTreeSet<String>) -> Self {
        let records: HashMap<&str, &PatentRecord> = corpus.records().iter().map(|r| (r.patent_id.as_str(), r)).collect();
        let mut families: HashMap<&str, Vec<&PatentRecord>> = HashMap::new();
        for r in corpus.records() {
            families.entry(r.family_id.as_str()).or_default().push(r);
        }
        let mut cites: HashMap<&str, Vec<(&str, CitationCategory)>> = HashMap::new();
        for e in corpus.edges() {
            if records.contains_key(e.citing_id.as_str()) && records.contains_key(e.cited_id.as_str()) {
                cites.entry(e.citing_id.as_str()).or_default().push((e.cited_id.as_str(), e.category));
            }
        }
        Audit {
            records,
            families,
            cites,
            excluded,
        }
    }

    fn rec(&self, id: &str) -> &'a PatentRecord {
        self.records[id]
    }

    fn direct(&self, id: &str) -> BTreeSet<&'a str> {
        self.cites.get(id).into_iter().flatten().map(|(c, _)| *c).collect()
    }

    fn cited_as(&self, id: &str, cats: &[CitationCategory]) -> BTreeSet<&'a str> {
        self.cites
            .get(id)
            .into_iter()
            .flatten()
            .filter(|(_, cat)| cats.contains(cat))
            .map(|(c, _)| *c)
            .collect()
    }

    fn second_hop(&self, id: &str) -> BTreeSet<&'a str> {
        self.direct(id).into_iter().flat_map(|c| self.direct(c)).filter(|&x| x != id).collect()
    }

    fn english(&self, id: &str) -> bool {
        let en = |r: &PatentRecord| r.abstract_text.is_some() && r.language.as_deref() == Some("en");
        let r = self.rec(id);
        en(r) || self.families[r.family_id.as_str()].iter().any(|s| en(s))
    }

    fn usable(&self, id: &str) -> bool {
        !self.excluded.contains(id) && self.english(id)
    }

    fn usable_negative(&self, id: &str) -> bool {
        self.usable(id) && !self.rec(id).cpc_codes.is_empty()
    }

    fn same_family(&self, a: &str, b: &str) -> bool {
        self.rec(a).family_id == self.rec(b).family_id
    }

    pub fn is_positive(&self, focal: &str, cand: &str) -> bool {
        use CitationCategory::*;
        self.cited_as(focal, &[X, Y, I, A]).contains(cand) && self.usable(cand)
    }

    pub fn is_hard(&self, focal: &str, cand: &str) -> bool {
        cand != focal
            && self.second_hop(focal).contains(cand)
            && !self.direct(focal).contains(cand)
            && !self.same_family(focal, cand)
            && self.usable_negative(cand)
    }

    pub fn is_easy(&self, focal: &str, cand: &str) -> bool {
        let f = self.rec(focal);
        let c = self.rec(cand);
        let (Some(filed), Some(published)) = (f.filing_date, c.publication_date) else {
            return false;
        };
        let start = five_years_before(filed);
        let classes: BTreeSet<&str> = f.cpc_codes.iter().map(|s| &s[..3]).collect();
        cand != focal
            && !self.same_family(focal, cand)
            && c.cpc_codes.iter().any(|s| classes.contains(&s[..3]))
            && published >= start
            && published < filed
            && !self.direct(focal).contains(cand)
            && !self.second_hop(focal).contains(cand)
            && self.usable_negative(cand)
    }

    pub fn is_eligible_focal(&self, focal: &str) -> bool {
        use citembed::corpus::ApplicationKind::*;
        use CitationCategory::*;
        let r = self.rec(focal);
        let lo = NaiveDate::from_ymd_opt(1985, 1, 1).unwrap();
        let hi = NaiveDate::from_ymd_opt(2022, 12, 31).unwrap();
        let xyi = self.cited_as(focal, &[X, Y, I]);
        let a_only = self.cited_as(focal, &[A]).difference(&xyi).count();
        matches!(r.application_kind, EPDirect | EuroPCT)
            && !self.excluded.contains(focal)
            && r.filing_date.is_some_and(|d| d >= lo && d <= hi)
            && !r.cpc_codes.is_empty()
            && self.english(focal)
            && (xyi.len() >= 2 || (xyi.len() == 1 && a_only >= 1))
            && self.second_hop(focal).len() >= 2
    }

    pub fn easy_pool_size(&self, focal: &str) -> usize {
        self.records.keys().filter(|c| self.is_easy(focal, c)).count()
    }

    pub fn hard_pool_size(&self, focal: &str) -> usize {
        self.second_hop(focal).into_iter().filter(|c| self.is_hard(focal, c)).count()
    }

    /// Every rule a mined triplet must satisfy; returns the violations.
    pub fn check_triplets(&self, triplets: &[Triplet], per_focal: usize, hard_wanted: usize) -> Vec<String> {
        let mut bad = Vec::new();
        let mut by_focal: BTreeMap<&str, Vec<&Triplet>> = BTreeMap::new();
        for t in triplets {
            by_focal.entry(t.focal_id.as_str()).or_default().push(t);
            let f = t.focal_id.as_str();
            if !self.is_eligible_focal(f) {
                bad.push(format!("{f}: focal not eligible"));
            }
            if !self.is_positive(f, &t.positive_id) {
                bad.push(format!("{f}: bad positive {}", t.positive_id));
            }
            let ok = match t.negative_kind {
                NegativeKind::Easy => self.is_easy(f, &t.negative_id),
                NegativeKind::Hard => self.is_hard(f, &t.negative_id),
            };
            if !ok {
                bad.push(format!("{f}: bad {:?} negative {}", t.negative_kind, t.negative_id));
            }
        }
        for (f, rows) in by_focal {
            if rows.len() != per_focal {
                bad.push(format!("{f}: {} rows, expected {per_focal}", rows.len()));
            }
            let hard = rows.iter().filter(|t| t.negative_kind == NegativeKind::Hard).count();
            if hard != hard_wanted.min(self.hard_pool_size(f)) {
                bad.push(format!("{f}: {hard} hard rows with a hard pool of {}", self.hard_pool_size(f)));
            }
            let negs: BTreeSet<&str> = rows.iter().map(|t| t.negative_id.as_str()).collect();
            if negs.len() != rows.len() {
                bad.push(format!("{f}: repeated negative"));
            }
        }
        bad
    }

    pub fn check_samples(&self, samples: &[TestSample], shape: (usize, usize, usize)) -> Vec<String> {
        let mut bad = Vec::new();
        for s in samples {
            let f = s.focal_id.as_str();
            if !self.is_eligible_focal(f) {
                bad.push(format!("{f}: test focal not eligible"));
            }
            let hard: Vec<&str> = s.negatives.iter().filter(|n| n.kind == NegativeKind::Hard).map(|n| n.id.as_str()).collect();
            let easy: Vec<&str> = s.negatives.iter().filter(|n| n.kind == NegativeKind::Easy).map(|n| n.id.as_str()).collect();
            if (s.positive_ids.len(), hard.len(), easy.len()) != shape {
                bad.push(format!("{f}: shape {}/{}/{}", s.positive_ids.len(), hard.len(), easy.len()));
            }
            let distinct: BTreeSet<&str> = s.candidates().collect();
            if distinct.len() != s.positive_ids.len() + s.negatives.len() || distinct.contains(f) {
                bad.push(format!("{f}: repeated candidate"));
            }
            bad.extend(s.positive_ids.iter().filter(|p| !self.is_positive(f, p)).map(|p| format!("{f}: bad positive {p}")));
            bad.extend(hard.iter().filter(|n| !self.is_hard(f, n)).map(|n| format!("{f}: bad hard negative {n}")));
            bad.extend(easy.iter().filter(|n| !self.is_easy(f, n)).map(|n| format!("{f}: bad easy negative {n}")));
        }
        bad
    }
}

/// Same calendar day five years earlier; 29 February falls back to the 28th.
pub fn five_years_before(d: NaiveDate) -> NaiveDate {
    d.with_year(d.year() - 5)
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(d.year() - 5, d.month(), d.day() - 1).unwrap())
}

pub fn triplet_ids(triplets: &[Triplet]) -> BTreeSet<&str> {
    triplets
        .iter()
        .flat_map(|t| [t.focal_id.as_str(), t.positive_id.as_str(), t.negative_id.as_str()])
        .collect()
}

pub fn sample_ids(samples: &[TestSample]) -> BTreeSet<&str> {
    samples.iter().flat_map(|s| s.all_ids()).collect()
}

pub fn focals(triplets: &[Triplet]) -> BTreeSet<&str> {
    triplets.iter().map(|t| t.focal_id.as_str()).collect()
}

// ---------------------------------------------------------------- files

pub fn same_bytes(a: &std::path::Path, b: &std::path::Path) -> bool {
    std::fs::read(a).ok() == std::fs::read(b).ok()
}

/// Relative paths and contents of every file under `dir`.
pub fn tree(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

// ---------------------------------------------------------------- command line

pub fn desk_toml() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/desk.toml")
}

/// Runs the binary quietly; returns the exit code and stderr.
pub fn citembed(args: &[&str]) -> (i32, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_citembed"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Every stage from a generated corpus to compared reports, under the desk
/// settings. Returns each stage's label and exit code.
pub fn run_pipeline(out: &std::path::Path, threads: usize) -> Vec<(String, i32)> {
    let o = out.display().to_string();
    let cfg = desk_toml().display().to_string();
    let t = threads.to_string();
    let file = |name: &str| out.join(name).display().to_string();
    let stages: Vec<(&str, Vec<String>)> = vec![
        ("synth", vec!["synth".into()]),
        ("ingest", vec!["ingest".into()]),
        ("build-testset", vec!["build-testset".into()]),
        ("mine", vec!["mine".into(), "--exclude".into(), file("test.jsonl")]),
        ("split", vec!["split".into()]),
        ("train", vec!["train".into()]),
        ("embed", vec!["embed".into(), "--test".into(), file("test.jsonl")]),
        ("evaluate mean", vec!["evaluate".into()]),
        ("evaluate first", vec!["evaluate".into(), "--set".into(), "eval.pooling=first".into()]),
        ("evaluate bm25", vec!["evaluate".into(), "--ranker".into(), "bm25".into()]),
        (
            "evaluate embeddings",
            vec!["evaluate".into(), "--ranker".into(), "embeddings".into(), "--name".into(), "exported".into()],
        ),
        (
            "compare",
            ["compare", "--report", &file("report-model-mean-cosine.json"), "--report", &file("report-model-first-cosine.json"), "--report", &file("report-bm25.json")]
                .map(String::from)
                .to_vec(),
        ),
        ("ecdf", ["ecdf", "--report", &file("report-model-mean-cosine.json"), "--report", &file("report-bm25.json")].map(String::from).to_vec()),
        ("stats", vec!["stats".into()]),
    ];
    stages
        .into_iter()
        .map(|(label, mut args)| {
            args.extend(["--config".into(), cfg.clone(), "--out".into(), o.clone(), "--threads".into(), t.clone()]);
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let (code, err) = citembed(&refs);
            if code != 0 {
                eprintln!("{label}: {err}");
            }
            (label.to_string(), code)
        })
        .collect()
}
