//! Ranking of test-sample candidates (embedding similarity or BM25),
//! rank-aware metrics, paired bootstrap significance, and ECDF export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TextMode};
use crate::encoder::{words, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::miner::TestSample;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMetric {
    #[default]
    Cosine,
    L2,
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityMetric::Cosine => "cosine",
            SimilarityMetric::L2 => "l2",
        })
    }
}

/// Candidates of one sample, most similar first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub focal_id: String,
    pub candidates: Vec<String>,
    /// Non-increasing. Negated distance under L2.
    pub scores: Vec<f64>,
}

impl RankedList {
    /// Sorts by score descending, ties by id ascending.
    pub fn from_scores(focal_id: &str, mut scored: Vec<(String, f64)>) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (candidates, scores) = scored.into_iter().unzip();
        RankedList {
            focal_id: focal_id.to_string(),
            candidates,
            scores,
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn rank_candidates<P: EmbeddingProvider + ?Sized>(provider: &P, sample: &TestSample, metric: SimilarityMetric) -> Result<RankedList> {
    let vector = |id: &str| provider.embed(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()));
    let focal = vector(&sample.focal_id)?;
    let scored = sample
        .candidates()
        .map(|id| {
            let v = vector(id)?;
            if v.len() != focal.len() {
                return Err(Error::DimensionMismatch {
                    expected: focal.len(),
                    actual: v.len(),
                });
            }
            let s = match metric {
                SimilarityMetric::Cosine => cosine(&focal, &v),
                SimilarityMetric::L2 => -l2_distance(&focal, &v),
            };
            Ok((id.to_string(), s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankedList::from_scores(&sample.focal_id, scored))
}

fn positive_set<S: AsRef<str>>(positives: &[S]) -> HashSet<&str> {
    positives.iter().map(AsRef::as_ref).collect()
}

/// 1-based rank of the first positive.
pub fn rank_first_relevant<S: AsRef<str>>(ranked: &RankedList, positives: &[S]) -> Result<usize> {
    let pos = positive_set(positives);
    ranked
        .candidates
        .iter()
        .position(|c| pos.contains(c.as_str()))
        .map(|i| i + 1)
        .ok_or_else(|| Error::InvalidInput(format!("{}: no positive among candidates", ranked.focal_id)))
}

/// Mean over positives of precision at each positive's rank.
pub fn average_precision<S: AsRef<str>>(ranked: &RankedList, positives: &[S]) -> Result<f64> {
    let pos = positive_set(positives);
    if pos.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no positives", ranked.focal_id)));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, c) in ranked.candidates.iter().enumerate() {
        if pos.contains(c.as_str()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits != pos.len() {
        return Err(Error::InvalidInput(format!(
            "{}: {} of {} positives missing from candidates",
            ranked.focal_id,
            pos.len() - hits,
            pos.len()
        )));
    }
    Ok(sum / hits as f64)
}

/// Reciprocal rank of the first positive if it is within the top `k`, else 0.
pub fn mrr_at_k<S: AsRef<str>>(ranked: &RankedList, positives: &[S], k: usize) -> f64 {
    match rank_first_relevant(ranked, positives) {
        Ok(r) if r <= k => 1.0 / r as f64,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// `ln((N − n + 0.5) / (n + 0.5))`, floored at zero.
pub fn bm25_idf(n_docs: usize, doc_freq: usize) -> f64 {
    let n = n_docs as f64;
    let df = doc_freq as f64;
    ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

/// Okapi BM25 of each document against the distinct query terms, with IDF
/// and average length taken over `docs` alone.
pub fn bm25_scores(query: &[String], docs: &[Vec<String>], params: Bm25Params) -> Vec<f64> {
    let n = docs.len();
    if n == 0 {
        return Vec::new();
    }
    let avg_len = docs.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;
    let tfs: Vec<HashMap<&str, usize>> = docs
        .iter()
        .map(|d| {
            let mut m = HashMap::new();
            for w in d {
                *m.entry(w.as_str()).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let mut terms: Vec<&str> = query.iter().map(String::as_str).collect();
    terms.sort_unstable();
    terms.dedup();
    let idf: Vec<f64> = terms
        .iter()
        .map(|t| bm25_idf(n, tfs.iter().filter(|m| m.contains_key(t)).count()))
        .collect();
    docs.iter()
        .zip(&tfs)
        .map(|(d, tf)| {
            let norm = if avg_len > 0.0 {
                params.k1 * (1.0 - params.b + params.b * d.len() as f64 / avg_len)
            } else {
                params.k1
            };
            terms
                .iter()
                .zip(&idf)
                .map(|(t, w)| {
                    let f = *tf.get(t).unwrap_or(&0) as f64;
                    w * f * (params.k1 + 1.0) / (f + norm)
                })
                .sum()
        })
        .collect()
}

/// Ranks a sample's candidates by BM25 against the focal's composed text.
pub fn bm25_rank(corpus: &Corpus, sample: &TestSample, mode: TextMode, params: Bm25Params) -> Result<RankedList> {
    let query: Vec<String> = words(&corpus.compose_text(&sample.focal_id, mode)?).collect();
    if query.is_empty() {
        return Err(Error::EmptyDocument(sample.focal_id.clone()));
    }
    let ids: Vec<&str> = sample.candidates().collect();
    let docs = ids
        .iter()
        .map(|id| Ok(words(&corpus.compose_text(id, mode)?).collect()))
        .collect::<Result<Vec<Vec<String>>>>()?;
    let scores = bm25_scores(&query, &docs, params);
    Ok(RankedList::from_scores(
        &sample.focal_id,
        ids.into_iter().map(str::to_owned).zip(scores).collect(),
    ))
}

/// Anything that can order a sample's candidates.
pub enum Ranker<'a> {
    Embeddings {
        provider: &'a (dyn EmbeddingProvider + 'a),
        metric: SimilarityMetric,
    },
    Bm25 {
        corpus: &'a Corpus,
        mode: TextMode,
        params: Bm25Params,
    },
}

impl Ranker<'_> {
    pub fn rank(&self, sample: &TestSample) -> Result<RankedList> {
        match self {
            Ranker::Embeddings { provider, metric } => rank_candidates(*provider, sample, *metric),
            Ranker::Bm25 { corpus, mode, params } => bm25_rank(corpus, sample, *mode, *params),
        }
    }

    pub fn metric_label(&self) -> String {
        match self {
            Ranker::Embeddings { metric, .. } => metric.to_string(),
            Ranker::Bm25 { .. } => "bm25".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Rfr,
    Ap,
    Mrr10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PerSample {
    pub focal_ids: Vec<String>,
    pub rfr: Vec<usize>,
    pub ap: Vec<f64>,
    pub rr_at_10: Vec<f64>,
}

impl PerSample {
    pub fn values(&self, kind: MetricKind) -> Vec<f64> {
        match kind {
            MetricKind::Rfr => self.rfr.iter().map(|&r| r as f64).collect(),
            MetricKind::Ap => self.ap.clone(),
            MetricKind::Mrr10 => self.rr_at_10.clone(),
        }
    }
}

/// Aggregates for one model over a test set. `map` and `mrr_at_10` are on
/// the 0–100 scale; `avg_rfr` is the mean 1-based rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub pooling: String,
    pub metric: String,
    pub samples: usize,
    pub avg_rfr: f64,
    pub map: f64,
    pub mrr_at_10: f64,
    pub per_sample: PerSample,
}

impl MetricsReport {
    pub fn label(&self) -> String {
        if self.pooling.is_empty() || self.pooling == "-" {
            self.model.clone()
        } else {
            format!("{} ({})", self.model, self.pooling)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self)? + "\n";
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&body)?)
    }
}

/// Ranks every sample and aggregates RFR, MAP, and MRR@10 in sample order.
pub fn evaluate_model(ranker: &Ranker<'_>, samples: &[TestSample], model: &str, pooling: &str) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Insufficient("empty test set".into()));
    }
    let rows: Vec<(usize, f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let ranked = ranker.rank(s)?;
            Ok((
                rank_first_relevant(&ranked, &s.positive_ids)?,
                average_precision(&ranked, &s.positive_ids)?,
                mrr_at_k(&ranked, &s.positive_ids, 10),
            ))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let per_sample = PerSample {
        focal_ids: samples.iter().map(|s| s.focal_id.clone()).collect(),
        rfr: rows.iter().map(|r| r.0).collect(),
        ap: rows.iter().map(|r| r.1).collect(),
        rr_at_10: rows.iter().map(|r| r.2).collect(),
    };
    Ok(MetricsReport {
        model: model.to_string(),
        pooling: pooling.to_string(),
        metric: ranker.metric_label(),
        samples: rows.len(),
        avg_rfr: per_sample.rfr.iter().sum::<usize>() as f64 / n,
        map: 100.0 * per_sample.ap.iter().sum::<f64>() / n,
        mrr_at_10: 100.0 * per_sample.rr_at_10.iter().sum::<f64>() / n,
        per_sample,
    })
}

/// Two-sided paired bootstrap p-value for the mean per-sample difference
/// `a − b`: the share of recentred resampled means at least as far from zero
/// as the observed mean, with the usual +1 correction.
pub fn paired_significance(a: &MetricsReport, b: &MetricsReport, kind: MetricKind, resamples: usize, seed: u64) -> Result<f64> {
    let (xa, xb) = (a.per_sample.values(kind), b.per_sample.values(kind));
    if xa.len() != xb.len() {
        return Err(Error::InvalidInput(format!("sample counts differ: {} vs {}", xa.len(), xb.len())));
    }
    if a.per_sample.focal_ids != b.per_sample.focal_ids {
        return Err(Error::InvalidInput("reports cover different samples or orders".into()));
    }
    if xa.is_empty() || resamples == 0 {
        return Err(Error::Insufficient("nothing to resample".into()));
    }
    let diffs: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>() / n as f64;
    let mut rng = rng::stream(seed, "bootstrap");
    let mut extreme = 0usize;
    for _ in 0..resamples {
        let mut s = 0.0;
        for _ in 0..n {
            s += diffs[rng::index(&mut rng, n)];
        }
        if (s / n as f64 - observed).abs() >= observed.abs() {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (resamples + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfRow {
    pub model: String,
    pub rfr: usize,
    pub cum_fraction: f64,
}

/// Per report: sorted distinct RFR values with their cumulative fractions.
pub fn ecdf_export(reports: &[MetricsReport]) -> Vec<EcdfRow> {
    let mut out = Vec::new();
    for r in reports {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &v in &r.per_sample.rfr {
            *counts.entry(v).or_default() += 1;
        }
        let total = r.per_sample.rfr.len();
        let mut running = 0;
        for (rfr, c) in counts {
            running += c;
            out.push(EcdfRow {
                model: r.label(),
                rfr,
                cum_fraction: running as f64 / total as f64,
            });
        }
    }
    out
}

pub fn write_ecdf(path: &Path, rows: &[EcdfRow]) -> Result<()> {
    let mut s = String::from("model\trfr\tcum_fraction\n");
    for r in rows {
        s.push_str(&format!("{}\t{}\t{}\n", r.model, r.rfr, r.cum_fraction));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Flat report rows: model, pooling, metric, avg_rfr, map, mrr10, rounded
/// to two decimals.
pub fn format_metrics_table(reports: &[MetricsReport]) -> String {
    let mut s = String::from("model\tpooling\tmetric\tavg_rfr\tmap\tmrr10\n");
    for r in reports {
        s.push_str(&format!(
            "{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}\n",
            r.model, r.pooling, r.metric, r.avg_rfr, r.map, r.mrr_at_10
        ));
    }
    s
}

pub fn write_metrics_table(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    std::fs::write(path, format_metrics_table(reports)).map_err(|e| Error::io(path, e))
}

/// One row per model with first-token and mean pooling side by side for
/// each metric. Models reported without pooling (BM25) span both columns.
pub fn format_pooling_table(reports: &[MetricsReport]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut cells: HashMap<(&str, &str), &MetricsReport> = HashMap::new();
    for r in reports {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        cells.insert((r.model.as_str(), r.pooling.as_str()), r);
    }
    let width = models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
    let mut s = format!(
        "{:<width$} | {:^15} | {:^15} | {:^15}\n{:<width$} | {:>7} {:>7} | {:>7} {:>7} | {:>7} {:>7}\n",
        "", "Avg. RFR", "MAP", "MRR@10", "Model", "First", "Mean", "First", "Mean", "First", "Mean"
    );
    let fmt = |r: Option<&&MetricsReport>, f: fn(&MetricsReport) -> f64| r.map(|r| format!("{:.2}", f(r))).unwrap_or_else(|| "-".into());
    for m in models {
        let first = cells.get(&(m, "first"));
        let mean = cells.get(&(m, "mean"));
        let shared = cells.get(&(m, "-")).or_else(|| cells.get(&(m, "")));
        let (first, mean) = match (first, mean, shared) {
            (None, None, Some(r)) => (Some(r), Some(r)),
            (f, me, _) => (f, me),
        };
        s.push_str(&format!(
            "{:<width$} | {:>7} {:>7} | {:>7} {:>7} | {:>7} {:>7}\n",
            m,
            fmt(first, |r| r.avg_rfr),
            fmt(mean, |r| r.avg_rfr),
            fmt(first, |r| r.map),
            fmt(mean, |r| r.map),
            fmt(first, |r| r.mrr_at_10),
            fmt(mean, |r| r.mrr_at_10),
        ));
    }
    s
}
