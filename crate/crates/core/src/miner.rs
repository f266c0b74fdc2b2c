//! Focal selection, positive / negative pools, triplet emission, the grouped
//! train/validation split, and the held-out test set.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use chrono::{Months, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ApplicationKind, CategorySet, CitationCategory, CpcLevel, Corpus};
use crate::error::{Error, Result};
use crate::rng;

/// Date the easy-negative publication window is anchored to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DateAnchor {
    #[default]
    Filing,
    Publication,
}

/// Eligibility rules for focal patents plus the knobs of the negative pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocalCriteria {
    pub kinds: Vec<ApplicationKind>,
    pub filing_start: NaiveDate,
    pub filing_end: NaiveDate,
    pub require_cpc: bool,
    /// Minimum distinct X/Y/I citations.
    pub min_xyi: usize,
    /// Accept one X/Y/I citation plus one A citation as an alternative.
    pub allow_xyi_plus_a: bool,
    /// Minimum distinct patents cited by the focal's citations.
    pub min_collective_indirect: usize,
    /// Count only second-hop ids outside the focal's direct citations.
    pub collective_excludes_direct: bool,
    pub min_easy_negatives: usize,
    pub cpc_level: CpcLevel,
    pub window_years: u32,
    pub window_anchor: DateAnchor,
}

impl Default for FocalCriteria {
    fn default() -> Self {
        FocalCriteria {
            kinds: vec![ApplicationKind::EPDirect, ApplicationKind::EuroPCT],
            filing_start: NaiveDate::from_ymd_opt(1985, 1, 1).unwrap(),
            filing_end: NaiveDate::from_ymd_opt(2022, 12, 31).unwrap(),
            require_cpc: true,
            min_xyi: 2,
            allow_xyi_plus_a: true,
            min_collective_indirect: 2,
            collective_excludes_direct: false,
            min_easy_negatives: 3,
            cpc_level: CpcLevel::Class,
            window_years: 5,
            window_anchor: DateAnchor::Filing,
        }
    }
}

impl FocalCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.filing_start > self.filing_end {
            return Err(Error::InvalidInput(format!(
                "filing window start {} after end {}",
                self.filing_start, self.filing_end
            )));
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidInput("no application kinds selected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NegativeKind {
    Easy,
    Hard,
}

impl fmt::Display for NegativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub focal_id: String,
    pub positive_id: String,
    pub negative_id: String,
    pub negative_kind: NegativeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledNegative {
    pub id: String,
    pub kind: NegativeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSample {
    pub focal_id: String,
    pub positive_ids: Vec<String>,
    pub negatives: Vec<LabeledNegative>,
}

impl TestSample {
    /// The 30 ids to rank: positives first, then negatives, as stored.
    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        self.positive_ids
            .iter()
            .map(String::as_str)
            .chain(self.negatives.iter().map(|n| n.id.as_str()))
    }

    pub fn all_ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.focal_id.as_str()).chain(self.candidates())
    }
}

/// Triplets emitted per focal and how the negatives split by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletMix {
    pub easy: usize,
    pub hard: usize,
}

impl Default for TripletMix {
    fn default() -> Self {
        TripletMix { easy: 3, hard: 2 }
    }
}

impl TripletMix {
    pub fn per_focal(&self) -> usize {
        self.easy + self.hard
    }
}

/// Composition of one held-out test sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestShape {
    pub positives: usize,
    pub hard: usize,
    pub easy: usize,
}

impl Default for TestShape {
    fn default() -> Self {
        TestShape {
            positives: 5,
            hard: 10,
            easy: 15,
        }
    }
}

/// Pools computed for one focal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pools {
    pub positives: Vec<String>,
    pub easy: Vec<String>,
    pub hard: Vec<String>,
}

/// Why a focal produced no triplets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub focal_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct MinedTriplets {
    pub triplets: Vec<Triplet>,
    pub skipped: Vec<Skipped>,
}

/// Pool construction over a read-only corpus.
///
/// `exclude` removes ids from every pool and from focal candidacy; it is how
/// a reserved test set is kept out of training.
pub struct Miner<'a> {
    corpus: &'a Corpus,
    criteria: FocalCriteria,
    english: Vec<bool>,
    by_prefix: HashMap<&'a str, Vec<usize>>,
    exclude: HashSet<String>,
}

impl<'a> Miner<'a> {
    pub fn new(corpus: &'a Corpus, criteria: FocalCriteria) -> Result<Self> {
        criteria.validate()?;
        let english = corpus
            .records()
            .iter()
            .map(|r| corpus.resolve_english_text(&r.patent_id).is_some())
            .collect();
        let mut by_prefix: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, r) in corpus.records().iter().enumerate() {
            let prefixes: BTreeSet<&str> = r.cpc_codes.iter().map(|c| criteria.cpc_level.prefix(c)).collect();
            for p in prefixes {
                by_prefix.entry(p).or_default().push(i);
            }
        }
        Ok(Miner {
            corpus,
            criteria,
            english,
            by_prefix,
            exclude: HashSet::new(),
        })
    }

    pub fn with_excluded<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.exclude.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    pub fn criteria(&self) -> &FocalCriteria {
        &self.criteria
    }

    fn has_english(&self, id: &str) -> bool {
        self.corpus.position(id).is_some_and(|i| self.english[i])
    }

    fn usable(&self, id: &str) -> bool {
        !self.exclude.contains(id) && self.has_english(id)
    }

    fn usable_negative(&self, id: &str) -> bool {
        self.usable(id) && self.corpus.get(id).is_some_and(|r| !r.cpc_codes.is_empty())
    }

    /// Cited ids with category X/Y/I/A and resolvable English text, sorted.
    pub fn positive_pool(&self, focal_id: &str) -> Vec<String> {
        self.corpus
            .backward_citations(focal_id, CategorySet::XYIA)
            .into_iter()
            .filter(|id| self.usable(id))
            .collect()
    }

    fn window(&self, focal_id: &str) -> Option<(NaiveDate, NaiveDate)> {
        let r = self.corpus.get(focal_id)?;
        let anchor = match self.criteria.window_anchor {
            DateAnchor::Filing => r.filing_date?,
            DateAnchor::Publication => r.publication_date?,
        };
        let start = anchor.checked_sub_months(Months::new(12 * self.criteria.window_years))?;
        Some((start, anchor))
    }

    /// Non-cited, non-indirectly-cited patents sharing a CPC prefix with the
    /// focal and published in the window before the anchor date, sorted.
    pub fn easy_negative_pool(&self, focal_id: &str) -> Vec<String> {
        let Some(focal) = self.corpus.get(focal_id) else {
            return Vec::new();
        };
        let Some((start, end)) = self.window(focal_id) else {
            return Vec::new();
        };
        let direct: HashSet<&str> = self.corpus.outgoing(focal_id).map(|e| e.cited_id.as_str()).collect();
        let indirect = self.corpus.indirect_citations(focal_id);
        let prefixes: BTreeSet<&str> = focal.cpc_codes.iter().map(|c| self.criteria.cpc_level.prefix(c)).collect();
        let mut seen = BTreeSet::new();
        for p in prefixes {
            for &i in self.by_prefix.get(p).map(Vec::as_slice).unwrap_or(&[]) {
                let cand = &self.corpus.records()[i];
                let id = cand.patent_id.as_str();
                let in_window = cand.publication_date.is_some_and(|d| d >= start && d < end);
                if in_window
                    && id != focal_id
                    && cand.family_id != focal.family_id
                    && !direct.contains(id)
                    && !indirect.contains(id)
                    && self.usable_negative(id)
                {
                    seen.insert(id);
                }
            }
        }
        seen.into_iter().map(str::to_owned).collect()
    }

    /// Indirect citations outside the focal's family, with CPC and English
    /// text, sorted.
    pub fn hard_negative_pool(&self, focal_id: &str) -> Vec<String> {
        let Some(focal) = self.corpus.get(focal_id) else {
            return Vec::new();
        };
        self.corpus
            .indirect_citations(focal_id)
            .into_iter()
            .filter(|id| self.corpus.get(id).is_some_and(|r| r.family_id != focal.family_id))
            .filter(|id| self.usable_negative(id))
            .collect()
    }

    pub fn pools(&self, focal_id: &str) -> Pools {
        Pools {
            positives: self.positive_pool(focal_id),
            easy: self.easy_negative_pool(focal_id),
            hard: self.hard_negative_pool(focal_id),
        }
    }

    fn collective_count(&self, focal_id: &str) -> usize {
        if self.criteria.collective_excludes_direct {
            self.corpus.indirect_citations(focal_id).len()
        } else {
            self.corpus.second_hop_citations(focal_id).len()
        }
    }

    fn meets_citation_rule(&self, focal_id: &str) -> bool {
        let xyi = self.corpus.backward_citations(focal_id, CategorySet::XYI);
        if xyi.len() >= self.criteria.min_xyi {
            return true;
        }
        if !self.criteria.allow_xyi_plus_a || xyi.is_empty() {
            return false;
        }
        let a = self.corpus.backward_citations(focal_id, CategorySet::of(&[CitationCategory::A]));
        a.iter().any(|id| !xyi.contains(id))
    }

    /// Checks every focal rule against one patent.
    pub fn is_eligible(&self, focal_id: &str) -> bool {
        let Some(r) = self.corpus.get(focal_id) else {
            return false;
        };
        let c = &self.criteria;
        c.kinds.contains(&r.application_kind)
            && !self.exclude.contains(focal_id)
            && r.filing_date.is_some_and(|d| d >= c.filing_start && d <= c.filing_end)
            && (!c.require_cpc || !r.cpc_codes.is_empty())
            && self.has_english(focal_id)
            && self.meets_citation_rule(focal_id)
            && self.collective_count(focal_id) >= c.min_collective_indirect
            && !self.positive_pool(focal_id).is_empty()
            && self.easy_negative_pool(focal_id).len() >= c.min_easy_negatives
    }

    /// All eligible focal ids, sorted.
    pub fn eligible_focals(&self) -> Vec<String> {
        let mut ids: Vec<&str> = self.corpus.records().iter().map(|r| r.patent_id.as_str()).collect();
        ids.sort_unstable();
        ids.par_iter()
            .filter(|id| self.is_eligible(id))
            .map(|id| id.to_string())
            .collect()
    }

    /// Emits `mix.per_focal()` triplets for one focal. Positives are drawn
    /// with replacement; negatives without replacement, with any hard-pool
    /// shortfall made up from the easy pool.
    pub fn mine_triplets(&self, focal_id: &str, mix: TripletMix, seed: u64) -> Result<Vec<Triplet>> {
        let pools = self.pools(focal_id);
        if pools.positives.is_empty() {
            return Err(Error::Insufficient(format!("{focal_id}: empty positive pool")));
        }
        if pools.easy.len() < self.criteria.min_easy_negatives {
            return Err(Error::Insufficient(format!(
                "{focal_id}: {} easy negatives, need {}",
                pools.easy.len(),
                self.criteria.min_easy_negatives
            )));
        }
        let n_hard = mix.hard.min(pools.hard.len());
        let n_easy = mix.per_focal() - n_hard;
        if pools.easy.len() < n_easy {
            return Err(Error::Insufficient(format!(
                "{focal_id}: {} easy negatives, need {n_easy}",
                pools.easy.len()
            )));
        }
        let mut rng = rng::stream(seed, focal_id);
        let easy = rng::sample(&mut rng, &pools.easy, n_easy);
        let hard = rng::sample(&mut rng, &pools.hard, n_hard);
        let negatives = easy
            .into_iter()
            .map(|id| (id, NegativeKind::Easy))
            .chain(hard.into_iter().map(|id| (id, NegativeKind::Hard)));
        Ok(negatives
            .map(|(negative_id, negative_kind)| Triplet {
                focal_id: focal_id.to_string(),
                positive_id: pools.positives[rng::index(&mut rng, pools.positives.len())].clone(),
                negative_id,
                negative_kind,
            })
            .collect())
    }

    /// Mines every focal in parallel; output is ordered by focal id.
    pub fn mine_all(&self, focals: &[String], mix: TripletMix, seed: u64) -> MinedTriplets {
        let mut sorted: Vec<&String> = focals.iter().collect();
        sorted.sort();
        sorted.dedup();
        let results: Vec<_> = sorted
            .par_iter()
            .map(|f| (f.as_str(), self.mine_triplets(f, mix, seed)))
            .collect();
        let mut out = MinedTriplets::default();
        for (focal, res) in results {
            match res {
                Ok(t) => out.triplets.extend(t),
                Err(e) => out.skipped.push(Skipped {
                    focal_id: focal.to_string(),
                    reason: e.to_string(),
                }),
            }
        }
        out
    }

    /// Held-out samples of `shape` for focals never used in `train`, with
    /// every sampled id disjoint from every id in `train`. Returns fewer
    /// than `n` samples (with a warning) when not enough focals qualify.
    pub fn build_test_set(&self, n: usize, shape: TestShape, train: &[Triplet], seed: u64) -> Result<Vec<TestSample>> {
        let mut used: HashSet<&str> = HashSet::new();
        for t in train {
            used.extend([t.focal_id.as_str(), t.positive_id.as_str(), t.negative_id.as_str()]);
        }
        let fresh = |ids: Vec<String>| -> Vec<String> { ids.into_iter().filter(|id| !used.contains(id.as_str())).collect() };

        let mut candidates: Vec<(String, Pools)> = self
            .eligible_focals()
            .into_iter()
            .filter(|f| !used.contains(f.as_str()))
            .filter_map(|f| {
                let p = self.pools(&f);
                let pools = Pools {
                    positives: fresh(p.positives),
                    easy: fresh(p.easy),
                    hard: fresh(p.hard),
                };
                (pools.positives.len() >= shape.positives && pools.hard.len() >= shape.hard && pools.easy.len() >= shape.easy)
                    .then_some((f, pools))
            })
            .collect();
        if candidates.is_empty() {
            return Err(Error::Insufficient("no focal qualifies for the test set".into()));
        }
        if candidates.len() < n {
            log::warn!("only {} focal(s) qualify for the test set; requested {n}", candidates.len());
        }
        let mut order = rng::stream(seed, "test-set");
        rng::shuffle(&mut order, &mut candidates);
        candidates.truncate(n);
        candidates.sort_by(|a, b| a.0.cmp(&b.0));

        Ok(candidates
            .into_iter()
            .map(|(focal_id, pools)| {
                let mut rng = rng::stream(seed, &format!("test:{focal_id}"));
                let positive_ids = rng::sample(&mut rng, &pools.positives, shape.positives);
                let hard = rng::sample(&mut rng, &pools.hard, shape.hard);
                let easy = rng::sample(&mut rng, &pools.easy, shape.easy);
                let negatives = hard
                    .into_iter()
                    .map(|id| LabeledNegative { id, kind: NegativeKind::Hard })
                    .chain(easy.into_iter().map(|id| LabeledNegative { id, kind: NegativeKind::Easy }))
                    .collect();
                TestSample {
                    focal_id,
                    positive_ids,
                    negatives,
                }
            })
            .collect())
    }
}

/// Random subset of `focals` of size at most `max`, returned sorted.
pub fn sample_focals(focals: &[String], max: usize, seed: u64) -> Vec<String> {
    let mut rng = rng::stream(seed, "focal-sample");
    let mut out = if focals.len() > max {
        rng::sample(&mut rng, focals, max)
    } else {
        focals.to_vec()
    };
    out.sort();
    out
}

/// Splits triplets into train / validation by focal so that every focal's
/// rows land on one side. Row order within each side follows the input.
pub fn split_dataset(triplets: &[Triplet], ratio: f64, seed: u64) -> Result<(Vec<Triplet>, Vec<Triplet>)> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("split ratio {ratio} outside (0, 1]")));
    }
    let mut focals: Vec<&str> = triplets.iter().map(|t| t.focal_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    if focals.len() < 2 {
        return Err(Error::Insufficient(format!("{} focal(s); a split needs at least 2", focals.len())));
    }
    let n_train = (ratio * focals.len() as f64).round() as usize;
    if n_train == 0 || n_train == focals.len() {
        return Err(Error::InvalidInput(format!(
            "ratio {ratio} leaves an empty split for {} focals",
            focals.len()
        )));
    }
    let mut rng = rng::stream(seed, "split");
    rng::shuffle(&mut rng, &mut focals);
    let train_focals: HashSet<&str> = focals[..n_train].iter().copied().collect();
    Ok(triplets.iter().cloned().partition(|t| train_focals.contains(t.focal_id.as_str())))
}

/// Counts describing a triplet set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub rows: usize,
    pub unique_focals: usize,
    pub unique_positives: usize,
    pub unique_negatives: usize,
    /// Fraction of distinct positives appearing in exactly one row.
    pub positives_used_once: f64,
    pub negatives_used_once: f64,
    pub easy_negatives: usize,
    pub hard_negatives: usize,
}

pub fn dataset_stats(triplets: &[Triplet]) -> DatasetStats {
    fn tally<'a>(ids: impl Iterator<Item = &'a str>) -> (usize, f64) {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for id in ids {
            *counts.entry(id).or_default() += 1;
        }
        let once = counts.values().filter(|&&c| c == 1).count();
        let frac = if counts.is_empty() { 0.0 } else { once as f64 / counts.len() as f64 };
        (counts.len(), frac)
    }
    let focals: BTreeSet<&str> = triplets.iter().map(|t| t.focal_id.as_str()).collect();
    let (unique_positives, positives_used_once) = tally(triplets.iter().map(|t| t.positive_id.as_str()));
    let (unique_negatives, negatives_used_once) = tally(triplets.iter().map(|t| t.negative_id.as_str()));
    let hard = triplets.iter().filter(|t| t.negative_kind == NegativeKind::Hard).count();
    DatasetStats {
        rows: triplets.len(),
        unique_focals: focals.len(),
        unique_positives,
        unique_negatives,
        positives_used_once,
        negatives_used_once,
        easy_negatives: triplets.len() - hard,
        hard_negatives: hard,
    }
}

/// Keeps only triplets whose three patents all carry CPC codes.
pub fn retain_with_cpc(corpus: &Corpus, triplets: &[Triplet]) -> (Vec<Triplet>, usize) {
    let has_cpc = |id: &str| corpus.get(id).is_some_and(|r| !r.cpc_codes.is_empty());
    let kept: Vec<Triplet> = triplets
        .iter()
        .filter(|t| has_cpc(&t.focal_id) && has_cpc(&t.positive_id) && has_cpc(&t.negative_id))
        .cloned()
        .collect();
    let dropped = triplets.len() - kept.len();
    (kept, dropped)
}

/// Keeps only test samples whose 31 patents all carry CPC codes.
pub fn retain_samples_with_cpc(corpus: &Corpus, samples: &[TestSample]) -> (Vec<TestSample>, usize) {
    let kept: Vec<TestSample> = samples
        .iter()
        .filter(|s| s.all_ids().all(|id| corpus.get(id).is_some_and(|r| !r.cpc_codes.is_empty())))
        .cloned()
        .collect();
    let dropped = samples.len() - kept.len();
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{edge, record};
    use crate::corpus::{CitationEdge, PatentRecord};
    use CitationCategory::*;

    fn dated(id: &str, filed: (i32, u32), published: (i32, u32)) -> PatentRecord {
        let mut r = record(id, &format!("fam-{id}"), "EP");
        r.filing_date = NaiveDate::from_ymd_opt(filed.0, filed.1, 1);
        r.publication_date = NaiveDate::from_ymd_opt(published.0, published.1, 1);
        r
    }

    /// Focal F (filed 2015) cites A (X) and B (X); A cites C, D; easy
    /// candidates E1..E4 published 2011-2014 in the same class.
    fn fixture(extra: Vec<PatentRecord>, extra_edges: Vec<CitationEdge>) -> Corpus {
        let mut recs = vec![
            dated("F", (2015, 1), (2016, 1)),
            dated("A", (2008, 1), (2009, 1)),
            dated("B", (2008, 1), (2009, 2)),
            dated("C", (2001, 1), (2002, 1)),
            dated("D", (2001, 1), (2002, 2)),
        ];
        for (i, y) in [2011, 2012, 2013, 2014].iter().enumerate() {
            recs.push(dated(&format!("E{i}"), (y - 1, 1), (*y, 1)));
        }
        recs.extend(extra);
        let mut edges = vec![edge("F", "A", X), edge("F", "B", X), edge("A", "C", Y), edge("A", "D", A)];
        edges.extend(extra_edges);
        Corpus::new(recs, edges).unwrap()
    }

    #[test]
    fn basic_eligibility() {
        let c = fixture(vec![], vec![]);
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        assert!(m.is_eligible("F"));
        assert_eq!(m.eligible_focals(), vec!["F"]);
    }

    #[test]
    fn x_plus_a_qualifies() {
        let recs = vec![dated("F", (2015, 1), (2016, 1)), dated("A", (2008, 1), (2009, 1)), dated("B", (2008, 1), (2009, 1))];
        let mut all = recs;
        all.extend((0..3).map(|i| dated(&format!("E{i}"), (2012, 1), (2013, 1))));
        all.push(dated("C", (2001, 1), (2002, 1)));
        all.push(dated("D", (2001, 1), (2002, 1)));
        let c = Corpus::new(
            all,
            vec![edge("F", "A", X), edge("F", "B", A), edge("A", "C", X), edge("B", "D", X)],
        )
        .unwrap();
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        assert!(m.is_eligible("F"));

        let strict = FocalCriteria {
            allow_xyi_plus_a: false,
            ..FocalCriteria::default()
        };
        assert!(!Miner::new(&c, strict).unwrap().is_eligible("F"));
    }

    #[test]
    fn filed_before_window_excluded() {
        let mut c = fixture(vec![], vec![]);
        let mut recs = c.records().to_vec();
        recs[0].filing_date = NaiveDate::from_ymd_opt(1984, 6, 1);
        c = Corpus::new(recs, c.edges().to_vec()).unwrap();
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        assert!(!m.is_eligible("F"));
    }

    #[test]
    fn single_xyi_is_not_enough() {
        let c = Corpus::new(
            vec![dated("F", (2015, 1), (2016, 1)), dated("A", (2008, 1), (2009, 1))],
            vec![edge("F", "A", X)],
        )
        .unwrap();
        assert!(!Miner::new(&c, FocalCriteria::default()).unwrap().is_eligible("F"));
    }

    #[test]
    fn positive_pool_filters_categories() {
        let recs = ["F", "A", "B", "C"].iter().map(|id| dated(id, (2010, 1), (2011, 1))).collect();
        let c = Corpus::new(recs, vec![edge("F", "A", X), edge("F", "B", A), edge("F", "C", D)]).unwrap();
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        assert_eq!(m.positive_pool("F"), vec!["A", "B"]);

        let recs = ["F", "A"].iter().map(|id| dated(id, (2010, 1), (2011, 1))).collect();
        let c = Corpus::new(recs, vec![edge("F", "A", E)]).unwrap();
        assert!(Miner::new(&c, FocalCriteria::default()).unwrap().positive_pool("F").is_empty());
    }

    #[test]
    fn positive_without_english_excluded() {
        let mut jp = dated("B", (2010, 1), (2011, 1));
        jp.language = Some("ja".into());
        let c = Corpus::new(
            vec![dated("F", (2012, 1), (2013, 1)), dated("A", (2010, 1), (2011, 1)), jp],
            vec![edge("F", "A", X), edge("F", "B", X)],
        )
        .unwrap();
        assert_eq!(Miner::new(&c, FocalCriteria::default()).unwrap().positive_pool("F"), vec!["A"]);
    }

    #[test]
    fn easy_pool_window_and_exclusions() {
        let c = fixture(
            vec![
                dated("OLD", (2008, 6), (2009, 6)),  // six years before filing
                dated("LATE", (2014, 6), (2015, 6)), // after filing
            ],
            vec![],
        );
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        let easy = m.easy_negative_pool("F");
        assert_eq!(easy, vec!["E0", "E1", "E2", "E3"]);
        assert!(!easy.contains(&"C".to_string()) && !easy.contains(&"A".to_string()));
    }

    #[test]
    fn easy_pool_drops_indirect_and_other_classes() {
        let mut other = dated("Q", (2012, 1), (2013, 1));
        other.cpc_codes = vec!["A61K31/00".into()];
        let c = fixture(vec![other, dated("IND", (2012, 1), (2013, 1))], vec![edge("B", "IND", X)]);
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        let easy = m.easy_negative_pool("F");
        assert!(!easy.contains(&"IND".to_string()));
        assert!(!easy.contains(&"Q".to_string()));
        assert!(m.hard_negative_pool("F").contains(&"IND".to_string()));
    }

    #[test]
    fn publication_anchor_shifts_window() {
        let c = fixture(vec![dated("LATE", (2014, 6), (2015, 6))], vec![]);
        let crit = FocalCriteria {
            window_anchor: DateAnchor::Publication,
            ..FocalCriteria::default()
        };
        let m = Miner::new(&c, crit).unwrap();
        assert!(m.easy_negative_pool("F").contains(&"LATE".to_string()));
    }

    #[test]
    fn hard_pool_examples() {
        let c = fixture(vec![], vec![]);
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        assert_eq!(m.hard_negative_pool("F"), vec!["C", "D"]);

        let recs = ["F", "A", "B"].iter().map(|id| dated(id, (2010, 1), (2011, 1))).collect();
        let c = Corpus::new(recs, vec![edge("F", "A", X), edge("F", "B", X), edge("A", "B", X)]).unwrap();
        assert!(Miner::new(&c, FocalCriteria::default()).unwrap().hard_negative_pool("F").is_empty());
    }

    #[test]
    fn hard_pool_excludes_family() {
        let mut sib = dated("SIB", (2001, 1), (2002, 1));
        sib.family_id = "fam-F".into();
        let c = fixture(vec![sib], vec![edge("A", "SIB", X)]);
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        assert!(c.indirect_citations("F").contains("SIB"));
        assert!(!m.hard_negative_pool("F").contains(&"SIB".to_string()));
    }

    #[test]
    fn mining_mix_and_fallback() {
        let c = fixture(vec![], vec![]);
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        let t = m.mine_triplets("F", TripletMix::default(), 7).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.iter().filter(|t| t.negative_kind == NegativeKind::Easy).count(), 3);
        assert_eq!(t.iter().filter(|t| t.negative_kind == NegativeKind::Hard).count(), 2);
        assert_eq!(t, m.mine_triplets("F", TripletMix::default(), 7).unwrap());

        // no second hop: hard pool empty, all five from easy
        let mut recs: Vec<PatentRecord> = c.records().to_vec();
        recs.push(dated("E9", (2013, 1), (2014, 3)));
        let edges = vec![edge("F", "A", X), edge("F", "B", X)];
        let c2 = Corpus::new(recs, edges).unwrap();
        let m2 = Miner::new(&c2, FocalCriteria::default()).unwrap();
        assert!(m2.hard_negative_pool("F").is_empty());
        let t = m2.mine_triplets("F", TripletMix::default(), 7).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.iter().all(|t| t.negative_kind == NegativeKind::Easy));
        let negs: BTreeSet<_> = t.iter().map(|t| &t.negative_id).collect();
        assert_eq!(negs.len(), 5);
    }

    #[test]
    fn mining_errors() {
        let recs = ["F", "A"].iter().map(|id| dated(id, (2010, 1), (2011, 1))).collect();
        let c = Corpus::new(recs, vec![edge("F", "A", D)]).unwrap();
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        assert!(m.mine_triplets("F", TripletMix::default(), 1).is_err());

        let recs = ["F", "A"].iter().map(|id| dated(id, (2010, 1), (2011, 1))).collect();
        let c = Corpus::new(recs, vec![edge("F", "A", X)]).unwrap();
        let m = Miner::new(&c, FocalCriteria::default()).unwrap();
        let err = m.mine_triplets("F", TripletMix::default(), 1).unwrap_err();
        assert!(err.to_string().contains("easy"));
    }

    fn toy_triplets(focals: usize, per: usize) -> Vec<Triplet> {
        (0..focals)
            .flat_map(|f| {
                (0..per).map(move |j| Triplet {
                    focal_id: format!("f{f:03}"),
                    positive_id: format!("p{f}-{j}"),
                    negative_id: format!("n{f}-{j}"),
                    negative_kind: NegativeKind::Easy,
                })
            })
            .collect()
    }

    #[test]
    fn split_counts_and_grouping() {
        let t = toy_triplets(100, 5);
        let (train, val) = split_dataset(&t, 0.85, 3).unwrap();
        assert_eq!(train.len(), 425);
        assert_eq!(val.len(), 75);
        let tf: BTreeSet<_> = train.iter().map(|t| &t.focal_id).collect();
        let vf: BTreeSet<_> = val.iter().map(|t| &t.focal_id).collect();
        assert_eq!(tf.len(), 85);
        assert!(tf.is_disjoint(&vf));
        assert_eq!(split_dataset(&t, 0.85, 3).unwrap(), (train, val));
    }

    #[test]
    fn split_rejects_degenerate() {
        assert!(split_dataset(&toy_triplets(1, 5), 0.85, 1).is_err());
        assert!(split_dataset(&toy_triplets(10, 5), 1.0, 1).is_err());
        assert!(split_dataset(&toy_triplets(10, 5), 0.0, 1).is_err());
    }

    #[test]
    fn stats_counts() {
        let shared: Vec<Triplet> = (0..5)
            .map(|i| Triplet {
                focal_id: "f".into(),
                positive_id: "p".into(),
                negative_id: format!("n{i}"),
                negative_kind: if i < 3 { NegativeKind::Easy } else { NegativeKind::Hard },
            })
            .collect();
        let s = dataset_stats(&shared);
        assert_eq!(s.unique_positives, 1);
        assert_eq!(s.positives_used_once, 0.0);
        assert_eq!((s.easy_negatives, s.hard_negatives), (3, 2));

        let distinct: Vec<Triplet> = (0..10)
            .map(|i| Triplet {
                focal_id: format!("f{i}"),
                positive_id: format!("p{i}"),
                negative_id: format!("n{i}"),
                negative_kind: NegativeKind::Easy,
            })
            .collect();
        let s = dataset_stats(&distinct);
        assert_eq!((s.rows, s.unique_focals, s.unique_positives, s.unique_negatives), (10, 10, 10, 10));
        assert_eq!(s.positives_used_once, 1.0);
    }
}
