//! Patent records, examiner citations, and the indexes every mining rule
//! reads from.
//!
//! A [`Corpus`] is immutable once built. Citation edges whose endpoints are
//! not both present are kept (and counted) but never enter the adjacency
//! indexes, so they cannot reach any mining pool.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Default separator placed between title and abstract (or CPC list).
pub const DEFAULT_SEPARATOR: &str = " [SEP] ";

/// Sibling substitution order for records lacking an English abstract.
pub const ENGLISH_PRIORITY: [&str; 11] = [
    "WO", "US", "GB", "CA", "AU", "DE", "CN", "TW", "KR", "FR", "JP",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ApplicationKind {
    EPDirect,
    EuroPCT,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentRecord {
    pub patent_id: String,
    pub family_id: String,
    pub jurisdiction: String,
    pub application_kind: ApplicationKind,
    pub filing_date: Option<NaiveDate>,
    pub publication_date: Option<NaiveDate>,
    pub title: Option<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub language: Option<String>,
    pub cpc_codes: Vec<String>,
}

impl PatentRecord {
    /// True when the record carries an abstract flagged as English.
    pub fn has_english_abstract(&self) -> bool {
        self.abstract_text.is_some() && self.language.as_deref() == Some("en")
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.patent_id.is_empty() {
            return Err("empty patent_id".into());
        }
        if self.jurisdiction.len() != 2 || !self.jurisdiction.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(format!("bad jurisdiction {:?}", self.jurisdiction));
        }
        if let (Some(f), Some(p)) = (self.filing_date, self.publication_date) {
            if f > p {
                return Err(format!("filing_date {f} after publication_date {p}"));
            }
        }
        if let Some(bad) = self.cpc_codes.iter().find(|c| !is_valid_cpc(c)) {
            return Err(format!("malformed CPC symbol {bad:?}"));
        }
        Ok(())
    }
}

/// Checks CPC symbol syntax: section letter, two-digit class, subclass
/// letter, then `group/subgroup` digits (e.g. `H01L21/02`).
pub fn is_valid_cpc(code: &str) -> bool {
    let b = code.as_bytes();
    if b.len() < 8 {
        return false;
    }
    if !matches!(b[0], b'A'..=b'H' | b'Y') {
        return false;
    }
    if !(b[1].is_ascii_digit() && b[2].is_ascii_digit() && b[3].is_ascii_uppercase()) {
        return false;
    }
    let Some((group, subgroup)) = code[4..].split_once('/') else {
        return false;
    };
    (1..=4).contains(&group.len())
        && group.bytes().all(|c| c.is_ascii_digit())
        && (2..=6).contains(&subgroup.len())
        && subgroup.bytes().all(|c| c.is_ascii_digit())
}

/// Hierarchy level used when comparing CPC symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CpcLevel {
    Section,
    #[default]
    Class,
    Subclass,
}

impl CpcLevel {
    pub fn prefix_len(self) -> usize {
        match self {
            CpcLevel::Section => 1,
            CpcLevel::Class => 3,
            CpcLevel::Subclass => 4,
        }
    }

    pub fn prefix(self, code: &str) -> &str {
        &code[..self.prefix_len().min(code.len())]
    }
}

/// EPO search-report citation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CitationCategory {
    X,
    I,
    Y,
    A,
    O,
    P,
    T,
    E,
    D,
    L,
    #[serde(rename = "AMP")]
    Amp,
}

impl CitationCategory {
    pub const ALL: [CitationCategory; 11] = [
        Self::X,
        Self::I,
        Self::Y,
        Self::A,
        Self::O,
        Self::P,
        Self::T,
        Self::E,
        Self::D,
        Self::L,
        Self::Amp,
    ];

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for CitationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CitationCategory::Amp => f.write_str("&"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// A set of citation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CategorySet(u16);

impl CategorySet {
    /// Novelty / inventive-step categories.
    pub const XYI: CategorySet = CategorySet(1 | 2 | 4);
    /// Categories treated as similarity signal for positives.
    pub const XYIA: CategorySet = CategorySet(1 | 2 | 4 | 8);
    pub const ALL: CategorySet = CategorySet((1 << 11) - 1);

    pub fn of(cats: &[CitationCategory]) -> Self {
        CategorySet(cats.iter().fold(0, |acc, c| acc | c.bit()))
    }

    pub fn contains(self, cat: CitationCategory) -> bool {
        self.0 & cat.bit() != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationEdge {
    pub citing_id: String,
    pub cited_id: String,
    pub category: CitationCategory,
}

/// Which text an encoder sees for a patent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TextMode {
    #[default]
    TitleAbstract,
    TitleCpc,
}

impl fmt::Display for TextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextMode::TitleAbstract => "title-abstract",
            TextMode::TitleCpc => "title-cpc",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<PatentRecord>,
    index: HashMap<String, usize>,
    edges: Vec<CitationEdge>,
    forward: Vec<Vec<usize>>,
    backward: Vec<Vec<usize>>,
    families: BTreeMap<String, Vec<usize>>,
    dangling: Vec<usize>,
}

impl Corpus {
    /// Builds a corpus from in-memory records and edges. Line numbers in
    /// errors are 1-based positions in `records` / `edges`.
    pub fn new(records: Vec<PatentRecord>, edges: Vec<CitationEdge>) -> Result<Self> {
        let numbered = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        let edges = edges.into_iter().enumerate().map(|(i, e)| (i + 1, e)).collect();
        Self::build(numbered, edges, Path::new("<records>"), Path::new("<citations>"))
    }

    fn build(
        records: Vec<(usize, PatentRecord)>,
        edges: Vec<(usize, CitationEdge)>,
        records_path: &Path,
        citations_path: &Path,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        let mut lines = HashMap::with_capacity(records.len());
        let mut families: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut out = Vec::with_capacity(records.len());
        for (line, record) in records {
            record.validate().map_err(|message| Error::Malformed {
                path: records_path.to_path_buf(),
                line,
                message,
            })?;
            if let Some(&first_line) = lines.get(&record.patent_id) {
                return Err(Error::DuplicateId {
                    id: record.patent_id,
                    first_line,
                    second_line: line,
                });
            }
            let pos = out.len();
            lines.insert(record.patent_id.clone(), line);
            index.insert(record.patent_id.clone(), pos);
            families.entry(record.family_id.clone()).or_default().push(pos);
            out.push(record);
        }

        let mut forward = vec![Vec::new(); out.len()];
        let mut backward = vec![Vec::new(); out.len()];
        let mut dangling = Vec::new();
        let mut kept = Vec::with_capacity(edges.len());
        for (line, edge) in edges {
            if edge.citing_id == edge.cited_id {
                return Err(Error::Malformed {
                    path: citations_path.to_path_buf(),
                    line,
                    message: format!("self-citation of {:?}", edge.citing_id),
                });
            }
            let e = kept.len();
            match (index.get(&edge.citing_id), index.get(&edge.cited_id)) {
                (Some(&from), Some(&to)) => {
                    forward[from].push(e);
                    backward[to].push(e);
                }
                _ => dangling.push(e),
            }
            kept.push(edge);
        }

        Ok(Corpus {
            records: out,
            index,
            edges: kept,
            forward,
            backward,
            families,
            dangling,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PatentRecord] {
        &self.records
    }

    pub fn edges(&self) -> &[CitationEdge] {
        &self.edges
    }

    pub fn get(&self, patent_id: &str) -> Option<&PatentRecord> {
        self.index.get(patent_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, patent_id: &str) -> bool {
        self.index.contains_key(patent_id)
    }

    pub fn dangling_count(&self) -> usize {
        self.dangling.len()
    }

    pub fn dangling_edges(&self) -> impl Iterator<Item = &CitationEdge> {
        self.dangling.iter().map(|&e| &self.edges[e])
    }

    /// Resolved outgoing edges of a patent (dangling edges excluded).
    pub fn outgoing(&self, patent_id: &str) -> impl Iterator<Item = &CitationEdge> {
        let edges = self.index.get(patent_id).map(|&i| self.forward[i].as_slice()).unwrap_or(&[]);
        edges.iter().map(|&e| &self.edges[e])
    }

    /// Resolved incoming edges of a patent (dangling edges excluded).
    pub fn incoming(&self, patent_id: &str) -> impl Iterator<Item = &CitationEdge> {
        let edges = self.index.get(patent_id).map(|&i| self.backward[i].as_slice()).unwrap_or(&[]);
        edges.iter().map(|&e| &self.edges[e])
    }

    /// Patent ids of the DOCDB family, in corpus order.
    pub fn family(&self, family_id: &str) -> impl Iterator<Item = &str> {
        self.families
            .get(family_id)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|&i| self.records[i].patent_id.as_str())
    }

    pub fn family_count(&self) -> usize {
        self.families.len()
    }

    /// Family members of `patent_id`, excluding the patent itself.
    pub fn siblings(&self, patent_id: &str) -> Vec<&str> {
        match self.get(patent_id) {
            Some(r) => self.family(&r.family_id).filter(|&id| id != patent_id).collect(),
            None => Vec::new(),
        }
    }

    /// Returns the id whose English text stands in for `patent_id`: the
    /// patent itself when it has an English abstract, otherwise the best
    /// family sibling by [`ENGLISH_PRIORITY`]. Siblings from unlisted
    /// authorities rank after all listed ones; ties fall back to id order.
    pub fn resolve_english_text(&self, patent_id: &str) -> Option<&str> {
        let record = self.get(patent_id)?;
        if record.has_english_abstract() {
            return Some(&record.patent_id);
        }
        self.family(&record.family_id)
            .filter(|&id| id != patent_id)
            .filter_map(|id| self.get(id))
            .filter(|r| r.has_english_abstract())
            .min_by(|a, b| {
                priority_rank(&a.jurisdiction)
                    .cmp(&priority_rank(&b.jurisdiction))
                    .then_with(|| a.patent_id.cmp(&b.patent_id))
            })
            .map(|r| r.patent_id.as_str())
    }

    pub fn compose_text(&self, patent_id: &str, mode: TextMode) -> Result<String> {
        self.compose_text_with(patent_id, mode, DEFAULT_SEPARATOR)
    }

    pub fn compose_text_with(&self, patent_id: &str, mode: TextMode, separator: &str) -> Result<String> {
        let record = self.get(patent_id).ok_or_else(|| Error::UnknownId(patent_id.to_string()))?;
        match mode {
            TextMode::TitleAbstract => {
                let source = self
                    .resolve_english_text(patent_id)
                    .and_then(|id| self.get(id))
                    .ok_or_else(|| Error::NoEnglishText(patent_id.to_string()))?;
                let title = source.title.as_deref().unwrap_or("");
                let abstract_text = source.abstract_text.as_deref().unwrap_or("");
                Ok(format!("{title}{separator}{abstract_text}"))
            }
            TextMode::TitleCpc => {
                if record.cpc_codes.is_empty() {
                    return Err(Error::NoCpc(patent_id.to_string()));
                }
                let title = self
                    .resolve_english_text(patent_id)
                    .and_then(|id| self.get(id))
                    .and_then(|r| r.title.as_deref())
                    .or(record.title.as_deref())
                    .unwrap_or("");
                Ok(format!("{title}{separator}{}", record.cpc_codes.join(" ")))
            }
        }
    }

    /// De-duplicated ids cited by `patent_id` under any of `categories`,
    /// sorted by id.
    pub fn backward_citations(&self, patent_id: &str, categories: CategorySet) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .outgoing(patent_id)
            .filter(|e| categories.contains(e.category))
            .map(|e| e.cited_id.as_str())
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Everything cited by the patent's backward citations, minus its own
    /// direct citations and the patent itself.
    pub fn indirect_citations(&self, patent_id: &str) -> BTreeSet<String> {
        let direct: BTreeSet<&str> = self.outgoing(patent_id).map(|e| e.cited_id.as_str()).collect();
        let mut out = BTreeSet::new();
        for &cited in &direct {
            for e in self.outgoing(cited) {
                let id = e.cited_id.as_str();
                if id != patent_id && !direct.contains(id) {
                    out.insert(id.to_string());
                }
            }
        }
        out
    }

    /// Distinct second-hop ids excluding only the patent itself.
    pub fn second_hop_citations(&self, patent_id: &str) -> BTreeSet<String> {
        let direct: BTreeSet<&str> = self.outgoing(patent_id).map(|e| e.cited_id.as_str()).collect();
        direct
            .iter()
            .flat_map(|&c| self.outgoing(c))
            .map(|e| e.cited_id.as_str())
            .filter(|&id| id != patent_id)
            .map(str::to_owned)
            .collect()
    }

    /// Writes records and citations back out in the ingestion format.
    pub fn write(&self, records_path: &Path, citations_path: &Path) -> Result<()> {
        jsonl::write(records_path, &self.records)?;
        jsonl::write(citations_path, &self.edges)
    }

    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary {
            records: self.records.len(),
            families: self.families.len(),
            edges: self.edges.len(),
            dangling_edges: self.dangling.len(),
            english_resolvable: self
                .records
                .iter()
                .filter(|r| self.resolve_english_text(&r.patent_id).is_some())
                .count(),
            without_cpc: self.records.iter().filter(|r| r.cpc_codes.is_empty()).count(),
        }
    }

    pub(crate) fn position(&self, patent_id: &str) -> Option<usize> {
        self.index.get(patent_id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub records: usize,
    pub families: usize,
    pub edges: usize,
    pub dangling_edges: usize,
    pub english_resolvable: usize,
    pub without_cpc: usize,
}

fn priority_rank(jurisdiction: &str) -> usize {
    ENGLISH_PRIORITY
        .iter()
        .position(|&j| j == jurisdiction)
        .unwrap_or(ENGLISH_PRIORITY.len())
}

/// Loads a corpus from a records file and a citations file, both
/// line-delimited JSON.
pub fn load_corpus(records_path: &Path, citations_path: &Path) -> Result<Corpus> {
    let records = jsonl::read::<PatentRecord>(records_path)?;
    let edges = jsonl::read::<CitationEdge>(citations_path)?;
    let corpus = Corpus::build(records, edges, records_path, citations_path)?;
    if corpus.dangling_count() > 0 {
        log::warn!(
            "{} citation edge(s) reference unknown patents; excluded from mining",
            corpus.dangling_count()
        );
    }
    Ok(corpus)
}
