//! Tokenizer, bag-of-embeddings encoder, and embedding providers.
//!
//! The encoder averages (or takes the first of) token embedding rows and
//! applies an affine projection. It is small enough to differentiate by
//! hand, which the trainer relies on.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TextMode};
use crate::error::{Error, Result};
use crate::rng;

pub const UNK_TOKEN: &str = "[UNK]";
pub const DEFAULT_MAX_LEN: usize = 512;
const MODEL_FORMAT: &str = "citembed-model";
const MODEL_VERSION: u32 = 1;

/// Lowercased alphanumeric runs of `text`.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    /// First-token representative, standing in for a `[CLS]` vector.
    First,
}

impl Pooling {
    pub fn label(self) -> &'static str {
        match self {
            Pooling::Mean => "mean",
            Pooling::First => "first",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TokenizerData {
    vocab: Vec<String>,
    unk_id: u32,
    max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TokenizerData", into = "TokenizerData")]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    unk_id: u32,
    max_len: usize,
}

impl TryFrom<TokenizerData> for Tokenizer {
    type Error = Error;

    fn try_from(d: TokenizerData) -> Result<Self> {
        Tokenizer::from_vocab(d.vocab, d.unk_id, d.max_len)
    }
}

impl From<Tokenizer> for TokenizerData {
    fn from(t: Tokenizer) -> Self {
        TokenizerData {
            vocab: t.vocab,
            unk_id: t.unk_id,
            max_len: t.max_len,
        }
    }
}

impl Tokenizer {
    pub fn from_vocab(vocab: Vec<String>, unk_id: u32, max_len: usize) -> Result<Self> {
        if unk_id as usize >= vocab.len() {
            return Err(Error::InvalidInput(format!("unk_id {unk_id} outside vocabulary of {}", vocab.len())));
        }
        if max_len == 0 {
            return Err(Error::InvalidInput("max_len must be at least 1".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Tokenizer {
            vocab,
            index,
            unk_id,
            max_len,
        })
    }

    /// Counts lowercased words over `texts` and keeps those seen at least
    /// `min_freq` times, most frequent first (ties alphabetical), capped at
    /// `max_vocab`. Id 0 is [`UNK_TOKEN`].
    pub fn build<S: AsRef<str>>(texts: &[S], max_vocab: usize, min_freq: usize, max_len: usize) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("no texts to build a vocabulary from".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for w in words(t.as_ref()) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_vocab);
        let vocab = std::iter::once(UNK_TOKEN.to_string())
            .chain(ranked.into_iter().map(|(w, _)| w))
            .collect();
        Tokenizer::from_vocab(vocab, 0, max_len)
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(self.unk_id)
    }

    /// Ids of the first `max_len` words.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        words(text).take(self.max_len).map(|w| self.id(&w)).collect()
    }
}

/// Trainable parameters: `embedding` is `vocab_size × dim` row-major,
/// `projection` is `dim × out_dim` row-major, output = `projectionᵀ·h + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub vocab_size: usize,
    pub dim: usize,
    pub out_dim: usize,
    pub seed: u64,
    pub embedding: Vec<f64>,
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    /// Embeddings uniform in [-0.05, 0.05]; projection identity (padded
    /// with zeros when `dim != out_dim`); zero bias.
    pub fn init(vocab_size: usize, dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "embedding-init");
        let embedding = (0..vocab_size * dim).map(|_| rng.random_range(-0.05..=0.05)).collect();
        let mut projection = vec![0.0; dim * out_dim];
        for i in 0..dim.min(out_dim) {
            projection[i * out_dim + i] = 1.0;
        }
        EncoderParams {
            vocab_size,
            dim,
            out_dim,
            seed,
            embedding,
            projection,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = [
            (self.embedding.len(), self.vocab_size * self.dim),
            (self.projection.len(), self.dim * self.out_dim),
            (self.bias.len(), self.out_dim),
        ];
        for (actual, expected) in shapes {
            if actual != expected {
                return Err(Error::DimensionMismatch { expected, actual });
            }
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder parameters".into()));
        }
        Ok(())
    }

    pub fn row(&self, token: u32) -> &[f64] {
        let t = token as usize;
        &self.embedding[t * self.dim..(t + 1) * self.dim]
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.embedding.iter().chain(&self.projection).chain(&self.bias)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.embedding.iter_mut().chain(self.projection.iter_mut()).chain(self.bias.iter_mut())
    }

    pub fn num_values(&self) -> usize {
        self.embedding.len() + self.projection.len() + self.bias.len()
    }

    /// Pooled hidden vector before projection.
    pub fn pool(&self, ids: &[u32], pooling: Pooling) -> Result<Vec<f64>> {
        let Some(&first) = ids.first() else {
            return Err(Error::EmptyDocument("token list".into()));
        };
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::InvalidInput(format!("token id {bad} outside vocabulary of {}", self.vocab_size)));
        }
        Ok(match pooling {
            Pooling::First => self.row(first).to_vec(),
            Pooling::Mean => {
                let mut h = vec![0.0; self.dim];
                for &t in ids {
                    for (acc, v) in h.iter_mut().zip(self.row(t)) {
                        *acc += v;
                    }
                }
                let n = ids.len() as f64;
                h.iter_mut().for_each(|v| *v /= n);
                h
            }
        })
    }

    pub fn project(&self, hidden: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, &h) in hidden.iter().enumerate() {
            let row = &self.projection[i * self.out_dim..(i + 1) * self.out_dim];
            for (o, w) in out.iter_mut().zip(row) {
                *o += h * w;
            }
        }
        out
    }

    pub fn encode(&self, ids: &[u32], pooling: Pooling) -> Result<Vec<f64>> {
        Ok(self.project(&self.pool(ids, pooling)?))
    }
}

/// Tokenizer plus parameters: everything needed to embed text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoder {
    pub tokenizer: Tokenizer,
    pub params: EncoderParams,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    encoder: TextEncoder,
}

impl TextEncoder {
    pub fn new(tokenizer: Tokenizer, dim: usize, out_dim: usize, seed: u64) -> Self {
        let params = EncoderParams::init(tokenizer.len(), dim, out_dim, seed);
        TextEncoder { tokenizer, params }
    }

    pub fn encode_text(&self, text: &str, pooling: Pooling) -> Result<Vec<f64>> {
        self.params.encode(&self.tokenizer.tokenize(text), pooling)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let doc = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            encoder: self.clone(),
        };
        serde_json::to_writer(&mut w, &doc)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let doc: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported model container {} v{}",
                path.display(),
                doc.format,
                doc.version
            )));
        }
        if doc.encoder.params.vocab_size != doc.encoder.tokenizer.len() {
            return Err(Error::DimensionMismatch {
                expected: doc.encoder.tokenizer.len(),
                actual: doc.encoder.params.vocab_size,
            });
        }
        doc.encoder.params.validate()?;
        Ok(doc.encoder)
    }
}

/// Source of patent vectors.
pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;

    /// `None` when the provider cannot produce a vector for `patent_id`.
    fn embed(&self, patent_id: &str) -> Option<Vec<f64>>;
}

/// Embeds patents by composing their text and running the encoder.
pub struct ModelProvider<'a> {
    pub corpus: &'a Corpus,
    pub encoder: &'a TextEncoder,
    pub pooling: Pooling,
    pub mode: TextMode,
}

impl EmbeddingProvider for ModelProvider<'_> {
    fn dim(&self) -> usize {
        self.encoder.params.out_dim
    }

    fn embed(&self, patent_id: &str) -> Option<Vec<f64>> {
        let text = self.corpus.compose_text(patent_id, self.mode).ok()?;
        self.encoder.encode_text(&text, self.pooling).ok()
    }
}

/// Precomputed vectors keyed by patent id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        self.vectors.insert(id.into(), v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// One line per id: the id, then whitespace-separated decimals.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, v) in &self.vectors {
            let mut line = id.clone();
            for x in v {
                line.push(' ');
                line.push_str(&x.to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, patent_id: &str) -> Option<Vec<f64>> {
        self.vectors.get(patent_id).cloned()
    }
}

/// Reads a precomputed embedding file. The dimension comes from the first
/// row and every later row must match it.
pub fn load_external_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let malformed = |line: usize, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut table: Option<EmbeddingTable> = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else {
            continue;
        };
        let v = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| malformed(idx + 1, format!("{id}: {e}")))?;
        if v.is_empty() {
            return Err(malformed(idx + 1, format!("{id}: no vector values")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(malformed(idx + 1, format!("{id}: non-finite value")));
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(v.len()));
        if v.len() != t.dim {
            return Err(malformed(
                idx + 1,
                format!("{id}: dimension {} differs from {}", v.len(), t.dim),
            ));
        }
        t.vectors.insert(id.to_string(), v);
    }
    table.ok_or_else(|| Error::InvalidInput(format!("{}: no embeddings", path.display())))
}

/// Vectors for every id the provider can embed, plus the ids it could not.
#[derive(Debug, Clone)]
pub struct EmbeddedCorpus {
    pub table: EmbeddingTable,
    pub missing: Vec<String>,
}

pub fn embed_corpus<P: EmbeddingProvider + ?Sized>(provider: &P, ids: &[String]) -> EmbeddedCorpus {
    let results: Vec<(&String, Option<Vec<f64>>)> = ids.par_iter().map(|id| (id, provider.embed(id))).collect();
    let mut table = EmbeddingTable::new(provider.dim());
    let mut missing = Vec::new();
    for (id, v) in results {
        match v {
            Some(v) if v.len() == table.dim => {
                table.vectors.insert(id.clone(), v);
            }
            _ => missing.push(id.clone()),
        }
    }
    missing.sort();
    missing.dedup();
    EmbeddedCorpus { table, missing }
}
