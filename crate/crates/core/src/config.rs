//! Run configuration: a TOML key-value tree merged with command-line
//! overrides, validated all at once.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::corpus::TextMode;
use crate::encoder::{Pooling, DEFAULT_MAX_LEN};
use crate::evaluator::{Bm25Params, MetricKind, SimilarityMetric};
use crate::miner::{FocalCriteria, TestShape, TripletMix};
use crate::synth::SynthSpec;
use crate::trainer::TrainConfig;

/// Artifact locations. Unset inputs fall back to the conventional file
/// names inside `out`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub citations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triplets: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Test set whose ids are withheld from mining.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Resume training from this checkpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<PathBuf>,
}

const PATH_KEYS: [&str; 11] = [
    "records", "citations", "triplets", "train", "val", "test", "exclude", "model", "checkpoint", "embeddings", "reports",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    /// `title-abstract`, or `title-cpc` for the CPC ablation.
    pub mode: TextMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub mix: TripletMix,
    /// Mine at most this many focals, sampled from the eligible set; 0 = all.
    pub max_focals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.85 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSetConfig {
    pub samples: usize,
    pub shape: TestShape,
}

impl Default for TestSetConfig {
    fn default() -> Self {
        TestSetConfig {
            samples: 1000,
            shape: TestShape::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub max_vocab: usize,
    pub min_freq: usize,
    pub max_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            max_vocab: 50_000,
            min_freq: 1,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub dim: usize,
    pub out_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { dim: 64, out_dim: 64 }
    }
}

/// What `evaluate` ranks with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankerKind {
    #[default]
    Model,
    Embeddings,
    Bm25,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ranker: RankerKind,
    /// Report label; empty means derived from the ranker.
    pub name: String,
    pub metric: SimilarityMetric,
    pub pooling: Pooling,
    pub bm25: Bm25Params,
    pub resamples: usize,
    pub significance_metric: MetricKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ranker: RankerKind::Model,
            name: String::new(),
            metric: SimilarityMetric::Cosine,
            pooling: Pooling::Mean,
            bm25: Bm25Params::default(),
            resamples: 10_000,
            significance_metric: MetricKind::Ap,
        }
    }
}

/// Fully resolved configuration of one run. `seed` drives every stochastic
/// stage and overrides `synth.seed` and `train.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Stop training after this many optimizer steps; 0 runs the full
    /// schedule. A later run with `paths.checkpoint` picks up from there.
    pub stop_step: u64,
    pub paths: Paths,
    pub text: TextConfig,
    pub synth: SynthSpec,
    pub criteria: FocalCriteria,
    pub mining: MiningConfig,
    pub split: SplitConfig,
    pub testset: TestSetConfig,
    pub tokenizer: TokenizerConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out: PathBuf::from("out"),
            threads: 0,
            stop_step: 0,
            paths: Paths::default(),
            text: TextConfig::default(),
            synth: SynthSpec::default(),
            criteria: FocalCriteria::default(),
            mining: MiningConfig::default(),
            split: SplitConfig::default(),
            testset: TestSetConfig::default(),
            tokenizer: TokenizerConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig {
                seed: 7,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
        }
    }
}

/// Every problem found in a configuration, in key order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigProblems(pub Vec<String>);

impl std::fmt::Display for ConfigProblems {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.join("; "))
    }
}

/// Keys whose tables are free-form maps rather than fixed records.
const FREE_MAPS: [&str; 1] = ["synth.categories"];

/// Parses `value` as a TOML value, falling back to a plain string.
pub fn parse_value(value: &str) -> Value {
    format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()))
}

/// Sets `dotted` (e.g. `train.epochs`) in `table`, creating parent tables.
pub fn set_path(table: &mut Table, dotted: &str, value: Value) -> Result<(), String> {
    let mut parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("{dotted}: malformed key"));
    }
    let last = parts.pop().unwrap();
    let mut cur = table;
    for (i, part) in parts.iter().enumerate() {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(format!("{}: not a table", parts[..=i].join("."))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses a `key=value` override.
pub fn parse_override(spec: &str) -> Result<(String, Value), String> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| format!("{spec}: override must look like key=value"))?;
    Ok((k.trim().to_string(), parse_value(v.trim())))
}

/// Reads a config file: TOML, or a run manifest (JSON) whose archived
/// `config` is reused.
pub fn read_config_file(path: &Path) -> Result<Table, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let config = v
            .get("config")
            .cloned()
            .ok_or_else(|| format!("{}: manifest has no config", path.display()))?;
        serde_json::from_value::<Table>(config).map_err(|e| format!("{}: {e}", path.display()))
    } else {
        text.parse::<Table>().map_err(|e| format!("{}: {}", path.display(), e.message()))
    }
}

fn unknown_keys(given: &Table, schema: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in given {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if key == "paths" {
            if let Value::Table(t) = v {
                out.extend(t.keys().filter(|p| !PATH_KEYS.contains(&p.as_str())).map(|p| format!("paths.{p}: unknown key")));
            }
            continue;
        }
        match schema.get(k) {
            None => out.push(format!("{key}: unknown key")),
            Some(Value::Table(s)) if !FREE_MAPS.contains(&key.as_str()) => {
                if let Value::Table(t) = v {
                    unknown_keys(t, s, &key, out);
                }
            }
            _ => {}
        }
    }
}

/// Parses `table[key]` into `slot`. When the whole section fails, keys are
/// tried one at a time over the current value so every bad key is named and
/// the good ones still apply (and reach the range checks).
fn section<T: DeserializeOwned + Serialize>(table: &Table, key: &str, slot: &mut T, problems: &mut Vec<String>) {
    let Some(v) = table.get(key) else { return };
    let message = |e: toml::de::Error| e.message().replace('\n', " ");
    match v.clone().try_into::<T>() {
        Ok(parsed) => *slot = parsed,
        Err(e) => {
            let (Value::Table(given), Ok(Value::Table(base))) = (v, Value::try_from(&*slot)) else {
                problems.push(format!("{key}: {}", message(e)));
                return;
            };
            let mut merged = base.clone();
            for (k, val) in given {
                let mut trial = base.clone();
                trial.insert(k.clone(), val.clone());
                match Value::Table(trial).try_into::<T>() {
                    Ok(_) => {
                        merged.insert(k.clone(), val.clone());
                    }
                    Err(e) => problems.push(format!("{key}.{k}: {}", message(e))),
                }
            }
            if let Ok(parsed) = Value::Table(merged).try_into::<T>() {
                *slot = parsed;
            }
        }
    }
}

impl RunConfig {
    /// Resolves a merged key-value tree, reporting every unknown key, type
    /// error and out-of-range value together.
    pub fn from_table(table: &Table) -> Result<RunConfig, ConfigProblems> {
        let mut problems = Vec::new();
        let defaults = RunConfig::default();
        let schema = Table::try_from(&defaults).expect("default config serializes");
        unknown_keys(table, &schema, "", &mut problems);

        let mut c = defaults;
        section(table, "seed", &mut c.seed, &mut problems);
        section(table, "out", &mut c.out, &mut problems);
        section(table, "threads", &mut c.threads, &mut problems);
        section(table, "stop_step", &mut c.stop_step, &mut problems);
        section(table, "paths", &mut c.paths, &mut problems);
        section(table, "text", &mut c.text, &mut problems);
        section(table, "synth", &mut c.synth, &mut problems);
        section(table, "criteria", &mut c.criteria, &mut problems);
        section(table, "mining", &mut c.mining, &mut problems);
        section(table, "split", &mut c.split, &mut problems);
        section(table, "testset", &mut c.testset, &mut problems);
        section(table, "tokenizer", &mut c.tokenizer, &mut problems);
        section(table, "encoder", &mut c.encoder, &mut problems);
        section(table, "train", &mut c.train, &mut problems);
        section(table, "eval", &mut c.eval, &mut problems);
        // Unknown-key errors from serde duplicate the scan above.
        problems.retain(|p| !p.contains("unknown field"));
        problems.sort();
        problems.dedup();

        c.synth.seed = c.seed;
        c.train.seed = c.seed;
        problems.extend(c.problems());
        if problems.is_empty() {
            Ok(c)
        } else {
            Err(ConfigProblems(problems))
        }
    }

    /// Range and consistency checks across sections.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut prefixed = |section: &str, items: Vec<String>| out.extend(items.into_iter().map(|p| format!("{section}: {p}")));
        prefixed("synth", self.synth.problems());
        prefixed("train", self.train.problems());
        if let Err(e) = self.criteria.validate() {
            prefixed("criteria", vec![e.to_string()]);
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            out.push(format!("split.train_fraction: must be in (0, 1), got {}", self.split.train_fraction));
        }
        if self.mining.mix.per_focal() == 0 {
            out.push("mining.mix: at least one triplet per focal".into());
        }
        let shape = self.testset.shape;
        if self.testset.samples == 0 || shape.positives == 0 || shape.hard + shape.easy == 0 {
            out.push("testset: samples, positives and negatives must be positive".into());
        }
        if self.tokenizer.max_vocab < 2 || self.tokenizer.max_len == 0 || self.tokenizer.min_freq == 0 {
            out.push("tokenizer: max_vocab >= 2, max_len >= 1 and min_freq >= 1 required".into());
        }
        if self.encoder.dim == 0 || self.encoder.out_dim == 0 {
            out.push("encoder: dim and out_dim must be positive".into());
        }
        if self.eval.resamples == 0 {
            out.push("eval.resamples: must be positive".into());
        }
        if !(self.eval.bm25.k1 >= 0.0 && (0.0..=1.0).contains(&self.eval.bm25.b)) {
            out.push("eval.bm25: k1 >= 0 and b in [0, 1] required".into());
        }
        out
    }
}
