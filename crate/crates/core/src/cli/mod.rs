//! Command-line front end: one subcommand per pipeline stage, each reading
//! and writing files under `--out` and leaving a manifest behind.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime or
//! numeric failure. Failures print one JSON line to stderr.

mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use toml::{Table, Value};

pub use manifest::Manifest;

use crate::config::{self, RunConfig};
use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "citembed", version, about = "Citation-informed patent triplet mining, training, and evaluation")]
pub struct Cli {
    /// TOML config file, or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; also where inputs are looked up by default.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override a config key, e.g. `--set train.epochs=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub citations: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and write it back normalized, with a summary.
    Ingest(CorpusArgs),
    /// Mine training triplets from the citation graph.
    Mine {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Test set whose patents are withheld from every pool.
        #[arg(long)]
        exclude: Option<PathBuf>,
    },
    /// Split triplets into train and validation sets by focal.
    Split {
        #[arg(long)]
        triplets: Option<PathBuf>,
    },
    /// Build held-out ranking samples disjoint from the given triplets.
    BuildTestset {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Train the encoder with the triplet margin loss.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        /// Resume from a checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write embeddings for the corpus, or for a test set's patents.
    Embed {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Rank test samples and report RFR, MAP and MRR@10.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// model, embeddings, or bm25.
        #[arg(long)]
        ranker: Option<String>,
        /// Label for the report.
        #[arg(long)]
        name: Option<String>,
    },
    /// Tabulate reports and test each against the first.
    Compare {
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
    },
    /// Export the RFR distribution of each report.
    Ecdf {
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
    },
    /// Summarize whichever artifacts exist.
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Generate a synthetic corpus.
    Synth,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Mine { .. } => "mine",
            Command::Split { .. } => "split",
            Command::BuildTestset { .. } => "build-testset",
            Command::Train { .. } => "train",
            Command::Embed { .. } => "embed",
            Command::Evaluate { .. } => "evaluate",
            Command::Compare { .. } => "compare",
            Command::Ecdf { .. } => "ecdf",
            Command::Stats { .. } => "stats",
            Command::Synth => "synth",
        }
    }

    /// Flag values as config keys.
    fn settings(&self) -> Vec<(&'static str, Value)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| Value::String(p.display().to_string()));
        let mut out: Vec<(&'static str, Option<Value>)> = Vec::new();
        let corpus_args = |c: &CorpusArgs, out: &mut Vec<_>| {
            out.push(("paths.records", path(&c.records)));
            out.push(("paths.citations", path(&c.citations)));
        };
        match self {
            Command::Ingest(c) => corpus_args(c, &mut out),
            Command::Mine { corpus, exclude } => {
                corpus_args(corpus, &mut out);
                out.push(("paths.exclude", path(exclude)));
            }
            Command::Split { triplets } => out.push(("paths.triplets", path(triplets))),
            Command::BuildTestset { corpus, triplets, train, val } => {
                corpus_args(corpus, &mut out);
                out.extend([("paths.triplets", path(triplets)), ("paths.train", path(train)), ("paths.val", path(val))]);
            }
            Command::Train { corpus, train, val, checkpoint } => {
                corpus_args(corpus, &mut out);
                out.extend([("paths.train", path(train)), ("paths.val", path(val)), ("paths.checkpoint", path(checkpoint))]);
            }
            Command::Embed { corpus, model, test } => {
                corpus_args(corpus, &mut out);
                out.extend([("paths.model", path(model)), ("paths.test", path(test))]);
            }
            Command::Evaluate { corpus, test, model, embeddings, ranker, name } => {
                corpus_args(corpus, &mut out);
                out.extend([
                    ("paths.test", path(test)),
                    ("paths.model", path(model)),
                    ("paths.embeddings", path(embeddings)),
                    ("eval.ranker", ranker.clone().map(Value::String)),
                    ("eval.name", name.clone().map(Value::String)),
                ]);
            }
            Command::Compare { reports } | Command::Ecdf { reports } => {
                let list = reports.iter().map(|p| Value::String(p.display().to_string())).collect();
                out.push(("paths.reports", Some(Value::Array(list))));
            }
            Command::Stats { corpus, triplets, test } => {
                corpus_args(corpus, &mut out);
                out.extend([("paths.triplets", path(triplets)), ("paths.test", path(test))]);
            }
            Command::Synth => {}
        }
        out.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }
}

/// A failed run, classified by exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Config(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Data(_) => "data",
            Failure::Runtime(_) => "runtime",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }

    /// `{"error":"data","code":3,"message":"..."}` on one line.
    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "code": self.code(), "message": self.message().replace('\n', " ") })
            .to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::NonFinite(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

/// Merges the config file, `--set` overrides, and flags (in increasing
/// precedence) and validates the result, reporting every problem at once.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut problems = Vec::new();
    let mut table = match &cli.config {
        Some(path) => config::read_config_file(path).map_err(Failure::Config)?,
        None => Table::new(),
    };
    let mut settings: Vec<(String, Value)> = Vec::new();
    for spec in &cli.overrides {
        match config::parse_override(spec) {
            Ok(kv) => settings.push(kv),
            Err(e) => problems.push(e),
        }
    }
    settings.extend(cli.command.settings().into_iter().map(|(k, v)| (k.to_string(), v)));
    if let Some(seed) = cli.seed {
        match i64::try_from(seed) {
            Ok(s) => settings.push(("seed".into(), Value::Integer(s))),
            Err(_) => problems.push(format!("seed: {seed} exceeds {}", i64::MAX)),
        }
    }
    if let Some(out) = &cli.out {
        settings.push(("out".into(), Value::String(out.display().to_string())));
    }
    if let Some(threads) = cli.threads {
        settings.push(("threads".into(), Value::Integer(threads as i64)));
    }
    for (k, v) in settings {
        if let Err(e) = config::set_path(&mut table, &k, v) {
            problems.push(e);
        }
    }
    match RunConfig::from_table(&table) {
        Ok(c) if problems.is_empty() => Ok(c),
        Ok(_) => Err(Failure::Config(problems.join("; "))),
        Err(p) => {
            problems.extend(p.0);
            Err(Failure::Config(problems.join("; ")))
        }
    }
}

/// Runs one parsed command with a resolved config and writes its manifest.
/// Returns the manifest path.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::Runtime(format!("{}: {e}", cfg.out.display())))?;
    let run = || match command {
        Command::Ingest(_) => commands::ingest(cfg),
        Command::Mine { .. } => commands::mine(cfg),
        Command::Split { .. } => commands::split(cfg),
        Command::BuildTestset { .. } => commands::build_testset(cfg),
        Command::Train { .. } => commands::train(cfg),
        Command::Embed { .. } => commands::embed(cfg),
        Command::Evaluate { .. } => commands::evaluate(cfg),
        Command::Compare { .. } => commands::compare(cfg),
        Command::Ecdf { .. } => commands::ecdf(cfg),
        Command::Stats { .. } => commands::stats(cfg),
        Command::Synth => commands::synth(cfg),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    let outcome = pool.install(run)?;
    let manifest = Manifest::new(command.name(), cfg, &outcome.inputs, &outcome.outputs)?;
    let stem = match &outcome.tag {
        Some(tag) => format!("{}-{tag}", command.name()),
        None => command.name().to_string(),
    };
    let path = Manifest::path_for(&cfg.out, &stem);
    manifest.save(&path)?;
    Ok(path)
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            commands::say(e.to_string().trim_end());
            return 0;
        }
        Err(e) => {
            let failure = Failure::Config(e.to_string().lines().next().unwrap_or_default().to_string());
            eprintln!("{}", failure.to_line());
            return failure.code();
        }
    };
    match resolve_config(&cli).and_then(|cfg| execute(&cli.command, &cfg)) {
        Ok(manifest) => {
            commands::say(&manifest.display().to_string());
            0
        }
        Err(failure) => {
            eprintln!("{}", failure.to_line());
            failure.code()
        }
    }
}
