//! Citation-informed patent triplet mining, triplet-margin training of a
//! bag-of-embeddings encoder, and rank-aware retrieval evaluation.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod jsonl;
pub mod miner;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
