mod common;

use std::path::Path;

use citembed::cli::Manifest;
use citembed::config::{read_config_file, RunConfig};
use citembed::evaluator::MetricsReport;
use citembed::pipeline::desk_config;
use common::*;

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn desk_file_matches_desk_config() {
    let table = read_config_file(&desk_toml()).unwrap();
    assert_eq!(RunConfig::from_table(&table).unwrap(), desk_config());
}

#[test]
fn full_pipeline_produces_reports_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for (stage, code) in run_pipeline(out, 2) {
        assert_eq!(code, 0, "{stage} failed");
    }
    for name in ["report-model-mean-cosine.json", "report-model-first-cosine.json", "report-bm25.json", "report-exported-cosine.json"] {
        let r = MetricsReport::load(&out.join(name)).unwrap();
        assert_eq!(r.samples, 30, "{name}");
        assert!(r.map > 0.0 && r.map <= 100.0);
    }
    for name in ["comparison.tsv", "comparison.txt", "significance.tsv", "ecdf.tsv", "stats.json", "history.tsv"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let table = std::fs::read_to_string(out.join("comparison.txt")).unwrap();
    assert!(table.contains("First") && table.contains("Mean") && table.contains("bm25"));

    // The test set never leaks into training.
    let test: Vec<citembed::miner::TestSample> = citembed::jsonl::read_values(&out.join("test.jsonl")).unwrap();
    let triplets: Vec<citembed::miner::Triplet> = citembed::jsonl::read_values(&out.join("triplets.jsonl")).unwrap();
    assert!(sample_ids(&test).is_disjoint(&triplet_ids(&triplets)));

    let m = Manifest::load(&out.join("train.manifest.json")).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.config.encoder.dim, 32);
    assert!(m.inputs.iter().any(|d| d.path.ends_with("train.jsonl")));
    assert!(m.outputs.iter().any(|d| d.path.ends_with("model.json")));
    assert!(out.join("evaluate-bm25.manifest.json").exists());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(run_pipeline(&out, 1).iter().all(|(_, c)| *c == 0));
    let first = tree(&out);
    std::fs::remove_dir_all(&out).unwrap();
    assert!(run_pipeline(&out, 4).iter().all(|(_, c)| *c == 0));
    let second = tree(&out);
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (name, bytes) in &first {
        if name.ends_with(".manifest.json") {
            // Manifests archive the thread count; nothing else may differ.
            let mut a: serde_json::Value = serde_json::from_slice(bytes).unwrap();
            let b: serde_json::Value = serde_json::from_slice(&second[name]).unwrap();
            a["config"]["threads"] = 4.into();
            assert_eq!(a, b, "{name}");
        } else {
            assert!(second[name] == *bytes, "{name} differs between runs");
        }
    }
}

#[test]
fn manifest_reruns_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let cfg = s(&desk_toml());
    assert_eq!(citembed(&["synth", "--config", &cfg, "--out", &out]).0, 0);
    assert_eq!(citembed(&["build-testset", "--config", &cfg, "--out", &out]).0, 0);
    let test = std::fs::read(dir.path().join("test.jsonl")).unwrap();
    let manifest = s(&dir.path().join("build-testset.manifest.json"));
    let before = std::fs::read(&manifest).unwrap();
    std::fs::remove_file(dir.path().join("test.jsonl")).unwrap();
    let (code, err) = citembed(&["build-testset", "--config", &manifest, "--threads", "3"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read(dir.path().join("test.jsonl")).unwrap(), test);
    // Only the thread count differs in the new manifest.
    let after: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    let mut before: serde_json::Value = serde_json::from_slice(&before).unwrap();
    before["config"]["threads"] = 3.into();
    assert_eq!(before, after);
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let cfg = s(&desk_toml());
    for stage in ["synth", "build-testset"] {
        assert_eq!(citembed(&[stage, "--config", &cfg, "--out", &out]).0, 0);
    }
    let test = s(&dir.path().join("test.jsonl"));
    assert_eq!(citembed(&["mine", "--exclude", &test, "--config", &cfg, "--out", &out]).0, 0);
    assert_eq!(citembed(&["split", "--config", &cfg, "--out", &out]).0, 0);
    assert_eq!(citembed(&["train", "--config", &cfg, "--out", &out]).0, 0);
    let full = std::fs::read(dir.path().join("model.json")).unwrap();
    let full_history = std::fs::read(dir.path().join("history.tsv")).unwrap();

    let (code, err) = citembed(&["train", "--config", &cfg, "--out", &out, "--set", "stop_step=7"]);
    assert_eq!(code, 0, "{err}");
    let partial = dir.path().join("partial.json");
    std::fs::rename(dir.path().join("checkpoint.json"), &partial).unwrap();
    assert_ne!(std::fs::read(dir.path().join("model.json")).unwrap(), full);

    let (code, err) = citembed(&["train", "--checkpoint", &s(&partial), "--config", &cfg, "--out", &out]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read(dir.path().join("model.json")).unwrap(), full);
    assert_eq!(std::fs::read(dir.path().join("history.tsv")).unwrap(), full_history);
}

#[test]
fn missing_embedding_is_a_data_error_naming_the_patent() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let cfg = s(&desk_toml());
    for stage in ["synth", "build-testset"] {
        assert_eq!(citembed(&[stage, "--config", &cfg, "--out", &out]).0, 0);
    }
    let test: Vec<citembed::miner::TestSample> = citembed::jsonl::read_values(&dir.path().join("test.jsonl")).unwrap();
    let absent = &test[0].positive_ids[0];
    let ids: Vec<&str> = sample_ids(&test).into_iter().filter(|id| id != absent).collect();
    let body: String = ids.iter().map(|id| format!("{id} 0.1 0.2 0.3\n")).collect();
    let table = dir.path().join("vectors.txt");
    std::fs::write(&table, body).unwrap();

    let (code, err) = citembed(&["evaluate", "--ranker", "embeddings", "--embeddings", &s(&table), "--config", &cfg, "--out", &out]);
    assert_eq!(code, 3);
    let line: serde_json::Value = serde_json::from_str(err.trim().lines().last().unwrap()).unwrap();
    assert_eq!(line["code"], 3);
    assert_eq!(line["error"], "data");
    assert!(line["message"].as_str().unwrap().contains(absent.as_str()), "{err}");
}

#[test]
fn config_errors_are_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seeed = 3\n[train]\nepochs = \"two\"\nmargin = -1.0\n[encoder]\ndimension = 8\n").unwrap();
    let (code, err) = citembed(&["synth", "--config", &s(&bad), "--out", &out, "--set", "split.train_fraction=1.5"]);
    assert_eq!(code, 2);
    let line: serde_json::Value = serde_json::from_str(err.trim().lines().last().unwrap()).unwrap();
    assert_eq!(line["error"], "config");
    let message = line["message"].as_str().unwrap();
    for key in ["seeed", "train.epochs", "margin must be positive", "encoder.dimension", "train_fraction"] {
        assert!(message.contains(key), "{key} not reported in {message}");
    }
    assert!(!dir.path().join("records.jsonl").exists());
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    std::fs::write(dir.path().join("records.jsonl"), "{\"patent_id\": \"EP1\"\n").unwrap();
    std::fs::write(dir.path().join("citations.jsonl"), "").unwrap();
    let (code, err) = citembed(&["ingest", "--out", &out]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn unreachable_criteria_still_write_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let (code, err) = citembed(&["synth", "--out", &out, "--set", "criteria.min_xyi=50", "--set", "criteria.allow_xyi_plus_a=false"]);
    assert_eq!(code, 0, "{err}");
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("synth.json")).unwrap()).unwrap();
    let e = &summary["eligibility"];
    assert_eq!(e["eligible"], 0);
    assert_eq!(e["with_enough_xyi"], 0);
    assert_eq!(e["records"], 1200);
    assert!(e["with_cpc"].as_u64().unwrap() > 1000);
}
