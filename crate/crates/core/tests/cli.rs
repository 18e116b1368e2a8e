//! Command-line behaviour: artifacts, exit codes and cache recovery.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pivotmine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pivotmine"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout_path(out: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&out.stdout).trim())
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Writes a small synthetic corpus and a run config pointing at it.
fn setup(root: &Path) -> PathBuf {
    let out = pivotmine(&[
        "--out",
        &s(&root.join("data")),
        "--run-id",
        "corpus",
        "synth",
        "--verses",
        "500",
        "--particle",
        "5",
        "--suffix",
        "1",
        "--unmarked",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = stdout_path(&out);
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "k = 6\ncoverage_target = 500\nmin_shared_verses = 200\n[paths]\ncorpus = \"{0}/corpus\"\nqueries = \"{0}/queries.tsv\"\nallowlist = \"{0}/allowlist.txt\"\ngold = \"{0}/gold.tsv\"\noutput = \"{1}\"\n",
            data.display(),
            root.join("out").display()
        ),
    )
    .unwrap();
    config
}

#[test]
fn pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let out = pivotmine(&["--config", &s(&config), "pipeline", "--feature", "past"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = stdout_path(&out);
    assert!(dir.file_name().unwrap().to_string_lossy().starts_with("pipeline-"));
    for rel in [
        "config.toml",
        "manifest.json",
        "head/past.tsv",
        "head/past.ranking.tsv",
        "pivots/past.tsv",
        "pivots/past.presence.tsv",
        "ngrams/past/summary.tsv",
        "markers/past.distance.tsv",
        "markers/past.newick",
        "map/past.splitters.tsv",
        "map/past.clusters.tsv",
        "eval/past.mrr.json",
    ] {
        assert!(dir.join(rel).is_file(), "missing {rel}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(outputs.contains_key("pivots/past.tsv"));
    assert_eq!(manifest["command"], "pipeline");
    assert!(!manifest["inputs"].as_object().unwrap().is_empty());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let out_dir = s(&root.join("out"));

    let missing = pivotmine(&["--out", &out_dir, "--set", "paths.corpus=\"/nonexistent/corpus\"", "ingest"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error:"));

    let bad = root.join("bad.toml");
    std::fs::write(&bad, "bogus_key = 1\n").unwrap();
    assert_eq!(pivotmine(&["--config", &s(&bad), "ingest"]).status.code(), Some(2));

    std::fs::write(&bad, "n_min = 7\nn_max = 3\n").unwrap();
    assert_eq!(pivotmine(&["--config", &s(&bad), "ingest"]).status.code(), Some(2));

    assert_eq!(pivotmine(&["--out", &out_dir, "--set", "sigma", "ingest"]).status.code(), Some(2));
    assert_eq!(pivotmine(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(pivotmine(&["--config", &s(&root.join("absent.toml")), "ingest"]).status.code(), Some(3));
}

#[test]
fn existing_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let args = ["--config", &s(&config), "--run-id", "same", "ingest"];
    assert!(pivotmine(&args).status.success());
    assert_eq!(pivotmine(&args).status.code(), Some(2));
}

#[test]
fn corrupt_alignment_cache_is_recomputed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let first = pivotmine(&["--config", &s(&config), "--run-id", "h1", "head-pivot", "--feature", "past"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));

    let cache = tmp.path().join("out/cache/align");
    let entries: Vec<PathBuf> = std::fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(!entries.is_empty());
    for p in &entries {
        std::fs::write(p, "#lextable\tkey=x\tsha256=00\n garbage").unwrap();
    }

    let second = pivotmine(&["--config", &s(&config), "--run-id", "h2", "head-pivot", "--feature", "past"]);
    assert!(second.status.success());
    assert!(String::from_utf8_lossy(&second.stderr).contains("corrupt alignment cache"));
    let read = |id: &str| std::fs::read(tmp.path().join("out").join(id).join("head/past.ranking.tsv")).unwrap();
    assert_eq!(read("h1"), read("h2"));
    for p in &entries {
        assert!(!std::fs::read_to_string(p).unwrap().contains("garbage"));
    }
}
