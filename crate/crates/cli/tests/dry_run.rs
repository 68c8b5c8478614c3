use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn dsmcts(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_dsmcts")).current_dir(dir).args(["--seed", "11"]).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path, output: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{output}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn digest(m: &Value, kind: &str, path: &str) -> String {
    m[kind]
        .as_array()
        .unwrap()
        .iter()
        .find(|d| d["path"] == path)
        .unwrap_or_else(|| panic!("{path} missing from {kind} of {}", m["command"]))["sha256"]
        .as_str()
        .unwrap()
        .to_string()
}

/// `consumer` lists `file` as an input with the digest `producer` recorded for it.
fn chained(dir: &Path, producer: &str, consumer: &str, file: &str) {
    let p = manifest(dir, producer);
    let c = manifest(dir, consumer);
    assert_eq!(digest(&p, "outputs", file), digest(&c, "inputs", file), "{producer} -> {consumer}");
}

#[test]
fn twenty_game_pipeline_chains_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let small = ["--filters", "4", "--blocks", "1", "--steps", "40", "--batch-size", "8"];
    dsmcts(d, &["selfplay", "--games", "20", "--sims", "16", "--out", "boot.rec"]);
    dsmcts(d, &[&["train-pv", "--games", "boot.rec", "--out", "pv.net"][..], &small].concat());
    dsmcts(d, &["selfplay", "--net", "pv.net", "--games", "20", "--sims", "16", "--out", "games.rec"]);
    dsmcts(d, &["relabel", "--net", "pv.net", "--games", "games.rec", "--n-max", "64", "--out", "data.ds"]);
    dsmcts(d, &[&["train-state-un", "--data", "data.ds", "--holdout-every", "4", "--out", "su.net"][..], &small].concat());
    let out = dsmcts(
        d,
        &["choose-checkpoint", "--data", "data.ds", "--state-un", "su.net", "--holdout-every", "4", "--out", "f.csv"],
    );
    let n_star: usize = out.lines().next().unwrap().strip_prefix("n_star=").unwrap().parse().unwrap();
    assert_eq!(out.lines().count(), 2 + 64);
    let n = n_star.to_string();
    dsmcts(
        d,
        &[
            &["train-mcts-un", "--data", "data.ds", "--state-un", "su.net", "--n-star", &n, "--holdout-every", "4", "--out", "mu.net"][..],
            &small,
        ]
        .concat(),
    );
    dsmcts(
        d,
        &[
            "validate-thresholds", "--data", "data.ds", "--state-un", "su.net", "--mcts-un", "mu.net", "--n-star", &n,
            "--holdout-every", "4", "--out", "ds.cfg",
        ],
    );
    let summary = dsmcts(
        d,
        &[
            "match", "--net", "pv.net", "--ds-config", "ds.cfg", "--state-un", "su.net", "--mcts-un", "mu.net",
            "--games", "4", "--out-dir", "match",
        ],
    );
    assert!(summary.contains("avg_sim_ratio="));
    dsmcts(d, &["msc-report", "--data", "data.ds", "--out", "msc.csv"]);

    chained(d, "boot.rec", "pv.net", "boot.rec");
    chained(d, "pv.net", "games.rec", "pv.net");
    chained(d, "games.rec", "data.ds", "games.rec");
    chained(d, "data.ds", "su.net", "data.ds");
    chained(d, "data.ds", "f.csv", "data.ds");
    chained(d, "su.net", "mu.net", "su.net");
    chained(d, "mu.net", "ds.cfg", "mu.net");
    chained(d, "ds.cfg", "match/games.csv", "ds.cfg");
    chained(d, "data.ds", "msc.csv", "data.ds");

    let csv = std::fs::read_to_string(d.join("msc.csv")).unwrap();
    assert!(csv.starts_with("norm_idx,msc\n"));

    // Same inputs, same seed: identical bytes.
    dsmcts(d, &["relabel", "--net", "pv.net", "--games", "games.rec", "--n-max", "64", "--out", "again.ds"]);
    assert_eq!(digest(&manifest(d, "data.ds"), "outputs", "data.ds"), digest(&manifest(d, "again.ds"), "outputs", "again.ds"));
}

#[test]
fn exit_codes_separate_config_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let run = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_dsmcts")).current_dir(d).args(args).output().unwrap();

    let missing = run(&["msc-report", "--data", "nope.ds", "--out", "m.csv"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("dsmcts msc-report:"));

    assert_eq!(run(&["match", "--bogus"]).status.code(), Some(2));

    std::fs::write(d.join("bad.cfg"), "n_max=10\ncheckpoints=0,20\nthresholds=0,0\n").unwrap();
    assert_eq!(run(&["gtp", "--ds-config", "bad.cfg"]).status.code(), Some(2));
}
