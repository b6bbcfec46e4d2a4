//! End-to-end tests against the compiled `fedrec` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fedrec() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedrec"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A config small enough that a full train run takes well under a second.
fn tiny_config(dir: &Path, rounds: usize, eval_every: usize) -> PathBuf {
    let path = dir.join("config.json");
    let json = format!(
        r#"{{
  "dataset": {{"source": "synthetic",
               "spec": {{"users": 12, "items": 12, "blocks": 2, "events_per_user": 6, "time_span": 1000}}}},
  "experiment": {{
    "n_clients": 2,
    "k": 5,
    "graph": {{"n_slices": 2, "depth": 1, "fanout": 3, "seq_len": 4, "drop_node_rate": 0.0}},
    "model": {{"dim": 2, "heads": 1, "layers": 1}},
    "train": {{"learning_rate": 0.05, "batch_size": 16, "negatives_per_positive": 1}},
    "fed": {{"rounds": {rounds}, "clients_per_round": 2, "masking": true, "eval_every": {eval_every}}},
    "seed": 11
  }},
  "ratios": [0.5, 1.0],
  "ablations": [{{}}, {{"attention": false}}]
}}"#
    );
    fs::write(&path, json).unwrap();
    path
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// history.csv minus its wall-clock column.
fn history_without_seconds(path: &Path) -> String {
    read(path)
        .lines()
        .map(|l| l.rsplit_once(',').expect("has columns").0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn ingest_writes_consistent_artifacts() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw.tsv");
    // "dave" and "book4" interact only once each and fall to the threshold.
    fs::write(
        &raw,
        "alice\tbook1\t5\t100\nalice\tbook2\t4\t200\nalice\tbook3\t3\t250\n\
         bob\tbook1\t3\t150\nbob\tbook3\t2\t300\n\
         carol\tbook2\t5\t250\ncarol\tbook3\t4\t350\ncarol\tbook1\t1\t50\n\
         dave\tbook4\t2\t400\n",
    )
    .unwrap();
    let out = tmp.path().join("ingested");
    run_ok(fedrec()
        .arg("ingest")
        .arg("--input")
        .arg(&raw)
        .arg("--out")
        .arg(&out)
        .args(["--min-interactions", "2", "--seed", "3"]));

    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["n_users"], 3);
    assert_eq!(manifest["n_items"], 3);
    assert_eq!(manifest["n_interactions"], 8);

    let users = read(&out.join("user_ids.tsv"));
    assert_eq!(users, "alice\t0\nbob\t1\ncarol\t2\n");
    assert!(!read(&out.join("item_ids.tsv")).contains("book4"));

    let rows = |name: &str| read(&out.join(name)).lines().count();
    assert_eq!(rows("interactions.tsv"), 8);
    assert_eq!(
        rows("split_train.tsv") + rows("split_val.tsv") + rows("split_test.tsv"),
        8,
        "every interaction lands in exactly one split"
    );
    assert_eq!(manifest["n_train"].as_u64().unwrap() as usize, rows("split_train.tsv"));
}

#[test]
fn malformed_input_is_rejected_with_the_line_number() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw.tsv");
    fs::write(&raw, "alice\tbook1\t5\t100\nbob\tbook2\tnot-a-rating\t60\n").unwrap();
    let out = fedrec()
        .arg("ingest")
        .arg("--input")
        .arg(&raw)
        .arg("--out")
        .arg(tmp.path().join("ingested"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr was: {stderr}");
}

#[test]
fn train_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), 2, 1);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(fedrec().arg("train").arg("--config").arg(&cfg).arg("--out").arg(dir));
    }

    for file in ["metrics.json", "metrics.csv", "run_summary.json", "resolved_config.json"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file} differs between reruns");
    }
    assert_eq!(
        history_without_seconds(&a.join("history.csv")),
        history_without_seconds(&b.join("history.csv"))
    );
    let mut names: Vec<String> = fs::read_dir(a.join("checkpoint"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.len() > 5);
    for name in names {
        assert_eq!(
            fs::read(a.join("checkpoint").join(&name)).unwrap(),
            fs::read(b.join("checkpoint").join(&name)).unwrap(),
            "checkpoint file {name} differs between reruns"
        );
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), 2, 1);
    let (seq, par) = (tmp.path().join("seq"), tmp.path().join("par"));
    run_ok(fedrec().args(["--threads", "1"]).arg("train").arg("--config").arg(&cfg).arg("--out").arg(&seq));
    run_ok(fedrec().args(["--threads", "3"]).arg("train").arg("--config").arg(&cfg).arg("--out").arg(&par));
    assert_eq!(read(&seq.join("metrics.json")), read(&par.join("metrics.json")));
    assert_eq!(
        history_without_seconds(&seq.join("history.csv")),
        history_without_seconds(&par.join("history.csv"))
    );
    assert_eq!(
        fs::read(seq.join("checkpoint/user_table.bin")).unwrap(),
        fs::read(par.join("checkpoint/user_table.bin")).unwrap()
    );
}

#[test]
fn zero_rounds_still_writes_an_evaluated_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), 0, 0);
    let out = tmp.path().join("run");
    run_ok(fedrec().arg("train").arg("--config").arg(&cfg).arg("--out").arg(&out));
    assert_eq!(read(&out.join("history.csv")).lines().count(), 1, "header only");
    let metrics: serde_json::Value = serde_json::from_str(&read(&out.join("metrics.json"))).unwrap();
    assert!(metrics["recall_at_k"].is_number());
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("run_summary.json"))).unwrap();
    assert_eq!(summary["rounds_completed"], 0);
    assert_eq!(summary["final_train_loss"], serde_json::Value::Null);
}

#[test]
fn evaluate_reproduces_the_training_metrics() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), 1, 0);
    let run = tmp.path().join("run");
    run_ok(fedrec().arg("train").arg("--config").arg(&cfg).arg("--out").arg(&run));
    let out = run_ok(fedrec().arg("evaluate").arg("--run-dir").arg(&run));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout, read(&run.join("metrics.json")));
}

#[test]
fn sweep_and_ablate_tables_have_the_expected_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), 1, 0);

    let sweep_dir = tmp.path().join("sweep");
    run_ok(fedrec().arg("sweep-privacy").arg("--config").arg(&cfg).arg("--out").arg(&sweep_dir));
    let sweep = read(&sweep_dir.join("sweep.csv"));
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2, "two ratios × two modes plus a header");
    assert_eq!(lines[0], "public_ratio,mode,recall@5,ndcg@5,rmse,mae");
    assert!(lines[1].starts_with("0.5,federated,"));
    assert!(lines[2].starts_with("0.5,centralized,"));
    assert!(lines[4].starts_with("1,centralized,"));

    let ablate_dir = tmp.path().join("ablate");
    run_ok(fedrec().arg("ablate").arg("--config").arg(&cfg).arg("--out").arg(&ablate_dir));
    let ablation = read(&ablate_dir.join("ablation.csv"));
    let lines: Vec<&str> = ablation.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("full,"));
    assert!(lines[2].starts_with("no-attention,"));
}
