use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rws(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rws"))
        .args(args)
        .current_dir(dir)
        .env("RWS_LOG", "warn")
        .output()
        .expect("rws runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rws(dir, args);
    assert!(
        out.status.success(),
        "rws {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn wikiqa_sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/wikiqa_sample.tsv")
}

/// Fixture, store and index in `dir`, plus a config file for a small run.
fn prepare(dir: &Path) {
    ok(
        dir,
        &["fixture", "planted", "--out-dir", "fx", "--questions", "8", "--documents", "120", "--distractors", "4"],
    );
    ok(dir, &["corpus", "ingest", "--input", "fx/corpus.jsonl", "--store", "store"]);
    ok(dir, &["index", "build", "--store", "store"]);
    std::fs::write(
        dir.join("rws.toml"),
        "k2 = 10\ncorpus_store = \"store\"\ninput_pairs = \"fx/pairs.tsv\"\noutput = \"rws.tsv\"\n",
    )
    .unwrap();
}

#[test]
fn end_to_end_run_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let summary = ok(dir, &["run", "--config", "rws.toml"]);
    assert!(summary.contains("8 questions: 80 labeled pairs (8 positive"), "{summary}");
    let first = std::fs::read(dir.join("rws.tsv")).unwrap();
    let manifest = std::fs::read(dir.join("rws.tsv.manifest.json")).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 80);

    ok(dir, &["run", "--config", "rws.toml", "--parallelism", "4"]);
    assert_eq!(std::fs::read(dir.join("rws.tsv")).unwrap(), first);
    assert_eq!(std::fs::read(dir.join("rws.tsv.manifest.json")).unwrap(), manifest);

    let m: serde_json::Value = serde_json::from_slice(&manifest).unwrap();
    assert_eq!(m["config"]["k2"], 10);
    assert_eq!(m["counts"]["labeled"], 80);
}

#[test]
fn stop_and_resume_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    ok(dir, &["run", "--config", "rws.toml", "--output", "full.tsv"]);
    let stopped = ok(
        dir,
        &["run", "--config", "rws.toml", "--output", "part.tsv", "--stop-after", "reranked"],
    );
    assert!(stopped.contains("stopped after reranked"), "{stopped}");
    assert!(!dir.join("part.tsv").exists());
    ok(dir, &["run", "--config", "rws.toml", "--output", "part.tsv", "--resume"]);
    assert_eq!(
        std::fs::read(dir.join("part.tsv")).unwrap(),
        std::fs::read(dir.join("full.tsv")).unwrap()
    );
}

#[test]
fn config_errors_are_reported_together() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rws(tmp.path(), &["run", "--k1", "25", "--k2", "50", "--threshold", "1.5"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("k2 exceeds k1"), "{err}");
    assert!(err.contains("threshold 1.5 is outside [0, 1]"), "{err}");

    let out = rws(tmp.path(), &["run", "--evaluator", "external"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("requires an endpoint"));
}

#[test]
fn missing_index_stops_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    std::fs::remove_file(dir.join("store/index.bin")).unwrap();
    let out = rws(dir, &["run", "--config", "rws.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rws index build"));
    assert!(!dir.join("rws.tsv").exists());
}

#[test]
fn unreachable_evaluator_exceeds_failure_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let out = rws(
        dir,
        &[
            "run", "--config", "rws.toml", "--evaluator", "external", "--endpoint",
            "http://127.0.0.1:9/score", "--parallelism", "8",
        ],
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("8 of 8 questions failed"), "{err}");
    // The run still leaves its audit trail behind.
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("rws.tsv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["counts"]["failed"], 8);
    assert_eq!(m["questions"][0]["status"], "failed");
}

#[test]
fn dataset_convert_filter_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let sample = wikiqa_sample();
    let sample = sample.to_str().unwrap();
    ok(dir, &["dataset", "convert", "--from", "wikiqa", "--input", sample, "--output", "wq.tsv"]);
    let stats = ok(dir, &["dataset", "stats", "wq.tsv"]);
    let row = |name: &str| -> Vec<usize> {
        let line = stats.lines().find(|l| l.starts_with(name)).unwrap();
        line[name.len()..]
            .split_whitespace()
            .map(|x| x.parse().unwrap())
            .collect()
    };
    assert_eq!(row("origin"), vec![10, 27, 9, 18]);
    assert_eq!(row("without all-"), vec![7, 19, 9, 10]);
    assert_eq!(row("clean"), vec![5, 16, 6, 10]);

    ok(dir, &["dataset", "filter", "--mode", "clean", "--input", "wq.tsv", "--output", "clean.tsv"]);
    let clean = std::fs::read_to_string(dir.join("clean.tsv")).unwrap();
    assert_eq!(clean.lines().count(), 16);

    ok(
        dir,
        &["dataset", "convert", "--from", "as2", "--to", "pairs", "--input", "wq.tsv", "--output", "pairs.tsv"],
    );
    let pairs = std::fs::read_to_string(dir.join("pairs.tsv")).unwrap();
    assert_eq!(pairs.lines().count(), 9);
}

#[test]
fn grade_prints_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("gold.tsv"), "q1\tQ\ta\t1\nq1\tQ\tb\t0\nq1\tQ\tc\t1\nq2\tR\td\t0\nq2\tR\te\t1\n")
        .unwrap();
    std::fs::write(dir.join("scores.tsv"), "q1\ta\t0.9\nq1\tb\t0.5\nq1\tc\t0.1\nq2\td\t0.8\nq2\te\t0.2\n")
        .unwrap();
    let out = ok(dir, &["metrics", "grade", "--gold", "gold.tsv", "--scores", "scores.tsv"]);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    // q1 ranks [1,0,1]: AP 5/6, RR 1. q2 ranks [0,1]: AP 1/2, RR 1/2.
    let close = |key: &str, want: f64| (report[key].as_f64().unwrap() - want).abs() < 1e-12;
    assert!(close("map", (5.0 / 6.0 + 0.5) / 2.0), "{report}");
    assert!(close("mrr", 0.75), "{report}");
    assert!(close("p_at_1", 0.5), "{report}");
    assert_eq!(report["num_questions_scored"], 2);

    std::fs::write(dir.join("short.tsv"), "q1\ta\t0.9\n").unwrap();
    let out = rws(dir, &["metrics", "grade", "--gold", "gold.tsv", "--scores", "short.tsv"]);
    assert!(!out.status.success());
}

#[test]
fn index_query_lists_hits() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let pairs = std::fs::read_to_string(dir.join("fx/pairs.tsv")).unwrap();
    let question = pairs.lines().next().unwrap().split('\t').nth(1).unwrap().to_string();
    let hits = ok(dir, &["index", "query", "--store", "store", "--k1", "3", "--question", &question]);
    let lines: Vec<&str> = hits.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.contains("fixture://")), "{hits}");
}
