use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn weaver(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weaver"))
        .args(args)
        .env_remove("WEAVER_DATA_DIR")
        .env_remove("WEAVER_BASE_URL")
        .output()
        .expect("weaver runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden_kb() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/online_toxicity_kb.json")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn mock_generate_reproduces_golden_kb() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("kb.json");
    let out = weaver(&["generate", "--seed", "online toxicity", "--mock", "--output", p(&out_path), "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&out_path).unwrap(), std::fs::read_to_string(golden_kb()).unwrap());
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["nodes"], 586);
    assert_eq!(summary["by_depth"], serde_json::json!([1, 236, 349]));
}

#[test]
fn generate_to_stdout_is_the_kb_document() {
    let out = weaver(&["generate", "--seed", "phishing", "--mock", "--layers", "1", "--n", "3"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["seed"], "phishing");
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 1 + 26 * 3);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(weaver(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(weaver(&["generate"]).status.code(), Some(2));
    assert_eq!(weaver(&["eval-recall", "--kb", "x", "--truth", "y", "--sim-threshold", "1.5"]).status.code(), Some(2));
    assert_eq!(weaver(&["--config", "/nonexistent/weaver.conf", "generate"]).status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = weaver(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("eval-recall"));
}

#[test]
fn runtime_failures_exit_one() {
    let out = weaver(&["recommend", "--kb", "/nonexistent/kb.json", "--mock"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/kb.json"));
}

#[test]
fn eval_recall_matches_pinned_report() {
    let out = weaver(&["eval-recall", "--mock", "--kb", p(&golden_kb()), "--truth", p(&fixture("toxicity_truth.txt"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), std::fs::read_to_string(fixture("toxicity_recall.txt")).unwrap());
}

#[test]
fn eval_recall_threshold_admits_near_match() {
    let truth = fixture("toxicity_truth.txt");
    let out = weaver(&["eval-recall", "--mock", "--kb", p(&golden_kb()), "--truth", p(&truth), "--sim-threshold", "0.7", "--json"]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["recall"], 0.5);
    let near = report["matched"].as_array().unwrap().iter().find(|m| m["truth"] == "aggressive behaviour").unwrap();
    assert_eq!(near["kb_concept"], "aggressive meme");
}

#[test]
fn manual_mode_exports_candidates() {
    let truth = fixture("toxicity_truth.txt");
    let out = weaver(&[
        "eval-recall", "--mock", "--kb", p(&golden_kb()), "--truth", p(&truth), "--mode", "export-for-manual", "--top-n", "3",
    ]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let review = report["manual_review"].as_array().unwrap();
    assert_eq!(review.len(), 4);
    assert!(review.iter().all(|r| r["candidates"].as_array().unwrap().len() == 3));
}

#[test]
fn precision_sheet_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sheet = dir.path().join("sheet.csv");
    let out = weaver(&["sample-precision", "--kb", p(&golden_kb()), "--size", "20", "--rng-seed", "3", "-o", p(&sheet)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&sheet).unwrap();
    assert_eq!(text.lines().count(), 21);

    let out = weaver(&["sample-precision", "--labeled", p(&sheet)]);
    assert_eq!(out.status.code(), Some(1), "unlabelled sheet must be rejected");

    let mut labeled = String::new();
    for (i, line) in text.lines().enumerate() {
        labeled.push_str(line);
        if i > 0 {
            labeled.push_str(if i <= 15 { "yes" } else { "no" });
        }
        labeled.push('\n');
    }
    std::fs::write(&sheet, labeled).unwrap();
    let out = weaver(&["sample-precision", "--labeled", p(&sheet), "--json"]);
    let result: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(result["precision"], 0.75);
}

#[test]
fn cluster_reports_hits() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.txt");
    let explored = dir.path().join("explored.txt");
    std::fs::write(&labels, "ironic slang\nironic slangs\nirony slang\ntax law\ntax laws\n").unwrap();
    std::fs::write(&explored, "ironic slang\ntax law\ntax laws\n").unwrap();
    let out = weaver(&["cluster", "--mock", "--labels", p(&labels), "--explored", p(&explored), "--threshold", "1.0", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let n = r["n_clusters"].as_u64().unwrap();
    let hits = r["hits"].as_u64().unwrap();
    assert!((1..=5).contains(&n));
    assert!(hits >= 1 && hits <= n.min(3));
    assert_eq!(r["assignment"].as_array().unwrap().len(), 5);
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("weaver.conf");
    std::fs::write(&conf, "# recommendation defaults\nmock = true\nk = 2\njson = true\n").unwrap();
    let out = weaver(&["recommend", "--config", p(&conf), "--kb", p(&golden_kb())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(r["chosen"].as_array().unwrap().len(), 2);

    let out = weaver(&["recommend", "--config", p(&conf), "--kb", p(&golden_kb()), "--k", "4"]);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(r["chosen"].as_array().unwrap().len(), 4);
}

#[test]
fn export_unknown_session_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = weaver(&["export", "--data-dir", p(dir.path()), "--session", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}
