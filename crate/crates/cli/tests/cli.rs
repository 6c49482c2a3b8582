//! Exit-code and behavior tests against the actual binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn assertctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_assertctl"))
        .args(args)
        .env_remove("ASSERTCTL_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn stats_prints_distribution() {
    let output = assertctl(&["stats", "--corpus", fixture("mini_corpus.jsonl").to_str().unwrap()]);
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("total"));
    assert!(text.contains("60"));
    assert!(text.contains("16.67"));
}

#[test]
fn stats_on_missing_file_exits_2() {
    let output = assertctl(&["stats", "--corpus", "/nonexistent/corpus.jsonl"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn stats_on_empty_corpus_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let output = assertctl(&["stats", "--corpus", path.to_str().unwrap()]);
    assert!(output.status.success());
    assert!(stdout(&output).contains("total"));
}

#[test]
fn predict_rejects_unknown_engine() {
    let output = assertctl(&[
        "predict",
        "--engine",
        "bert",
        "--corpus",
        fixture("mini_corpus.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn llm_engines_need_exactly_one_backend_source() {
    let corpus = fixture("sc_corpus.jsonl");
    let output = assertctl(&["predict", "--engine", "sc", "--corpus", corpus.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));

    let output = assertctl(&[
        "predict",
        "--engine",
        "sc",
        "--corpus",
        corpus.to_str().unwrap(),
        "--backend-url",
        "http://127.0.0.1:1",
        "--mock-script",
        fixture("sc_script.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_credential_against_live_endpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let output = assertctl(&[
        "predict",
        "--engine",
        "simple",
        "--corpus",
        fixture("sc_corpus.jsonl").to_str().unwrap(),
        "--backend-url",
        "http://127.0.0.1:1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn partially_exhausted_script_still_exits_0() {
    // Script covers only m01; the other instances land in error slots.
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("partial.jsonl");
    std::fs::write(
        &script,
        "{\"instance_id\":\"m01\",\"call_index\":0,\"text\":\"ANSWER: positive\"}\n",
    )
    .unwrap();
    let output = assertctl(&[
        "predict",
        "--engine",
        "simple",
        "--corpus",
        fixture("sc_corpus.jsonl").to_str().unwrap(),
        "--mock-script",
        script.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let predictions = std::fs::read_to_string(dir.path().join("predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().filter(|l| l.contains("\"error\"")).count(), 11);
    assert_eq!(predictions.lines().filter(|l| l.contains("\"label\"")).count(), 1);
}

#[test]
fn evaluate_rejects_unknown_prediction_ids() {
    let dir = tempfile::tempdir().unwrap();
    let predictions = dir.path().join("predictions.jsonl");
    std::fs::write(
        &predictions,
        "{\"instance_id\":\"ghost\",\"label\":\"positive\",\"engine\":\"rule\"}\n",
    )
    .unwrap();
    let output = assertctl(&[
        "evaluate",
        "--predictions",
        predictions.to_str().unwrap(),
        "--corpus",
        fixture("sc_corpus.jsonl").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn evaluate_is_order_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let base = assertctl(&[
        "predict",
        "--engine",
        "rule",
        "--corpus",
        fixture("mini_corpus.jsonl").to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert!(base.status.success());

    // Shuffle the prediction lines (keep the header first).
    let content = std::fs::read_to_string(out_a.join("predictions.jsonl")).unwrap();
    let mut lines: Vec<&str> = content.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    lines.rotate_left(7);
    let shuffled_path = dir.path().join("shuffled.jsonl");
    std::fs::write(&shuffled_path, format!("{header}\n{}\n", lines.join("\n"))).unwrap();

    for (predictions, out) in
        [(out_a.join("predictions.jsonl"), &out_a), (shuffled_path.clone(), &out_b)]
    {
        let output = assertctl(&[
            "evaluate",
            "--predictions",
            predictions.to_str().unwrap(),
            "--corpus",
            fixture("mini_corpus.jsonl").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success());
    }
    let report_a = std::fs::read(out_a.join("report.json")).unwrap();
    let report_b = std::fs::read(out_b.join("report.json")).unwrap();
    assert_eq!(report_a, report_b);
}

#[test]
fn compare_known_and_unknown_slices() {
    // Build a report first.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap().to_string();
    assert!(assertctl(&[
        "predict",
        "--engine",
        "rule",
        "--corpus",
        fixture("mini_corpus.jsonl").to_str().unwrap(),
        "--out",
        &out,
    ])
    .status
    .success());
    assert!(assertctl(&[
        "evaluate",
        "--predictions",
        &format!("{out}/predictions.jsonl"),
        "--corpus",
        fixture("mini_corpus.jsonl").to_str().unwrap(),
        "--out",
        &out,
    ])
    .status
    .success());

    let report = format!("{out}/report.json");
    let output = assertctl(&[
        "compare", "--report", &report, "--dataset", "i2b2", "--model", "llama2-7b", "--method",
        "lora",
    ]);
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("0.99"), "missing published positive value:\n{text}");
    assert!(text.contains("0.98"), "missing published negated value:\n{text}");

    let output = assertctl(&[
        "compare", "--report", &report, "--dataset", "i2b2", "--model", "gpt4", "--method", "tot",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn lexicon_check_reports_coverage() {
    let output = assertctl(&["lexicon-check"]);
    assert!(output.status.success());
    let text = stdout(&output);
    for dimension in ["negation", "uncertainty", "hypothetical", "historical", "experiencer"] {
        assert!(text.contains(dimension));
    }

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "only\ttwo\n").unwrap();
    let output = assertctl(&["lexicon-check", "--lexicon", bad.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}
