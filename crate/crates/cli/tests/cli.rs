//! End-to-end CLI behavior: subcommands, exit codes and file outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opinion-audit"))
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

/// A small valid dataset: two samples, three annotators, one dissent.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data.jsonl");
    let manifest = dir.join("manifest.json");
    write(
        &data,
        concat!(
            r#"{"sample_id":"s1","text":"alpha beta","annotator_id":"a1","label":"T","demographics":{"gender":"f"}}"#,
            "\n",
            r#"{"sample_id":"s1","text":"alpha beta","annotator_id":"a2","label":"NT","demographics":{"gender":"m"}}"#,
            "\n",
            r#"{"sample_id":"s1","text":"alpha beta","annotator_id":"a3","label":"T"}"#,
            "\n",
            r#"{"sample_id":"s2","text":"gamma delta","annotator_id":"a1","label":"NT"}"#,
            "\n",
            r#"{"sample_id":"s2","text":"gamma delta","annotator_id":"a2","label":"NT"}"#,
            "\n",
        ),
    );
    write(
        &manifest,
        r#"{"labels": ["T", "NT"], "demographics": {"gender": ["f", "m"]}}"#,
    );
    (data, manifest)
}

fn synth_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let out = dir.join("synth");
    let config = dir.join("synth-config.json");
    write(
        &config,
        r#"{
            "n_samples": 250,
            "n_annotators": 40,
            "annotators_per_sample": 10,
            "labels": ["T", "NT"],
            "demographic_vocab": {"gender": ["f", "m"]},
            "clusters": [
                {"weight": 0.8, "stance": "T", "noise_rate": 0.02,
                 "demographics": {"gender": "m"}},
                {"weight": 0.2, "stance": "NT", "noise_rate": 0.02,
                 "demographics": {"gender": "f"}}
            ],
            "fraction_ambiguous": 0.5,
            "seed": 31
        }"#,
    );
    let output = bin()
        .args(["synth", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    (out.join("data.jsonl"), out.join("manifest.json"))
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn validate_accepts_a_clean_file() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = fixture(dir.path());
    let output = bin()
        .args(["validate", "--data"])
        .arg(&data)
        .arg("--manifest")
        .arg(&manifest)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    assert!(text.contains("2 samples"));
    assert!(text.contains("fingerprint: sha256:"));
}

#[test]
fn validate_rejects_duplicate_pairs_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = fixture(dir.path());
    let mut content = fs::read_to_string(&data).unwrap();
    content.push_str(
        r#"{"sample_id":"s1","text":"alpha beta","annotator_id":"a1","label":"NT"}"#,
    );
    content.push('\n');
    write(&data, &content);
    let output = bin()
        .args(["validate", "--data"])
        .arg(&data)
        .arg("--manifest")
        .arg(&manifest)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("s1") && err.contains("a1"), "{err}");
}

#[test]
fn usage_errors_exit_1() {
    let output = bin().arg("no-such-subcommand").output().unwrap();
    assert_eq!(output.status.code(), Some(1));

    // Bad flag value on a real subcommand.
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = fixture(dir.path());
    let output = bin()
        .args(["audit", "--data"])
        .arg(&data)
        .arg("--manifest")
        .arg(&manifest)
        .args(["--model", "mv", "--group", "nonsense", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown grouping"));
}

#[test]
fn stats_prints_disagreement_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = fixture(dir.path());
    let output = bin()
        .args(["stats", "--data"])
        .arg(&data)
        .arg("--manifest")
        .arg(&manifest)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    assert!(text.contains("sample stats"));
    assert!(text.contains("annotator stats"));
    assert!(text.contains("s1"));
    assert!(text.contains("a2"));
}

#[test]
fn oracle_audit_reports_perfect_fairness() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = synth_dataset(dir.path());
    let out = dir.path().join("audit");
    let output = bin()
        .args(["audit", "--data"])
        .arg(&data)
        .arg("--manifest")
        .arg(&manifest)
        .args(["--model", "oracle", "--group", "adr", "--buckets", "4096", "--no-tune", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let score = &report["models"][0]["score"];
    assert_eq!(score["unfairness"], 0.0);
    assert_eq!(score["general_performance"], 1.0);
    assert!(out.join("heatmap.svg").exists());
}

#[test]
fn audit_supports_multiple_metrics_and_demographic_grouping() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = synth_dataset(dir.path());
    let out = dir.path().join("audit");
    let output = bin()
        .args(["audit", "--data"])
        .arg(&data)
        .arg("--manifest")
        .arg(&manifest)
        .args([
            "--model", "mv", "--model", "annotator",
            "--group", "demographic:gender",
            "--metric", "accuracy", "--metric", "f1",
            "--buckets", "4096", "--no-tune", "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["metrics"], serde_json::json!(["accuracy", "f1"]));
    assert_eq!(report["models"][0]["per_metric"].as_array().unwrap().len(), 2);
    let text = stdout(&output);
    assert!(text.contains("unfairness: mv:"));
}

#[test]
fn compare_renders_two_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = synth_dataset(dir.path());
    for (seed, name) in [("7", "a"), ("8", "b")] {
        let output = bin()
            .args(["audit", "--data"])
            .arg(&data)
            .arg("--manifest")
            .arg(&manifest)
            .args(["--model", "mv", "--seed", seed, "--buckets", "4096", "--no-tune", "--out"])
            .arg(dir.path().join(name))
            .output()
            .unwrap();
        assert!(output.status.success());
    }
    let output = bin()
        .arg("compare")
        .arg(dir.path().join("a/report.json"))
        .arg(dir.path().join("b/report.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    assert!(text.contains("report A"));
    assert!(text.contains("mv"));
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = synth_dataset(dir.path());
    let run = |threads: Option<&str>, out: &Path| {
        let mut cmd = bin();
        cmd.args(["audit", "--data"])
            .arg(&data)
            .arg("--manifest")
            .arg(&manifest)
            .args(["--model", "mv", "--model", "oracle", "--buckets", "4096", "--no-tune", "--out"])
            .arg(out);
        if let Some(t) = threads {
            cmd.env("OPINION_AUDIT_THREADS", t);
        }
        let output = cmd.output().unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    };
    let capped = dir.path().join("capped");
    let free = dir.path().join("free");
    run(Some("1"), &capped);
    run(None, &free);
    assert_eq!(
        fs::read(capped.join("report.json")).unwrap(),
        fs::read(free.join("report.json")).unwrap()
    );
    assert_eq!(
        fs::read(capped.join("heatmap.svg")).unwrap(),
        fs::read(free.join("heatmap.svg")).unwrap()
    );
}

#[test]
fn quality_threshold_flag_reaches_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = synth_dataset(dir.path());
    let out = dir.path().join("audit");
    let output = bin()
        .args(["audit", "--data"])
        .arg(&data)
        .arg("--manifest")
        .arg(&manifest)
        .args([
            "--model", "oracle", "--quality-threshold", "0.1",
            "--buckets", "4096", "--no-tune", "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["quality_filter"]["threshold"], 0.1);
}
