mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{golden_dataset, golden_dir};

fn comvint(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comvint"))
        .args(args)
        .current_dir(cwd)
        .env_remove("COMVINT_API_KEY")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn golden_args<'a>(cfg: &'a str, script: &'a str, out: &'a str) -> Vec<&'a str> {
    vec!["run", "--config", cfg, "--mock-script", script, "--out", out]
}

#[test]
fn run_with_mock_script_writes_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = golden_dir().join("config.toml");
    let script = golden_dir().join("mock_script.json");
    let out = tmp.path().join("runs");
    let o = comvint(
        &golden_args(cfg.to_str().unwrap(), script.to_str().unwrap(), out.to_str().unwrap()),
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let produced = std::fs::read_to_string(out.join("golden-10/dataset.jsonl")).unwrap();
    assert_eq!(produced, golden_dataset());
    assert!(out.join("golden-10/manifest.json").exists());
}

#[test]
fn halted_run_resumes_from_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = golden_dir().join("config.toml");
    let script = golden_dir().join("mock_script.json");
    let out = tmp.path().join("runs");
    let mut args = golden_args(cfg.to_str().unwrap(), script.to_str().unwrap(), out.to_str().unwrap());
    args.extend(["--halt-after", "40"]);
    let o = comvint(&args, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = comvint(
        &["run", "--resume", "golden-10", "--mock-script", script.to_str().unwrap(), "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let produced = std::fs::read_to_string(out.join("golden-10/dataset.jsonl")).unwrap();
    assert_eq!(produced, golden_dataset());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = comvint(&["run", "--bogus"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    let o = comvint(&["--help"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn unreadable_corpus_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("cfg.toml"),
        "[corpus.cross_modal]\npath = \"missing-dir\"\nformat = \"flickr30k_entities\"\n",
    )
    .unwrap();
    let o = comvint(&["run", "--config", "cfg.toml", "--mock-script", "unused.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "missing mock script is a user error: {}", stderr(&o));
    std::fs::write(tmp.path().join("script.json"), r#"{"mode":"sequence","responses":[]}"#).unwrap();
    let o = comvint(&["run", "--config", "cfg.toml", "--mock-script", "script.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn invalid_config_is_a_user_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("cfg.toml"), "complication_rounds = -1\n").unwrap();
    let o = comvint(&["run", "--config", "cfg.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("complication_rounds"));
}

#[test]
fn dry_run_plans_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = golden_dir().join("config.toml");
    let o = comvint(&["run", "--config", cfg.to_str().unwrap(), "--dry-run", "--out", "runs"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("cross-modal images: 6"), "{err}");
    assert!(err.contains("outside-knowledge images: 5"), "{err}");
    assert!(err.contains("round-0 records (max): 23"), "{err}");
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn stepwise_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let flickr = golden_dir().join("flickr");
    let o = comvint(&["ingest", "--format", "flickr30k-entities", "--input", flickr.to_str().unwrap()], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.join("corpus.jsonl")).unwrap().lines().count(), 10);

    let o = comvint(&["select", "--input", "corpus.jsonl", "--rule", "caption-richness"], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.join("selected.jsonl")).unwrap().lines().count(), 6);

    let golden = golden_dir().join("golden_dataset.jsonl");
    let g = golden.to_str().unwrap();
    for args in [
        vec!["stats", "--input", g],
        vec!["export", "--input", g, "--style", "paren"],
        vec!["mix", "--input", g, "--total", "16"],
    ] {
        let o = comvint(&args, dir);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    }
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["total_records"], 64);
    let convs: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("conversations.json")).unwrap()).unwrap();
    assert_eq!(convs.as_array().unwrap().len(), 64);
    let mixed = std::fs::read_to_string(dir.join("mixed.jsonl")).unwrap();
    assert_eq!(mixed.matches("\"task_type\":\"cross_modal\"").count(), 6);
    assert_eq!(mixed.matches("\"task_type\":\"outside_knowledge\"").count(), 10);
}

#[test]
fn eval_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = [
        r#"{"image_id":"a","subtask":"commonsense","question_index":1,"gold":"yes","prediction":"Yes"}"#,
        r#"{"image_id":"a","subtask":"commonsense","question_index":2,"gold":"no","prediction":"no."}"#,
        r#"{"image_id":"b","subtask":"commonsense","question_index":1,"gold":"yes","prediction":"yes"}"#,
        r#"{"image_id":"b","subtask":"commonsense","question_index":2,"gold":"no","prediction":"yes"}"#,
    ];
    std::fs::write(tmp.path().join("preds.jsonl"), rows.join("\n")).unwrap();
    let o = comvint(&["eval", "--kind", "yes-no", "--input", "preds.jsonl"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["overall_accuracy"], 0.75);
    assert_eq!(report["overall_acc_plus"], 0.5);
}

#[test]
fn stage_commands_with_mock_provider() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let flickr = golden_dir().join("flickr");
    comvint(&["ingest", "--format", "flickr30k-entities", "--input", flickr.to_str().unwrap()], dir);
    comvint(&["select", "--input", "corpus.jsonl", "--rule", "caption-richness"], dir);
    let script = golden_dir().join("mock_script.json");
    let cfg = golden_dir().join("config.toml");
    let s = script.to_str().unwrap();
    let c = cfg.to_str().unwrap();
    let o = comvint(&["synthesize", "--input", "selected.jsonl", "--task", "cross-modal", "--mock-script", s], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let synthesized = std::fs::read_to_string(dir.join("synthesized.jsonl")).unwrap();
    assert_eq!(synthesized.lines().count(), 18);
    let o = comvint(&["complicate-verify", "--input", "synthesized.jsonl", "--config", c, "--mock-script", s], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let verified = std::fs::read_to_string(dir.join("verified.jsonl")).unwrap();
    assert_eq!(verified.lines().count(), 18 + 17 + 17);
}
