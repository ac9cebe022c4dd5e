mod common;

use comvint::llm::MockScript;
use comvint::pipeline::{run, RunOptions};

use common::{golden_config, golden_dataset, golden_dir, golden_provider, RecordingAuthor};

/// Rebuilds `mock_script.json` and `golden_dataset.jsonl`. Run explicitly with
/// `cargo test --test golden -- --ignored` after changing prompts or fixtures.
#[test]
#[ignore]
fn regenerate_golden_fixture() {
    let config = golden_config();
    let author = RecordingAuthor::default();
    let out = tempfile::tempdir().unwrap();
    let authored = run(&config, &author, &RunOptions { out_dir: out.path().into(), halt_after: None }).unwrap();
    let script = MockScript::Fingerprint(author.seen.into_inner().unwrap());
    script.save(&golden_dir().join("mock_script.json")).unwrap();

    let replay_dir = tempfile::tempdir().unwrap();
    let replay = run(&config, &golden_provider(), &RunOptions { out_dir: replay_dir.path().into(), halt_after: None }).unwrap();
    let a = std::fs::read(&authored.dataset_path).unwrap();
    let b = std::fs::read(&replay.dataset_path).unwrap();
    assert_eq!(a, b);
    std::fs::write(golden_dir().join("golden_dataset.jsonl"), b).unwrap();
}

#[test]
fn replay_matches_golden_file() {
    let out = tempfile::tempdir().unwrap();
    let outcome = run(&golden_config(), &golden_provider(), &RunOptions { out_dir: out.path().into(), halt_after: None }).unwrap();
    let produced = std::fs::read_to_string(&outcome.dataset_path).unwrap();
    assert_eq!(produced, golden_dataset());
}
