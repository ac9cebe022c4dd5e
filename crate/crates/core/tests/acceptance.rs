//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use comvint::annotations::{AnnotatedImage, AnnotationSource, Corpus, ObjectAnnotation};
use comvint::dataset::{export_conversation_format, mix, read_records, subset_by_round, MixTarget, OptionStyle};
use comvint::eval::{acc, acc_plus, mme_subtask_score, question_acc, YesNo, YesNoPair, YesNoQuestion};
use comvint::llm::{with_retry, ChatProvider, ChatRequest, HttpProvider, ProviderError, RetryPolicy};
use comvint::pipeline::{resume, run, PipelineError, RunOptions};
use comvint::record::{InstructionFormat, InstructionRecord, TaskType, VerificationStatus};
use comvint::selection::{
    compute_corpus_stats, filter_by_caption_richness, filter_by_object_count, select_topic_entity,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{golden_config, golden_dataset, golden_provider, StubServer};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Nulls every `*_at` field so timestamps never affect a comparison.
fn mask_timestamps(text: &str) -> Vec<serde_json::Value> {
    fn mask(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, val) in map.iter_mut() {
                    if k.ends_with("_at") {
                        *val = serde_json::Value::Null;
                    } else {
                        mask(val);
                    }
                }
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(mask),
            _ => {}
        }
    }
    text.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).expect("dataset line is JSON");
            mask(&mut v);
            v
        })
        .collect()
}

fn options(dir: &std::path::Path, halt_after: Option<usize>) -> RunOptions {
    RunOptions {
        out_dir: dir.to_path_buf(),
        halt_after,
    }
}

fn golden_end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let outcome = run(&golden_config(), &golden_provider(), &options(dir.path(), None)).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let sel = &outcome.manifest.selection;
    ensure(
        sel[0].retained_count == 6 && sel[1].retained_count == 5,
        format!("filters kept {} / {}", sel[0].retained_count, sel[1].retained_count),
    )?;
    let produced = std::fs::read_to_string(&outcome.dataset_path).map_err(|e| e.to_string())?;
    ensure(
        mask_timestamps(&produced) == mask_timestamps(&golden_dataset()),
        "dataset differs from the golden file",
    )?;
    ensure(produced == golden_dataset(), "dataset bytes differ from the golden file")?;
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("{} records byte-identical, {:.2?}, mock provider only", outcome.records.len(), elapsed))
}

fn idf_oracle() -> Check {
    let vocab: Vec<String> = (0..10).map(|i| format!("object {i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    let mut checked = 0;
    for corpus_no in 0..100 {
        let n_images = rng.gen_range(1..=20);
        let images: Vec<AnnotatedImage> = (0..n_images)
            .map(|i| {
                let n_obj = rng.gen_range(0..=6);
                let objects = (0..n_obj)
                    .map(|_| ObjectAnnotation::from_raw(&vocab[rng.gen_range(0..vocab.len())]))
                    .collect();
                AnnotatedImage {
                    image_id: format!("img{i}"),
                    source: AnnotationSource::Custom,
                    captions: vec!["caption".into()],
                    objects,
                }
            })
            .collect();
        let corpus = Corpus::new(images, "random").map_err(|e| e.to_string())?;
        let stats = compute_corpus_stats(&corpus);
        for img in &corpus.images {
            let df = |name: &str| corpus.images.iter().filter(|i| i.objects.iter().any(|o| o.name == name)).count();
            let expected = img
                .objects
                .iter()
                .map(|o| (df(&o.name), o.name.clone()))
                .min()
                .map(|(_, n)| n);
            let got = select_topic_entity(img, &stats).ok().map(|o| o.name.clone());
            ensure(got == expected, format!("corpus {corpus_no} image {}: {got:?} vs {expected:?}", img.image_id))?;
            checked += 1;
        }
    }
    Ok(format!("100 corpora, {checked} images agree with brute-force df"))
}

fn image_with(id: &str, caption_chars: usize, objects: usize) -> AnnotatedImage {
    AnnotatedImage {
        image_id: id.into(),
        source: AnnotationSource::Custom,
        captions: vec!["x".repeat(caption_chars)],
        objects: (0..objects).map(|i| ObjectAnnotation::from_raw(&format!("o{i}"))).collect(),
    }
}

fn thresholds() -> Check {
    let rich = Corpus::new(
        vec![image_with("699", 699, 1), image_with("700", 700, 1), image_with("701", 701, 1)],
        "t",
    )
    .map_err(|e| e.to_string())?;
    let (kept, _) = filter_by_caption_richness(&rich, 700);
    let ids: Vec<&str> = kept.images.iter().map(|i| i.image_id.as_str()).collect();
    ensure(ids == ["700", "701"], format!("richness kept {ids:?}"))?;
    let objs = Corpus::new(vec![image_with("6", 1, 6), image_with("7", 1, 7), image_with("8", 1, 8)], "t")
        .map_err(|e| e.to_string())?;
    let (kept, _) = filter_by_object_count(&objs, 7);
    let ids: Vec<&str> = kept.images.iter().map(|i| i.image_id.as_str()).collect();
    ensure(ids == ["6", "7"], format!("object count kept {ids:?}"))?;
    Ok("699/700/701 → reject/keep/keep; 6/7/8 → keep/keep/reject".into())
}

fn question(gold: YesNo, prediction: &str) -> YesNoQuestion {
    YesNoQuestion {
        question: String::new(),
        gold,
        prediction: prediction.into(),
    }
}

fn pair(id: &str, first_ok: bool, second_ok: bool) -> YesNoPair {
    YesNoPair {
        image_id: id.into(),
        subtask: "s".into(),
        q1: question(YesNo::Yes, if first_ok { "yes" } else { "no" }),
        q2: question(YesNo::No, if second_ok { "no" } else { "yes" }),
    }
}

fn acc_plus_checks() -> Check {
    let mixed = vec![pair("a", true, true), pair("b", true, false), pair("c", true, true)];
    let qacc = question_acc(&mixed).map_err(|e| e.to_string())?.value();
    let plus = acc_plus(&mixed).map_err(|e| e.to_string())?.value();
    ensure((plus - 2.0 / 3.0).abs() < 1e-9, format!("acc+ = {plus}"))?;
    ensure((format!("{:.4}", plus)) == "0.6667", "acc+ does not print as 0.6667")?;
    ensure(plus <= qacc, "acc+ exceeds acc")?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let pairs: Vec<YesNoPair> = (0..rng.gen_range(1..12))
            .map(|i| pair(&i.to_string(), rng.gen_bool(0.6), rng.gen_bool(0.6)))
            .collect();
        let a = question_acc(&pairs).map_err(|e| e.to_string())?.value();
        let p = acc_plus(&pairs).map_err(|e| e.to_string())?.value();
        ensure(p <= a + 1e-12, "acc+ exceeds acc on a random set")?;
    }
    let perfect = vec![pair("a", true, true), pair("b", true, true)];
    let score = mme_subtask_score(&perfect).map_err(|e| e.to_string())?;
    ensure(score == 200.0, format!("perfect subtask score {score}"))?;
    let simple = acc(&[(1, 1), (2, 3)]).map_err(|e| e.to_string())?;
    ensure(simple.value() == 0.5, "acc")?;
    Ok(format!("(T,T),(T,F),(T,T) → {plus:.4}; perfect subtask → {score:.1}; acc+ ≤ acc on 200 random sets"))
}

fn pool_record(i: usize, task: TaskType) -> InstructionRecord {
    InstructionRecord {
        record_id: format!("{}-{i:03}", task.as_str()),
        image_id: format!("img{i}"),
        task_type: task,
        format: InstructionFormat::OpenEnded,
        instruction: format!("Question {i}?"),
        response: format!("Answer {i}."),
        options: None,
        correct_option: None,
        complication_round: 0,
        parent_id: None,
        verification_status: VerificationStatus::Passed,
        template_fingerprint: "0".into(),
        model: "mock".into(),
    }
}

fn mix_exactness() -> Check {
    let pool: Vec<InstructionRecord> = (0..40)
        .map(|i| pool_record(i, TaskType::CrossModal))
        .chain((0..40).map(|i| pool_record(i, TaskType::OutsideKnowledge)))
        .collect();
    let target = MixTarget::default();
    let a = mix(&pool, target, 32, 99).map_err(|e| e.to_string())?;
    let b = mix(&pool, target, 32, 99).map_err(|e| e.to_string())?;
    let cm = a.iter().filter(|r| r.task_type == TaskType::CrossModal).count();
    let ok = a.iter().filter(|r| r.task_type == TaskType::OutsideKnowledge).count();
    ensure((cm, ok) == (12, 20), format!("got {cm}:{ok}"))?;
    ensure(a == b, "two runs with the same seed differ")?;
    Ok("12 cross-modal + 20 outside-knowledge, identical across two seeded runs".into())
}

fn resume_equivalence() -> Check {
    let golden = golden_dataset();
    let halts = [1, 30, 76, 120, 151];
    for halt in halts {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        match run(&golden_config(), &golden_provider(), &options(dir.path(), Some(halt))) {
            Err(PipelineError::Halted { .. }) => {}
            other => return Err(format!("halt {halt}: expected a halt, got {:?}", other.map(|o| o.run_id))),
        }
        let outcome = resume("golden-10", &golden_provider(), &options(dir.path(), None)).map_err(|e| e.to_string())?;
        let produced = std::fs::read_to_string(&outcome.dataset_path).map_err(|e| e.to_string())?;
        ensure(produced == golden, format!("resume after checkpoint {halt} differs"))?;
    }
    Ok(format!("halted after checkpoints {halts:?}; every resume matched"))
}

fn verification_gating() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let outcome = run(&golden_config(), &golden_provider(), &options(dir.path(), None)).map_err(|e| e.to_string())?;
    ensure(
        outcome.records.iter().all(|r| r.verification_status == VerificationStatus::Passed),
        "failed record in dataset",
    )?;
    let export = dir.path().join("conversations.json");
    export_conversation_format(&outcome.records, &export, OptionStyle::Dot).map_err(|e| e.to_string())?;
    let exported: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&export).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(exported.as_array().map(Vec::len) == Some(outcome.records.len()), "export size")?;
    let exported_ids: BTreeSet<&str> = exported
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|c| c["id"].as_str())
        .collect();

    let stream = read_records(&outcome.run_dir.join("records")).map_err(|e| e.to_string())?;
    let mut latest: BTreeMap<String, InstructionRecord> = BTreeMap::new();
    for r in stream {
        latest.insert(r.record_id.clone(), r);
    }
    let failed: Vec<&InstructionRecord> = latest
        .values()
        .filter(|r| r.verification_status == VerificationStatus::Failed)
        .collect();
    ensure(failed.len() == 2, format!("{} planted failures observed", failed.len()))?;
    ensure(
        failed.iter().all(|f| !exported_ids.contains(f.record_id.as_str())),
        "failed record exported",
    )?;
    let round1 = failed
        .iter()
        .find(|f| f.complication_round == 1)
        .ok_or("no failed round-1 complication")?;
    let root = round1.parent_id.clone().ok_or("failed round-1 record has no parent")?;
    let children: HashMap<&str, Vec<&InstructionRecord>> =
        latest.values().fold(HashMap::new(), |mut m, r| {
            if let Some(p) = &r.parent_id {
                m.entry(p.as_str()).or_default().push(r);
            }
            m
        });
    let mut lineage = vec![root.as_str()];
    let mut i = 0;
    while i < lineage.len() {
        if let Some(kids) = children.get(lineage[i]) {
            lineage.extend(kids.iter().map(|k| k.record_id.as_str()));
        }
        i += 1;
    }
    let exported_lineage: Vec<&InstructionRecord> =
        outcome.records.iter().filter(|r| lineage.contains(&r.record_id.as_str())).collect();
    ensure(exported_lineage.len() == 1, format!("lineage exported {} records", exported_lineage.len()))?;
    ensure(exported_lineage[0].complication_round == 0, "lineage export is not round 0")?;
    Ok(format!(
        "0 failed records in dataset or export; failed round-1 lineage exports only its round-0 record ({})",
        exported_lineage[0].format.as_str()
    ))
}

fn wire_conformance() -> Check {
    let policy = RetryPolicy {
        max_attempts: 4,
        base_delay_ms: 1,
        multiplier: 2.0,
        jitter_seed: 0,
    };
    let request = ChatRequest::user("gpt-4", "ping", 0.0, 16).map_err(|e| e.to_string())?;

    let server = StubServer::start(vec![
        (429, "{}".into()),
        (200, StubServer::ok_body("pong")),
    ]);
    let http = HttpProvider::new(&server.base_url, None, Duration::from_secs(5)).map_err(|e| e.to_string())?;
    let provider = with_retry(http, policy.clone()).with_sleeper(Arc::new(|_| {}));
    let reply = provider.complete(&request).map_err(|e| e.to_string())?;
    ensure(reply.content == "pong", "wrong content")?;
    let captured = server.captured();
    ensure(captured.len() == 2, format!("429 then 200 made {} calls", captured.len()))?;
    server.join();
    let keys: BTreeSet<String> = captured[0].body.as_object().ok_or("body is not an object")?.keys().cloned().collect();
    let expected: BTreeSet<String> = ["model", "messages", "temperature", "max_tokens"].map(String::from).into();
    ensure(keys == expected, format!("body fields {keys:?}"))?;

    let server = StubServer::start(vec![(400, "{}".into())]);
    let http = HttpProvider::new(&server.base_url, None, Duration::from_secs(5)).map_err(|e| e.to_string())?;
    let provider = with_retry(http, policy).with_sleeper(Arc::new(|_| {}));
    let err = provider.complete(&request).err();
    ensure(matches!(err, Some(ProviderError::Permanent(_))), "400 not permanent")?;
    ensure(server.calls() == 1, format!("400 made {} calls", server.calls()))?;
    server.join();
    Ok("body fields {model, messages, temperature, max_tokens}; 429→200 = 2 calls; 400 = 1 call".into())
}

fn round_subsets() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("golden.jsonl");
    std::fs::write(&path, golden_dataset()).map_err(|e| e.to_string())?;
    let records = read_records(&path).map_err(|e| e.to_string())?;
    let ids = |k| -> BTreeSet<String> { subset_by_round(&records, k).into_iter().map(|r| r.record_id).collect() };
    let (d0, d01, d012) = (ids(0), ids(1), ids(2));
    ensure(d0.is_subset(&d01) && d01.is_subset(&d012), "subsets are not nested")?;
    ensure(d0.len() < d01.len() && d01.len() < d012.len(), "subsets are not strict")?;
    // 6 cross-modal images x 3 + 5 outside-knowledge images x 1 = 23 round-0
    // records, one fails verification; 22 complications, one fails; 21 more.
    let expected = (22, 22 + 21, 22 + 21 + 21);
    let got = (d0.len(), d01.len(), d012.len());
    ensure(got == expected, format!("counts {got:?}, expected {expected:?}"))?;
    Ok(format!("|D0| = {}, |D0+D1| = {}, |D0+D1+D2| = {}", got.0, got.1, got.2))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("golden end-to-end", golden_end_to_end),
        ("IDF oracle", idf_oracle),
        ("threshold semantics", thresholds),
        ("ACC+ correctness", acc_plus_checks),
        ("mix exactness", mix_exactness),
        ("resume equivalence", resume_equivalence),
        ("verification gating", verification_gating),
        ("wire conformance", wire_conformance),
        ("round subsets", round_subsets),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
