//! Checkpointed end-to-end runs.
//!
//! Run directory layout:
//!
//! ```text
//! {out}/{run_id}/config.toml    effective config snapshot
//! {out}/{run_id}/checkpoint     cursor, stream lengths and digests
//! {out}/{run_id}/records        append-only record stream (NDJSON)
//! {out}/{run_id}/runlog         append-only call and skip log (NDJSON)
//! {out}/{run_id}/ledger         cost ledger (JSON)
//! {out}/{run_id}/dataset.jsonl  final dataset, sorted by record_id
//! {out}/{run_id}/manifest.json
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::*;
use crate::annotations::{load_flickr30k_entities, load_visual_genome, read_corpus};
use crate::config::{CorpusFormat, CorpusSource};
use crate::dataset::{check_lineage, decode_record, encode_record};
use crate::llm::{CostLedger, PriceTable};
use crate::selection::{compute_corpus_stats, filter_by_caption_richness, filter_by_object_count, SelectionReport};

const CHECKPOINT: &str = "checkpoint";
const RECORDS: &str = "records";
const RUNLOG: &str = "runlog";
const LEDGER: &str = "ledger";
const CONFIG: &str = "config.toml";
const DATASET: &str = "dataset.jsonl";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunlogEntry {
    Call(CallRecord),
    Skip(Skip),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub run_id: String,
    /// Index into the stage list; equal to its length once all stages ran.
    pub stage_index: usize,
    pub stage: String,
    /// Items of `stage` already committed.
    pub next_item: usize,
    pub records_len: u64,
    pub records_digest: String,
    pub runlog_len: u64,
    pub runlog_digest: String,
    pub seed: u64,
    pub corpus_digests: BTreeMap<String, String>,
    pub ledger: CostLedger,
    pub started_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub run_id: String,
    pub config: PipelineConfig,
    pub corpus_digests: BTreeMap<String, String>,
    pub template_fingerprints: BTreeMap<String, String>,
    pub selection: Vec<SelectionReport>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub resumed: bool,
    pub dataset_path: String,
    pub dataset_sha256: String,
    pub dataset_records: usize,
    pub provider_calls: usize,
    pub skipped_items: usize,
    pub ledger: CostLedger,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Parent directory of run directories.
    pub out_dir: PathBuf,
    /// Stop with [`PipelineError::Halted`] after this many checkpoints.
    pub halt_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub dataset_path: PathBuf,
    pub records: Vec<InstructionRecord>,
    pub manifest: RunManifest,
}

pub fn load_corpus(source: &CorpusSource) -> Result<Corpus, AnnotationError> {
    match source.format {
        CorpusFormat::Flickr30kEntities => {
            let load = load_flickr30k_entities(&source.path)?;
            if load.skipped_lines > 0 {
                log::warn!("{}: skipped {} malformed lines", source.path.display(), load.skipped_lines);
            }
            Ok(load.corpus)
        }
        CorpusFormat::VisualGenome => load_visual_genome(&source.path),
        CorpusFormat::Canonical => read_corpus(&source.path),
    }
}

fn corpus_digest(corpus: &Corpus) -> String {
    let mut images: Vec<&AnnotatedImage> = corpus.images.iter().collect();
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut h = Sha256::new();
    for img in images {
        h.update(serde_json::to_vec(img).expect("images serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Loaded, filtered inputs of a run.
pub struct RunInputs {
    pub cross_modal: Corpus,
    pub outside_knowledge: Corpus,
    pub stats: CorpusStats,
    pub images: ImageIndex,
    pub selection: Vec<SelectionReport>,
    pub corpus_digests: BTreeMap<String, String>,
    pub prompts: PromptLibrary,
}

pub fn prepare(config: &PipelineConfig) -> Result<RunInputs, PipelineError> {
    config.validate()?;
    let c = &config.corpus;
    if c.cross_modal.is_none() && c.outside_knowledge.is_none() {
        return Err(ConfigInvalid {
            key: "corpus".into(),
            reason: "a run needs corpus.cross_modal or corpus.outside_knowledge".into(),
        }
        .into());
    }
    let load = |s: &Option<CorpusSource>, label: &str| -> Result<Corpus, PipelineError> {
        match s {
            Some(src) => Ok(load_corpus(src)?),
            None => Ok(Corpus::new(Vec::new(), label)?),
        }
    };
    let cm_all = load(&c.cross_modal, "cross_modal")?;
    let ok_all = load(&c.outside_knowledge, "outside_knowledge")?;
    let corpus_digests = BTreeMap::from([
        ("cross_modal".to_string(), corpus_digest(&cm_all)),
        ("outside_knowledge".to_string(), corpus_digest(&ok_all)),
    ]);
    let (cross_modal, cm_report) = filter_by_caption_richness(&cm_all, config.caption_char_min);
    let (outside_knowledge, ok_report) = filter_by_object_count(&ok_all, config.object_count_max);
    let stats = compute_corpus_stats(&outside_knowledge);
    let images = ImageIndex::new(&cross_modal, &outside_knowledge);
    Ok(RunInputs {
        cross_modal,
        outside_knowledge,
        stats,
        images,
        selection: vec![cm_report, ok_report],
        corpus_digests,
        prompts: PromptLibrary::with_overrides(&config.templates)?,
    })
}

fn default_run_id(config: &PipelineConfig, digests: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    h.update(config.to_toml_string());
    for d in digests.values() {
        h.update(d);
    }
    format!("run-{}", &hex::encode(h.finalize())[..12])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    SynthCrossModal,
    SynthOutsideKnowledge,
    Verify(u32),
    Complicate(u32),
    Reformulate,
}

impl Stage {
    fn name(self) -> String {
        match self {
            Stage::SynthCrossModal => STAGE_SYNTH_CROSS_MODAL.into(),
            Stage::SynthOutsideKnowledge => STAGE_SYNTH_OUTSIDE_KNOWLEDGE.into(),
            Stage::Verify(k) => verify_stage_name(k),
            Stage::Complicate(k) => complicate_stage_name(k),
            Stage::Reformulate => STAGE_REFORMULATE.into(),
        }
    }
}

fn stage_list(rounds: u32) -> Vec<Stage> {
    let mut v = vec![Stage::SynthCrossModal, Stage::SynthOutsideKnowledge, Stage::Verify(0)];
    for k in 1..=rounds {
        v.push(Stage::Complicate(k));
        v.push(Stage::Verify(k));
    }
    v.push(Stage::Reformulate);
    v
}

enum WorkItem<'a> {
    Image(&'a AnnotatedImage),
    Record(InstructionRecord),
    Reform(InstructionRecord, ReformKind),
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    f.sync_all().map_err(|e| PipelineError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

/// Append-only NDJSON file with its running length and digest.
struct Stream {
    path: PathBuf,
    file: File,
    len: u64,
    hasher: Sha256,
}

impl Stream {
    fn create(path: PathBuf) -> Result<Self, PipelineError> {
        let file = File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(Stream {
            path,
            file,
            len: 0,
            hasher: Sha256::new(),
        })
    }

    /// Reopens a stream, cutting it back to `len` bytes and checking the digest.
    fn reopen(path: PathBuf, len: u64, digest: &str, checkpoint: &Path) -> Result<(Self, Vec<u8>), PipelineError> {
        let corrupt = |reason: String| PipelineError::CorruptCheckpoint {
            path: checkpoint.to_path_buf(),
            reason,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(&path)
            .map_err(|e| corrupt(format!("cannot open {}: {e}", path.display())))?;
        let actual = file.metadata().map_err(|e| PipelineError::io(&path, e))?.len();
        if actual < len {
            return Err(corrupt(format!("{} is {actual} bytes, checkpoint expects {len}", path.display())));
        }
        file.set_len(len).map_err(|e| PipelineError::io(&path, e))?;
        let mut bytes = Vec::with_capacity(len as usize);
        (&file).read_to_end(&mut bytes).map_err(|e| PipelineError::io(&path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        if hex::encode(hasher.clone().finalize()) != digest {
            return Err(corrupt(format!("{} does not match the checkpoint digest", path.display())));
        }
        file = OpenOptions::new().append(true).open(&path).map_err(|e| PipelineError::io(&path, e))?;
        Ok((Stream { path, file, len, hasher }, bytes))
    }

    fn append_line(&mut self, line: &str) -> Result<(), PipelineError> {
        let mut bytes = Vec::with_capacity(line.len() + 1);
        bytes.extend_from_slice(line.as_bytes());
        bytes.push(b'\n');
        self.file.write_all(&bytes).map_err(|e| PipelineError::io(&self.path, e))?;
        self.hasher.update(&bytes);
        self.len += bytes.len() as u64;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), PipelineError> {
        self.file.flush().map_err(|e| PipelineError::io(&self.path, e))
    }

    fn digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    inputs: &'a RunInputs,
    provider: &'a dyn ChatProvider,
    dir: PathBuf,
    stages: Vec<Stage>,
    state: BTreeMap<String, InstructionRecord>,
    records: Stream,
    runlog: Stream,
    checkpoint: Checkpoint,
    written: usize,
    halt_after: Option<usize>,
}

impl<'a> Runner<'a> {
    fn ctx(&self) -> StageContext<'a> {
        StageContext {
            config: self.config,
            prompts: &self.inputs.prompts,
            provider: self.provider,
        }
    }

    fn sorted_records(&self, pred: impl Fn(&InstructionRecord) -> bool) -> Vec<InstructionRecord> {
        // BTreeMap iteration is already in record_id order.
        self.state.values().filter(|r| pred(r)).cloned().collect()
    }

    fn items(&self, stage: Stage) -> Vec<WorkItem<'a>> {
        let open = |r: &InstructionRecord| r.format == InstructionFormat::OpenEnded;
        let passed = |r: &InstructionRecord| r.verification_status == VerificationStatus::Passed;
        let inputs = self.inputs;
        match stage {
            Stage::SynthCrossModal => sorted_images(&inputs.cross_modal).into_iter().map(WorkItem::Image).collect(),
            Stage::SynthOutsideKnowledge => sorted_images(&inputs.outside_knowledge)
                .into_iter()
                .map(WorkItem::Image)
                .collect(),
            Stage::Verify(k) => self
                .sorted_records(|r| open(r) && r.complication_round == k)
                .into_iter()
                .map(WorkItem::Record)
                .collect(),
            Stage::Complicate(k) => self
                .sorted_records(|r| open(r) && passed(r) && r.complication_round == k - 1)
                .into_iter()
                .map(WorkItem::Record)
                .collect(),
            Stage::Reformulate => {
                let pool = self.sorted_records(|r| open(r) && passed(r));
                reformulation_plan(&pool, self.config, self.config.seed)
                    .into_iter()
                    .map(|(r, kind)| WorkItem::Reform(r, kind))
                    .collect()
            }
        }
    }

    fn execute(&self, stage: Stage, item: &WorkItem) -> ItemOutcome {
        let ctx = self.ctx();
        match (stage, item) {
            (Stage::SynthCrossModal, WorkItem::Image(img)) => cross_modal_item(ctx, img),
            (Stage::SynthOutsideKnowledge, WorkItem::Image(img)) => outside_knowledge_item(ctx, img, &self.inputs.stats),
            (Stage::Verify(_), WorkItem::Record(r)) => verify_item(ctx, r, &self.inputs.images),
            (Stage::Complicate(k), WorkItem::Record(r)) => complicate_item(ctx, r, &self.inputs.images, k),
            (Stage::Reformulate, WorkItem::Reform(r, kind)) => reformulate_item(ctx, r, *kind),
            _ => unreachable!("work item does not belong to stage"),
        }
    }

    fn commit(&mut self, outcome: ItemOutcome, stage_index: usize, next_item: usize) -> Result<(), PipelineError> {
        for r in outcome.records {
            self.records.append_line(&encode_record(&r))?;
            self.state.insert(r.record_id.clone(), r);
        }
        for call in outcome.calls {
            if call.outcome == CallOutcome::Ok {
                self.checkpoint
                    .ledger
                    .record_cost(&call.model, call.prompt_tokens, call.completion_tokens, &self.config.prices)
                    .map_err(|e| ConfigInvalid {
                        key: "prices".into(),
                        reason: e.to_string(),
                    })?;
            }
            let line = serde_json::to_string(&RunlogEntry::Call(call)).expect("runlog serializes");
            self.runlog.append_line(&line)?;
        }
        if let Some(skip) = outcome.skip {
            let line = serde_json::to_string(&RunlogEntry::Skip(skip)).expect("runlog serializes");
            self.runlog.append_line(&line)?;
        }
        self.save_checkpoint(stage_index, next_item)?;
        self.written += 1;
        if self.halt_after == Some(self.written) {
            return Err(PipelineError::Halted {
                checkpoints: self.written,
            });
        }
        Ok(())
    }

    fn save_checkpoint(&mut self, stage_index: usize, next_item: usize) -> Result<(), PipelineError> {
        self.records.flush()?;
        self.runlog.flush()?;
        let cp = &mut self.checkpoint;
        cp.stage_index = stage_index;
        cp.stage = self.stages.get(stage_index).map_or("done".to_string(), |s| s.name());
        cp.next_item = next_item;
        cp.records_len = self.records.len;
        cp.records_digest = self.records.digest();
        cp.runlog_len = self.runlog.len;
        cp.runlog_digest = self.runlog.digest();
        let ledger = serde_json::to_vec_pretty(&cp.ledger).expect("ledger serializes");
        write_atomic(&self.dir.join(LEDGER), &ledger)?;
        let bytes = serde_json::to_vec_pretty(&*cp).expect("checkpoint serializes");
        write_atomic(&self.dir.join(CHECKPOINT), &bytes)
    }

    fn drive(&mut self) -> Result<(), PipelineError> {
        let limit = self.config.concurrency_limit;
        while self.checkpoint.stage_index < self.stages.len() {
            let stage_index = self.checkpoint.stage_index;
            let stage = self.stages[stage_index];
            let items = self.items(stage);
            let mut next = self.checkpoint.next_item.min(items.len());
            log::info!("stage {} ({} items, starting at {next})", stage.name(), items.len());
            while next < items.len() {
                let end = (next + limit).min(items.len());
                let this = &*self;
                let outcomes = par_map(&items[next..end], limit, |item| this.execute(stage, item));
                for outcome in outcomes {
                    next += 1;
                    self.commit(outcome, stage_index, next)?;
                }
            }
            self.checkpoint.stage_index += 1;
            self.checkpoint.next_item = 0;
        }
        Ok(())
    }

    fn finish(mut self, resumed: bool) -> Result<RunOutcome, PipelineError> {
        self.save_checkpoint(self.stages.len(), 0)?;
        let all: Vec<InstructionRecord> = self.state.values().cloned().collect();
        check_lineage(&all).map_err(PipelineError::Lineage)?;
        let records = assemble(&all, self.config)?;
        let mut bytes = Vec::new();
        for r in &records {
            bytes.extend_from_slice(encode_record(r).as_bytes());
            bytes.push(b'\n');
        }
        let dataset_path = self.dir.join(DATASET);
        write_atomic(&dataset_path, &bytes)?;
        let entries = read_runlog(&self.dir.join(RUNLOG))?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            run_id: self.checkpoint.run_id.clone(),
            config: self.config.clone(),
            corpus_digests: self.inputs.corpus_digests.clone(),
            template_fingerprints: self
                .inputs
                .prompts
                .fingerprints()
                .into_iter()
                .map(|(f, fp)| (f.as_str().to_string(), fp))
                .collect(),
            selection: self.inputs.selection.clone(),
            started_at: self.checkpoint.started_at,
            finished_at: Utc::now(),
            resumed,
            dataset_path: DATASET.to_string(),
            dataset_sha256: hex::encode(Sha256::digest(&bytes)),
            dataset_records: records.len(),
            provider_calls: entries.iter().filter(|e| matches!(e, RunlogEntry::Call(_))).count(),
            skipped_items: entries.iter().filter(|e| matches!(e, RunlogEntry::Skip(_))).count(),
            ledger: self.checkpoint.ledger.clone(),
        };
        let text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_atomic(&self.dir.join(MANIFEST), &text)?;
        Ok(RunOutcome {
            run_id: manifest.run_id.clone(),
            run_dir: self.dir,
            dataset_path,
            records,
            manifest,
        })
    }
}

/// Executes a fresh run into `{out_dir}/{run_id}`.
pub fn run(
    config: &PipelineConfig,
    provider: &dyn ChatProvider,
    options: &RunOptions,
) -> Result<RunOutcome, PipelineError> {
    let inputs = prepare(config)?;
    let run_id = config
        .run_id
        .clone()
        .unwrap_or_else(|| default_run_id(config, &inputs.corpus_digests));
    let dir = options.out_dir.join(&run_id);
    if dir.join(CHECKPOINT).exists() {
        return Err(PipelineError::RunExists(dir));
    }
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    let mut snapshot = config.clone();
    snapshot.run_id = Some(run_id.clone());
    write_atomic(&dir.join(CONFIG), snapshot.to_toml_string().as_bytes())?;
    let mut runner = Runner {
        config: &snapshot,
        inputs: &inputs,
        provider,
        stages: stage_list(config.complication_rounds),
        state: BTreeMap::new(),
        records: Stream::create(dir.join(RECORDS))?,
        runlog: Stream::create(dir.join(RUNLOG))?,
        checkpoint: Checkpoint {
            run_id: run_id.clone(),
            stage_index: 0,
            stage: String::new(),
            next_item: 0,
            records_len: 0,
            records_digest: String::new(),
            runlog_len: 0,
            runlog_digest: String::new(),
            seed: config.seed,
            corpus_digests: inputs.corpus_digests.clone(),
            ledger: CostLedger::default(),
            started_at: Utc::now(),
        },
        dir,
        written: 0,
        halt_after: options.halt_after,
    };
    runner.save_checkpoint(0, 0)?;
    runner.drive()?;
    runner.finish(false)
}

/// Reads the effective config of an existing run.
pub fn run_config(run_dir: &Path) -> Result<PipelineConfig, PipelineError> {
    let path = run_dir.join(CONFIG);
    if !path.exists() {
        return Err(PipelineError::RunNotFound(run_dir.to_path_buf()));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    Ok(PipelineConfig::from_toml_str(&text)?)
}

/// Continues `{out_dir}/{run_id}` from its last checkpoint.
pub fn resume(run_id: &str, provider: &dyn ChatProvider, options: &RunOptions) -> Result<RunOutcome, PipelineError> {
    let dir = options.out_dir.join(run_id);
    let config = run_config(&dir)?;
    let cp_path = dir.join(CHECKPOINT);
    let text = std::fs::read_to_string(&cp_path).map_err(|e| PipelineError::CorruptCheckpoint {
        path: cp_path.clone(),
        reason: e.to_string(),
    })?;
    let checkpoint: Checkpoint = serde_json::from_str(&text).map_err(|e| PipelineError::CorruptCheckpoint {
        path: cp_path.clone(),
        reason: e.to_string(),
    })?;
    let stages = stage_list(config.complication_rounds);
    if checkpoint.run_id != run_id || checkpoint.seed != config.seed || checkpoint.stage_index > stages.len() {
        return Err(PipelineError::CorruptCheckpoint {
            path: cp_path,
            reason: "checkpoint does not belong to this run".into(),
        });
    }
    let inputs = prepare(&config)?;
    if inputs.corpus_digests != checkpoint.corpus_digests {
        return Err(PipelineError::InputsChanged("corpus contents changed since the run started".into()));
    }
    let (records, bytes) = Stream::reopen(dir.join(RECORDS), checkpoint.records_len, &checkpoint.records_digest, &cp_path)?;
    let (runlog, _) = Stream::reopen(dir.join(RUNLOG), checkpoint.runlog_len, &checkpoint.runlog_digest, &cp_path)?;
    let mut state = BTreeMap::new();
    for (i, line) in String::from_utf8_lossy(&bytes).lines().enumerate() {
        let r = decode_record(line, i + 1)?;
        state.insert(r.record_id.clone(), r);
    }
    log::info!("resuming {run_id} at stage {} item {}", checkpoint.stage, checkpoint.next_item);
    let mut runner = Runner {
        config: &config,
        inputs: &inputs,
        provider,
        dir,
        stages,
        state,
        records,
        runlog,
        checkpoint,
        written: 0,
        halt_after: options.halt_after,
    };
    runner.drive()?;
    runner.finish(true)
}

pub fn read_runlog(path: &Path) -> Result<Vec<RunlogEntry>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| DatasetError::SchemaViolation {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Rebuilds the cost ledger from a run log.
pub fn replay_ledger(runlog: &Path, prices: &PriceTable) -> Result<CostLedger, PipelineError> {
    let mut ledger = CostLedger::default();
    for entry in read_runlog(runlog)? {
        if let RunlogEntry::Call(c) = entry {
            if c.outcome == CallOutcome::Ok {
                ledger
                    .record_cost(&c.model, c.prompt_tokens, c.completion_tokens, prices)
                    .map_err(|e| ConfigInvalid {
                        key: "prices".into(),
                        reason: e.to_string(),
                    })?;
            }
        }
    }
    Ok(ledger)
}

/// Work counts for a dry run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunPlan {
    pub cross_modal_images: usize,
    pub outside_knowledge_images: usize,
    pub synthesis_calls: usize,
    pub max_round0_records: usize,
    pub complication_rounds: u32,
    pub selection: Vec<SelectionReport>,
}

pub fn plan_run(config: &PipelineConfig) -> Result<RunPlan, PipelineError> {
    let inputs = prepare(config)?;
    let cm = inputs.cross_modal.len();
    let ok = inputs.outside_knowledge.len();
    Ok(RunPlan {
        cross_modal_images: cm,
        outside_knowledge_images: ok,
        synthesis_calls: cm + ok,
        max_round0_records: cm * config.cross_modal_per_image + ok * config.outside_knowledge_per_image,
        complication_rounds: config.complication_rounds,
        selection: inputs.selection,
    })
}
