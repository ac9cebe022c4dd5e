//! Synthesis, complicate-then-verify, reformulation and final assembly.
//!
//! Every stage is a sequence of independent work items (an image or a
//! record). The functions here run a whole stage in memory; [`run`] drives
//! the same items with a checkpoint after each one.

mod run;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotations::{AnnotatedImage, AnnotationError, Corpus};
use crate::config::{ConfigInvalid, PipelineConfig, ReformulationMode};
use crate::dataset::{self, DatasetError};
use crate::eval::{normalize_yes_no, YesNo};
use crate::llm::{
    parse_multichoice_response, parse_synthesis_response, parse_verdict, ChatMessage, ChatProvider,
    ChatRequest, ParseError, ProviderError, Verdict,
};
use crate::prompts::{sample_knowledge_categories, BuiltPrompt, PromptError, PromptLibrary};
use crate::record::{derive_record_id, InstructionFormat, InstructionRecord, TaskType, VerificationStatus};
use crate::selection::{select_topic_entity, CorpusStats};

pub use run::{
    load_corpus, plan_run, prepare, read_runlog, replay_ledger, resume, run, run_config, Checkpoint, RunManifest,
    RunInputs, RunOptions, RunOutcome, RunPlan, RunlogEntry,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint {path}: {reason}; delete the run directory and start the run again")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("inputs differ from the checkpointed run: {0}")]
    InputsChanged(String),
    #[error("run directory {0} already holds a run; resume it or pick another run_id")]
    RunExists(PathBuf),
    #[error("no run found at {0}")]
    RunNotFound(PathBuf),
    #[error("run halted after {checkpoints} checkpoints")]
    Halted { checkpoints: usize },
    #[error("lineage check failed: {0}")]
    Lineage(String),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }
}

/// What a stage needs besides its input.
#[derive(Clone, Copy)]
pub struct StageContext<'a> {
    pub config: &'a PipelineConfig,
    pub prompts: &'a PromptLibrary,
    pub provider: &'a dyn ChatProvider,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok,
    Transient,
    Permanent,
    Exhausted,
}

/// One provider call, as written to the run log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: String,
    pub item: String,
    pub request_id: String,
    pub model: String,
    pub outcome: CallOutcome,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A work item that produced nothing (or, for verification, a failure).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub stage: String,
    pub item: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemOutcome {
    pub records: Vec<InstructionRecord>,
    pub calls: Vec<CallRecord>,
    pub skip: Option<Skip>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutput {
    pub records: Vec<InstructionRecord>,
    pub calls: Vec<CallRecord>,
    pub skips: Vec<Skip>,
}

impl StageOutput {
    fn absorb(&mut self, item: ItemOutcome) {
        self.records.extend(item.records);
        self.calls.extend(item.calls);
        self.skips.extend(item.skip);
    }

    fn extend(&mut self, other: StageOutput) {
        self.records.extend(other.records);
        self.calls.extend(other.calls);
        self.skips.extend(other.skips);
    }
}

/// Annotated images keyed by (task type, image id); the two task types may
/// draw the same image id from different corpora.
#[derive(Debug, Clone, Default)]
pub struct ImageIndex {
    images: BTreeMap<(TaskType, String), AnnotatedImage>,
}

impl ImageIndex {
    pub fn new(cross_modal: &Corpus, outside_knowledge: &Corpus) -> Self {
        let mut images = BTreeMap::new();
        for (task, corpus) in [(TaskType::CrossModal, cross_modal), (TaskType::OutsideKnowledge, outside_knowledge)] {
            for img in &corpus.images {
                images.insert((task, img.image_id.clone()), img.clone());
            }
        }
        ImageIndex { images }
    }

    pub fn get(&self, task: TaskType, image_id: &str) -> Option<&AnnotatedImage> {
        self.images.get(&(task, image_id.to_string()))
    }
}

pub const REASK_MESSAGE: &str =
    "Your reply did not follow the required output format. Reply again and follow the format exactly.";

/// Per-item seed so results do not depend on processing order.
pub fn item_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Maps `f` over `items`, at most `limit` at a time, keeping input order.
pub(crate) fn par_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(limit.max(1)) {
        if chunk.len() == 1 {
            out.push(f(&chunk[0]));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|item| s.spawn(|| f(item))).collect();
            for h in handles {
                out.push(h.join().expect("worker panicked"));
            }
        });
    }
    out
}

struct Asker<'a> {
    ctx: StageContext<'a>,
    stage: &'a str,
    item: &'a str,
    model: &'a str,
    temperature: f64,
    calls: Vec<CallRecord>,
}

impl<'a> Asker<'a> {
    fn new(ctx: StageContext<'a>, stage: &'a str, item: &'a str, model: &'a str, temperature: f64) -> Self {
        Asker {
            ctx,
            stage,
            item,
            model,
            temperature,
            calls: Vec::new(),
        }
    }

    fn send(&mut self, messages: Vec<ChatMessage>) -> Result<String, String> {
        let request = ChatRequest::new(self.model, messages, self.temperature, self.ctx.config.decoding.max_tokens)
            .map_err(|e| e.to_string())?;
        let result = self.ctx.provider.complete(&request);
        let (outcome, pt, ct) = match &result {
            Ok(r) => (CallOutcome::Ok, r.prompt_tokens, r.completion_tokens),
            Err(ProviderError::Transient(_)) => (CallOutcome::Transient, 0, 0),
            Err(ProviderError::Permanent(_)) => (CallOutcome::Permanent, 0, 0),
            Err(ProviderError::ScriptExhausted(_)) => (CallOutcome::Exhausted, 0, 0),
        };
        self.calls.push(CallRecord {
            stage: self.stage.to_string(),
            item: self.item.to_string(),
            request_id: request.request_id().to_string(),
            model: self.model.to_string(),
            outcome,
            prompt_tokens: pt,
            completion_tokens: ct,
        });
        result.map(|r| r.content).map_err(|e| e.to_string())
    }

    /// Sends `prompt` and parses the reply, re-asking once on a format error.
    fn ask<T>(&mut self, prompt: &str, parse: impl Fn(&str) -> Result<T, ParseError>) -> Result<T, String> {
        let mut messages = vec![ChatMessage::user(prompt)];
        let reply = self.send(messages.clone())?;
        let err = match parse(&reply) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        if !self.ctx.config.reask_on_parse_failure {
            return Err(err.to_string());
        }
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(REASK_MESSAGE));
        let reply = self.send(messages)?;
        parse(&reply).map_err(|e| format!("{e} (after re-ask)"))
    }

    fn finish(self, records: Vec<InstructionRecord>, failure: Option<String>) -> ItemOutcome {
        let skip = failure.map(|reason| {
            log::warn!("{} {}: {}", self.stage, self.item, reason);
            Skip {
                stage: self.stage.to_string(),
                item: self.item.to_string(),
                reason,
            }
        });
        ItemOutcome {
            records,
            calls: self.calls,
            skip,
        }
    }
}

fn skip_only(stage: &str, item: &str, reason: String) -> ItemOutcome {
    log::warn!("{stage} {item}: {reason}");
    ItemOutcome {
        skip: Some(Skip {
            stage: stage.into(),
            item: item.into(),
            reason,
        }),
        ..ItemOutcome::default()
    }
}

#[allow(clippy::too_many_arguments)]
fn new_open_record(
    record_id: String,
    image_id: &str,
    task_type: TaskType,
    pair: crate::llm::QaPair,
    round: u32,
    parent_id: Option<String>,
    prompt: &BuiltPrompt,
    model: &str,
) -> InstructionRecord {
    InstructionRecord {
        record_id,
        image_id: image_id.to_string(),
        task_type,
        format: InstructionFormat::OpenEnded,
        instruction: pair.instruction,
        response: pair.response,
        options: None,
        correct_option: None,
        complication_round: round,
        parent_id,
        verification_status: VerificationStatus::Unverified,
        template_fingerprint: prompt.template_fingerprint.clone(),
        model: model.to_string(),
    }
}

pub const STAGE_SYNTH_CROSS_MODAL: &str = "synthesize_cross_modal";
pub const STAGE_SYNTH_OUTSIDE_KNOWLEDGE: &str = "synthesize_outside_knowledge";
pub const STAGE_REFORMULATE: &str = "reformulate";

pub fn verify_stage_name(round: u32) -> String {
    format!("verify_round_{round}")
}

pub fn complicate_stage_name(round: u32) -> String {
    format!("complicate_round_{round}")
}

pub fn cross_modal_item(ctx: StageContext, image: &AnnotatedImage) -> ItemOutcome {
    let stage = STAGE_SYNTH_CROSS_MODAL;
    let count = ctx.config.cross_modal_per_image;
    let prompt = match ctx.prompts.cross_modal(image, count) {
        Ok(p) => p,
        Err(e) => return skip_only(stage, &image.image_id, e.to_string()),
    };
    let model = &ctx.config.models.synthesis;
    let mut asker = Asker::new(ctx, stage, &image.image_id, model, ctx.config.decoding.synthesis_temperature);
    match asker.ask(&prompt.text, |t| parse_synthesis_response(t, count)) {
        Ok(pairs) => {
            let records = pairs
                .into_iter()
                .enumerate()
                .map(|(i, pair)| {
                    let id = derive_record_id(&["cross_modal", &image.image_id, &i.to_string()]);
                    new_open_record(id, &image.image_id, TaskType::CrossModal, pair, 0, None, &prompt, model)
                })
                .collect();
            asker.finish(records, None)
        }
        Err(e) => asker.finish(Vec::new(), Some(e)),
    }
}

pub fn outside_knowledge_item(ctx: StageContext, image: &AnnotatedImage, stats: &CorpusStats) -> ItemOutcome {
    let stage = STAGE_SYNTH_OUTSIDE_KNOWLEDGE;
    let topic = match select_topic_entity(image, stats) {
        Ok(t) => t,
        Err(e) => return skip_only(stage, &image.image_id, e.to_string()),
    };
    let categories = sample_knowledge_categories(
        &ctx.config.knowledge_set(),
        item_seed(ctx.config.seed, &image.image_id),
    );
    let count = ctx.config.outside_knowledge_per_image;
    let prompt = match ctx.prompts.outside_knowledge(image, topic, &categories, count) {
        Ok(p) => p,
        Err(e) => return skip_only(stage, &image.image_id, e.to_string()),
    };
    let model = &ctx.config.models.synthesis;
    let mut asker = Asker::new(ctx, stage, &image.image_id, model, ctx.config.decoding.synthesis_temperature);
    match asker.ask(&prompt.text, |t| parse_synthesis_response(t, count)) {
        Ok(pairs) => {
            let records = pairs
                .into_iter()
                .enumerate()
                .map(|(i, pair)| {
                    let id = derive_record_id(&["outside_knowledge", &image.image_id, &i.to_string()]);
                    new_open_record(id, &image.image_id, TaskType::OutsideKnowledge, pair, 0, None, &prompt, model)
                })
                .collect();
            asker.finish(records, None)
        }
        Err(e) => asker.finish(Vec::new(), Some(e)),
    }
}

/// Judges one record. Anything other than a clear pass marks it failed.
pub fn verify_item(ctx: StageContext, record: &InstructionRecord, images: &ImageIndex) -> ItemOutcome {
    let stage = verify_stage_name(record.complication_round);
    let mut failed = record.clone();
    failed.verification_status = VerificationStatus::Failed;
    let Some(image) = images.get(record.task_type, &record.image_id) else {
        let mut out = skip_only(&stage, &record.record_id, format!("image {} not found", record.image_id));
        out.records.push(failed);
        return out;
    };
    let prompt = match ctx.prompts.verification(record, image) {
        Ok(p) => p,
        Err(e) => {
            let mut out = skip_only(&stage, &record.record_id, e.to_string());
            out.records.push(failed);
            return out;
        }
    };
    let mut asker = Asker::new(
        ctx,
        &stage,
        &record.record_id,
        &ctx.config.models.verification,
        ctx.config.decoding.verification_temperature,
    );
    let verdict = asker
        .send(vec![ChatMessage::user(prompt.text)])
        .and_then(|reply| parse_verdict(&reply).map_err(|e| e.to_string()));
    match verdict {
        Ok(Verdict::Pass) => {
            let mut passed = record.clone();
            passed.verification_status = VerificationStatus::Passed;
            asker.finish(vec![passed], None)
        }
        Ok(Verdict::Fail) => asker.finish(vec![failed], None),
        Err(e) => asker.finish(vec![failed], Some(e)),
    }
}

pub fn complicate_item(ctx: StageContext, record: &InstructionRecord, images: &ImageIndex, round: u32) -> ItemOutcome {
    let stage = complicate_stage_name(round);
    let Some(image) = images.get(record.task_type, &record.image_id) else {
        return skip_only(&stage, &record.record_id, format!("image {} not found", record.image_id));
    };
    let prompt = match ctx.prompts.complication(record, image) {
        Ok(p) => p,
        Err(e) => return skip_only(&stage, &record.record_id, e.to_string()),
    };
    let model = &ctx.config.models.complication;
    let mut asker = Asker::new(ctx, &stage, &record.record_id, model, ctx.config.decoding.complication_temperature);
    match asker.ask(&prompt.text, |t| parse_synthesis_response(t, 1)) {
        Ok(mut pairs) => {
            let pair = pairs.remove(0);
            let id = derive_record_id(&[&record.record_id, "round", &round.to_string()]);
            let child = new_open_record(
                id,
                &record.image_id,
                record.task_type,
                pair,
                round,
                Some(record.record_id.clone()),
                &prompt,
                model,
            );
            asker.finish(vec![child], None)
        }
        Err(e) => asker.finish(Vec::new(), Some(e)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReformKind {
    Bool,
    MultiChoice,
}

/// Converts a passed open-ended record. The copy keeps the source's round
/// and verification status and points back at it.
pub fn reformulate_item(ctx: StageContext, record: &InstructionRecord, kind: ReformKind) -> ItemOutcome {
    let stage = STAGE_REFORMULATE;
    let prompt = match kind {
        ReformKind::Bool => ctx.prompts.reformulate_bool(record),
        ReformKind::MultiChoice => ctx.prompts.reformulate_multichoice(record),
    };
    let prompt = match prompt {
        Ok(p) => p,
        Err(e) => return skip_only(stage, &record.record_id, e.to_string()),
    };
    let model = &ctx.config.models.reformulation;
    let mut asker = Asker::new(ctx, stage, &record.record_id, model, ctx.config.decoding.reformulation_temperature);
    let mut out = InstructionRecord {
        record_id: String::new(),
        parent_id: Some(record.record_id.clone()),
        template_fingerprint: prompt.template_fingerprint.clone(),
        model: model.clone(),
        ..record.clone()
    };
    let converted = match kind {
        ReformKind::Bool => asker
            .ask(&prompt.text, |t| {
                let mut pairs = parse_synthesis_response(t, 1)?;
                let pair = pairs.remove(0);
                match normalize_yes_no(&pair.response) {
                    YesNo::Yes => Ok((pair.instruction, "yes")),
                    YesNo::No => Ok((pair.instruction, "no")),
                    YesNo::Unknown => Err(ParseError::ParseMismatch { found: 0, expected: 1 }),
                }
            })
            .map(|(q, a)| {
                out.record_id = derive_record_id(&[&record.record_id, "bool"]);
                out.format = InstructionFormat::Bool;
                out.instruction = q;
                out.response = a.to_string();
            }),
        ReformKind::MultiChoice => asker.ask(&prompt.text, parse_multichoice_response).map(|mc| {
            out.record_id = derive_record_id(&[&record.record_id, "multi_choice"]);
            out.format = InstructionFormat::MultiChoice;
            out.response = mc.options[mc.correct_option].clone();
            out.instruction = mc.question;
            out.options = Some(mc.options);
            out.correct_option = Some(mc.correct_option);
        }),
    };
    match converted {
        Ok(()) => asker.finish(vec![out], None),
        Err(e) => asker.finish(Vec::new(), Some(format!("source kept open-ended: {e}"))),
    }
}

fn sorted_images(corpus: &Corpus) -> Vec<&AnnotatedImage> {
    let mut v: Vec<&AnnotatedImage> = corpus.images.iter().collect();
    v.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    v
}

/// One call per image; `corpus` should already be caption-filtered.
pub fn synthesize_cross_modal(ctx: StageContext, corpus: &Corpus) -> StageOutput {
    let mut out = StageOutput::default();
    for item in par_map(&sorted_images(corpus), ctx.config.concurrency_limit, |img| cross_modal_item(ctx, img)) {
        out.absorb(item);
    }
    out
}

/// One call per image; `stats` must describe the same (object-filtered) corpus.
pub fn synthesize_outside_knowledge(ctx: StageContext, corpus: &Corpus, stats: &CorpusStats) -> StageOutput {
    let mut out = StageOutput::default();
    for item in par_map(&sorted_images(corpus), ctx.config.concurrency_limit, |img| {
        outside_knowledge_item(ctx, img, stats)
    }) {
        out.absorb(item);
    }
    out
}

/// Returns every input record with its verification status set.
pub fn verify(ctx: StageContext, records: &[InstructionRecord], images: &ImageIndex) -> StageOutput {
    let mut out = StageOutput::default();
    for item in par_map(records, ctx.config.concurrency_limit, |r| verify_item(ctx, r, images)) {
        out.absorb(item);
    }
    out
}

pub fn keep_passed(records: &[InstructionRecord]) -> Vec<InstructionRecord> {
    records
        .iter()
        .filter(|r| r.verification_status == VerificationStatus::Passed)
        .cloned()
        .collect()
}

/// Produces round-`round` variants of passed round-`round - 1` records.
pub fn complicate(
    ctx: StageContext,
    records: &[InstructionRecord],
    images: &ImageIndex,
    round: u32,
) -> Result<StageOutput, PipelineError> {
    for r in records {
        if r.verification_status != VerificationStatus::Passed || round == 0 || r.complication_round != round - 1 {
            return Err(PipelineError::Precondition(format!(
                "complicate round {round} needs passed round-{} records; {} is {:?} at round {}",
                round.saturating_sub(1),
                r.record_id,
                r.verification_status,
                r.complication_round
            )));
        }
    }
    let mut out = StageOutput::default();
    for item in par_map(records, ctx.config.concurrency_limit, |r| complicate_item(ctx, r, images, round)) {
        out.absorb(item);
    }
    Ok(out)
}

/// Runs the complicate/verify loop over verified round-0 records and
/// returns all passed records of rounds 0..=K. The output `calls` and
/// `skips` cover every round.
pub fn complicate_then_verify(
    ctx: StageContext,
    records: &[InstructionRecord],
    images: &ImageIndex,
) -> Result<StageOutput, PipelineError> {
    if let Some(r) = records
        .iter()
        .find(|r| r.complication_round != 0 || r.verification_status == VerificationStatus::Unverified)
    {
        return Err(PipelineError::Precondition(format!(
            "{} is not a verified round-0 record",
            r.record_id
        )));
    }
    let mut out = StageOutput {
        records: keep_passed(records),
        ..StageOutput::default()
    };
    let mut frontier = out.records.clone();
    for round in 1..=ctx.config.complication_rounds {
        if frontier.is_empty() {
            break;
        }
        let mut step = complicate(ctx, &frontier, images, round)?;
        let verified = verify(ctx, &step.records, images);
        step.records = Vec::new();
        out.extend(step);
        frontier = keep_passed(&verified.records);
        out.calls.extend(verified.calls);
        out.skips.extend(verified.skips);
        out.records.extend(frontier.iter().cloned());
    }
    out.records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    Ok(out)
}

/// Picks which records to convert: `floor(n * fraction)` of each kind,
/// disjoint, drawn with a seeded shuffle of the records sorted by id.
pub fn reformulation_plan(
    records: &[InstructionRecord],
    config: &PipelineConfig,
    rng_seed: u64,
) -> Vec<(InstructionRecord, ReformKind)> {
    let mut pool: Vec<&InstructionRecord> = records.iter().collect();
    pool.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let n = pool.len();
    let n_bool = (n as f64 * config.reformulation.bool).floor() as usize;
    let n_mc = ((n as f64 * config.reformulation.multi_choice).floor() as usize).min(n - n_bool);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let picked = rand::seq::index::sample(&mut rng, n, n_bool + n_mc);
    picked
        .iter()
        .enumerate()
        .map(|(i, idx)| {
            let kind = if i < n_bool { ReformKind::Bool } else { ReformKind::MultiChoice };
            (pool[idx].clone(), kind)
        })
        .collect()
}

/// Merges converted records with their sources per the configured mode.
pub fn merge_reformulated(
    records: &[InstructionRecord],
    converted: &[InstructionRecord],
    mode: ReformulationMode,
) -> Vec<InstructionRecord> {
    let replaced: HashSet<&str> = match mode {
        ReformulationMode::Replace => converted.iter().filter_map(|r| r.parent_id.as_deref()).collect(),
        ReformulationMode::KeepBoth => HashSet::new(),
    };
    let mut out: Vec<InstructionRecord> = records
        .iter()
        .filter(|r| !replaced.contains(r.record_id.as_str()))
        .chain(converted)
        .cloned()
        .collect();
    out.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    out
}

pub fn reformulate(
    ctx: StageContext,
    records: &[InstructionRecord],
    rng_seed: u64,
) -> Result<StageOutput, PipelineError> {
    if let Some(r) = records
        .iter()
        .find(|r| r.format != InstructionFormat::OpenEnded || r.verification_status != VerificationStatus::Passed)
    {
        return Err(PipelineError::Precondition(format!(
            "{} is not a passed open-ended record",
            r.record_id
        )));
    }
    let plan = reformulation_plan(records, ctx.config, rng_seed);
    let mut converted = StageOutput::default();
    for item in par_map(&plan, ctx.config.concurrency_limit, |(r, kind)| reformulate_item(ctx, r, *kind)) {
        converted.absorb(item);
    }
    Ok(StageOutput {
        records: merge_reformulated(records, &converted.records, ctx.config.reformulation.mode),
        calls: converted.calls,
        skips: converted.skips,
    })
}

fn normalize_instruction(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// Drops records repeating an earlier (image, normalized instruction).
pub fn dedup(records: &[InstructionRecord]) -> Vec<InstructionRecord> {
    let mut seen = HashSet::new();
    records
        .iter()
        .filter(|r| seen.insert((r.image_id.clone(), normalize_instruction(&r.instruction))))
        .cloned()
        .collect()
}

/// Final dataset from the full record state: passed records only, merged
/// with their conversions, deduplicated, optionally mixed, sorted by id.
pub fn assemble(all: &[InstructionRecord], config: &PipelineConfig) -> Result<Vec<InstructionRecord>, PipelineError> {
    let passed = keep_passed(all);
    let (open, converted): (Vec<_>, Vec<_>) = passed
        .into_iter()
        .partition(|r| r.format == InstructionFormat::OpenEnded);
    let merged = merge_reformulated(&open, &converted, config.reformulation.mode);
    let mut out = dedup(&merged);
    if let Some(total) = config.mix.total {
        out = dataset::mix(&out, config.mix.target(), total, config.seed)?;
    }
    out.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    Ok(out)
}
