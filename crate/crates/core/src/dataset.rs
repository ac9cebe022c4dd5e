//! Persisting, subsetting, mixing and exporting instruction datasets.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{InstructionFormat, InstructionRecord, TaskType, VerificationStatus};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error("not enough {task_type} records: need {needed}, have {available}")]
    InsufficientRecords {
        task_type: &'static str,
        needed: usize,
        available: usize,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Canonical encoding of one record: a single JSON line, no trailing newline.
pub fn encode_record(record: &InstructionRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

pub fn decode_record(line: &str, line_no: usize) -> Result<InstructionRecord, DatasetError> {
    let violation = |reason: String| DatasetError::SchemaViolation {
        line: line_no,
        reason,
    };
    let record: InstructionRecord = serde_json::from_str(line).map_err(|e| violation(e.to_string()))?;
    record.validate().map_err(violation)?;
    Ok(record)
}

pub fn write_records(records: &[InstructionRecord], path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        writeln!(out, "{}", encode_record(r)).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_records(path: &Path) -> Result<Vec<InstructionRecord>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(decode_record(&line, idx + 1)?);
    }
    Ok(records)
}

/// Passed records with `complication_round <= max_round`: D0, D0+D1, ...
pub fn subset_by_round(records: &[InstructionRecord], max_round: u32) -> Vec<InstructionRecord> {
    records
        .iter()
        .filter(|r| r.verification_status == VerificationStatus::Passed && r.complication_round <= max_round)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixTarget {
    pub cross_modal: u64,
    pub outside_knowledge: u64,
}

impl Default for MixTarget {
    fn default() -> Self {
        MixTarget {
            cross_modal: 12,
            outside_knowledge: 20,
        }
    }
}

impl MixTarget {
    /// (cross_modal, outside_knowledge) shares of `total`; the cross-modal
    /// share rounds half up and outside-knowledge takes the remainder.
    pub fn shares(&self, total: usize) -> (usize, usize) {
        let weight = self.cross_modal + self.outside_knowledge;
        if weight == 0 {
            return (0, 0);
        }
        let n = total as u128;
        let a = self.cross_modal as u128;
        let w = weight as u128;
        let cm = ((2 * n * a + w) / (2 * w)) as usize;
        (cm, total - cm)
    }
}

/// Deterministic sample without replacement hitting the exact per-type shares.
/// Output is sorted by record_id.
pub fn mix(
    records: &[InstructionRecord],
    target: MixTarget,
    total: usize,
    rng_seed: u64,
) -> Result<Vec<InstructionRecord>, DatasetError> {
    let (cm_needed, ok_needed) = target.shares(total);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(total);
    for (task, needed) in [
        (TaskType::CrossModal, cm_needed),
        (TaskType::OutsideKnowledge, ok_needed),
    ] {
        let mut pool: Vec<&InstructionRecord> = records.iter().filter(|r| r.task_type == task).collect();
        pool.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        if pool.len() < needed {
            return Err(DatasetError::InsufficientRecords {
                task_type: task.as_str(),
                needed,
                available: pool.len(),
            });
        }
        for i in rand::seq::index::sample(&mut rng, pool.len(), needed) {
            out.push(pool[i].clone());
        }
    }
    out.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    Ok(out)
}

/// Largest total whose shares fit the available pools.
pub fn max_mix_total(records: &[InstructionRecord], target: MixTarget) -> usize {
    let cm = records.iter().filter(|r| r.task_type == TaskType::CrossModal).count();
    let ok = records.len() - cm;
    (0..=records.len())
        .rev()
        .find(|&n| {
            let (a, b) = target.shares(n);
            a <= cm && b <= ok
        })
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionStyle {
    /// `A. text`
    #[default]
    Dot,
    /// `(A) text`
    Paren,
}

impl OptionStyle {
    fn label(self, idx: usize) -> String {
        let letter = (b'A' + idx as u8) as char;
        match self {
            OptionStyle::Dot => format!("{letter}."),
            OptionStyle::Paren => format!("({letter})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub from: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub image: String,
    pub conversations: Vec<ConversationTurn>,
}

pub fn to_conversation(record: &InstructionRecord, style: OptionStyle) -> Conversation {
    let (human, gpt) = match (&record.options, record.correct_option) {
        (Some(options), Some(correct)) => {
            let block: Vec<String> = options
                .iter()
                .enumerate()
                .map(|(i, o)| format!("{} {o}", style.label(i)))
                .collect();
            (
                format!("{}\n{}", record.instruction, block.join("\n")),
                format!("{} {}", style.label(correct), options[correct]),
            )
        }
        _ => (record.instruction.clone(), record.response.clone()),
    };
    Conversation {
        id: record.record_id.clone(),
        image: record.image_id.clone(),
        conversations: vec![
            ConversationTurn {
                from: "human".into(),
                value: human,
            },
            ConversationTurn {
                from: "gpt".into(),
                value: gpt,
            },
        ],
    }
}

/// Writes the two-turn conversation export as a single JSON array.
pub fn export_conversation_format(
    records: &[InstructionRecord],
    path: &Path,
    style: OptionStyle,
) -> Result<PathBuf, DatasetError> {
    let convs: Vec<Conversation> = records.iter().map(|r| to_conversation(r, style)).collect();
    let text = serde_json::to_string_pretty(&convs).expect("conversations serialize");
    std::fs::write(path, text + "\n").map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionCount {
    pub task_type: TaskType,
    pub format: InstructionFormat,
    pub complication_round: u32,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_records: usize,
    pub composition: Vec<CompositionCount>,
    pub by_task_type: BTreeMap<String, usize>,
    pub by_format: BTreeMap<String, usize>,
    pub by_round: BTreeMap<u32, usize>,
    /// Passed / (passed + failed) per round; rounds with only unverified records are omitted.
    pub pass_rate_by_round: BTreeMap<u32, f64>,
    pub instruction_length: LengthStats,
}

pub fn stats(records: &[InstructionRecord]) -> DatasetStats {
    let mut cells: BTreeMap<(TaskType, InstructionFormat, u32), usize> = BTreeMap::new();
    let mut verdicts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut out = DatasetStats {
        total_records: records.len(),
        ..Default::default()
    };
    for r in records {
        *cells.entry((r.task_type, r.format, r.complication_round)).or_default() += 1;
        *out.by_task_type.entry(r.task_type.as_str().into()).or_default() += 1;
        *out.by_format.entry(r.format.as_str().into()).or_default() += 1;
        *out.by_round.entry(r.complication_round).or_default() += 1;
        let v = verdicts.entry(r.complication_round).or_default();
        match r.verification_status {
            VerificationStatus::Passed => v.0 += 1,
            VerificationStatus::Failed => v.1 += 1,
            VerificationStatus::Unverified => {}
        }
    }
    out.composition = cells
        .into_iter()
        .map(|((task_type, format, complication_round), count)| CompositionCount {
            task_type,
            format,
            complication_round,
            count,
        })
        .collect();
    out.pass_rate_by_round = verdicts
        .into_iter()
        .filter(|(_, (p, f))| p + f > 0)
        .map(|(round, (p, f))| (round, p as f64 / (p + f) as f64))
        .collect();
    let lengths: Vec<usize> = records.iter().map(|r| r.instruction.chars().count()).collect();
    if !lengths.is_empty() {
        out.instruction_length = LengthStats {
            mean: lengths.iter().sum::<usize>() as f64 / lengths.len() as f64,
            min: *lengths.iter().min().expect("non-empty"),
            max: *lengths.iter().max().expect("non-empty"),
        };
    }
    out
}

/// Checks parent links over a complete record stream. A complicated record's
/// parent is one round shallower; a reformulated record's parent is the
/// open-ended record it was converted from, at the same round. Both share
/// image and task type with the child.
pub fn check_lineage(records: &[InstructionRecord]) -> Result<(), String> {
    let by_id: HashMap<&str, &InstructionRecord> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    for r in records {
        let Some(pid) = &r.parent_id else {
            if r.complication_round > 0 {
                return Err(format!("{} is at round {} without a parent", r.record_id, r.complication_round));
            }
            continue;
        };
        let parent = by_id
            .get(pid.as_str())
            .ok_or_else(|| format!("{}: parent {pid} is missing", r.record_id))?;
        if parent.image_id != r.image_id || parent.task_type != r.task_type {
            return Err(format!("{}: parent {pid} has a different image or task", r.record_id));
        }
        let expected_round = match r.format {
            InstructionFormat::OpenEnded => r.complication_round.checked_sub(1),
            _ => Some(r.complication_round),
        };
        if expected_round != Some(parent.complication_round) {
            return Err(format!(
                "{}: round {} does not follow parent round {}",
                r.record_id, r.complication_round, parent.complication_round
            ));
        }
        if r.format != InstructionFormat::OpenEnded && parent.format != InstructionFormat::OpenEnded {
            return Err(format!("{}: reformulated from a non-open-ended record", r.record_id));
        }
    }
    Ok(())
}
