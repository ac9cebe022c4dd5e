//! The instruction record shared by the pipeline and dataset stages.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    CrossModal,
    OutsideKnowledge,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::CrossModal => "cross_modal",
            TaskType::OutsideKnowledge => "outside_knowledge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionFormat {
    OpenEnded,
    Bool,
    MultiChoice,
}

impl InstructionFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            InstructionFormat::OpenEnded => "open_ended",
            InstructionFormat::Bool => "bool",
            InstructionFormat::MultiChoice => "multi_choice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationStatus {
    Unverified,
    Passed,
    Failed,
}

pub const MULTI_CHOICE_OPTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub record_id: String,
    pub image_id: String,
    pub task_type: TaskType,
    pub format: InstructionFormat,
    pub instruction: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_option: Option<usize>,
    pub complication_round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub verification_status: VerificationStatus,
    pub template_fingerprint: String,
    pub model: String,
}

impl InstructionRecord {
    /// Checks the per-record invariants (lineage is checked at the dataset level).
    pub fn validate(&self) -> Result<(), String> {
        if self.record_id.is_empty() {
            return Err("record_id is empty".into());
        }
        if self.image_id.is_empty() {
            return Err("image_id is empty".into());
        }
        if self.instruction.trim().is_empty() {
            return Err("instruction is empty".into());
        }
        if self.response.trim().is_empty() {
            return Err("response is empty".into());
        }
        let is_mc = self.format == InstructionFormat::MultiChoice;
        match (&self.options, self.correct_option) {
            (Some(opts), Some(idx)) if is_mc => {
                if opts.len() != MULTI_CHOICE_OPTIONS {
                    return Err(format!("multi_choice needs {MULTI_CHOICE_OPTIONS} options, got {}", opts.len()));
                }
                if idx >= opts.len() {
                    return Err(format!("correct_option {idx} out of range"));
                }
            }
            (None, None) if !is_mc => {}
            _ if is_mc => return Err("multi_choice requires options and correct_option".into()),
            _ => return Err("options are only allowed on multi_choice records".into()),
        }
        if self.format == InstructionFormat::Bool && !matches!(self.response.as_str(), "yes" | "no") {
            return Err(format!("bool response must be yes/no, got {:?}", self.response));
        }
        if self.complication_round > 0 && self.parent_id.is_none() {
            return Err("complicated record has no parent_id".into());
        }
        Ok(())
    }
}

/// Stable 16-hex-digit identifier derived from the record's lineage coordinates.
pub fn derive_record_id(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0x1f]);
    }
    hex::encode(&hasher.finalize()[..8])
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn open(id: &str, image: &str, task: TaskType, round: u32, parent: Option<&str>) -> InstructionRecord {
        InstructionRecord {
            record_id: id.into(),
            image_id: image.into(),
            task_type: task,
            format: InstructionFormat::OpenEnded,
            instruction: format!("Instruction {id}?"),
            response: format!("Response {id}."),
            options: None,
            correct_option: None,
            complication_round: round,
            parent_id: parent.map(String::from),
            verification_status: VerificationStatus::Passed,
            template_fingerprint: "0000".into(),
            model: "mock".into(),
        }
    }
}
