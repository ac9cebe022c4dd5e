//! Benchmark scoring: paired yes/no accuracy (ACC+), MME-style subtask
//! scores and multi-choice accuracy.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no items to score")]
    EmptyInput,
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid prediction record at line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("instance {0} does not have exactly two questions")]
    Unpaired(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
    Unknown,
}

const FILLERS: &[&str] = &["answer", "final", "my", "the", "is", "a", "correct"];

/// Maps free text to yes/no. The first token after fillers decides; a reply
/// that also contains the opposite word, or starts with anything else, is unknown.
pub fn normalize_yes_no(text: &str) -> YesNo {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .skip_while(|t| FILLERS.contains(t))
        .collect();
    let (lead, opposite) = match tokens.first() {
        Some(&"yes") => (YesNo::Yes, "no"),
        Some(&"no") => (YesNo::No, "yes"),
        _ => return YesNo::Unknown,
    };
    if tokens[1..].contains(&opposite) {
        YesNo::Unknown
    } else {
        lead
    }
}

/// Exact correct/total fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.value())
    }
}

pub fn acc<T: PartialEq>(items: &[(T, T)]) -> Result<Accuracy, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(Accuracy {
        correct: items.iter().filter(|(gold, pred)| gold == pred).count(),
        total: items.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YesNoQuestion {
    pub question: String,
    pub gold: YesNo,
    pub prediction: String,
}

impl YesNoQuestion {
    pub fn is_correct(&self) -> bool {
        self.gold != YesNo::Unknown && normalize_yes_no(&self.prediction) == self.gold
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YesNoPair {
    pub image_id: String,
    pub subtask: String,
    pub q1: YesNoQuestion,
    pub q2: YesNoQuestion,
}

/// Question-level accuracy over both members of every pair. An unknown
/// prediction is never correct.
pub fn question_acc(pairs: &[YesNoPair]) -> Result<Accuracy, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(Accuracy {
        correct: pairs
            .iter()
            .flat_map(|p| [&p.q1, &p.q2])
            .filter(|q| q.is_correct())
            .count(),
        total: 2 * pairs.len(),
    })
}

/// Fraction of pairs with both questions answered correctly.
pub fn acc_plus(pairs: &[YesNoPair]) -> Result<Accuracy, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(Accuracy {
        correct: pairs.iter().filter(|p| p.q1.is_correct() && p.q2.is_correct()).count(),
        total: pairs.len(),
    })
}

/// 100 x question accuracy + 100 x ACC+, in [0, 200].
pub fn mme_subtask_score(pairs: &[YesNoPair]) -> Result<f64, EvalError> {
    Ok(100.0 * question_acc(pairs)?.value() + 100.0 * acc_plus(pairs)?.value())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceInstance {
    pub image_id: String,
    pub task: String,
    pub options: Vec<String>,
    pub gold_index: usize,
    pub prediction: String,
}

fn normalize_option_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .to_string()
}

/// Resolves a prediction to an option index. A prediction that is exactly
/// one option's text (after normalization) picks that option; otherwise a
/// leading capital letter A-D standing alone (`B`, `B.`, `(B)`, `B) text`)
/// decides. Anything else is unmatched.
pub fn match_choice(prediction: &str, options: &[String]) -> Option<usize> {
    let p = prediction.trim();
    let norm = normalize_option_text(p);
    if let Some(idx) = options.iter().position(|o| normalize_option_text(o) == norm) {
        return Some(idx);
    }
    let stripped = p.strip_prefix('(').unwrap_or(p);
    let mut chars = stripped.chars();
    let letter @ 'A'..='D' = chars.next()? else {
        return None;
    };
    let rest = chars.as_str();
    let standalone = rest.is_empty() || rest.starts_with(['.', ')', ':', ' ', ',', '\n']);
    let idx = (letter as u8 - b'A') as usize;
    (standalone && idx < options.len()).then_some(idx)
}

pub fn choice_accuracy(instances: &[ChoiceInstance]) -> Result<Accuracy, EvalError> {
    if instances.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(Accuracy {
        correct: instances
            .iter()
            .filter(|i| match_choice(&i.prediction, &i.options) == Some(i.gold_index))
            .count(),
        total: instances.len(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct YesNoRow {
    image_id: String,
    #[serde(alias = "subtask_or_task")]
    subtask: String,
    question_index: u32,
    #[serde(default)]
    question: String,
    gold: YesNo,
    prediction: String,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

/// Reads yes/no prediction rows and pairs them by (subtask, image_id).
pub fn read_yes_no_predictions(path: &Path) -> Result<Vec<YesNoPair>, EvalError> {
    let mut groups: BTreeMap<(String, String), Vec<YesNoRow>> = BTreeMap::new();
    for (line, text) in read_lines(path)? {
        let row: YesNoRow = serde_json::from_str(&text).map_err(|e| EvalError::Schema {
            line,
            reason: e.to_string(),
        })?;
        if row.gold == YesNo::Unknown {
            return Err(EvalError::Schema {
                line,
                reason: "gold must be yes or no".into(),
            });
        }
        groups
            .entry((row.subtask.clone(), row.image_id.clone()))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((subtask, image_id), mut rows)| {
            if rows.len() != 2 {
                return Err(EvalError::Unpaired(format!("{subtask}/{image_id}")));
            }
            rows.sort_by_key(|r| r.question_index);
            let mut it = rows.into_iter().map(|r| YesNoQuestion {
                question: r.question,
                gold: r.gold,
                prediction: r.prediction,
            });
            Ok(YesNoPair {
                image_id,
                subtask,
                q1: it.next().expect("two rows"),
                q2: it.next().expect("two rows"),
            })
        })
        .collect()
}

pub fn read_choice_predictions(path: &Path) -> Result<Vec<ChoiceInstance>, EvalError> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let inst: ChoiceInstance = serde_json::from_str(&text).map_err(|e| EvalError::Schema {
                line,
                reason: e.to_string(),
            })?;
            if inst.gold_index >= inst.options.len() {
                return Err(EvalError::Schema {
                    line,
                    reason: format!("gold_index {} out of range", inst.gold_index),
                });
            }
            Ok(inst)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub instances: usize,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mme_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: String,
    pub rows: Vec<ReportRow>,
    pub overall_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall_acc_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mme_total: Option<f64>,
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn yes_no_report(pairs: &[YesNoPair]) -> Result<EvalReport, EvalError> {
    let mut by_subtask: BTreeMap<&str, Vec<YesNoPair>> = BTreeMap::new();
    for p in pairs {
        by_subtask.entry(&p.subtask).or_default().push(p.clone());
    }
    let mut rows = Vec::new();
    let mut total = 0.0;
    for (name, group) in by_subtask {
        let score = mme_subtask_score(&group)?;
        total += score;
        rows.push(ReportRow {
            group: name.to_string(),
            instances: group.len(),
            accuracy: round4(question_acc(&group)?.value()),
            acc_plus: Some(round4(acc_plus(&group)?.value())),
            mme_score: Some(round4(score)),
        });
    }
    Ok(EvalReport {
        kind: "yes_no".into(),
        rows,
        overall_accuracy: round4(question_acc(pairs)?.value()),
        overall_acc_plus: Some(round4(acc_plus(pairs)?.value())),
        mme_total: Some(round4(total)),
    })
}

pub fn choice_report(instances: &[ChoiceInstance]) -> Result<EvalReport, EvalError> {
    let mut by_task: BTreeMap<&str, Vec<ChoiceInstance>> = BTreeMap::new();
    for i in instances {
        by_task.entry(&i.task).or_default().push(i.clone());
    }
    let rows = by_task
        .into_iter()
        .map(|(name, group)| {
            Ok(ReportRow {
                group: name.to_string(),
                instances: group.len(),
                accuracy: round4(choice_accuracy(&group)?.value()),
                acc_plus: None,
                mme_score: None,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport {
        kind: "choice".into(),
        rows,
        overall_accuracy: round4(choice_accuracy(instances)?.value()),
        overall_acc_plus: None,
        mme_total: None,
    })
}

impl EvalReport {
    /// Plain-text table; every column is labelled with the metric it holds.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if self.kind == "yes_no" {
            out.push_str(&format!(
                "{:<28} {:>9} {:>12} {:>8} {:>13}\n",
                "subtask", "instances", "question_acc", "ACC+", "score(/200)"
            ));
            for r in &self.rows {
                out.push_str(&format!(
                    "{:<28} {:>9} {:>12.4} {:>8.4} {:>13.2}\n",
                    r.group,
                    r.instances,
                    r.accuracy,
                    r.acc_plus.unwrap_or_default(),
                    r.mme_score.unwrap_or_default()
                ));
            }
            out.push_str(&format!(
                "overall question_acc {:.4}  ACC+ {:.4}  MME total {:.2}\n",
                self.overall_accuracy,
                self.overall_acc_plus.unwrap_or_default(),
                self.mme_total.unwrap_or_default()
            ));
        } else {
            out.push_str(&format!("{:<28} {:>9} {:>9}\n", "task", "instances", "accuracy"));
            for r in &self.rows {
                out.push_str(&format!("{:<28} {:>9} {:>9.4}\n", r.group, r.instances, r.accuracy));
            }
            out.push_str(&format!("overall accuracy {:.4}\n", self.overall_accuracy));
        }
        out
    }
}
