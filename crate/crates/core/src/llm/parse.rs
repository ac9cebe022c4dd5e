//! Strict parsers for model outputs, and the matching formatters.

use thiserror::Error;

use crate::record::MULTI_CHOICE_OPTIONS;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("found {found} question/answer pairs, expected {expected}")]
    ParseMismatch { found: usize, expected: usize },
    #[error("no terminal verdict line")]
    UnparseableVerdict,
    #[error("malformed multi-choice output: {0}")]
    MalformedChoice(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaPair {
    pub instruction: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Question,
    Answer,
}

/// Finds `Question k:` / `Answer k:` markers as (kind, k, marker start, content start).
fn markers(text: &str) -> Vec<(Marker, usize, usize, usize)> {
    let mut out = Vec::new();
    for (kind, word) in [(Marker::Question, "Question "), (Marker::Answer, "Answer ")] {
        let mut from = 0;
        while let Some(pos) = text[from..].find(word) {
            let start = from + pos;
            let after = &text[start + word.len()..];
            let digits: String = after.chars().take_while(|c| c.is_ascii_digit()).collect();
            from = start + word.len();
            if digits.is_empty() || !after[digits.len()..].starts_with(':') {
                continue;
            }
            let at_boundary = start == 0
                || text[..start]
                    .chars()
                    .next_back()
                    .is_some_and(|c| !c.is_alphanumeric());
            if !at_boundary {
                continue;
            }
            if let Ok(k) = digits.parse::<usize>() {
                out.push((kind, k, start, start + word.len() + digits.len() + 1));
            }
        }
    }
    out.sort_by_key(|m| m.2);
    out
}

/// Extracts exactly `expected_count` numbered question/answer pairs.
pub fn parse_synthesis_response(text: &str, expected_count: usize) -> Result<Vec<QaPair>, ParseError> {
    let marks = markers(text);
    let mut questions = vec![None; expected_count.max(1) + marks.len()];
    let mut answers = questions.clone();
    for (i, &(kind, k, _, content_start)) in marks.iter().enumerate() {
        let end = marks.get(i + 1).map_or(text.len(), |m| m.2);
        let content = text[content_start..end].trim().to_string();
        if k == 0 || k >= questions.len() || content.is_empty() {
            continue;
        }
        let slot = match kind {
            Marker::Question => &mut questions[k],
            Marker::Answer => &mut answers[k],
        };
        slot.get_or_insert(content);
    }
    let complete: Vec<usize> = (1..questions.len())
        .filter(|&k| questions[k].is_some() && answers[k].is_some())
        .collect();
    let contiguous = complete.iter().copied().eq(1..=complete.len());
    if complete.len() != expected_count || !contiguous {
        return Err(ParseError::ParseMismatch {
            found: complete.len(),
            expected: expected_count,
        });
    }
    Ok(complete
        .into_iter()
        .map(|k| QaPair {
            instruction: questions[k].take().expect("complete"),
            response: answers[k].take().expect("complete"),
        })
        .collect())
}

/// Inverse of [`parse_synthesis_response`] for well-formed pairs.
pub fn format_pairs(pairs: &[QaPair]) -> String {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| format!("Question {n}: {}\nAnswer {n}: {}", p.instruction, p.response, n = i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads the last `Verdict:` line: yes/pass is a pass, no/fail a fail.
pub fn parse_verdict(text: &str) -> Result<Verdict, ParseError> {
    let line = text
        .lines()
        .rev()
        .find_map(|l| {
            let lower = l.to_lowercase();
            lower.find("verdict:").map(|i| lower[i + "verdict:".len()..].to_string())
        })
        .ok_or(ParseError::UnparseableVerdict)?;
    let word: String = line
        .trim()
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect();
    match word.as_str() {
        "yes" | "pass" => Ok(Verdict::Pass),
        "no" | "fail" => Ok(Verdict::Fail),
        _ => Err(ParseError::UnparseableVerdict),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiChoice {
    pub question: String,
    pub options: Vec<String>,
    pub correct_option: usize,
}

const LETTERS: [char; MULTI_CHOICE_OPTIONS] = ['A', 'B', 'C', 'D'];

/// Parses `Question: ...`, four lettered option lines and `Answer: <letter>`.
pub fn parse_multichoice_response(text: &str) -> Result<MultiChoice, ParseError> {
    let bad = |m: &str| ParseError::MalformedChoice(m.to_string());
    let mut question: Option<String> = None;
    let mut options: Vec<(char, String)> = Vec::new();
    let mut answer: Option<char> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(q) = strip_label(line, "Question") {
            question.get_or_insert_with(|| q.to_string());
        } else if let Some(a) = strip_label(line, "Answer") {
            let letter = a
                .trim_start_matches('(')
                .chars()
                .next()
                .filter(|c| LETTERS.contains(&c.to_ascii_uppercase()))
                .ok_or_else(|| bad("answer is not one of A-D"))?;
            answer = Some(letter.to_ascii_uppercase());
        } else if let Some((letter, rest)) = option_line(line) {
            options.push((letter, rest.to_string()));
        } else if let (Some(q), true) = (question.as_mut(), options.is_empty()) {
            q.push(' ');
            q.push_str(line);
        }
    }
    let question = question.filter(|q| !q.is_empty()).ok_or_else(|| bad("missing question"))?;
    let letters: Vec<char> = options.iter().map(|o| o.0).collect();
    if letters != LETTERS {
        return Err(bad(&format!("expected options A-D, found {}", options.len())));
    }
    if options.iter().any(|o| o.1.is_empty()) {
        return Err(bad("empty option"));
    }
    let answer = answer.ok_or_else(|| bad("missing answer"))?;
    Ok(MultiChoice {
        question,
        options: options.into_iter().map(|o| o.1).collect(),
        correct_option: LETTERS.iter().position(|&l| l == answer).expect("checked letter"),
    })
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(label)?;
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit() || c == ' ');
    rest.strip_prefix(':').map(str::trim)
}

fn option_line(line: &str) -> Option<(char, &str)> {
    let mut chars = line.chars();
    let letter = chars.next()?;
    if !LETTERS.contains(&letter) {
        return None;
    }
    let rest = chars.as_str();
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    Some((letter, rest.trim()))
}

pub fn format_multichoice(mc: &MultiChoice) -> String {
    let mut out = format!("Question: {}\n", mc.question);
    for (letter, opt) in LETTERS.iter().zip(&mc.options) {
        out.push_str(&format!("{letter}. {opt}\n"));
    }
    out.push_str(&format!("Answer: {}", LETTERS[mc.correct_option]));
    out
}
