//! Deterministic scripted provider.
//!
//! Script files are JSON:
//!
//! ```json
//! {"mode": "fingerprint", "responses": {"<request fingerprint>": "text", ...}}
//! {"mode": "sequence",    "responses": ["text", {"error": "transient"}, ...]}
//! ```
//!
//! A reply is either the response text or `{"error": "transient" | "permanent", "message": "..."}`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatProvider, ChatRequest, ChatResponse, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFailure {
    Transient,
    Permanent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Error {
        error: ScriptedFailure,
        #[serde(default)]
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "responses", rename_all = "lowercase")]
pub enum MockScript {
    Fingerprint(BTreeMap<String, MockReply>),
    Sequence(Vec<MockReply>),
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read mock script {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid mock script {path}: {reason}")]
    Invalid { path: String, reason: String },
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ScriptError::Invalid {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("scripts serialize");
        std::fs::write(path, text + "\n")
    }
}

/// Replays a [`MockScript`]. Never touches the network.
#[derive(Debug)]
pub struct MockProvider {
    script: MockScript,
    cursor: Mutex<usize>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        MockProvider {
            script,
            cursor: Mutex::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn sequence<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(MockScript::Sequence(
            texts.into_iter().map(|t| MockReply::Text(t.into())).collect(),
        ))
    }

    /// Number of `complete` calls served so far, including scripted errors.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn reply_for(&self, request: &ChatRequest) -> Option<MockReply> {
        match &self.script {
            MockScript::Fingerprint(map) => map.get(request.request_id()).cloned(),
            MockScript::Sequence(items) => {
                let mut cursor = self.cursor.lock().expect("mock cursor poisoned");
                let item = items.get(*cursor).cloned();
                if item.is_some() {
                    *cursor += 1;
                }
                item
            }
        }
    }
}

fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl ChatProvider for MockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.reply_for(request) {
            Some(MockReply::Text(content)) => Ok(ChatResponse {
                prompt_tokens: request.messages.iter().map(|m| word_count(&m.content)).sum(),
                completion_tokens: word_count(&content),
                content,
                latency: Duration::ZERO,
                provider: "mock".into(),
            }),
            Some(MockReply::Error { error, message }) => Err(match error {
                ScriptedFailure::Transient => ProviderError::Transient(message),
                ScriptedFailure::Permanent => ProviderError::Permanent(message),
            }),
            None => Err(ProviderError::ScriptExhausted(request.request_id().to_string())),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_mode() {
        let req = ChatRequest::user("gpt-4", "design things", 1.0, 64).unwrap();
        let other = ChatRequest::user("gpt-4", "something else", 1.0, 64).unwrap();
        let mock = MockProvider::new(MockScript::Fingerprint(BTreeMap::from([(
            req.request_id().to_string(),
            MockReply::Text("Question 1: ...".into()),
        )])));
        let resp = mock.complete(&req).unwrap();
        assert_eq!(resp.content, "Question 1: ...");
        assert_eq!(resp.prompt_tokens, 2);
        assert_eq!(resp.completion_tokens, 3);
        // Keyed replies are reusable.
        assert_eq!(mock.complete(&req).unwrap().content, "Question 1: ...");
        assert!(matches!(mock.complete(&other), Err(ProviderError::ScriptExhausted(_))));
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn sequence_mode_with_errors() {
        let mock = MockProvider::new(MockScript::Sequence(vec![
            MockReply::Error { error: ScriptedFailure::Transient, message: "429".into() },
            MockReply::Text("ok".into()),
        ]));
        let req = ChatRequest::user("m", "x", 0.0, 8).unwrap();
        assert_eq!(mock.complete(&req), Err(ProviderError::Transient("429".into())));
        assert_eq!(mock.complete(&req).unwrap().content, "ok");
        assert!(matches!(mock.complete(&req), Err(ProviderError::ScriptExhausted(_))));
    }

    #[test]
    fn script_file_format() {
        let json = r#"{"mode": "sequence", "responses": ["a", {"error": "permanent", "message": "bad"}]}"#;
        let script: MockScript = serde_json::from_str(json).unwrap();
        assert_eq!(
            script,
            MockScript::Sequence(vec![
                MockReply::Text("a".into()),
                MockReply::Error { error: ScriptedFailure::Permanent, message: "bad".into() },
            ])
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        script.save(&path).unwrap();
        assert_eq!(MockScript::load(&path).unwrap(), script);
    }

    #[test]
    fn identical_streams_identical_responses() {
        let script = MockScript::Sequence(vec![MockReply::Text("a".into()), MockReply::Text("b".into())]);
        let run = || {
            let mock = MockProvider::new(script.clone());
            let req = ChatRequest::user("m", "x", 0.0, 8).unwrap();
            (0..2).map(|_| mock.complete(&req).unwrap().content).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
