//! Chat-completion providers and the parsing contract for their outputs.
//!
//! A [`ChatProvider`] turns one [`ChatRequest`] into one [`ChatResponse`].
//! Providers compose: [`with_retry`] and [`rate_limited`] wrap any provider
//! and are themselves providers.

mod cost;
mod http;
mod mock;
mod parse;
mod rate_limit;
mod retry;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cost::{CostError, CostLedger, ModelPrice, ModelTotals, PriceTable};
pub use http::HttpProvider;
pub use mock::{MockProvider, MockReply, MockScript, ScriptError, ScriptedFailure};
pub use parse::{
    format_multichoice, format_pairs, parse_multichoice_response, parse_synthesis_response,
    parse_verdict, MultiChoice, ParseError, QaPair, Verdict,
};
pub use rate_limit::{rate_limited, RateLimit, RateLimited};
pub use retry::{with_retry, RetryPolicy, RetryProvider, Sleeper};

pub const API_KEY_ENV: &str = "COMVINT_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("a request needs at least one message")]
    NoMessages,
    #[error("the last message must come from the user")]
    LastNotUser,
    #[error("temperature {0} is outside [0, 2]")]
    Temperature(String),
    #[error("max_tokens must be positive")]
    MaxTokens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    request_id: String,
}

impl ChatRequest {
    pub fn new(
        model: impl Into<String>,
        messages: Vec<ChatMessage>,
        temperature: f64,
        max_tokens: u32,
    ) -> Result<Self, RequestError> {
        if messages.is_empty() {
            return Err(RequestError::NoMessages);
        }
        if messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(RequestError::LastNotUser);
        }
        if !(0.0..=2.0).contains(&temperature) {
            return Err(RequestError::Temperature(temperature.to_string()));
        }
        if max_tokens == 0 {
            return Err(RequestError::MaxTokens);
        }
        let model = model.into();
        let request_id = fingerprint(&model, &messages, temperature, max_tokens);
        Ok(ChatRequest {
            model,
            messages,
            temperature,
            max_tokens,
            request_id,
        })
    }

    /// Single-turn request.
    pub fn user(model: &str, prompt: impl Into<String>, temperature: f64, max_tokens: u32) -> Result<Self, RequestError> {
        Self::new(model, vec![ChatMessage::user(prompt)], temperature, max_tokens)
    }

    /// Content fingerprint: SHA-256 over model, ordered messages (with
    /// `\r\n` folded to `\n`), temperature and max_tokens.
    pub fn request_id(&self) -> &str {
        &self.request_id
    }

    /// The prompt text of the final user message.
    pub fn last_user_content(&self) -> &str {
        &self.messages.last().expect("validated non-empty").content
    }
}

fn fingerprint(model: &str, messages: &[ChatMessage], temperature: f64, max_tokens: u32) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        model: &'a str,
        messages: Vec<(Role, String)>,
        temperature: f64,
        max_tokens: u32,
    }
    let canonical = Canonical {
        model,
        messages: messages
            .iter()
            .map(|m| (m.role, m.content.replace("\r\n", "\n")))
            .collect(),
        temperature,
        max_tokens,
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency: Duration,
    pub provider: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    /// Rate limiting, server errors and timeouts; worth retrying.
    #[error("transient provider error: {0}")]
    Transient(String),
    #[error("permanent provider error: {0}")]
    Permanent(String),
    #[error("mock script has no response for request {0}")]
    ScriptExhausted(String),
}

impl ProviderError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transient(_))
    }
}

/// A chat-completion backend, shareable across worker threads.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;

    fn name(&self) -> &str;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}
