//! Chat-with-images backends.
//!
//! Everything the agent and the judge say to a model goes through
//! [`ChatBackend`]. Implementations:
//!
//! - [`OpenAiBackend`]: OpenAI-compatible `POST /chat/completions` over HTTP
//!   with retry and backoff
//! - [`ScriptedBackend`], [`FnBackend`], [`HiddenObjectOracle`]:
//!   deterministic offline backends for tests and fixtures
//! - [`RecordReplay`]: persists responses by request hash and serves them
//!   back without network access

mod cache;
mod mock;
mod openai;

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{read_session, CacheEntry, RecordReplay};
pub use mock::{FnBackend, HiddenObjectOracle, ScriptEntry, ScriptedBackend, ScriptedTranscript};
pub use openai::{backoff_delays, build_request_body, parse_response_body, OpenAiBackend};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication rejected (HTTP {status}): {body}")]
    AuthFailure { status: u16, body: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("script exhausted after {served} replies")]
    ScriptExhausted { served: usize },
    #[error("no recorded response for request {hash}")]
    CacheMiss { hash: String },
    #[error("request carries {count} images, limit is {limit}")]
    TooManyImages { count: usize, limit: usize },
    #[error("empty request: {0}")]
    EmptyRequest(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    /// Encoded image bytes (PNG or JPEG) and their media type.
    Image { data: Vec<u8>, media_type: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl ChatMessage {
    pub fn new(role: Role, parts: Vec<Part>) -> Self {
        ChatMessage { role, parts }
    }

    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage::new(Role::System, vec![Part::Text(text.into())])
    }

    pub fn user_text(text: impl Into<String>) -> Self {
        ChatMessage::new(Role::User, vec![Part::Text(text.into())])
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage::new(Role::Assistant, vec![Part::Text(text.into())])
    }

    /// All text parts joined by newlines.
    pub fn text(&self) -> String {
        let texts: Vec<&str> = self
            .parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image { .. } => None,
            })
            .collect();
        texts.join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.parts
            .iter()
            .filter(|p| matches!(p, Part::Image { .. }))
            .count()
    }
}

pub fn total_images(messages: &[ChatMessage]) -> usize {
    messages.iter().map(ChatMessage::image_count).sum()
}

/// Text of the most recent user message, or empty.
pub fn latest_user_text(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(ChatMessage::text)
        .unwrap_or_default()
}

/// Checks request preconditions shared by all backends.
pub fn validate_request(messages: &[ChatMessage], max_images: usize) -> Result<(), GatewayError> {
    if messages.is_empty() {
        return Err(GatewayError::EmptyRequest("no messages".into()));
    }
    if let Some(i) = messages.iter().position(|m| m.parts.is_empty()) {
        return Err(GatewayError::EmptyRequest(format!("message {i} has no parts")));
    }
    let count = total_images(messages);
    if count > max_images {
        return Err(GatewayError::TooManyImages {
            count,
            limit: max_images,
        });
    }
    Ok(())
}

/// A model that answers chat requests with text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError>;

    /// Short human-readable identity for logs.
    fn describe(&self) -> String;
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        (**self).complete(messages)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Connection and sampling settings for an HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Largest number of images one request may carry.
    pub max_images: usize,
    /// First retry delay; later delays double.
    pub backoff_base_s: f64,
    /// Global dispatch limit; `None` disables limiting.
    pub requests_per_minute: Option<u32>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            timeout_s: 120.0,
            max_retries: 3,
            api_key_env: "OPENAI_API_KEY".into(),
            max_images: 64,
            backoff_base_s: 1.0,
            requests_per_minute: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.timeout_s > 0.0) {
            return Err(format!("timeout_s must be > 0, got {}", self.timeout_s));
        }
        if !(self.backoff_base_s >= 0.0) {
            return Err(format!("backoff_base_s must be >= 0, got {}", self.backoff_base_s));
        }
        if self.requests_per_minute == Some(0) {
            return Err("requests_per_minute must be positive when set".into());
        }
        Ok(())
    }

    pub fn chat_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Serializes dispatch so that at most `rpm` requests start per minute.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(rpm: u32) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(60.0 / f64::from(rpm.max(1))),
            next: Mutex::new(None),
        }
    }

    /// Blocks until the caller may dispatch.
    pub fn acquire(&self) {
        let mut next = self.next.lock().expect("rate limiter poisoned");
        let now = Instant::now();
        if let Some(at) = *next {
            if at > now {
                std::thread::sleep(at - now);
            }
        }
        let start = Instant::now();
        *next = Some(start + self.interval);
    }
}

/// Stable content hash of a request: SHA-256 over a length-prefixed
/// encoding of every message, hex encoded.
///
/// Per message: one role byte (`s`, `u`, `a`), the part count as u64 LE,
/// then per part either `T` + u64 LE length + UTF-8 text, or `I` + u64 LE
/// media type length + media type + u64 LE data length + data.
pub fn request_hash(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update([match m.role {
            Role::System => b's',
            Role::User => b'u',
            Role::Assistant => b'a',
        }]);
        h.update((m.parts.len() as u64).to_le_bytes());
        for p in &m.parts {
            match p {
                Part::Text(t) => {
                    h.update(b"T");
                    h.update((t.len() as u64).to_le_bytes());
                    h.update(t.as_bytes());
                }
                Part::Image { data, media_type } => {
                    h.update(b"I");
                    h.update((media_type.len() as u64).to_le_bytes());
                    h.update(media_type.as_bytes());
                    h.update((data.len() as u64).to_le_bytes());
                    h.update(data);
                }
            }
        }
    }
    hex::encode(h.finalize())
}
