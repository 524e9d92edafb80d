//! Provider-agnostic chat-completion client: request digests, JSON
//! extraction from prose-wrapped output, retry/backoff, an on-disk response
//! cache, and a deterministic mock backend for offline runs and tests.

mod backend;
mod cache;
mod client;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{Backend, HttpBackend, MockBackend, MockRule};
pub use cache::ResponseCache;
pub use client::{LlmClient, RetryPolicy};

/// Environment variable holding the API key for HTTP backends.
pub const API_KEY_ENV: &str = "RHINO_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("mock backend has no fixture for digest {0}")]
    MockMiss(String),
    #[error("no JSON value found in model output")]
    NoJsonFound,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("http error: {0}")]
    Http(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::System => f.write_str("system"),
            Role::User => f.write_str("user"),
            Role::Assistant => f.write_str("assistant"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn user(model: &str, content: String, temperature: f64, max_tokens: u32) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: Role::User,
                content,
            }],
            temperature,
            max_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if self.messages[0].role == Role::Assistant {
            return Err(LlmError::InvalidRequest(
                "first message must be system or user".into(),
            ));
        }
        if self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("negative temperature".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cached: bool,
}

/// Stable content hash over (model, messages, temperature) with
/// whitespace-normalized message content. Order-sensitive in the messages.
pub fn request_digest(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"model\0");
    hasher.update(request.model.as_bytes());
    hasher.update(b"\0temperature\0");
    hasher.update(format!("{:.6}", request.temperature).as_bytes());
    for message in &request.messages {
        hasher.update(b"\0role\0");
        hasher.update(message.role.to_string().as_bytes());
        hasher.update(b"\0content\0");
        let normalized = message
            .content
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        hasher.update(normalized.as_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Finds and parses the first balanced JSON object or array in model output,
/// tolerating prose and code fences around it.
pub fn extract_json(content: &str) -> Result<serde_json::Value, LlmError> {
    let bytes: Vec<char> = content.chars().collect();
    let mut start = 0;
    while start < bytes.len() {
        let open = match bytes[start] {
            '{' => '}',
            '[' => ']',
            _ => {
                start += 1;
                continue;
            }
        };
        if let Some(end) = balanced_end(&bytes, start, bytes[start], open) {
            let candidate: String = bytes[start..=end].iter().collect();
            if let Ok(value) = serde_json::from_str(&candidate) {
                return Ok(value);
            }
        }
        start += 1;
    }
    Err(LlmError::NoJsonFound)
}

fn balanced_end(chars: &[char], start: usize, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &ch) in chars.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            c if c == open => depth += 1,
            c if c == close => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

pub(crate) fn estimate_tokens(text: &str) -> u64 {
    crate::preprocess::estimate_tokens(text)
}
