//! Chat-completion backends: an OpenAI-compatible HTTP client and a
//! deterministic mock resolving fixtures by request digest or matcher rules.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, request_digest, ChatRequest, ChatResponse, LlmError, API_KEY_ENV};

pub enum Backend {
    Http(HttpBackend),
    Mock(MockBackend),
}

impl Backend {
    pub(crate) fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        match self {
            Backend::Http(http) => http.send(request),
            Backend::Mock(mock) => mock.send(request),
        }
    }

    pub fn mock(&self) -> Option<&MockBackend> {
        match self {
            Backend::Mock(m) => Some(m),
            Backend::Http(_) => None,
        }
    }
}

// --- HTTP (OpenAI-compatible chat completions) ---

pub struct HttpBackend {
    base_url: String,
    timeout: std::time::Duration,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: String,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpBackend {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, std::time::Duration::from_secs(120))
    }

    pub fn with_timeout(base_url: &str, timeout: std::time::Duration) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            timeout,
            client: reqwest::blocking::Client::new(),
        }
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| LlmError::AuthError(format!("{API_KEY_ENV} not set")))?;
        let body = WireRequest {
            model: &request.model,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: m.role.to_string(),
                    content: &m.content,
                })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let url = format!("{}/chat/completions", self.base_url);
        let response = self
            .client
            .post(&url)
            .bearer_auth(api_key)
            .timeout(self.timeout)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    LlmError::Timeout { attempts: 1 }
                } else {
                    LlmError::Http(e.to_string())
                }
            })?;
        let status = response.status();
        match status.as_u16() {
            200 => {}
            401 | 403 => {
                return Err(LlmError::AuthError(format!("status {status}")));
            }
            429 => {
                return Err(LlmError::RateLimited { attempts: 1 });
            }
            408 => {
                return Err(LlmError::Timeout { attempts: 1 });
            }
            500..=599 => {
                return Err(LlmError::RateLimited { attempts: 1 });
            }
            _ => {
                let text = response.text().unwrap_or_default();
                return Err(LlmError::Http(format!("status {status}: {text}")));
            }
        }
        let wire: WireResponse = response
            .json()
            .map_err(|e| LlmError::Http(format!("bad response body: {e}")))?;
        let content = wire
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| LlmError::Http("response has no choices".into()))?;
        let (prompt_tokens, completion_tokens) = match wire.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (
                request
                    .messages
                    .iter()
                    .map(|m| estimate_tokens(&m.content))
                    .sum(),
                estimate_tokens(&content),
            ),
        };
        Ok(ChatResponse {
            content,
            prompt_tokens,
            completion_tokens,
            cached: false,
        })
    }
}

// --- Mock ---

/// One matcher rule: fires when every `contains` fragment appears somewhere
/// in the request's message content. A rule with several responses yields
/// them in order and then sticks on the last one.
#[derive(Debug, Clone, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub responses: Vec<String>,
}

#[derive(Debug)]
struct RuleState {
    contains: Vec<String>,
    responses: Vec<String>,
    next: usize,
}

#[derive(Debug, Deserialize)]
struct RulesFile {
    rules: Vec<MockRule>,
}

/// Deterministic offline backend. Resolution order per request:
/// exact digest fixture (in-memory, then `<digest>.txt` in the fixture
/// directory), then matcher rules, then [`LlmError::MockMiss`].
#[derive(Default)]
pub struct MockBackend {
    fixture_dir: Option<PathBuf>,
    inline: HashMap<String, String>,
    rules: Mutex<Vec<RuleState>>,
    calls: AtomicU64,
    log: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a fixture directory of `<digest>.txt` files. A `rules.json`
    /// file in the directory, when present, supplies matcher rules.
    pub fn from_dir(dir: &Path) -> Result<Self, LlmError> {
        let backend = Self {
            fixture_dir: Some(dir.to_path_buf()),
            ..Self::default()
        };
        let rules_path = dir.join("rules.json");
        if rules_path.exists() {
            let raw = std::fs::read_to_string(&rules_path)?;
            let file: RulesFile = serde_json::from_str(&raw)
                .map_err(|e| LlmError::InvalidRequest(format!("bad rules.json: {e}")))?;
            for rule in file.rules {
                backend.push_rule(rule);
            }
        }
        Ok(backend)
    }

    pub fn insert_fixture(&mut self, digest: &str, content: &str) {
        self.inline.insert(digest.to_string(), content.to_string());
    }

    /// Registers a fixture under the digest of `request`.
    pub fn fixture_for(&mut self, request: &ChatRequest, content: &str) {
        self.insert_fixture(&request_digest(request), content);
    }

    pub fn add_rule(&self, contains: &[&str], response: &str) {
        self.push_rule(MockRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            response: Some(response.to_string()),
            responses: Vec::new(),
        });
    }

    pub fn add_rule_sequence(&self, contains: &[&str], responses: &[&str]) {
        self.push_rule(MockRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            response: None,
            responses: responses.iter().map(|s| s.to_string()).collect(),
        });
    }

    fn push_rule(&self, rule: MockRule) {
        let mut responses = rule.responses;
        if let Some(single) = rule.response {
            responses.insert(0, single);
        }
        self.rules.lock().unwrap().push(RuleState {
            contains: rule.contains,
            responses,
            next: 0,
        });
    }

    /// Total completions served.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Completions whose request content contained `needle`.
    pub fn calls_containing(&self, needle: &str) -> usize {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|c| c.contains(needle))
            .count()
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let content: String = request
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap().push(content.clone());

        let digest = request_digest(request);
        let mut reply: Option<String> = self.inline.get(&digest).cloned();
        if reply.is_none() {
            if let Some(dir) = &self.fixture_dir {
                let path = dir.join(format!("{digest}.txt"));
                if path.exists() {
                    reply = Some(std::fs::read_to_string(&path)?);
                }
            }
        }
        if reply.is_none() {
            let mut rules = self.rules.lock().unwrap();
            for rule in rules.iter_mut() {
                if rule.responses.is_empty() {
                    continue;
                }
                if rule.contains.iter().all(|c| content.contains(c)) {
                    let idx = rule.next.min(rule.responses.len() - 1);
                    rule.next += 1;
                    reply = Some(rule.responses[idx].clone());
                    break;
                }
            }
        }
        let reply = reply.ok_or(LlmError::MockMiss(digest))?;
        Ok(ChatResponse {
            prompt_tokens: request
                .messages
                .iter()
                .map(|m| estimate_tokens(&m.content))
                .sum(),
            completion_tokens: estimate_tokens(&reply),
            content: reply,
            cached: false,
        })
    }
}
