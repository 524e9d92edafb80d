//! The client wrapper: bounded in-flight concurrency, retry with exponential
//! backoff on transient failures, and cache integration.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::{request_digest, Backend, ChatRequest, ChatResponse, LlmError, ResponseCache};

/// Exponential backoff schedule: attempt k (1-based) is retried after
/// base × factor^(k−1).
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2.0,
            max_attempts: 5,
        }
    }
}

impl RetryPolicy {
    /// Delay applied after failed attempt `k` (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let scale = self.factor.powi(attempt.saturating_sub(1) as i32);
        self.base.mul_f64(scale)
    }
}

/// Counting semaphore bounding in-flight completions.
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Gate {
    fn new(limit: usize) -> Self {
        Self {
            permits: Mutex::new(limit.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.available.notify_one();
    }
}

pub struct LlmClient {
    backend: Backend,
    retry: RetryPolicy,
    cache: Option<ResponseCache>,
    gate: Gate,
}

impl LlmClient {
    pub fn new(backend: Backend) -> Self {
        Self {
            backend,
            retry: RetryPolicy::default(),
            cache: None,
            gate: Gate::new(4),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.gate = Gate::new(limit);
        self
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    fn transient(error: &LlmError) -> bool {
        matches!(
            error,
            LlmError::RateLimited { .. } | LlmError::Timeout { .. }
        )
    }

    /// Sends a chat completion: cache hit short-circuits; transient failures
    /// are retried per the backoff schedule; identical requests share digests.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let digest = request_digest(request);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&digest) {
                return Ok(hit);
            }
        }
        let _permit = self.gate.acquire();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.backend.send(request) {
                Ok(response) => {
                    if let Some(cache) = &self.cache {
                        cache.put(&digest, &response)?;
                    }
                    return Ok(response);
                }
                Err(e) if Self::transient(&e) && attempt < self.retry.max_attempts => {
                    std::thread::sleep(self.retry.delay(attempt));
                }
                Err(e) => {
                    return Err(match e {
                        LlmError::RateLimited { .. } => LlmError::RateLimited { attempts: attempt },
                        LlmError::Timeout { .. } => LlmError::Timeout { attempts: attempt },
                        other => other,
                    });
                }
            }
        }
    }
}
