//! Content-addressed on-disk response cache keyed by request digest.

use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatResponse, LlmError};

#[derive(Serialize, Deserialize)]
struct CachedResponse {
    content: String,
    prompt_tokens: u64,
    completion_tokens: u64,
}

pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: PathBuf) -> Result<Self, LlmError> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Option<ChatResponse> {
        let raw = std::fs::read_to_string(self.path(digest)).ok()?;
        let cached: CachedResponse = serde_json::from_str(&raw).ok()?;
        Some(ChatResponse {
            content: cached.content,
            prompt_tokens: cached.prompt_tokens,
            completion_tokens: cached.completion_tokens,
            cached: true,
        })
    }

    pub fn put(&self, digest: &str, response: &ChatResponse) -> Result<(), LlmError> {
        let cached = CachedResponse {
            content: response.content.clone(),
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
        };
        let body = serde_json::to_string(&cached)
            .map_err(|e| LlmError::Http(format!("cache encode: {e}")))?;
        let _guard = self.write_lock.lock().unwrap();
        let tmp = self.dir.join(format!(".{digest}.tmp"));
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, self.path(digest))?;
        Ok(())
    }

    /// Number of cached responses; handy for instrumenting call counts.
    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|entries| {
                entries
                    .filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
