//! OpenAI-compatible chat-completions client with a persistent response cache.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::OnceCell;

use crate::error::TransportError;
use crate::retry::{with_retry, Failure, RetryPolicy};

pub const API_KEY_ENV: &str = "LLM_API_KEY";
pub const CACHE_DIR_ENV: &str = "LLM_CACHE_DIR";
pub const CACHE_FILE: &str = "chat_cache.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        ChatRequest {
            model: model.into(),
            messages,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(TransportError::Config(
                "chat request must end with a user message".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(TransportError::Config(format!(
                "temperature {} must be non-negative",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the request's canonical JSON.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("in-memory serialization");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub cached: bool,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    content: String,
}

/// Digest-keyed response store, optionally backed by an append-only JSONL file.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: Mutex<HashMap<String, String>>,
    file: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    /// Opens (creating if needed) `<dir>/chat_cache.jsonl`.
    pub fn open(dir: &Path) -> crate::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let file = dir.join(CACHE_FILE);
        let mut entries = HashMap::new();
        if file.exists() {
            for line in std::fs::read_to_string(&file)?.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(line) {
                    Ok(r) => {
                        entries.insert(r.key, r.content);
                    }
                    // A torn final line from an interrupted run is skipped.
                    Err(e) => tracing::warn!(error = %e, "skipping unreadable cache line"),
                }
            }
        }
        Ok(ResponseCache {
            entries: Mutex::new(entries),
            file: Some(file),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, key: &str, content: &str) -> crate::Result<()> {
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(key) {
            return Ok(());
        }
        if let Some(path) = &self.file {
            let mut line = serde_json::to_string(&CacheRecord {
                key: key.to_string(),
                content: content.to_string(),
            })?;
            line.push('\n');
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?
                .write_all(line.as_bytes())?;
        }
        entries.insert(key.to_string(), content.to_string());
        Ok(())
    }
}

#[derive(Serialize)]
struct WireBody<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// Chat client. Concurrent identical requests share one network call.
#[derive(Debug)]
pub struct LlmClient {
    http: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    cache: ResponseCache,
    inflight: Mutex<HashMap<String, Arc<OnceCell<String>>>>,
    network_calls: AtomicU64,
}

impl LlmClient {
    pub fn new(base_url: &str, api_key: Option<String>, cache: ResponseCache) -> Result<Self, TransportError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| TransportError::Config(e.to_string()))?;
        Ok(LlmClient {
            http,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            retry: RetryPolicy::default(),
            cache,
            inflight: Mutex::new(HashMap::new()),
            network_calls: AtomicU64::new(0),
        })
    }

    /// Credential from `LLM_API_KEY`.
    pub fn from_env(base_url: &str, cache: ResponseCache) -> Result<Self, TransportError> {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok(), cache)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub async fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        request.validate()?;
        let key = request.cache_key();
        if let Some(content) = self.cache.get(&key) {
            return Ok(ChatResponse { content, cached: true });
        }
        let cell = self
            .inflight
            .lock()
            .unwrap()
            .entry(key.clone())
            .or_default()
            .clone();
        let mut fetched = false;
        let content = cell
            .get_or_try_init(|| async {
                if let Some(content) = self.cache.get(&key) {
                    return Ok(content);
                }
                fetched = true;
                let content = self.fetch(request).await?;
                self.cache
                    .put(&key, &content)
                    .map_err(|e| TransportError::Config(format!("cache write failed: {e}")))?;
                Ok::<_, TransportError>(content)
            })
            .await?
            .clone();
        self.inflight.lock().unwrap().remove(&key);
        Ok(ChatResponse {
            content,
            cached: !fetched,
        })
    }

    async fn fetch(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = WireBody {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
        };
        with_retry(&self.retry, || async {
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            let mut req = self.http.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().await.map_err(|e| Failure::Retryable(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(Failure::from_status(status, "chat endpoint"));
            }
            let parsed: WireResponse = resp
                .json()
                .await
                .map_err(|e| Failure::Fatal(TransportError::Protocol(e.to_string())))?;
            parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| Failure::Fatal(TransportError::Protocol("response has no choices[0].message.content".into())))
        })
        .await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_key_depends_on_every_field() {
        let base = ChatRequest::new("m", vec![Message::user("hi")]);
        let mut other_model = base.clone();
        other_model.model = "m2".into();
        let mut other_temp = base.clone();
        other_temp.temperature = 0.5;
        let mut other_msg = base.clone();
        other_msg.messages[0].content = "hi!".into();
        let keys = [base.cache_key(), other_model.cache_key(), other_temp.cache_key(), other_msg.cache_key()];
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert_ne!(keys[i], keys[j]);
            }
        }
        assert_eq!(base.cache_key(), base.clone().cache_key());
        assert_eq!(base.cache_key().len(), 64);
    }

    #[test]
    fn request_validation() {
        assert!(ChatRequest::new("m", vec![]).validate().is_err());
        assert!(ChatRequest::new("m", vec![Message::system("s")]).validate().is_err());
        let mut r = ChatRequest::new("m", vec![Message::user("u")]);
        r.temperature = -1.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn cache_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let c = ResponseCache::open(dir.path()).unwrap();
            c.put("k1", "A").unwrap();
            c.put("k1", "A").unwrap();
            c.put("k2", "line\nbreak").unwrap();
        }
        let c = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(c.get("k1").as_deref(), Some("A"));
        assert_eq!(c.get("k2").as_deref(), Some("line\nbreak"));
        let lines = std::fs::read_to_string(dir.path().join(CACHE_FILE)).unwrap();
        assert_eq!(lines.lines().count(), 2);
    }
}
