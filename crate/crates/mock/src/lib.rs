//! In-process HTTP test doubles for the two remote services the toolkit
//! talks to: the seq2seq tagger (`POST /tag`) and an OpenAI-compatible
//! chat endpoint (`POST /chat/completions`).
//!
//! Both servers bind an ephemeral localhost port, count every request they
//! receive, and can inject failures and per-request delays.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagBody {
    pub instruction: String,
    pub tokens: Vec<String>,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatBody {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatBody {
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map_or("", |m| m.content.as_str())
    }
}

/// Knobs shared by both mocks.
#[derive(Debug, Clone, Default)]
pub struct Faults {
    /// The first `fail_first` requests get HTTP 503.
    pub fail_first: usize,
    /// Each request sleeps a pseudo-random 0..=max_delay_ms derived from its body.
    pub max_delay_ms: u64,
}

#[derive(Default)]
struct Recorder {
    hits: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    bodies: Mutex<Vec<Value>>,
}

struct InFlight<'a>(&'a Recorder);

impl<'a> InFlight<'a> {
    fn enter(r: &'a Recorder) -> Self {
        let now = r.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        r.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight(r)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// A running mock. The server task is aborted on drop.
pub struct MockServer {
    addr: SocketAddr,
    recorder: Arc<Recorder>,
    task: JoinHandle<()>,
}

impl MockServer {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received, including those answered with an injected failure.
    pub fn hits(&self) -> usize {
        self.recorder.hits.load(Ordering::SeqCst)
    }

    /// Highest number of requests observed inside a handler at once.
    pub fn max_in_flight(&self) -> usize {
        self.recorder.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.recorder.bodies.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn serve(router: Router, recorder: Arc<Recorder>, addr: SocketAddr) -> std::io::Result<MockServer> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!(error = %e, "mock server stopped");
        }
    });
    Ok(MockServer { addr, recorder, task })
}

fn delay_for(body: &impl Hash, max_ms: u64) -> Duration {
    if max_ms == 0 {
        return Duration::ZERO;
    }
    let mut h = DefaultHasher::new();
    body.hash(&mut h);
    Duration::from_millis(h.finish() % (max_ms + 1))
}

/// Records the request and decides whether to inject a failure.
async fn admit(recorder: &Recorder, faults: &Faults, body: Value, delay_key: &impl Hash) -> Result<(), Response> {
    let n = recorder.hits.fetch_add(1, Ordering::SeqCst);
    recorder.bodies.lock().unwrap().push(body);
    tokio::time::sleep(delay_for(delay_key, faults.max_delay_ms)).await;
    if n < faults.fail_first {
        return Err((StatusCode::SERVICE_UNAVAILABLE, "injected failure").into_response());
    }
    Ok(())
}

/// Scripted tagger keyed by the space-joined tokens of the request.
#[derive(Debug, Clone, Default)]
pub struct TaggerScript {
    pub by_text: HashMap<String, String>,
    pub faults: Faults,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaggerScriptRecord {
    pub text: String,
    pub label_text: String,
}

impl TaggerScript {
    pub fn insert(&mut self, text: impl Into<String>, label_text: impl Into<String>) {
        self.by_text.insert(text.into(), label_text.into());
    }

    /// `{"text": str, "label_text": str}` per line.
    pub fn from_jsonl(text: &str) -> serde_json::Result<Self> {
        let mut script = TaggerScript::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let r: TaggerScriptRecord = serde_json::from_str(line)?;
            script.insert(r.text, r.label_text);
        }
        Ok(script)
    }
}

struct TaggerState {
    script: TaggerScript,
    recorder: Arc<Recorder>,
}

async fn tag_handler(State(state): State<Arc<TaggerState>>, Json(body): Json<TagBody>) -> Response {
    let _guard = InFlight::enter(&state.recorder);
    let text = body.tokens.join(" ");
    let value = serde_json::to_value(&body).unwrap_or(Value::Null);
    if let Err(r) = admit(&state.recorder, &state.script.faults, value, &text).await {
        return r;
    }
    let label_text = state
        .script
        .by_text
        .get(&text)
        .cloned()
        .unwrap_or_else(|| "none".to_string());
    Json(json!({ "label_text": label_text })).into_response()
}

pub async fn spawn_tagger(script: TaggerScript) -> std::io::Result<MockServer> {
    spawn_tagger_at(script, SocketAddr::from(([127, 0, 0, 1], 0))).await
}

pub async fn spawn_tagger_at(script: TaggerScript, addr: SocketAddr) -> std::io::Result<MockServer> {
    let recorder = Arc::new(Recorder::default());
    let state = Arc::new(TaggerState {
        script,
        recorder: recorder.clone(),
    });
    let router = Router::new().route("/tag", post(tag_handler)).with_state(state);
    serve(router, recorder, addr).await
}

pub type Responder = Arc<dyn Fn(&ChatBody) -> String + Send + Sync>;

#[derive(Clone)]
pub struct LlmScript {
    pub responder: Responder,
    pub faults: Faults,
    /// When set, requests without `Authorization: Bearer <key>` get HTTP 401.
    pub require_key: Option<String>,
    /// Reply with a body lacking `choices`, to exercise protocol errors.
    pub malformed: bool,
}

impl LlmScript {
    pub fn new(responder: impl Fn(&ChatBody) -> String + Send + Sync + 'static) -> Self {
        LlmScript {
            responder: Arc::new(responder),
            faults: Faults::default(),
            require_key: None,
            malformed: false,
        }
    }

    /// Always answers `reply`.
    pub fn constant(reply: impl Into<String>) -> Self {
        let reply = reply.into();
        Self::new(move |_| reply.clone())
    }

    pub fn from_rules(rules: RuleSet) -> Self {
        Self::new(move |body| rules.reply(body.last_user()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rule {
    pub contains: String,
    pub reply: String,
}

/// First rule whose `contains` is a substring of the last user message wins.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleSet {
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub default: String,
}

impl RuleSet {
    pub fn reply(&self, prompt: &str) -> String {
        self.rules
            .iter()
            .find(|r| prompt.contains(&r.contains))
            .map_or_else(|| self.default.clone(), |r| r.reply.clone())
    }
}

struct LlmState {
    script: LlmScript,
    recorder: Arc<Recorder>,
}

async fn chat_handler(State(state): State<Arc<LlmState>>, headers: HeaderMap, Json(body): Json<ChatBody>) -> Response {
    let _guard = InFlight::enter(&state.recorder);
    let value = serde_json::to_value(&body).unwrap_or(Value::Null);
    let key = body.last_user().to_string();
    if let Err(r) = admit(&state.recorder, &state.script.faults, value, &key).await {
        return r;
    }
    if let Some(expected) = &state.script.require_key {
        let ok = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == format!("Bearer {expected}"));
        if !ok {
            return (StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response();
        }
    }
    if state.script.malformed {
        return Json(json!({ "object": "chat.completion" })).into_response();
    }
    let content = (state.script.responder)(&body);
    Json(json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "model": body.model,
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": content },
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

pub async fn spawn_llm(script: LlmScript) -> std::io::Result<MockServer> {
    spawn_llm_at(script, SocketAddr::from(([127, 0, 0, 1], 0))).await
}

pub async fn spawn_llm_at(script: LlmScript, addr: SocketAddr) -> std::io::Result<MockServer> {
    let recorder = Arc::new(Recorder::default());
    let state = Arc::new(LlmState {
        script,
        recorder: recorder.clone(),
    });
    let router = Router::new()
        .route("/chat/completions", post(chat_handler))
        .with_state(state);
    serve(router, recorder, addr).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_first_match_wins() {
        let rules = RuleSet {
            rules: vec![
                Rule { contains: "Obama".into(), reply: "B".into() },
                Rule { contains: "Oba".into(), reply: "C".into() },
            ],
            default: "A".into(),
        };
        assert_eq!(rules.reply("Entity: Obama"), "B");
        assert_eq!(rules.reply("Entity: Merkel"), "A");
    }

    #[test]
    fn delays_are_bounded_and_stable() {
        for i in 0..100 {
            let d = delay_for(&i, 7);
            assert!(d <= Duration::from_millis(7));
            assert_eq!(d, delay_for(&i, 7));
        }
        assert_eq!(delay_for(&"x", 0), Duration::ZERO);
    }
}
