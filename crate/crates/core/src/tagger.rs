//! Sequence-tagger access. The fine-tuned seq2seq model lives outside this
//! crate and is reached over a small JSON protocol (`POST {base}/tag`), or
//! replaced by a [`ScriptedTagger`] in tests.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedSentence;
use crate::error::TransportError;
use crate::label_codec::{ground_spans, parse_plain, Instruction, NONE_SENTINEL};
use crate::retry::{with_retry, Failure, RetryPolicy};

pub const DEFAULT_PARALLELISM: usize = 4;
pub const DEFAULT_TIMEOUT_SECS: u64 = 30;
pub const TIMEOUT_ENV: &str = "TAGGER_TIMEOUT_SECS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagMode {
    Plain,
    Reassign,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagRequest {
    /// Sentence id; not sent over the wire, used by scripted taggers.
    pub id: String,
    pub instruction: String,
    pub tokens: Vec<String>,
    pub mode: TagMode,
}

impl TagRequest {
    pub fn for_sentence(sentence: &AnnotatedSentence, instruction: &Instruction, mode: TagMode) -> Self {
        TagRequest {
            id: sentence.id.clone(),
            instruction: instruction.text.clone(),
            tokens: sentence.tokens.clone(),
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagResponse {
    pub label_text: String,
    pub latency: Duration,
}

#[async_trait]
pub trait Tagger: Send + Sync {
    async fn tag(&self, request: &TagRequest) -> Result<String, TransportError>;
}

/// Returns a fixed label text per sentence id, `"none"` for unscripted ids.
#[derive(Debug, Clone, Default)]
pub struct ScriptedTagger {
    script: HashMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ScriptRecord {
    id: String,
    label_text: String,
}

impl ScriptedTagger {
    pub fn new(script: HashMap<String, String>) -> Self {
        ScriptedTagger { script }
    }

    pub fn insert(&mut self, id: impl Into<String>, label_text: impl Into<String>) {
        self.script.insert(id.into(), label_text.into());
    }

    /// Reads `{"id": str, "label_text": str}` records, one per line.
    pub fn from_jsonl(text: &str) -> crate::Result<Self> {
        let mut script = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let r: ScriptRecord = serde_json::from_str(line)?;
            script.insert(r.id, r.label_text);
        }
        Ok(ScriptedTagger { script })
    }

    pub fn to_jsonl(&self) -> String {
        let mut ids: Vec<&String> = self.script.keys().collect();
        ids.sort();
        let mut out = String::new();
        for id in ids {
            let r = ScriptRecord {
                id: id.clone(),
                label_text: self.script[id].clone(),
            };
            out.push_str(&serde_json::to_string(&r).expect("in-memory serialization"));
            out.push('\n');
        }
        out
    }
}

#[async_trait]
impl Tagger for ScriptedTagger {
    async fn tag(&self, request: &TagRequest) -> Result<String, TransportError> {
        Ok(self
            .script
            .get(&request.id)
            .cloned()
            .unwrap_or_else(|| NONE_SENTINEL.to_string()))
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    instruction: &'a str,
    tokens: &'a [String],
    mode: TagMode,
}

#[derive(Deserialize)]
struct WireResponse {
    label_text: String,
}

/// Client for an external tagger speaking the `/tag` protocol.
#[derive(Debug, Clone)]
pub struct HttpTagger {
    client: reqwest::Client,
    endpoint: String,
    retry: RetryPolicy,
}

impl HttpTagger {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Config(e.to_string()))?;
        Ok(HttpTagger {
            client,
            endpoint: format!("{}/tag", base_url.trim_end_matches('/')),
            retry: RetryPolicy::default(),
        })
    }

    /// Timeout from `TAGGER_TIMEOUT_SECS`, default 30 s.
    pub fn from_env(base_url: &str) -> Result<Self, TransportError> {
        let secs = match std::env::var(TIMEOUT_ENV) {
            Ok(v) => v
                .parse::<u64>()
                .map_err(|_| TransportError::Config(format!("{TIMEOUT_ENV}={v:?} is not an integer")))?,
            Err(_) => DEFAULT_TIMEOUT_SECS,
        };
        Self::new(base_url, Duration::from_secs(secs))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

#[async_trait]
impl Tagger for HttpTagger {
    async fn tag(&self, request: &TagRequest) -> Result<String, TransportError> {
        let body = WireRequest {
            instruction: &request.instruction,
            tokens: &request.tokens,
            mode: request.mode,
        };
        with_retry(&self.retry, || async {
            let resp = self
                .client
                .post(&self.endpoint)
                .json(&body)
                .send()
                .await
                .map_err(|e| Failure::Retryable(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(Failure::from_status(status, "tagger"));
            }
            let parsed: WireResponse = resp
                .json()
                .await
                .map_err(|e| Failure::Fatal(TransportError::Protocol(e.to_string())))?;
            Ok(parsed.label_text)
        })
        .await
    }
}

/// Tags every request with at most `parallelism` in flight. Output order is
/// request order; failures are reported per item.
pub async fn tag_batch(
    tagger: &dyn Tagger,
    requests: &[TagRequest],
    parallelism: usize,
) -> Vec<Result<TagResponse, TransportError>> {
    stream::iter(requests)
        .map(|req| async move {
            let started = Instant::now();
            tagger.tag(req).await.map(|label_text| TagResponse {
                label_text,
                latency: started.elapsed(),
            })
        })
        .buffered(parallelism.max(1))
        .collect()
        .await
}

/// Counters accumulated while decoding tagger output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub malformed: usize,
    pub dropped: usize,
    pub errors: usize,
}

impl DecodeReport {
    pub fn absorb(&mut self, other: DecodeReport) {
        self.malformed += other.malformed;
        self.dropped += other.dropped;
        self.errors += other.errors;
    }
}

/// Source-model predictions over a split, one sentence per input sentence
/// with the same id and tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub sentences: Vec<AnnotatedSentence>,
    pub report: DecodeReport,
}

pub async fn pseudo_label(
    split: &[AnnotatedSentence],
    instruction: &Instruction,
    tagger: &dyn Tagger,
    parallelism: usize,
) -> crate::Result<PseudoLabels> {
    let requests: Vec<TagRequest> = split
        .iter()
        .map(|s| TagRequest::for_sentence(s, instruction, TagMode::Plain))
        .collect();
    let responses = tag_batch(tagger, &requests, parallelism).await;
    let mut report = DecodeReport::default();
    let mut sentences = Vec::with_capacity(split.len());
    for (sentence, response) in split.iter().zip(responses) {
        let entities = match response {
            Ok(r) => {
                let parsed = parse_plain(&r.label_text);
                let grounding = ground_spans(&parsed.lines, &sentence.tokens);
                report.malformed += parsed.malformed;
                report.dropped += grounding.dropped;
                grounding.spans(&sentence.tokens)
            }
            Err(e) => {
                tracing::warn!(id = %sentence.id, error = %e, "tagger request failed");
                report.errors += 1;
                Vec::new()
            }
        };
        sentences.push(AnnotatedSentence::new(
            sentence.id.clone(),
            sentence.domain.clone(),
            sentence.tokens.clone(),
            entities,
        )?);
    }
    Ok(PseudoLabels { sentences, report })
}
