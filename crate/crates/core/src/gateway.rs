//! OpenAI-compatible HTTP gateway for chat completions and embeddings,
//! prompt templates, and token accounting split by pipeline phase.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Chunk;
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "UNWEAVER_API_KEY";
pub const BASE_URL_ENV: &str = "UNWEAVER_BASE_URL";

/// System prompt used for answer generation. `{context}` is replaced by the
/// elected chunks.
pub const ANSWER_TEMPLATE: &str = concat!(
    "    You are a question answering system.\n",
    "    Please make sure that the answer is correct and complete. \n",
    "    At the same time avoid redundancy and irrelevant information.\n",
    "    Please try to answer the question in Single Sentence.\n",
    "\n",
    "    Do so based on the following context:\n",
    "    \n",
    "    {context}",
);

pub const CONTEXT_SEPARATOR: &str = "\n\n---\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Index,
    Query,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub index_prompt: u64,
    pub index_completion: u64,
    pub query_prompt: u64,
    pub query_completion: u64,
    pub index_embed: u64,
    pub query_embed: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.index_prompt
            + self.index_completion
            + self.query_prompt
            + self.query_completion
            + self.index_embed
            + self.query_embed
    }
}

/// Thread-safe, monotone token counters.
#[derive(Debug, Default)]
pub struct UsageMeter {
    index_prompt: AtomicU64,
    index_completion: AtomicU64,
    query_prompt: AtomicU64,
    query_completion: AtomicU64,
    index_embed: AtomicU64,
    query_embed: AtomicU64,
}

impl UsageMeter {
    pub fn record_chat(&self, phase: Phase, prompt: u64, completion: u64) {
        let (p, c) = match phase {
            Phase::Index => (&self.index_prompt, &self.index_completion),
            Phase::Query => (&self.query_prompt, &self.query_completion),
        };
        p.fetch_add(prompt, Ordering::Relaxed);
        c.fetch_add(completion, Ordering::Relaxed);
    }

    pub fn record_embed(&self, phase: Phase, tokens: u64) {
        let counter = match phase {
            Phase::Index => &self.index_embed,
            Phase::Query => &self.query_embed,
        };
        counter.fetch_add(tokens, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TokenUsage {
        TokenUsage {
            index_prompt: self.index_prompt.load(Ordering::Relaxed),
            index_completion: self.index_completion.load(Ordering::Relaxed),
            query_prompt: self.query_prompt.load(Ordering::Relaxed),
            query_completion: self.query_completion.load(Ordering::Relaxed),
            index_embed: self.index_embed.load(Ordering::Relaxed),
            query_embed: self.query_embed.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// True when the provider did not report usage and counts were estimated.
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedRequest {
    pub model: String,
    pub input: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f64>>,
    pub prompt_tokens: u64,
    pub estimated: bool,
}

/// Rough token estimate used when a provider omits usage: `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub base_url: String,
    /// Never written to disk; read from the environment.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_concurrent_requests: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000".into(),
            api_key: None,
            chat_model: "gpt-oss-120b".into(),
            embed_model: "qwen3-embedding-4b".into(),
            max_attempts: 3,
            backoff_ms: 250,
            timeout_secs: 120,
            max_concurrent_requests: 4,
        }
    }
}

impl GatewayConfig {
    /// Overlays `UNWEAVER_BASE_URL` and `UNWEAVER_API_KEY` when set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.trim().is_empty() {
                self.base_url = url;
            }
        }
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be >= 1"));
        }
        if self.max_concurrent_requests == 0 {
            return Err(Error::invalid("max_concurrent_requests must be >= 1"));
        }
        Ok(())
    }
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Shared client for all model calls. Cheap to share by reference across
/// threads; in-flight requests are capped at `max_concurrent_requests`.
pub struct ModelGateway {
    cfg: GatewayConfig,
    agent: ureq::Agent,
    usage: UsageMeter,
    permits: Permits,
}

impl std::fmt::Debug for ModelGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelGateway")
            .field("base_url", &self.cfg.base_url)
            .field("usage", &self.usage.snapshot())
            .finish()
    }
}

impl ModelGateway {
    pub fn new(cfg: GatewayConfig) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        let permits = Permits::new(cfg.max_concurrent_requests);
        Ok(Self {
            cfg,
            agent,
            usage: UsageMeter::default(),
            permits,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn usage(&self) -> TokenUsage {
        self.usage.snapshot()
    }

    pub fn meter(&self) -> &UsageMeter {
        &self.usage
    }

    /// Builds a temperature-0 request for the configured chat model.
    pub fn chat_request(&self, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            model: self.cfg.chat_model.clone(),
            messages,
            temperature: 0.0,
        }
    }

    pub fn chat(&self, phase: Phase, request: &ChatRequest) -> Result<ChatResponse> {
        let body = serde_json::to_string(request).expect("chat request serializes");
        let value = self.post("/v1/chat/completions", body)?;

        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::MalformedOutput("chat response has no choices[0].message.content".into()))?
            .to_string();

        let reported = value
            .get("usage")
            .and_then(|u| Some((u.get("prompt_tokens")?.as_u64()?, u.get("completion_tokens")?.as_u64()?)));
        let (prompt_tokens, completion_tokens, estimated) = match reported {
            Some((p, c)) => (p, c, false),
            None => {
                let p = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
                (p, estimate_tokens(&content), true)
            }
        };
        self.usage.record_chat(phase, prompt_tokens, completion_tokens);
        Ok(ChatResponse {
            content,
            prompt_tokens,
            completion_tokens,
            estimated,
        })
    }

    pub fn embeddings(&self, phase: Phase, request: &EmbedRequest) -> Result<EmbedResponse> {
        let body = serde_json::to_string(request).expect("embed request serializes");
        let value = self.post("/v1/embeddings", body)?;

        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::MalformedOutput("embedding response has no data array".into()))?;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let idx = item
                .get("index")
                .and_then(Value::as_u64)
                .map(|i| i as usize)
                .unwrap_or(pos);
            let vec = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::MalformedOutput("embedding item without vector".into()))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| Error::MalformedOutput("non-numeric embedding entry".into()))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push((idx, vec));
        }
        rows.sort_by_key(|(i, _)| *i);
        if rows.len() != request.input.len() {
            return Err(Error::MalformedOutput(format!(
                "expected {} embeddings, got {}",
                request.input.len(),
                rows.len()
            )));
        }

        let reported = value
            .get("usage")
            .and_then(|u| u.get("prompt_tokens").or_else(|| u.get("total_tokens")))
            .and_then(Value::as_u64);
        let (prompt_tokens, estimated) = match reported {
            Some(t) => (t, false),
            None => (request.input.iter().map(|t| estimate_tokens(t)).sum(), true),
        };
        self.usage.record_embed(phase, prompt_tokens);
        Ok(EmbedResponse {
            embeddings: rows.into_iter().map(|(_, v)| v).collect(),
            prompt_tokens,
            estimated,
        })
    }

    fn post(&self, path: &str, body: String) -> Result<Value> {
        let url = format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path);
        let _permit = self.permits.acquire();
        let mut last_err = None;
        for attempt in 0..self.cfg.max_attempts {
            if attempt > 0 {
                let wait = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(key) = &self.cfg.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send(body.as_str()) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| Error::backend(Some(status), e.to_string()))?;
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text)
                            .map_err(|e| Error::MalformedOutput(format!("invalid JSON from {path}: {e}")));
                    }
                    let err = Error::backend(Some(status), truncate_for_log(&text));
                    if status == 429 || status >= 500 {
                        log::warn!("{path} returned HTTP {status} (attempt {})", attempt + 1);
                        last_err = Some(err);
                        continue;
                    }
                    return Err(err);
                }
                Err(e) => {
                    log::warn!("{path} transport error (attempt {}): {e}", attempt + 1);
                    last_err = Some(Error::backend(None, e.to_string()));
                }
            }
        }
        Err(last_err.unwrap_or_else(|| Error::backend(None, "no attempts made")))
    }
}

fn truncate_for_log(text: &str) -> String {
    const MAX: usize = 512;
    match text.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &text[..i]),
        None => text.to_string(),
    }
}

/// Messages for answer generation: the system prompt carries the elected
/// chunks (in election order), the user message is the bare question.
pub fn answer_prompt(context_chunks: &[Chunk], question: &str) -> Vec<Message> {
    let context = context_chunks
        .iter()
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join(CONTEXT_SEPARATOR);
    vec![
        Message::system(ANSWER_TEMPLATE.replace("{context}", &context)),
        Message::user(question),
    ]
}

/// Offline answerer: returns the context sentence with the largest word
/// overlap with the question (earliest wins ties).
pub fn stub_answer(context_chunks: &[Chunk], question: &str) -> String {
    let q_words: std::collections::BTreeSet<String> = content_words(question).collect();
    let mut best: Option<(usize, &str)> = None;
    for chunk in context_chunks {
        for sentence in crate::extraction::split_sentences(&chunk.text) {
            let overlap = content_words(sentence).filter(|w| q_words.contains(w)).count();
            if best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, sentence));
            }
        }
    }
    best.map(|(_, s)| s.trim().to_string()).unwrap_or_default()
}

fn content_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| w.chars().count() > 2)
}
