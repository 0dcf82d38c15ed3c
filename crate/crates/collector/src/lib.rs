//! Collects reasoning transcripts with token log-probabilities from an
//! OpenAI-compatible `/v1/completions` endpoint.
//!
//! Prompts are rendered with raw chat templates ([`render_prompt`]) so that
//! the server sees exactly the string the model family expects. Requests run
//! on a bounded pool of worker threads; results are funneled back to one
//! thread and written in input order.

mod template;

pub use template::{render_prompt, Family, ModelProfile, QUERY_PLACEHOLDER};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use ahakit_core::puzzlegen::Puzzle;
use ahakit_core::transcript::TranscriptError;
use ahakit_core::{TokenEvent, Transcript};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("unknown model family {0:?} (expected deepseek, qwen or llama)")]
    UnknownFamily(String),
    #[error("invalid template: {0}")]
    Template(String),
    #[error("query must be non-empty")]
    EmptyQuery,
    #[error("invalid collect configuration: {0}")]
    Config(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingKey(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response has no logprobs: {0}")]
    MissingLogprobs(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response does not form a valid transcript: {0}")]
    Transcript(#[from] TranscriptError),
}

impl CollectError {
    fn is_retryable(&self) -> bool {
        match self {
            CollectError::Transport(_) => true,
            CollectError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    /// Server base URL, or a full URL ending in `/completions`.
    pub endpoint: String,
    /// Model name sent in the request body and recorded on transcripts.
    pub model: String,
    /// Name of the environment variable holding a bearer token. No
    /// `Authorization` header is sent when unset.
    pub api_key_env: Option<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Alternatives requested per position.
    pub top_k: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First backoff delay; attempt `i` waits `base * 2^i`.
    pub backoff_base_ms: u64,
    pub parallelism: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000".into(),
            model: "default".into(),
            api_key_env: None,
            max_tokens: 4096,
            temperature: 0.0,
            top_k: 20,
            timeout_secs: 600,
            max_retries: 5,
            backoff_base_ms: 1000,
            parallelism: 4,
        }
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<(), CollectError> {
        if self.parallelism == 0 {
            return Err(CollectError::Config("parallelism must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(CollectError::Config("top_k must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(CollectError::Config("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(CollectError::Config(format!("temperature {} is invalid", self.temperature)));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(CollectError::Config(format!("endpoint {:?} is not an http(s) URL", self.endpoint)));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/completions")
        } else {
            format!("{base}/v1/completions")
        }
    }

    fn api_key(&self) -> Result<Option<String>, CollectError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| CollectError::MissingKey(var.clone())),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << attempt.min(32)))
    }
}

/// One failed puzzle after all retries.
#[derive(Debug, Serialize)]
pub struct CollectFailure {
    pub index: usize,
    pub id: String,
    pub attempts: u32,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct CollectOutcome {
    /// Successful transcripts in input order.
    pub transcripts: Vec<Transcript>,
    pub failures: Vec<CollectFailure>,
    /// HTTP requests sent, retries included.
    pub requests: usize,
}

/// Maps `choices[0].logprobs` of a completions response to token events.
/// Every logprob comes from the response; missing or null values make the
/// whole response unusable.
pub fn parse_completion(body: &Value) -> Result<Vec<TokenEvent>, CollectError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| CollectError::Malformed("no choices[0]".into()))?;
    let lp = match choice.get("logprobs") {
        Some(v) if !v.is_null() => v,
        _ => return Err(CollectError::MissingLogprobs("choices[0].logprobs absent".into())),
    };
    let tokens = lp
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| CollectError::MissingLogprobs("logprobs.tokens absent".into()))?;
    let token_lps = lp
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| CollectError::MissingLogprobs("logprobs.token_logprobs absent".into()))?;
    if tokens.len() != token_lps.len() {
        return Err(CollectError::Malformed(format!(
            "{} tokens but {} token_logprobs",
            tokens.len(),
            token_lps.len()
        )));
    }
    let tops = lp.get("top_logprobs").and_then(Value::as_array);
    let mut events = Vec::with_capacity(tokens.len());
    for (i, (t, l)) in tokens.iter().zip(token_lps).enumerate() {
        let text = t.as_str().ok_or_else(|| CollectError::Malformed(format!("token {i} is not a string")))?;
        let logprob = l.as_f64().ok_or_else(|| CollectError::MissingLogprobs(format!("token {i} has no logprob")))?;
        let mut event = TokenEvent::new(text, logprob);
        if let Some(Value::Object(map)) = tops.and_then(|v| v.get(i)) {
            let alts = map
                .iter()
                .map(|(k, v)| {
                    v.as_f64()
                        .map(|lp| (k.clone(), lp))
                        .ok_or_else(|| CollectError::Malformed(format!("top_logprobs[{i}][{k:?}] is not a number")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            event = event.with_alternatives(alts);
        }
        events.push(event);
    }
    Ok(events)
}

pub struct Collector {
    config: CollectConfig,
    profile: ModelProfile,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl Collector {
    pub fn new(config: CollectConfig, profile: ModelProfile) -> Result<Self, CollectError> {
        config.validate()?;
        let api_key = config.api_key()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| CollectError::Transport(e.to_string()))?;
        Ok(Self { config, profile, client, api_key })
    }

    fn request_once(&self, prompt: &str) -> Result<Value, CollectError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
            "logprobs": self.config.top_k,
            "echo": false,
        });
        let mut req = self
            .client
            .post(self.config.completions_url())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| CollectError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| CollectError::Transport(e.to_string()))?;
        if !status.is_success() {
            let mut body = text;
            body.truncate(512);
            return Err(CollectError::Status { status: status.as_u16(), body });
        }
        serde_json::from_str(&text).map_err(|e| CollectError::Malformed(e.to_string()))
    }

    /// Requests one completion with retries; returns the attempt count too.
    fn fetch(&self, prompt: &str) -> (u32, Result<Vec<TokenEvent>, CollectError>) {
        let mut attempt = 0;
        loop {
            let result = self.request_once(prompt).and_then(|v| parse_completion(&v));
            attempt += 1;
            match result {
                Err(e) if e.is_retryable() && attempt <= self.config.max_retries => {
                    let wait = self.config.backoff(attempt - 1);
                    log::warn!("attempt {attempt} failed ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                }
                other => return (attempt, other),
            }
        }
    }

    fn collect_one(&self, puzzle: &Puzzle) -> (u32, Result<Transcript, CollectError>) {
        let prompt = match render_prompt(&self.profile, &puzzle.prompt()) {
            Ok(p) => p,
            Err(e) => return (0, Err(e)),
        };
        let (attempts, events) = self.fetch(&prompt);
        let result = events.and_then(|events| {
            Transcript::from_tokens(
                puzzle.id(),
                puzzle.task(),
                puzzle.n() as u32,
                self.config.model.clone(),
                self.profile.role,
                events,
            )
            .map_err(CollectError::from)
        });
        (attempts, result)
    }

    /// One request chain per puzzle, at most `parallelism` in flight.
    pub fn collect(&self, puzzles: &[Puzzle]) -> CollectOutcome {
        let next = AtomicUsize::new(0);
        let workers = self.config.parallelism.min(puzzles.len()).max(1);
        let (tx, rx) = mpsc::channel();
        let mut slots: BTreeMap<usize, (u32, Result<Transcript, CollectError>)> = BTreeMap::new();
        std::thread::scope(|s| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(p) = puzzles.get(i) else { break };
                    if tx.send((i, self.collect_one(p))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (i, r) in rx {
                slots.insert(i, r);
            }
        });
        let mut out = CollectOutcome::default();
        for (i, (attempts, result)) in slots {
            out.requests += attempts as usize;
            match result {
                Ok(t) => out.transcripts.push(t),
                Err(e) => {
                    let id = puzzles[i].id();
                    log::warn!("skipping {id} after {attempts} attempt(s): {e}");
                    out.failures.push(CollectFailure { index: i, id, attempts, reason: e.to_string() });
                }
            }
        }
        out
    }
}
