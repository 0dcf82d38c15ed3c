//! Model responses with token-level log-probabilities.
//!
//! Transcripts are exchanged as JSONL, one response per line:
//!
//! ```text
//! {"id": "...", "task": "kk", "difficulty": 3, "model": "...", "role": "aha",
//!  "text": "...", "tokens": [{"t": "Okay", "lp": -0.01, "alt": [["Okay", -0.01], ...]}]}
//! ```
//!
//! `lp` is a natural log. `alt` (optional) holds the top-k candidates at that
//! position.

mod io;
mod segment;

pub use io::{parse_transcripts, write_transcripts, LineError, ParseOutcome, TranscriptError};
pub use segment::{beginning_token, beginning_token_raw, segment_sentences, SentenceSpan};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Kk,
    Countdown,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Kk => "kk",
            Task::Countdown => "countdown",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kk" => Ok(Task::Kk),
            "countdown" => Ok(Task::Countdown),
            other => Err(format!("unknown task {other:?} (expected kk or countdown)")),
        }
    }
}

/// Whether a response comes from a reasoning (aha) model or its
/// instruction-tuned counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "aha")]
    Aha,
    #[serde(rename = "no-aha")]
    NoAha,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Aha => "aha",
            Role::NoAha => "no-aha",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aha" => Ok(Role::Aha),
            "no-aha" | "noaha" => Ok(Role::NoAha),
            other => Err(format!("unknown role {other:?} (expected aha or no-aha)")),
        }
    }
}

/// One generated token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEvent {
    /// Surface form, whitespace preserved.
    pub text: String,
    /// Natural-log probability, `<= 0`.
    pub logprob: f64,
    /// Top-k candidates at this position, descending by logprob, including
    /// the sampled token.
    pub alternatives: Option<Vec<(String, f64)>>,
}

impl TokenEvent {
    pub fn new(text: impl Into<String>, logprob: f64) -> Self {
        Self { text: text.into(), logprob, alternatives: None }
    }

    pub fn with_alternatives(mut self, alternatives: Vec<(String, f64)>) -> Self {
        self.alternatives = Some(alternatives);
        self
    }

    pub fn prob(&self) -> f64 {
        self.logprob.exp()
    }

    pub fn is_whitespace(&self) -> bool {
        self.text.chars().all(char::is_whitespace)
    }
}

/// A validated model response.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub id: String,
    pub task: Task,
    pub difficulty: u32,
    pub model: String,
    pub role: Role,
    pub tokens: Vec<TokenEvent>,
    /// Concatenation of token texts.
    pub text: String,
}

impl Transcript {
    /// Builds a transcript whose text is the token concatenation, normalizing
    /// alternatives (sorted, sampled token present).
    pub fn from_tokens(
        id: impl Into<String>,
        task: Task,
        difficulty: u32,
        model: impl Into<String>,
        role: Role,
        tokens: Vec<TokenEvent>,
    ) -> Result<Self, TranscriptError> {
        let text: String = tokens.iter().map(|t| t.text.as_str()).collect();
        io::validate(io::Unchecked {
            id: id.into(),
            task,
            difficulty,
            model: model.into(),
            role,
            text,
            tokens,
        })
    }

    /// Byte offset of every token start, plus the total length.
    pub fn token_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.tokens.len() + 1);
        let mut at = 0;
        offsets.push(0);
        for t in &self.tokens {
            at += t.text.len();
            offsets.push(at);
        }
        offsets
    }

    pub fn span_text(&self, span: &SentenceSpan) -> &str {
        &self.text[span.chars.clone()]
    }
}
