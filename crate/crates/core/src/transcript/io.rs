use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Role, Task, TokenEvent, Transcript};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptError {
    #[error("invalid JSON record: {0}")]
    Schema(String),
    #[error("token {index} has positive logprob {logprob}")]
    PositiveLogprob { index: usize, logprob: f64 },
    #[error("token {index} has a non-finite logprob")]
    NonFiniteLogprob { index: usize },
    #[error("token {index} alternative {alt:?} has invalid logprob {logprob}")]
    BadAlternative { index: usize, alt: String, logprob: f64 },
    #[error("text field does not equal the concatenated token texts (first difference at byte {at})")]
    TextMismatch { at: usize },
    #[error("difficulty {0} is below the minimum of 2")]
    Difficulty(u32),
    #[error("read failure: {0}")]
    Io(String),
}

/// A per-line failure; parsing continues past it.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub error: TranscriptError,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub transcripts: Vec<Transcript>,
    pub errors: Vec<LineError>,
}

#[derive(Serialize, Deserialize)]
struct RawToken {
    t: String,
    lp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alt: Option<Vec<(String, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct RawTranscript {
    id: String,
    task: Task,
    difficulty: u32,
    model: String,
    role: Role,
    text: String,
    tokens: Vec<RawToken>,
}

pub(super) struct Unchecked {
    pub id: String,
    pub task: Task,
    pub difficulty: u32,
    pub model: String,
    pub role: Role,
    pub text: String,
    pub tokens: Vec<TokenEvent>,
}

pub(super) fn validate(u: Unchecked) -> Result<Transcript, TranscriptError> {
    if u.difficulty < 2 {
        return Err(TranscriptError::Difficulty(u.difficulty));
    }
    let mut tokens = u.tokens;
    for (index, tok) in tokens.iter_mut().enumerate() {
        if !tok.logprob.is_finite() {
            return Err(TranscriptError::NonFiniteLogprob { index });
        }
        if tok.logprob > 0.0 {
            return Err(TranscriptError::PositiveLogprob { index, logprob: tok.logprob });
        }
        if let Some(alts) = tok.alternatives.as_mut() {
            if let Some((alt, lp)) = alts.iter().find(|(_, lp)| !(lp.is_finite() && *lp <= 0.0)) {
                return Err(TranscriptError::BadAlternative {
                    index,
                    alt: alt.clone(),
                    logprob: *lp,
                });
            }
            if !alts.iter().any(|(t, _)| *t == tok.text) {
                alts.push((tok.text.clone(), tok.logprob));
            }
            alts.sort_by(|a, b| b.1.total_cmp(&a.1));
        }
    }
    let mut at = 0;
    let mut rest = u.text.as_str();
    for tok in &tokens {
        match rest.strip_prefix(tok.text.as_str()) {
            Some(r) => {
                at += tok.text.len();
                rest = r;
            }
            None => {
                let common = rest
                    .bytes()
                    .zip(tok.text.bytes())
                    .take_while(|(a, b)| a == b)
                    .count();
                return Err(TranscriptError::TextMismatch { at: at + common });
            }
        }
    }
    if !rest.is_empty() {
        return Err(TranscriptError::TextMismatch { at });
    }
    Ok(Transcript {
        id: u.id,
        task: u.task,
        difficulty: u.difficulty,
        model: u.model,
        role: u.role,
        tokens,
        text: u.text,
    })
}

fn parse_line(line: &str) -> Result<Transcript, TranscriptError> {
    let raw: RawTranscript =
        serde_json::from_str(line).map_err(|e| TranscriptError::Schema(e.to_string()))?;
    validate(Unchecked {
        id: raw.id,
        task: raw.task,
        difficulty: raw.difficulty,
        model: raw.model,
        role: raw.role,
        text: raw.text,
        tokens: raw
            .tokens
            .into_iter()
            .map(|t| TokenEvent { text: t.t, logprob: t.lp, alternatives: t.alt })
            .collect(),
    })
}

/// Parses a JSONL stream. Malformed lines are collected in
/// [`ParseOutcome::errors`] with their line number; blank lines are skipped.
pub fn parse_transcripts<R: BufRead>(input: R) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                out.errors.push(LineError { line: line_no, error: TranscriptError::Io(e.to_string()) });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(t) => out.transcripts.push(t),
            Err(error) => out.errors.push(LineError { line: line_no, error }),
        }
    }
    out
}

fn to_raw(t: &Transcript) -> RawTranscript {
    RawTranscript {
        id: t.id.clone(),
        task: t.task,
        difficulty: t.difficulty,
        model: t.model.clone(),
        role: t.role,
        text: t.text.clone(),
        tokens: t
            .tokens
            .iter()
            .map(|e| RawToken { t: e.text.clone(), lp: e.logprob, alt: e.alternatives.clone() })
            .collect(),
    }
}

pub fn write_transcripts<W: Write>(mut out: W, transcripts: &[Transcript]) -> std::io::Result<()> {
    for t in transcripts {
        let line = serde_json::to_string(&to_raw(t)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}
