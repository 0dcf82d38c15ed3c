//! Sentence-level probability as an uncertainty signal.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::report::{Cell, Table};
use crate::transcript::{segment_sentences, SentenceSpan, Task, TokenEvent, Transcript};

/// Tokens kept in a sentence preview.
pub const PREVIEW_TOKENS: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UncertaintyError {
    #[error("cannot score an empty sentence")]
    EmptySpan,
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mean {
    /// Mean of `exp(lp)`.
    #[default]
    Arithmetic,
    /// `exp` of the mean `lp`.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Unit {
    #[default]
    Sentence,
    /// Every token weighs equally regardless of sentence.
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UncertaintyOptions {
    pub mean: Mean,
    pub unit: Unit,
    pub think_only: bool,
}

pub fn sentence_probability(tokens: &[TokenEvent]) -> Result<f64, UncertaintyError> {
    sentence_probability_with(tokens, Mean::Arithmetic)
}

pub fn sentence_probability_with(tokens: &[TokenEvent], mean: Mean) -> Result<f64, UncertaintyError> {
    if tokens.is_empty() {
        return Err(UncertaintyError::EmptySpan);
    }
    let n = tokens.len() as f64;
    Ok(match mean {
        Mean::Arithmetic => tokens.iter().map(TokenEvent::prob).sum::<f64>() / n,
        Mean::Geometric => (tokens.iter().map(|t| t.logprob).sum::<f64>() / n).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceScore {
    pub transcript_id: String,
    #[serde(skip)]
    pub span: SentenceSpan,
    pub text: String,
    pub mean_prob: f64,
    pub preview: Vec<String>,
}

fn scored_spans<'a>(t: &'a Transcript, think_only: bool) -> impl Iterator<Item = SentenceSpan> + 'a {
    segment_sentences(t).into_iter().filter(move |s| !think_only || s.in_think)
}

/// Scores every sentence of one transcript.
pub fn score_sentences(t: &Transcript, opts: &UncertaintyOptions) -> Vec<SentenceScore> {
    scored_spans(t, opts.think_only)
        .map(|span| {
            let tokens = &t.tokens[span.tokens.clone()];
            SentenceScore {
                transcript_id: t.id.clone(),
                text: t.span_text(&span).to_string(),
                mean_prob: sentence_probability_with(tokens, opts.mean)
                    .expect("segmenter never yields empty spans"),
                preview: tokens.iter().take(PREVIEW_TOKENS).map(|e| e.text.clone()).collect(),
                span,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupKey {
    pub model: String,
    pub task: Task,
    pub difficulty: u32,
}

impl GroupKey {
    pub fn of(t: &Transcript) -> Self {
        Self { model: t.model.clone(), task: t.task, difficulty: t.difficulty }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
struct SumCount {
    sum: f64,
    count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyRow {
    pub key: GroupKey,
    pub mean_prob: f64,
    /// Sentences, or tokens under [`Unit::Token`].
    pub n: u64,
}

/// Mean probability per (model, task, difficulty). Groups without any scored
/// unit produce no row.
pub fn aggregate_uncertainty(corpus: &[Transcript], opts: &UncertaintyOptions) -> Vec<UncertaintyRow> {
    let sums = corpus
        .par_iter()
        .map(|t| {
            let mut acc = SumCount::default();
            for span in scored_spans(t, opts.think_only) {
                let tokens = &t.tokens[span.tokens.clone()];
                match opts.unit {
                    Unit::Sentence => {
                        acc.sum += sentence_probability_with(tokens, opts.mean)
                            .expect("segmenter never yields empty spans");
                        acc.count += 1;
                    }
                    Unit::Token => {
                        acc.sum += tokens.iter().map(TokenEvent::prob).sum::<f64>();
                        acc.count += tokens.len() as u64;
                    }
                }
            }
            (GroupKey::of(t), acc)
        })
        .collect::<Vec<_>>();
    // Sequential fold in corpus order keeps the floating-point sum reproducible.
    let mut groups: BTreeMap<GroupKey, SumCount> = BTreeMap::new();
    for (key, acc) in sums {
        let g = groups.entry(key).or_default();
        g.sum += acc.sum;
        g.count += acc.count;
    }
    groups
        .into_iter()
        .filter(|(_, g)| g.count > 0)
        .map(|(key, g)| UncertaintyRow { key, mean_prob: g.sum / g.count as f64, n: g.count })
        .collect()
}

/// The `k` lowest-probability sentences, ascending. With `dedupe`, sentences
/// sharing a preview keep only their lowest-probability instance.
pub fn most_uncertain_sentences(
    corpus: &[Transcript],
    k: usize,
    dedupe: bool,
    opts: &UncertaintyOptions,
) -> Result<Vec<SentenceScore>, UncertaintyError> {
    if k == 0 {
        return Err(UncertaintyError::ZeroK);
    }
    let mut scores: Vec<SentenceScore> =
        corpus.par_iter().flat_map_iter(|t| score_sentences(t, opts)).collect();
    if dedupe {
        let mut best: HashMap<Vec<String>, usize> = HashMap::new();
        for (i, s) in scores.iter().enumerate() {
            best.entry(s.preview.clone())
                .and_modify(|j| {
                    if s.mean_prob < scores[*j].mean_prob {
                        *j = i;
                    }
                })
                .or_insert(i);
        }
        let mut keep: Vec<usize> = best.into_values().collect();
        keep.sort_unstable();
        scores = keep.into_iter().map(|i| scores[i].clone()).collect();
    }
    scores.sort_by(|a, b| {
        a.mean_prob
            .total_cmp(&b.mean_prob)
            .then_with(|| a.transcript_id.cmp(&b.transcript_id))
            .then_with(|| a.span.tokens.start.cmp(&b.span.tokens.start))
    });
    scores.truncate(k);
    Ok(scores)
}

pub fn uncertainty_table(rows: &[UncertaintyRow]) -> Table {
    let mut table = Table::new(["model", "task", "difficulty", "mean_sentence_prob", "n_sentences"]);
    for r in rows {
        table.push(vec![
            Cell::from(r.key.model.as_str()),
            Cell::from(r.key.task.as_str()),
            Cell::Int(r.key.difficulty as i64),
            Cell::Float(r.mean_prob),
            Cell::Int(r.n as i64),
        ]);
    }
    table
}

pub fn top_uncertain_table(scores: &[SentenceScore]) -> Table {
    let mut table = Table::new(["rank", "transcript_id", "sentence", "probability"]);
    for (i, s) in scores.iter().enumerate() {
        table.push(vec![
            Cell::Int(i as i64 + 1),
            Cell::from(s.transcript_id.as_str()),
            Cell::from(s.preview.concat().trim()),
            Cell::Float(s.mean_prob),
        ]);
    }
    table
}
