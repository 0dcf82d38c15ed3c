//! Reasoning-anthropomorphic separation at sentence beginnings.
//!
//! At each sentence-beginning position the observable next-token slice
//! (the top-k alternatives) is split into anthropomorphic mass `P_A` and
//! reasoning mass `P_R`; the score is `ln(P_A + eps) - ln(P_R + eps)`.

mod density;

pub use density::{
    distribution_stats, kde_density, silverman_bandwidth, trapezoid, DistributionStats, Kde, KdeGrid,
    Moments, DEFAULT_GRID_POINTS, MAX_GRID_POINTS,
};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Cell, Table};
use crate::transcript::{segment_sentences, Role, Task, TokenEvent, Transcript};

pub const DEFAULT_EPSILON: f64 = 1e-10;

pub const DEFAULT_ANTHROPOMORPHIC: &[&str] = &[
    "Aha", "I", "Hmm", "Oh", "Umm", "Well", "alright", "we", "Wait", "wait", "Alternatively", "Case",
    "Okay", "okay", "Perhaps", "Still", "we", "We", "Let", "Alright", "Good", "Consider", "Adjust",
    "Attempt", "Notice", "Try", "Test", "Using", "Oh", "Oops", "Break", "Looking", "Attempting", "Again",
    "Like", "Assume", "Maybe",
];

pub const DEFAULT_REASONING: &[&str] = &[
    "This", "To", "Instead", "Therefore", "So", "As", "Because", "Since", "Thus", "However", "Calculate",
    "Notice", "Finally", "Multiply", "Divide", "Next", "Another", "First", "Second", "Third", "Final",
    "Simplifying", "Correct", "Incorrect", "Error", "combining", "Add", "Start", "Finally", "Conclusion",
    "Fourth", "Calcul",
];

#[derive(Debug, Error)]
pub enum RasmError {
    #[error("token set {0} is empty")]
    EmptySet(&'static str),
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("probability {prob} for {token:?} is outside (0, 1]")]
    Probability { token: String, prob: f64 },
    #[error("slice coverage {0} exceeds 1")]
    Coverage(f64),
    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("values must be finite")]
    NonFinite,
    #[error("token set file: {0}")]
    Load(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenSetsFile {
    anthropomorphic: Vec<String>,
    reasoning: Vec<String>,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// Disjoint anthropomorphic (A) and reasoning (R) beginning-token sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenSets {
    pub anthropomorphic: BTreeSet<String>,
    pub reasoning: BTreeSet<String>,
    pub epsilon: f64,
    /// Tokens listed in both inputs and therefore dropped from both.
    pub removed_overlap: Vec<String>,
}

impl Default for TokenSets {
    fn default() -> Self {
        Self::new(DEFAULT_ANTHROPOMORPHIC, DEFAULT_REASONING, DEFAULT_EPSILON)
            .expect("built-in token sets are valid")
    }
}

impl TokenSets {
    /// Deduplicates each list and removes tokens present in both.
    pub fn new<S: AsRef<str>>(a: &[S], r: &[S], epsilon: f64) -> Result<Self, RasmError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(RasmError::Epsilon(epsilon));
        }
        let mut anthropomorphic: BTreeSet<String> = a.iter().map(|s| s.as_ref().to_string()).collect();
        let mut reasoning: BTreeSet<String> = r.iter().map(|s| s.as_ref().to_string()).collect();
        let overlap: Vec<String> = anthropomorphic.intersection(&reasoning).cloned().collect();
        for t in &overlap {
            log::warn!("token {t:?} is listed as both anthropomorphic and reasoning; dropping it from both");
            anthropomorphic.remove(t);
            reasoning.remove(t);
        }
        if anthropomorphic.is_empty() {
            return Err(RasmError::EmptySet("anthropomorphic"));
        }
        if reasoning.is_empty() {
            return Err(RasmError::EmptySet("reasoning"));
        }
        Ok(Self { anthropomorphic, reasoning, epsilon, removed_overlap: overlap })
    }

    pub fn from_json(text: &str) -> Result<Self, RasmError> {
        let f: TokenSetsFile = serde_json::from_str(text).map_err(|e| RasmError::Load(e.to_string()))?;
        Self::new(&f.anthropomorphic, &f.reasoning, f.epsilon)
    }

    pub fn load(path: &Path) -> Result<Self, RasmError> {
        let text = std::fs::read_to_string(path).map_err(|e| RasmError::Load(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "anthropomorphic": self.anthropomorphic,
            "reasoning": self.reasoning,
            "epsilon": self.epsilon,
        })
    }

    /// The same sets with A and R exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            anthropomorphic: self.reasoning.clone(),
            reasoning: self.anthropomorphic.clone(),
            epsilon: self.epsilon,
            removed_overlap: self.removed_overlap.clone(),
        }
    }

    fn class(&self, token: &str) -> Option<Class> {
        let key = strip_marker(token);
        if self.anthropomorphic.contains(key) {
            Some(Class::A)
        } else if self.reasoning.contains(key) {
            Some(Class::R)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    A,
    R,
}

/// Removes one leading whitespace marker: a space, `Ġ` (byte-level BPE) or
/// `▁` (SentencePiece).
pub fn strip_marker(token: &str) -> &str {
    for marker in [' ', 'Ġ', '▁'] {
        if let Some(rest) = token.strip_prefix(marker) {
            return rest;
        }
    }
    token
}

/// Observed next-token candidates at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenSlice {
    pub pairs: Vec<(String, f64)>,
    pub coverage: f64,
}

impl NextTokenSlice {
    pub fn new(pairs: Vec<(String, f64)>) -> Result<Self, RasmError> {
        for (token, prob) in &pairs {
            if !(*prob > 0.0 && *prob <= 1.0) {
                return Err(RasmError::Probability { token: token.clone(), prob: *prob });
            }
        }
        let coverage: f64 = pairs.iter().map(|(_, p)| p).sum();
        if coverage > 1.0 + 1e-6 {
            return Err(RasmError::Coverage(coverage));
        }
        Ok(Self { pairs, coverage })
    }

    /// Builds the slice from a token's alternatives; `None` without them.
    /// Candidates whose probability underflows to zero are dropped.
    pub fn from_event(event: &TokenEvent) -> Option<Result<Self, RasmError>> {
        let alts = event.alternatives.as_ref()?;
        Some(Self::new(
            alts.iter()
                .map(|(t, lp)| (t.clone(), lp.exp()))
                .filter(|(_, p)| *p > 0.0)
                .collect(),
        ))
    }
}

/// `ln(P_A + eps) - ln(P_R + eps)`.
pub fn rasm_score(slice: &NextTokenSlice, sets: &TokenSets) -> f64 {
    let (mut pa, mut pr) = (0.0, 0.0);
    for (token, p) in &slice.pairs {
        match sets.class(token) {
            Some(Class::A) => pa += p,
            Some(Class::R) => pr += p,
            None => {}
        }
    }
    (pa + sets.epsilon).ln() - (pr + sets.epsilon).ln()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RasmSeries {
    pub values: Vec<f64>,
    pub coverages: Vec<f64>,
    /// Sentence beginnings without alternatives.
    pub skipped: usize,
}

/// One score per sentence beginning that carries alternatives.
pub fn rasm_series(t: &Transcript, sets: &TokenSets) -> Result<RasmSeries, RasmError> {
    let mut out = RasmSeries::default();
    for span in segment_sentences(t) {
        match NextTokenSlice::from_event(&t.tokens[span.tokens.start]) {
            Some(slice) => {
                let slice = slice?;
                out.values.push(rasm_score(&slice, sets));
                out.coverages.push(slice.coverage);
            }
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RasmKey {
    pub model: String,
    pub role: Role,
    pub task: Task,
    pub difficulty: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RasmSummary {
    pub key: RasmKey,
    pub values: Vec<f64>,
    pub stats: DistributionStats,
    /// Absent with fewer than two values.
    pub kde: Option<Kde>,
    pub mean_coverage: f64,
    pub skipped: usize,
}

/// Scores the corpus and summarizes each (model, role, task, difficulty) group.
pub fn rasm_summaries(corpus: &[Transcript], sets: &TokenSets, grid: &KdeGrid) -> Result<Vec<RasmSummary>, RasmError> {
    let series: Vec<RasmSeries> =
        corpus.par_iter().map(|t| rasm_series(t, sets)).collect::<Result<_, _>>()?;
    let mut groups: BTreeMap<RasmKey, RasmSeries> = BTreeMap::new();
    for (t, s) in corpus.iter().zip(series) {
        let key = RasmKey { model: t.model.clone(), role: t.role, task: t.task, difficulty: t.difficulty };
        let g = groups.entry(key).or_default();
        g.values.extend(s.values);
        g.coverages.extend(s.coverages);
        g.skipped += s.skipped;
    }
    groups
        .into_iter()
        .filter(|(_, s)| !s.values.is_empty())
        .map(|(key, s)| {
            let stats = distribution_stats(&s.values)?;
            let kde = if s.values.len() >= 2 {
                let h = silverman_bandwidth(&s.values)?;
                Some(kde_density(&s.values, h, grid)?)
            } else {
                None
            };
            let mean_coverage = s.coverages.iter().sum::<f64>() / s.coverages.len() as f64;
            Ok(RasmSummary { key, values: s.values, stats, kde, mean_coverage, skipped: s.skipped })
        })
        .collect()
}

fn key_cells(k: &RasmKey) -> Vec<Cell> {
    vec![
        Cell::from(k.model.as_str()),
        Cell::from(k.role.as_str()),
        Cell::from(k.task.as_str()),
        Cell::Int(k.difficulty as i64),
    ]
}

/// Long-format density blocks, one per group.
pub fn density_table(summaries: &[RasmSummary]) -> Table {
    let mut table = Table::new(["model", "role", "task", "difficulty", "x", "density"]);
    for s in summaries {
        let Some(kde) = &s.kde else { continue };
        for (x, d) in kde.grid.iter().zip(&kde.density) {
            let mut row = key_cells(&s.key);
            row.extend([Cell::Float(*x), Cell::Float(*d)]);
            table.push(row);
        }
    }
    table
}

pub fn stats_table(summaries: &[RasmSummary]) -> Table {
    let mut table = Table::new([
        "model", "role", "task", "difficulty", "n", "mean", "skewness", "kurtosis", "bc", "bandwidth",
        "mean_coverage", "skipped",
    ]);
    for s in summaries {
        let mut row = key_cells(&s.key);
        row.extend([
            Cell::Int(s.stats.n as i64),
            Cell::Float(s.stats.mean),
            Cell::from(s.stats.skewness),
            Cell::from(s.stats.excess_kurtosis),
            Cell::from(s.stats.bimodality),
            Cell::from(s.kde.as_ref().map(|k| k.bandwidth)),
            Cell::Float(s.mean_coverage),
            Cell::Int(s.skipped as i64),
        ]);
        table.push(row);
    }
    table
}
