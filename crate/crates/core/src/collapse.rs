//! Reasoning-collapse detectors: language mixing, token-sequence
//! repetition, and reasoning-path repetition.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_script::{Script, UnicodeScript};

use crate::report::{Cell, Table};
use crate::transcript::{segment_sentences, Transcript};
use crate::uncertainty::GroupKey;

#[derive(Debug, Error, PartialEq)]
pub enum CollapseConfigError {
    #[error("mixing window must be at least 1 codepoint")]
    Window,
    #[error("mixing threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("max period must be at least 1")]
    Period,
    #[error("min repeats must be at least 2, got {0}")]
    Repeats(usize),
    #[error("similarity must lie in (0, 1], got {0}")]
    Similarity(f64),
    #[error("min cluster size must be at least 2, got {0}")]
    ClusterSize(usize),
    #[error("unknown script {0:?}")]
    Script(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingConfig {
    /// Window length in codepoints.
    pub window: usize,
    /// Flag when the outside fraction of a window reaches this value.
    pub threshold: f64,
    /// Unicode Script property values, by full name.
    pub allowed_scripts: Vec<String>,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self {
            window: 120,
            threshold: 0.3,
            allowed_scripts: vec!["Latin".into(), "Common".into(), "Inherited".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenRepConfig {
    pub max_period: usize,
    pub min_repeats: usize,
}

impl Default for TokenRepConfig {
    fn default() -> Self {
        Self { max_period: 64, min_repeats: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathRepConfig {
    /// Minimum word-3-gram Jaccard similarity to join a cluster.
    pub similarity: f64,
    pub min_cluster: usize,
}

impl Default for PathRepConfig {
    fn default() -> Self {
        Self { similarity: 0.9, min_cluster: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseConfig {
    pub mixing: MixingConfig,
    pub token_rep: TokenRepConfig,
    pub path_rep: PathRepConfig,
}

impl CollapseConfig {
    pub fn validate(&self) -> Result<(), CollapseConfigError> {
        let m = &self.mixing;
        if m.window == 0 {
            return Err(CollapseConfigError::Window);
        }
        if !(m.threshold > 0.0 && m.threshold < 1.0) {
            return Err(CollapseConfigError::Threshold(m.threshold));
        }
        for s in &m.allowed_scripts {
            if Script::from_full_name(s).is_none() {
                return Err(CollapseConfigError::Script(s.clone()));
            }
        }
        if self.token_rep.max_period == 0 {
            return Err(CollapseConfigError::Period);
        }
        if self.token_rep.min_repeats < 2 {
            return Err(CollapseConfigError::Repeats(self.token_rep.min_repeats));
        }
        let p = &self.path_rep;
        if !(p.similarity > 0.0 && p.similarity <= 1.0) {
            return Err(CollapseConfigError::Similarity(p.similarity));
        }
        if p.min_cluster < 2 {
            return Err(CollapseConfigError::ClusterSize(p.min_cluster));
        }
        Ok(())
    }
}

/// Script classifier built once per config.
struct Allowed(Vec<Script>);

impl Allowed {
    fn new(cfg: &MixingConfig) -> Self {
        Self(cfg.allowed_scripts.iter().filter_map(|s| Script::from_full_name(s)).collect())
    }

    fn contains(&self, c: char) -> bool {
        if is_emoji(c) || is_cjk_punctuation(c) {
            return false;
        }
        self.0.contains(&c.script())
    }
}

fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF | 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0xFE0F | 0x200D)
}

/// CJK symbols and punctuation plus halfwidth/fullwidth forms, which the
/// Script property files under Common.
fn is_cjk_punctuation(c: char) -> bool {
    matches!(c as u32, 0x3000..=0x303F | 0xFF00..=0xFFEF)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingEvidence {
    /// Codepoint offset of the first flagged window.
    pub window_start: usize,
    pub fraction: f64,
}

pub fn detect_language_mixing(text: &str, cfg: &MixingConfig) -> Option<MixingEvidence> {
    let allowed = Allowed::new(cfg);
    let outside: Vec<bool> = text.chars().map(|c| !allowed.contains(c)).collect();
    if outside.is_empty() {
        return None;
    }
    let w = cfg.window.min(outside.len());
    let mut count = outside[..w].iter().filter(|&&o| o).count();
    let mut start = 0;
    loop {
        let fraction = count as f64 / w as f64;
        if fraction >= cfg.threshold {
            return Some(MixingEvidence { window_start: start, fraction });
        }
        if start + w >= outside.len() {
            return None;
        }
        count -= outside[start] as usize;
        count += outside[start + w] as usize;
        start += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepetitionEvidence {
    pub period: usize,
    pub repeats: usize,
}

/// Looks for a periodic tail: the smallest period `p <= max_period` whose
/// final `p`-block repeats at least `min_repeats` times back-to-back.
pub fn detect_token_repetition<S: AsRef<str>>(tokens: &[S], cfg: &TokenRepConfig) -> Option<RepetitionEvidence> {
    let n = tokens.len();
    for p in 1..=cfg.max_period.min(n / 2) {
        // Length of the tail satisfying tok[i] == tok[i - p].
        let mut run = 0;
        while run + p < n && tokens[n - 1 - run].as_ref() == tokens[n - 1 - run - p].as_ref() {
            run += 1;
        }
        let repeats = (run + p) / p;
        if repeats >= cfg.min_repeats {
            return Some(RepetitionEvidence { period: p, repeats });
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEvidence {
    pub exemplar: String,
    pub size: usize,
}

fn trigrams(sentence: &str) -> Option<HashSet<(String, String, String)>> {
    let words: Vec<String> = sentence.split_whitespace().map(str::to_lowercase).collect();
    if words.len() < 3 {
        return None;
    }
    Some(
        words
            .windows(3)
            .map(|w| (w[0].clone(), w[1].clone(), w[2].clone()))
            .collect(),
    )
}

pub fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy exemplar clustering of sentences by word-3-gram Jaccard similarity.
/// Reports the largest cluster when it reaches the minimum size.
pub fn detect_path_repetition<S: AsRef<str>>(sentences: &[S], cfg: &PathRepConfig) -> Option<PathEvidence> {
    struct Cluster {
        exemplar: usize,
        grams: HashSet<(String, String, String)>,
        size: usize,
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        let Some(grams) = trigrams(s.as_ref()) else { continue };
        match clusters.iter_mut().find(|c| jaccard(&c.grams, &grams) >= cfg.similarity) {
            Some(c) => c.size += 1,
            None => clusters.push(Cluster { exemplar: i, grams, size: 1 }),
        }
    }
    clusters
        .iter()
        .filter(|c| c.size >= cfg.min_cluster)
        .max_by(|a, b| a.size.cmp(&b.size).then(b.exemplar.cmp(&a.exemplar)))
        .map(|c| PathEvidence { exemplar: sentences[c.exemplar].as_ref().trim().to_string(), size: c.size })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptCollapse {
    pub id: String,
    pub model: String,
    pub task: String,
    pub difficulty: u32,
    pub mixing: Option<MixingEvidence>,
    pub token_rep: Option<RepetitionEvidence>,
    pub path_rep: Option<PathEvidence>,
}

pub fn detect_all(t: &Transcript, cfg: &CollapseConfig) -> TranscriptCollapse {
    let tokens: Vec<&str> = t.tokens.iter().map(|e| e.text.as_str()).collect();
    let sentences: Vec<&str> = segment_sentences(t).iter().map(|s| t.span_text(s)).collect();
    TranscriptCollapse {
        id: t.id.clone(),
        model: t.model.clone(),
        task: t.task.to_string(),
        difficulty: t.difficulty,
        mixing: detect_language_mixing(&t.text, &cfg.mixing),
        token_rep: detect_token_repetition(&tokens, &cfg.token_rep),
        path_rep: detect_path_repetition(&sentences, &cfg.path_rep),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseRate {
    pub key: GroupKey,
    pub n: u64,
    pub mixing: u64,
    pub token_rep: u64,
    pub path_rep: u64,
}

impl CollapseRate {
    pub fn rates(&self) -> [f64; 3] {
        let n = self.n as f64;
        [self.mixing as f64 / n, self.token_rep as f64 / n, self.path_rep as f64 / n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    pub transcripts: Vec<TranscriptCollapse>,
    pub rates: Vec<CollapseRate>,
}

pub fn collapse_rates(corpus: &[Transcript], cfg: &CollapseConfig) -> CollapseReport {
    let transcripts: Vec<TranscriptCollapse> = corpus.par_iter().map(|t| detect_all(t, cfg)).collect();
    let mut groups: BTreeMap<GroupKey, CollapseRate> = BTreeMap::new();
    for (t, r) in corpus.iter().zip(&transcripts) {
        let key = GroupKey::of(t);
        let g = groups.entry(key.clone()).or_insert(CollapseRate {
            key,
            n: 0,
            mixing: 0,
            token_rep: 0,
            path_rep: 0,
        });
        g.n += 1;
        g.mixing += r.mixing.is_some() as u64;
        g.token_rep += r.token_rep.is_some() as u64;
        g.path_rep += r.path_rep.is_some() as u64;
    }
    CollapseReport { transcripts, rates: groups.into_values().collect() }
}

pub fn collapse_table(report: &CollapseReport) -> Table {
    let mut table =
        Table::new(["model", "task", "difficulty", "rate_mixing", "rate_token_rep", "rate_path_rep", "n"]);
    for r in &report.rates {
        let [m, t, p] = r.rates();
        table.push(vec![
            Cell::from(r.key.model.as_str()),
            Cell::from(r.key.task.as_str()),
            Cell::Int(r.key.difficulty as i64),
            Cell::Float(m),
            Cell::Float(t),
            Cell::Float(p),
            Cell::Int(r.n as i64),
        ]);
    }
    table
}
