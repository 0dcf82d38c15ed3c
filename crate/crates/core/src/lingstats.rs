//! Beginning-token frequency tables and aha/no-aha contrast ranking.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::report::{Cell, Table};
use crate::transcript::{beginning_token, segment_sentences, Transcript};

/// Stop words excluded by default.
pub const DEFAULT_STOPLIST: [&str; 2] = ["**", "**\n"];

pub fn default_stoplist() -> Vec<String> {
    DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LingError {
    #[error("the {0} table is empty")]
    EmptyTable(&'static str),
    #[error("k must be at least 1")]
    ZeroK,
}

/// Counts of sentence-beginning tokens (leading whitespace stripped,
/// case-sensitive).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TokenFrequencyTable {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    pub stoplist: Vec<String>,
}

impl TokenFrequencyTable {
    pub fn empty(stoplist: &[String]) -> Self {
        Self { counts: BTreeMap::new(), total: 0, stoplist: stoplist.to_vec() }
    }

    pub fn add(&mut self, token: &str) {
        if self.stoplist.iter().any(|s| s == token) {
            return;
        }
        *self.counts.entry(token.to_string()).or_default() += 1;
        self.total += 1;
    }

    /// Associative, commutative merge of two tables built with the same stoplist.
    pub fn merge(mut self, other: TokenFrequencyTable) -> Self {
        for (tok, c) in other.counts {
            *self.counts.entry(tok).or_default() += c;
        }
        self.total += other.total;
        self
    }

    pub fn proportion(&self, token: &str) -> f64 {
        match self.total {
            0 => 0.0,
            total => self.counts.get(token).copied().unwrap_or(0) as f64 / total as f64,
        }
    }
}

/// Counts the beginning token of every sentence in `transcripts`.
///
/// With `think_only`, only sentences inside a `<think>` block count.
pub fn beginning_token_distribution(
    transcripts: &[Transcript],
    stoplist: &[String],
    think_only: bool,
) -> TokenFrequencyTable {
    transcripts
        .par_iter()
        .map(|t| {
            let mut table = TokenFrequencyTable::empty(stoplist);
            for span in segment_sentences(t) {
                if think_only && !span.in_think {
                    continue;
                }
                table.add(beginning_token(&span, t));
            }
            table
        })
        .reduce(|| TokenFrequencyTable::empty(stoplist), TokenFrequencyTable::merge)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastRow {
    pub token: String,
    pub count_aha: u64,
    pub count_noaha: u64,
    pub p_aha: f64,
    pub p_noaha: f64,
    /// `p_aha - p_noaha`.
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastTable {
    /// Sorted by token.
    pub rows: Vec<ContrastRow>,
}

/// Per-token difference of frequency proportions over the union of tokens.
pub fn contrast_probability(
    aha: &TokenFrequencyTable,
    noaha: &TokenFrequencyTable,
) -> Result<ContrastTable, LingError> {
    if aha.total == 0 {
        return Err(LingError::EmptyTable("aha"));
    }
    if noaha.total == 0 {
        return Err(LingError::EmptyTable("no-aha"));
    }
    let mut tokens: Vec<&String> = aha.counts.keys().chain(noaha.counts.keys()).collect();
    tokens.sort();
    tokens.dedup();
    let rows = tokens
        .into_iter()
        .map(|tok| {
            let p_aha = aha.proportion(tok);
            let p_noaha = noaha.proportion(tok);
            ContrastRow {
                token: tok.clone(),
                count_aha: aha.counts.get(tok).copied().unwrap_or(0),
                count_noaha: noaha.counts.get(tok).copied().unwrap_or(0),
                p_aha,
                p_noaha,
                contrast: p_aha - p_noaha,
            }
        })
        .collect();
    Ok(ContrastTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Aha,
    NoAha,
}

/// The `k` tokens most characteristic of `side`; ties by token.
pub fn top_k_contrast(table: &ContrastTable, k: usize, side: Side) -> Result<Vec<&ContrastRow>, LingError> {
    if k == 0 {
        return Err(LingError::ZeroK);
    }
    let mut rows: Vec<&ContrastRow> = table.rows.iter().collect();
    rows.sort_by(|a, b| {
        let ord = match side {
            Side::Aha => b.contrast.total_cmp(&a.contrast),
            Side::NoAha => a.contrast.total_cmp(&b.contrast),
        };
        ord.then_with(|| a.token.cmp(&b.token))
    });
    rows.truncate(k);
    Ok(rows)
}

impl ContrastTable {
    /// Rows in descending contrast order.
    pub fn to_table(&self) -> Table {
        let mut table = Table::new(["token", "count_aha", "count_noaha", "p_aha", "p_noaha", "contrast"]);
        let ranked = top_k_contrast(self, self.rows.len().max(1), Side::Aha).unwrap_or_default();
        for r in ranked {
            table.push(vec![
                Cell::from(r.token.as_str()),
                Cell::Int(r.count_aha as i64),
                Cell::Int(r.count_noaha as i64),
                Cell::Float(r.p_aha),
                Cell::Float(r.p_noaha),
                Cell::Float(r.contrast),
            ]);
        }
        table
    }
}
