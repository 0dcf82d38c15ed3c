use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CountdownPuzzle, Expr, KkPuzzle, KkStatement, Puzzle};
use crate::transcript::Task;

/// One line of a puzzle dataset file.
///
/// `task`, `n`, `seed`, `prompt`, `solution` and `witness` form the public
/// record; the remaining fields let a puzzle be rebuilt for grading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuzzleRecord {
    pub task: Task,
    pub n: usize,
    pub seed: u64,
    pub prompt: String,
    pub solution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statements: Option<Vec<KkStatement>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numbers: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<i64>,
}

impl From<&Puzzle> for PuzzleRecord {
    fn from(p: &Puzzle) -> Self {
        match p {
            Puzzle::Kk(k) => PuzzleRecord {
                task: Task::Kk,
                n: k.n,
                seed: k.seed,
                prompt: k.prompt(),
                solution: k.solution_text(),
                witness: None,
                names: Some(k.names.clone()),
                assignment: Some(k.solution.clone()),
                statements: Some(k.statements.clone()),
                numbers: None,
                target: None,
            },
            Puzzle::Countdown(c) => PuzzleRecord {
                task: Task::Countdown,
                n: c.numbers.len(),
                seed: c.seed,
                prompt: c.prompt(),
                solution: c.witness.to_string(),
                witness: Some(c.witness.to_string()),
                names: None,
                assignment: None,
                statements: None,
                numbers: Some(c.numbers.clone()),
                target: Some(c.target),
            },
        }
    }
}

impl PuzzleRecord {
    /// Rebuilds the puzzle; `None` when the structural fields are missing.
    pub fn to_puzzle(&self) -> Option<Puzzle> {
        match self.task {
            Task::Kk => Some(Puzzle::Kk(KkPuzzle {
                n: self.n,
                names: self.names.clone()?,
                statements: self.statements.clone()?,
                solution: self.assignment.clone()?,
                seed: self.seed,
            })),
            Task::Countdown => {
                let witness: Expr = self.witness.as_deref()?.parse().ok()?;
                Some(Puzzle::Countdown(CountdownPuzzle {
                    numbers: self.numbers.clone()?,
                    target: self.target?,
                    witness,
                    seed: self.seed,
                }))
            }
        }
    }
}

pub fn write_puzzles<W: Write>(mut out: W, puzzles: &[Puzzle]) -> std::io::Result<()> {
    for p in puzzles {
        let line = serde_json::to_string(&PuzzleRecord::from(p)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_puzzles<R: BufRead>(input: R) -> Result<Vec<Puzzle>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PuzzleRecord =
            serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        out.push(
            rec.to_puzzle()
                .ok_or_else(|| format!("line {}: record lacks structural fields", i + 1))?,
        );
    }
    Ok(out)
}
