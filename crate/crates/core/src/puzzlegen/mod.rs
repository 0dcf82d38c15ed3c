//! Knights-and-Knaves and Count Down puzzle generation, solving and grading.
//!
//! Every generated puzzle is verified by exhaustive search before it is
//! emitted: K&K puzzles have exactly one consistent knight/knave assignment,
//! Count Down puzzles carry a witness expression that evaluates exactly to the
//! target under rational arithmetic.

mod countdown;
mod dataset;
mod expr;
mod grade;
mod kk;

pub use countdown::{gen_countdown, solve_countdown, CountdownConfig, CountdownPuzzle};
pub use dataset::{read_puzzles, write_puzzles, PuzzleRecord};
pub use expr::{BinOp, Expr, ParseExprError, Rational};
pub use grade::{grade_answer, grade_countdown, grade_kk, Verdict};
pub use kk::{
    eval_statement, gen_kk, is_unique_solution, solve_kk, Formula, KkGrammar, KkPuzzle,
    KkStatement, NAME_POOL,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::Task;

/// Largest K&K population the exhaustive solver accepts.
pub const MAX_KK_SOLVE: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PuzzleError {
    #[error("atom references person {index} but the puzzle has {n} people")]
    AtomOutOfRange { index: usize, n: usize },
    #[error("{n} people is too many for exhaustive solving (limit {MAX_KK_SOLVE})")]
    TooLarge { n: usize },
    #[error("difficulty {n} outside supported range {min}..={max}")]
    DifficultyOutOfRange { n: usize, min: usize, max: usize },
    #[error("no acceptable puzzle after {attempts} attempts")]
    AttemptsExhausted { attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// A benchmark instance of either task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Puzzle {
    Kk(KkPuzzle),
    Countdown(CountdownPuzzle),
}

impl Puzzle {
    pub fn task(&self) -> Task {
        match self {
            Puzzle::Kk(_) => Task::Kk,
            Puzzle::Countdown(_) => Task::Countdown,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Puzzle::Kk(p) => p.n,
            Puzzle::Countdown(p) => p.numbers.len(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Puzzle::Kk(p) => p.seed,
            Puzzle::Countdown(p) => p.seed,
        }
    }

    pub fn prompt(&self) -> String {
        match self {
            Puzzle::Kk(p) => p.prompt(),
            Puzzle::Countdown(p) => p.prompt(),
        }
    }

    /// Stable identifier used for transcripts collected on this puzzle.
    pub fn id(&self) -> String {
        format!("{}-n{}-{:016x}", self.task(), self.n(), self.seed())
    }
}

fn check_range(n: usize, min: usize, max: usize) -> Result<(), PuzzleError> {
    if n < min || n > max {
        return Err(PuzzleError::DifficultyOutOfRange { n, min, max });
    }
    Ok(())
}
