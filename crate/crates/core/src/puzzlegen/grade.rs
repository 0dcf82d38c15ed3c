use std::collections::HashMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::expr::{Expr, Rational};
use super::{CountdownPuzzle, KkPuzzle, Puzzle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unparseable,
}

pub fn grade_answer(puzzle: &Puzzle, answer: &str) -> Verdict {
    match puzzle {
        Puzzle::Kk(p) => grade_kk(p, answer),
        Puzzle::Countdown(p) => grade_countdown(p, answer),
    }
}

/// Reads "NAME is a knight|knave" claims; the last claim per name wins.
/// Unparseable unless every inhabitant received a claim.
pub fn grade_kk(puzzle: &KkPuzzle, answer: &str) -> Verdict {
    let alternatives: Vec<String> = puzzle.names.iter().map(|n| regex::escape(n)).collect();
    let pattern = format!(r"\b({})\s+is\s+an?\s+(knight|knave)\b", alternatives.join("|"));
    let Ok(re) = Regex::new(&pattern) else {
        return Verdict::Unparseable;
    };
    let mut claims: HashMap<&str, bool> = HashMap::new();
    for cap in re.captures_iter(answer) {
        let (Some(name), Some(kind)) = (cap.get(1), cap.get(2)) else { continue };
        claims.insert(name.as_str(), kind.as_str() == "knight");
    }
    let mut correct = true;
    for (name, &truth) in puzzle.names.iter().zip(&puzzle.solution) {
        match claims.get(name.as_str()) {
            None => return Verdict::Unparseable,
            Some(&claim) => correct &= claim == truth,
        }
    }
    if correct {
        Verdict::Correct
    } else {
        Verdict::Incorrect
    }
}

/// Grades the last arithmetic expression (one containing an operator) found
/// in the answer: it must use exactly the puzzle's numbers and hit the target.
pub fn grade_countdown(puzzle: &CountdownPuzzle, answer: &str) -> Verdict {
    let Some(expr) = last_expression(answer) else {
        return Verdict::Unparseable;
    };
    let hits = expr.eval() == Some(Rational::from_integer(puzzle.target as i128));
    if hits && expr.uses_exactly(&puzzle.numbers) {
        Verdict::Correct
    } else {
        Verdict::Incorrect
    }
}

fn is_expr_char(c: char) -> bool {
    c.is_ascii_digit() || " +-*/()×÷−".contains(c)
}

fn last_expression(text: &str) -> Option<Expr> {
    let mut runs: Vec<&str> = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (is_expr_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push(&text[s..i]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(&text[s..]);
    }
    runs.iter().rev().find_map(|run| {
        let run = run.trim();
        let has_digit = run.chars().any(|c| c.is_ascii_digit());
        let has_op = run.chars().any(|c| "+-*/×÷−".contains(c));
        if !(has_digit && has_op) {
            return None;
        }
        run.parse::<Expr>()
            .ok()
            .or_else(|| run.trim_matches(|c| c == '(' || c == ')').parse().ok())
            .filter(|e| matches!(e, Expr::Bin(..)))
    })
}
