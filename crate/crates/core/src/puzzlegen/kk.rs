use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_range, PuzzleError, MAX_KK_SOLVE};

/// Given names used for K&K inhabitants; sampled without replacement.
pub const NAME_POOL: [&str; 40] = [
    "Penelope", "David", "Zoey", "Olivia", "James", "Mia", "Isabella", "Charlotte", "Liam",
    "Noah", "Emma", "Ava", "Sophia", "Lucas", "Henry", "Amelia", "Harper", "Evelyn", "Jack",
    "Samuel", "Grace", "Chloe", "Ethan", "Logan", "Ella", "Scarlett", "Owen", "Aria", "Daniel",
    "Matthew", "Victoria", "Luke", "Hannah", "Gabriel", "Lily", "Sebastian", "Nora", "Benjamin",
    "Aurora", "Jacob",
];

/// Boolean formula over atoms "person i is a knight".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Knight(usize),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn knight(i: usize) -> Self {
        Formula::Knight(i)
    }

    pub fn knave(i: usize) -> Self {
        Formula::Not(Box::new(Formula::Knight(i)))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Self {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    /// Nesting depth; a bare atom has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Knight(_) => 0,
            Formula::Not(a) => 1 + a.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    fn max_atom(&self) -> usize {
        match self {
            Formula::Knight(i) => *i,
            Formula::Not(a) => a.max_atom(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.max_atom().max(b.max_atom())
            }
        }
    }

    /// Evaluates against a bit mask (bit i set = person i is a knight).
    fn eval_mask(&self, mask: u32) -> bool {
        match self {
            Formula::Knight(i) => mask >> i & 1 == 1,
            Formula::Not(a) => !a.eval_mask(mask),
            Formula::And(a, b) => a.eval_mask(mask) && b.eval_mask(mask),
            Formula::Or(a, b) => a.eval_mask(mask) || b.eval_mask(mask),
            Formula::Implies(a, b) => !a.eval_mask(mask) || b.eval_mask(mask),
            Formula::Iff(a, b) => a.eval_mask(mask) == b.eval_mask(mask),
        }
    }

    fn eval_slice(&self, assignment: &[bool]) -> bool {
        match self {
            Formula::Knight(i) => assignment[*i],
            Formula::Not(a) => !a.eval_slice(assignment),
            Formula::And(a, b) => a.eval_slice(assignment) && b.eval_slice(assignment),
            Formula::Or(a, b) => a.eval_slice(assignment) || b.eval_slice(assignment),
            Formula::Implies(a, b) => !a.eval_slice(assignment) || b.eval_slice(assignment),
            Formula::Iff(a, b) => a.eval_slice(assignment) == b.eval_slice(assignment),
        }
    }

    /// English rendering in the style of the benchmark prompts.
    pub fn render(&self, names: &[String]) -> String {
        match self {
            Formula::Knight(i) => format!("{} is a knight", names[*i]),
            Formula::Not(a) => match a.as_ref() {
                Formula::Knight(i) => format!("{} is a knave", names[*i]),
                other => format!("it is not the case that {}", other.render(names)),
            },
            Formula::And(a, b) => format!("{} and {}", a.render(names), b.render(names)),
            Formula::Or(a, b) => format!("{} or {}", a.render(names), b.render(names)),
            Formula::Implies(a, b) => format!("If {} then {}", a.render(names), b.render(names)),
            Formula::Iff(a, b) => {
                format!("{} if and only if {}", a.render(names), b.render(names))
            }
        }
    }
}

/// One inhabitant's claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KkStatement {
    pub speaker: usize,
    pub body: Formula,
}

impl KkStatement {
    pub fn new(speaker: usize, body: Formula) -> Self {
        Self { speaker, body }
    }

    pub fn depth(&self) -> usize {
        self.body.depth()
    }

    fn check(&self, n: usize) -> Result<(), PuzzleError> {
        let index = self.body.max_atom().max(self.speaker);
        if index >= n {
            return Err(PuzzleError::AtomOutOfRange { index, n });
        }
        Ok(())
    }
}

/// Truth value of a statement's body under `assignment` (true = knight).
///
/// The speaker is not consulted here; consistency (speaker is a knight iff
/// the body is true) is the solver's concern.
pub fn eval_statement(stmt: &KkStatement, assignment: &[bool]) -> Result<bool, PuzzleError> {
    let index = stmt.body.max_atom();
    if index >= assignment.len() {
        return Err(PuzzleError::AtomOutOfRange { index, n: assignment.len() });
    }
    Ok(stmt.body.eval_slice(assignment))
}

/// Every assignment consistent with the statements, ascending by bit pattern
/// (bit i of the pattern is person i).
pub fn solve_kk(statements: &[KkStatement], n: usize) -> Result<Vec<Vec<bool>>, PuzzleError> {
    if n > MAX_KK_SOLVE {
        return Err(PuzzleError::TooLarge { n });
    }
    for s in statements {
        s.check(n)?;
    }
    let solutions = (0u32..1 << n)
        .filter(|&mask| consistent(statements, mask))
        .map(|mask| (0..n).map(|i| mask >> i & 1 == 1).collect())
        .collect();
    Ok(solutions)
}

fn consistent(statements: &[KkStatement], mask: u32) -> bool {
    statements
        .iter()
        .all(|s| (mask >> s.speaker & 1 == 1) == s.body.eval_mask(mask))
}

/// Acceptance predicate used by the generator: `Some(solution)` iff exactly
/// one assignment is consistent.
pub fn is_unique_solution(statements: &[KkStatement], n: usize) -> Option<Vec<bool>> {
    if n > MAX_KK_SOLVE || statements.iter().any(|s| s.check(n).is_err()) {
        return None;
    }
    let mut found = None;
    for mask in 0u32..1 << n {
        if consistent(statements, mask) {
            if found.is_some() {
                return None;
            }
            found = Some(mask);
        }
    }
    found.map(|mask| (0..n).map(|i| mask >> i & 1 == 1).collect())
}

/// Statement grammar for the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KkGrammar {
    /// Maximum formula depth: a bare atom is 0, a negated atom or a
    /// connective over bare atoms is 1, a connective over literals is 2.
    pub max_depth: usize,
    /// Rejection budget before generation gives up.
    pub max_attempts: usize,
}

impl Default for KkGrammar {
    fn default() -> Self {
        Self { max_depth: 2, max_attempts: 10_000 }
    }
}

impl KkGrammar {
    fn literal<R: Rng>(&self, rng: &mut R, n: usize, allow_negation: bool) -> Formula {
        let who = rng.gen_range(0..n);
        if allow_negation && rng.gen_bool(0.5) {
            Formula::knave(who)
        } else {
            Formula::knight(who)
        }
    }

    /// Draws one body from {atom, ¬atom, a∧b, a∨b, a→b, a↔b}, restricted by
    /// `max_depth`. Referents are uniform over all people, self included.
    fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Formula {
        let templates = if self.max_depth == 0 { 1 } else { 6 };
        let negated_operands = self.max_depth >= 2;
        match rng.gen_range(0..templates) {
            0 => Formula::knight(rng.gen_range(0..n)),
            1 => Formula::knave(rng.gen_range(0..n)),
            t => {
                let a = self.literal(rng, n, negated_operands);
                let b = self.literal(rng, n, negated_operands);
                match t {
                    2 => Formula::and(a, b),
                    3 => Formula::or(a, b),
                    4 => Formula::implies(a, b),
                    _ => Formula::iff(a, b),
                }
            }
        }
    }
}

/// A Knights-and-Knaves instance with its verified unique solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KkPuzzle {
    pub n: usize,
    pub names: Vec<String>,
    pub statements: Vec<KkStatement>,
    /// `solution[i]` is true when person i is a knight.
    pub solution: Vec<bool>,
    pub seed: u64,
}

impl KkPuzzle {
    /// Builds a puzzle from hand-written statements, verifying uniqueness.
    pub fn from_statements(
        names: Vec<String>,
        statements: Vec<KkStatement>,
        seed: u64,
    ) -> Result<Option<Self>, PuzzleError> {
        let n = names.len();
        let solutions = solve_kk(&statements, n)?;
        if solutions.len() != 1 {
            return Ok(None);
        }
        let solution = solutions.into_iter().next().unwrap_or_default();
        Ok(Some(Self { n, names, statements, solution, seed }))
    }

    pub fn prompt(&self) -> String {
        let mut out = String::from(
            "A very special island is inhabited only by knights and knaves. \
             Knights always tell the truth, and knaves always lie. ",
        );
        out.push_str(&format!(
            "You meet {} inhabitants: {}. ",
            self.n,
            english_list(&self.names)
        ));
        for s in &self.statements {
            let name = &self.names[s.speaker];
            let claim = s.body.render(&self.names);
            let line = match s.speaker % 3 {
                0 => format!("{name} noted, \"{claim}\". "),
                1 => format!("{name} told you that \"{claim}\". "),
                _ => format!("According to {name}, \"{claim}\". "),
            };
            out.push_str(&line);
        }
        out.push_str("So who is a knight and who is a knave?");
        out
    }

    /// "Penelope is a knave, David is a knave, and Zoey is a knight."
    pub fn solution_text(&self) -> String {
        let claims: Vec<String> = self
            .names
            .iter()
            .zip(&self.solution)
            .map(|(name, &knight)| {
                format!("{name} is a {}", if knight { "knight" } else { "knave" })
            })
            .collect();
        format!("{}.", english_list(&claims))
    }
}

fn english_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

/// Rejection-samples a puzzle with a unique solution.
///
/// Pure in `(n, seed, grammar)`.
pub fn gen_kk(n: usize, seed: u64, grammar: &KkGrammar) -> Result<KkPuzzle, PuzzleError> {
    check_range(n, 2, 12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = NAME_POOL
        .choose_multiple(&mut rng, n)
        .map(|s| s.to_string())
        .collect();
    for _ in 0..grammar.max_attempts {
        let statements: Vec<KkStatement> = (0..n)
            .map(|speaker| KkStatement::new(speaker, grammar.sample(&mut rng, n)))
            .collect();
        if let Some(solution) = is_unique_solution(&statements, n) {
            return Ok(KkPuzzle { n, names, statements, solution, seed });
        }
    }
    Err(PuzzleError::AttemptsExhausted { attempts: grammar.max_attempts })
}
