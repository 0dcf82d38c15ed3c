use indexmap::IndexMap;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expr::{BinOp, Expr, Rational};
use super::{check_range, PuzzleError};

/// Count Down instance: reach `target` using every number exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountdownPuzzle {
    pub numbers: Vec<i64>,
    pub target: i64,
    pub witness: Expr,
    pub seed: u64,
}

impl CountdownPuzzle {
    pub fn prompt(&self) -> String {
        let nums: Vec<String> = self.numbers.iter().map(|v| v.to_string()).collect();
        format!(
            "Using the numbers {{{}}}, create an equation that equals {}. You can use basic \
             arithmetic operations (+, -, *, /) and each number can only be used once.",
            nums.join(", "),
            self.target
        )
    }

    /// Checks the stored witness: full multiset use and exact value.
    pub fn witness_is_valid(&self) -> bool {
        self.witness.uses_exactly(&self.numbers)
            && self.witness.eval() == Some(Rational::from_integer(self.target as i128))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountdownConfig {
    /// Inclusive range the numbers are drawn from.
    pub values: (i64, i64),
    /// Inclusive range an acceptable target must fall in.
    pub targets: (i64, i64),
    pub max_attempts: usize,
}

impl Default for CountdownConfig {
    fn default() -> Self {
        Self { values: (1, 99), targets: (10, 999), max_attempts: 10_000 }
    }
}

impl CountdownConfig {
    fn validate(&self) -> Result<(), PuzzleError> {
        let (lo, hi) = self.values;
        let (tlo, thi) = self.targets;
        if lo < 1 || hi < lo {
            return Err(PuzzleError::InvalidConfig(format!("bad value range {lo}..={hi}")));
        }
        if tlo < 1 || thi < tlo {
            return Err(PuzzleError::InvalidConfig(format!("bad target range {tlo}..={thi}")));
        }
        Ok(())
    }
}

/// Draws numbers, combines them with a random full-use expression and keeps
/// the result when it is an integer inside the target range.
pub fn gen_countdown(
    n: usize,
    seed: u64,
    config: &CountdownConfig,
) -> Result<CountdownPuzzle, PuzzleError> {
    check_range(n, 2, 8)?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = config.values;
    let (tlo, thi) = config.targets;
    for _ in 0..config.max_attempts {
        let numbers: Vec<i64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
        let Some(witness) = random_expression(&mut rng, &numbers) else {
            continue;
        };
        let Some(value) = witness.eval() else { continue };
        if !value.is_integer() {
            continue;
        }
        let target = value.to_integer();
        if target < tlo as i128 || target > thi as i128 {
            continue;
        }
        return Ok(CountdownPuzzle { numbers, target: target as i64, witness, seed });
    }
    Err(PuzzleError::AttemptsExhausted { attempts: config.max_attempts })
}

/// Repeatedly merges two random operands; `None` on division by zero.
fn random_expression<R: Rng>(rng: &mut R, numbers: &[i64]) -> Option<Expr> {
    let mut items: Vec<(Expr, Rational)> = numbers
        .iter()
        .map(|&v| (Expr::Num(v), Rational::from_integer(v as i128)))
        .collect();
    while items.len() > 1 {
        let i = rng.gen_range(0..items.len());
        let (a, av) = items.swap_remove(i);
        let j = rng.gen_range(0..items.len());
        let (b, bv) = items.swap_remove(j);
        let op = BinOp::ALL[rng.gen_range(0..4)];
        let value = op.apply(av, bv)?;
        items.push((Expr::bin(op, a, b), value));
    }
    items.pop().map(|(e, _)| e)
}

#[derive(Clone, Copy)]
enum Origin {
    Leaf(usize),
    Combine { op: BinOp, left: (u32, usize), right: (u32, usize) },
}

/// Reachable values per subset of positions, in canonical discovery order.
struct Reach {
    numbers: Vec<i64>,
    tables: Vec<IndexMap<Rational, Origin>>,
}

impl Reach {
    fn build(numbers: &[i64]) -> Self {
        let n = numbers.len();
        let full = (1u32 << n) - 1;
        let mut tables: Vec<IndexMap<Rational, Origin>> = vec![IndexMap::new(); 1 << n];
        for (i, &v) in numbers.iter().enumerate() {
            tables[1 << i].insert(Rational::from_integer(v as i128), Origin::Leaf(i));
        }
        // Submasks are numerically smaller, so ascending order is topological.
        // The full set is never materialized; solve() searches it by inversion.
        for mask in 1..full {
            if mask.count_ones() < 2 {
                continue;
            }
            let mut table = IndexMap::new();
            for left in submasks(mask) {
                let right = mask ^ left;
                for op in BinOp::ALL {
                    if op.is_commutative() && left > right {
                        continue;
                    }
                    for (li, a) in tables[left as usize].keys().enumerate() {
                        for (ri, b) in tables[right as usize].keys().enumerate() {
                            if let Some(v) = op.apply(*a, *b) {
                                table.entry(v).or_insert(Origin::Combine {
                                    op,
                                    left: (left, li),
                                    right: (right, ri),
                                });
                            }
                        }
                    }
                }
            }
            tables[mask as usize] = table;
        }
        Self { numbers: numbers.to_vec(), tables }
    }

    fn expr(&self, mask: u32, index: usize) -> Expr {
        let (_, origin) = self.tables[mask as usize]
            .get_index(index)
            .expect("origin index recorded during build");
        match *origin {
            Origin::Leaf(i) => Expr::Num(self.numbers[i]),
            Origin::Combine { op, left, right } => {
                Expr::bin(op, self.expr(left.0, left.1), self.expr(right.0, right.1))
            }
        }
    }

    /// First witness over the full set, in (split, op, left value) order.
    fn solve(&self, target: Rational) -> Option<Expr> {
        let n = self.numbers.len();
        let full = (1u32 << n) - 1;
        if n == 1 {
            return self.tables[1].get_index_of(&target).map(|i| self.expr(1, i));
        }
        for left in submasks(full) {
            let right = full ^ left;
            let rt = &self.tables[right as usize];
            for op in BinOp::ALL {
                if op.is_commutative() && left > right {
                    continue;
                }
                for (li, &a) in self.tables[left as usize].keys().enumerate() {
                    let ri = match op {
                        BinOp::Add => rt.get_index_of(&(target - a)),
                        BinOp::Sub => rt.get_index_of(&(a - target)),
                        BinOp::Mul if a.is_zero() => target.is_zero().then_some(0),
                        BinOp::Mul => rt.get_index_of(&(target / a)),
                        BinOp::Div if target.is_zero() => {
                            if a.is_zero() {
                                rt.keys().position(|b| !b.is_zero())
                            } else {
                                None
                            }
                        }
                        BinOp::Div => {
                            let b = a / target;
                            if b.is_zero() {
                                None
                            } else {
                                rt.get_index_of(&b)
                            }
                        }
                    };
                    if let Some(ri) = ri {
                        return Some(Expr::bin(op, self.expr(left, li), self.expr(right, ri)));
                    }
                }
            }
        }
        None
    }
}

/// Non-empty proper submasks of `mask`, ascending.
fn submasks(mask: u32) -> impl Iterator<Item = u32> {
    let mut subs = Vec::new();
    let mut sub = mask & mask.wrapping_sub(1);
    while sub != 0 {
        subs.push(sub);
        sub = (sub - 1) & mask;
    }
    subs.into_iter().rev()
}

/// Exhaustive search for an expression that uses every number once and
/// equals `target` exactly. Ties resolve to the first witness in canonical
/// order: split subset ascending, then `+ - * /`, then operand discovery order.
pub fn solve_countdown(numbers: &[i64], target: i64) -> Result<Option<Expr>, PuzzleError> {
    check_range(numbers.len(), 1, 8)?;
    let reach = Reach::build(numbers);
    Ok(reach.solve(Rational::from_integer(target as i128)))
}
