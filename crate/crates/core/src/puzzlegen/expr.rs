use std::fmt;

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational used for every Count Down intermediate.
pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    /// Canonical enumeration order.
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Mul)
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    /// `None` on division by zero.
    pub fn apply(self, a: Rational, b: Rational) -> Option<Rational> {
        match self {
            BinOp::Add => Some(a + b),
            BinOp::Sub => Some(a - b),
            BinOp::Mul => Some(a * b),
            BinOp::Div if b.is_zero() => None,
            BinOp::Div => Some(a / b),
        }
    }
}

/// Arithmetic expression tree over integer leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Num(i64),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Exact value; `None` if any division by zero occurs in the tree.
    pub fn eval(&self) -> Option<Rational> {
        match self {
            Expr::Num(v) => Some(Rational::from_integer(*v as i128)),
            Expr::Bin(op, a, b) => op.apply(a.eval()?, b.eval()?),
        }
    }

    /// Leaf values in left-to-right order.
    pub fn leaves(&self) -> Vec<i64> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<i64>) {
        match self {
            Expr::Num(v) => out.push(*v),
            Expr::Bin(_, a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    /// True when the leaves are exactly the multiset `numbers`.
    pub fn uses_exactly(&self, numbers: &[i64]) -> bool {
        let mut leaves = self.leaves();
        let mut want = numbers.to_vec();
        leaves.sort_unstable();
        want.sort_unstable();
        leaves == want
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent: BinOp, right: bool) -> fmt::Result {
        let needs_parens = match self {
            Expr::Num(_) => false,
            Expr::Bin(op, _, _) => {
                op.precedence() < parent.precedence()
                    || (right
                        && op.precedence() == parent.precedence()
                        && !(parent.is_commutative() && *op == parent))
            }
        };
        if needs_parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Bin(op, a, b) => {
                a.fmt_child(f, *op, false)?;
                write!(f, "{}", op.symbol())?;
                b.fmt_child(f, *op, true)
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseExprError {
    #[error("unexpected character {0:?} at {1}")]
    Unexpected(char, usize),
    #[error("unexpected end of expression")]
    Eof,
    #[error("number too large at {0}")]
    Overflow(usize),
}

impl std::str::FromStr for Expr {
    type Err = ParseExprError;

    /// Accepts integers, `+ - * /` (also `× ÷ −`), parentheses and spaces.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<(usize, char)> = s
            .char_indices()
            .filter(|(_, c)| !c.is_whitespace())
            .collect();
        let mut p = Parser { chars, pos: 0 };
        let e = p.sum()?;
        match p.peek() {
            None => Ok(e),
            Some((at, c)) => Err(ParseExprError::Unexpected(c, at)),
        }
    }
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<(usize, char)> {
        self.chars.get(self.pos).copied()
    }

    fn op(&self) -> Option<BinOp> {
        match self.peek()?.1 {
            '+' => Some(BinOp::Add),
            '-' | '−' => Some(BinOp::Sub),
            '*' | '×' | 'x' => Some(BinOp::Mul),
            '/' | '÷' => Some(BinOp::Div),
            _ => None,
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseExprError> {
        let mut lhs = self.product()?;
        while let Some(op @ (BinOp::Add | BinOp::Sub)) = self.op() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ParseExprError> {
        let mut lhs = self.atom()?;
        while let Some(op @ (BinOp::Mul | BinOp::Div)) = self.op() {
            self.pos += 1;
            let rhs = self.atom()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, ParseExprError> {
        let (at, c) = self.peek().ok_or(ParseExprError::Eof)?;
        if c == '(' {
            self.pos += 1;
            let inner = self.sum()?;
            match self.peek() {
                Some((_, ')')) => {
                    self.pos += 1;
                    Ok(inner)
                }
                Some((at, c)) => Err(ParseExprError::Unexpected(c, at)),
                None => Err(ParseExprError::Eof),
            }
        } else if c.is_ascii_digit() {
            let mut value: i64 = 0;
            while let Some((_, d)) = self.peek().filter(|(_, d)| d.is_ascii_digit()) {
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add(d.to_digit(10).unwrap_or(0) as i64))
                    .ok_or(ParseExprError::Overflow(at))?;
                self.pos += 1;
            }
            Ok(Expr::Num(value))
        } else {
            Err(ParseExprError::Unexpected(c, at))
        }
    }
}
