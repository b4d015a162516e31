//! DIMACS CNF reading and writing.
//!
//! Besides the standard `p cnf n m` header and `0`-terminated clauses, a few
//! comment lines carry decimation state:
//!
//! ```text
//! c decimated <t>      x_1..x_t are assigned
//! c free <bits>        explicit free mask ('1' = free) when it is not a prefix
//! c k <K>              original clause width, when it differs from the longest clause
//! c sigma <bits>       an assignment travelling with the formula
//! ```
//!
//! Other comment lines are ignored. A line starting with `%` ends the input.

use std::fmt::Write as _;

use thiserror::Error;

use crate::assignment::{Assignment, AssignmentError};
use crate::formula::{Clause, Formula, FormulaError, Literal};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DimacsError {
    #[error("missing 'p cnf' header")]
    MissingHeader,
    #[error("line {line}: malformed header")]
    MalformedHeader { line: usize },
    #[error("line {line}: invalid token {token:?}")]
    InvalidToken { line: usize, token: String },
    #[error("line {line}: literal {lit} out of range for n = {n}")]
    LiteralOutOfRange { line: usize, lit: i64, n: usize },
    #[error("line {line}: zero-length clause")]
    EmptyClause { line: usize },
    #[error("last clause is not terminated by 0")]
    UnterminatedClause,
    #[error("header declares {declared} clauses, found {found}")]
    ClauseCount { declared: usize, found: usize },
    #[error("line {line}: malformed comment directive")]
    BadDirective { line: usize },
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

pub fn parse_dimacs(text: &str) -> Result<Formula, DimacsError> {
    parse_dimacs_with_sigma(text).map(|(f, _)| f)
}

/// Parse a formula and the optional `c sigma` assignment.
pub fn parse_dimacs_with_sigma(text: &str) -> Result<(Formula, Option<Assignment>), DimacsError> {
    let mut header: Option<(usize, usize)> = None;
    let mut decimated: Option<usize> = None;
    let mut free_bits: Option<String> = None;
    let mut k_directive: Option<usize> = None;
    let mut sigma_bits: Option<String> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        if s.starts_with('%') {
            break;
        }
        if let Some(rest) = s.strip_prefix('c') {
            if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
                return Err(DimacsError::InvalidToken {
                    line,
                    token: s.to_string(),
                });
            }
            let mut words = rest.split_whitespace();
            let bad = || DimacsError::BadDirective { line };
            match words.next() {
                Some("decimated") => {
                    decimated = Some(words.next().and_then(|w| w.parse().ok()).ok_or_else(bad)?)
                }
                Some("k") => {
                    k_directive = Some(words.next().and_then(|w| w.parse().ok()).ok_or_else(bad)?)
                }
                Some("free") => free_bits = Some(words.next().ok_or_else(bad)?.to_string()),
                Some("sigma") => sigma_bits = Some(words.next().ok_or_else(bad)?.to_string()),
                _ => {}
            }
            continue;
        }
        if s.starts_with('p') {
            let parts: Vec<&str> = s.split_whitespace().collect();
            if header.is_some() || parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
                return Err(DimacsError::MalformedHeader { line });
            }
            let n = parts[2].parse().map_err(|_| DimacsError::MalformedHeader { line })?;
            let m = parts[3].parse().map_err(|_| DimacsError::MalformedHeader { line })?;
            header = Some((n, m));
            continue;
        }
        let Some((n, _)) = header else {
            return Err(DimacsError::MissingHeader);
        };
        for tok in s.split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| DimacsError::InvalidToken {
                line,
                token: tok.to_string(),
            })?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(DimacsError::EmptyClause { line });
                }
                clauses.push(Clause::new(std::mem::take(&mut current)));
            } else {
                if lit.unsigned_abs() as usize > n || lit.unsigned_abs() > u32::MAX as u64 {
                    return Err(DimacsError::LiteralOutOfRange { line, lit, n });
                }
                current.push(Literal::new(lit.unsigned_abs() as u32, lit > 0));
            }
        }
    }

    let (n, m) = header.ok_or(DimacsError::MissingHeader)?;
    if !current.is_empty() {
        return Err(DimacsError::UnterminatedClause);
    }
    if clauses.len() != m {
        return Err(DimacsError::ClauseCount {
            declared: m,
            found: clauses.len(),
        });
    }
    let max_len = clauses.iter().map(Clause::len).max().unwrap_or(0);
    let k = k_directive.unwrap_or(max_len);
    let free = match (free_bits, decimated) {
        (Some(bits), _) => {
            let a = Assignment::from_bitstring_n(&bits, n)?;
            (1..=n as u32).map(|v| a.get(v) == Some(true)).collect()
        }
        (None, Some(t)) => (0..n).map(|i| i >= t).collect(),
        (None, None) => vec![true; n],
    };
    let formula = Formula::with_free(n, k, clauses, free)?;
    let sigma = sigma_bits
        .map(|b| Assignment::from_bitstring_n(&b, n))
        .transpose()?;
    Ok((formula, sigma))
}

pub fn emit_dimacs(formula: &Formula) -> String {
    emit(formula, None)
}

pub fn emit_dimacs_with_sigma(formula: &Formula, sigma: &Assignment) -> String {
    emit(formula, Some(sigma))
}

fn emit(formula: &Formula, sigma: Option<&Assignment>) -> String {
    let mut out = String::new();
    match formula.decimated_prefix() {
        Some(0) => {}
        Some(t) => writeln!(out, "c decimated {t}").unwrap(),
        None => {
            let bits: String = formula
                .free_mask()
                .iter()
                .map(|&f| if f { '1' } else { '0' })
                .collect();
            writeln!(out, "c free {bits}").unwrap();
        }
    }
    if formula.k() != formula.max_clause_len() {
        writeln!(out, "c k {}", formula.k()).unwrap();
    }
    if let Some(s) = sigma {
        writeln!(out, "c sigma {}", s.to_bitstring()).unwrap();
    }
    writeln!(out, "p cnf {} {}", formula.n(), formula.num_clauses()).unwrap();
    for c in formula.clauses() {
        for l in c.lits() {
            write!(out, "{} ", l.to_dimacs()).unwrap();
        }
        out.push_str("0\n");
    }
    out
}
