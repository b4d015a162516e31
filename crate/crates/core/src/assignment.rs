//! Partial and total truth assignments over variables `x_1..x_n`.

use std::fmt;

use thiserror::Error;

/// Errors from parsing an assignment bitstring.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("invalid character {ch:?} at position {pos} in assignment bitstring")]
    InvalidChar { ch: char, pos: usize },
    #[error("assignment has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
}

/// Truth values indexed by variable (1-based). Unassigned variables are `None`.
///
/// The textual form is a bitstring with one character per variable:
/// `1` (true), `0` (false) or `-` (unassigned).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Assignment {
    values: Vec<Option<bool>>,
}

impl Assignment {
    /// An assignment over `n` variables with nothing assigned.
    pub fn empty(n: usize) -> Self {
        Self {
            values: vec![None; n],
        }
    }

    /// A total assignment; `bits[i]` is the value of `x_{i+1}`.
    pub fn from_bools(bits: &[bool]) -> Self {
        Self {
            values: bits.iter().map(|&b| Some(b)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, var: u32) -> Option<bool> {
        self.values.get(var as usize - 1).copied().flatten()
    }

    pub fn set(&mut self, var: u32, value: bool) {
        self.values[var as usize - 1] = Some(value);
    }

    pub fn unset(&mut self, var: u32) {
        self.values[var as usize - 1] = None;
    }

    pub fn is_total(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// Variables carrying a value, ascending.
    pub fn scope(&self) -> impl Iterator<Item = u32> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some())
            .map(|(i, _)| i as u32 + 1)
    }

    pub fn covers(&self, vars: &[u32]) -> bool {
        vars.iter()
            .all(|&v| (v as usize) <= self.n() && self.get(v).is_some())
    }

    /// Keep only the values of `vars`.
    pub fn restrict(&self, vars: &[u32]) -> Self {
        let mut out = Self::empty(self.n());
        for &v in vars {
            if let Some(b) = self.get(v) {
                out.set(v, b);
            }
        }
        out
    }

    /// Pack the values of `vars` into a bitmask, bit `i` holding `vars[i]`.
    /// Returns `None` if some variable is unassigned or there are more than 64.
    pub fn pack(&self, vars: &[u32]) -> Option<u64> {
        if vars.len() > 64 {
            return None;
        }
        let mut bits = 0u64;
        for (i, &v) in vars.iter().enumerate() {
            if self.get(v)? {
                bits |= 1 << i;
            }
        }
        Some(bits)
    }

    /// Inverse of [`Assignment::pack`], over `n` variables in total.
    pub fn unpack(vars: &[u32], bits: u64, n: usize) -> Self {
        let mut out = Self::empty(n);
        for (i, &v) in vars.iter().enumerate() {
            out.set(v, bits >> i & 1 == 1);
        }
        out
    }

    /// Number of variables assigned in both and given different values.
    pub fn hamming(&self, other: &Self) -> usize {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| matches!((a, b), (Some(x), Some(y)) if x != y))
            .count()
    }

    pub fn to_bitstring(&self) -> String {
        self.values
            .iter()
            .map(|v| match v {
                Some(true) => '1',
                Some(false) => '0',
                None => '-',
            })
            .collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self, AssignmentError> {
        let values = s
            .trim()
            .chars()
            .enumerate()
            .map(|(pos, ch)| match ch {
                '1' => Ok(Some(true)),
                '0' => Ok(Some(false)),
                '-' => Ok(None),
                _ => Err(AssignmentError::InvalidChar { ch, pos }),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { values })
    }

    /// Parse a bitstring that must have exactly `n` characters.
    pub fn from_bitstring_n(s: &str, n: usize) -> Result<Self, AssignmentError> {
        let a = Self::from_bitstring(s)?;
        if a.n() != n {
            return Err(AssignmentError::Length {
                got: a.n(),
                expected: n,
            });
        }
        Ok(a)
    }
}

impl fmt::Debug for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Assignment({})", self.to_bitstring())
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}
