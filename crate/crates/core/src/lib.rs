//! Desk-scale laboratory for the random k-SAT decimation process.
//!
//! * [`formula`]: CNF formulas, substitution and the factor graph; [`dimacs`] I/O.
//! * [`generators`]: the uniform model and the two planted models.
//! * [`oracle`]: exact counting, marginals, the decimation process and solution geometry.
//! * [`bp`]: Belief Propagation and BP-guided decimation.
//! * [`structure`]: support, looseness, rigidity, self-contained sets, expansion.
//! * [`phase`]: closed-form rate functions and the regime classifier.
//! * [`harness`]: experiment specs, records and reproducible emission.

pub mod assignment;
pub mod bp;
pub mod dimacs;
pub mod formula;
pub mod generators;
pub mod harness;
pub mod oracle;
pub mod phase;
pub mod structure;

pub use assignment::{Assignment, AssignmentError};
pub use formula::{Clause, FactorGraph, Formula, FormulaError, Literal, SimplifyOutcome};

/// `⌈ln n⌉`, floored at 1. Used as the finite-n reading of `ln n` thresholds.
pub fn ceil_ln(n: usize) -> usize {
    ((n.max(1) as f64).ln().ceil() as usize).max(1)
}

/// `⌈ln ln n⌉`, floored at 1.
pub fn ceil_ln_ln(n: usize) -> usize {
    let l = (n.max(1) as f64).ln();
    if l <= 1.0 {
        1
    } else {
        (l.ln().ceil() as usize).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_thresholds() {
        assert_eq!(ceil_ln(1), 1);
        assert_eq!(ceil_ln(3), 2);
        assert_eq!(ceil_ln(20), 3);
        assert_eq!(ceil_ln(21), 4);
        assert_eq!(ceil_ln_ln(10), 1);
        assert_eq!(ceil_ln_ln(100), 2);
    }
}
