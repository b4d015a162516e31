//! Variable-level structure of a formula relative to a satisfying assignment.
//!
//! A literal `l` supports clause `C` under `σ` if `l` is the only literal of
//! `C` that `σ` makes true. The detectors here are either syntactic given `σ`
//! (support, 1-/2-loose, forced, tame, self-contained sets, expansion, Q0)
//! or read off an enumerated solution set (flip distances, loose, rigid).

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Assignment;
use crate::formula::{Formula, Literal};
use crate::oracle::SolutionSet;
use crate::{ceil_ln, ceil_ln_ln};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("assignment does not cover the free variables")]
    ScopeMismatch,
    #[error("assignment does not satisfy the formula")]
    NotSatisfying,
    #[error("assignment is not in the solution set")]
    NotInSolutionSet,
    #[error("solution set is truncated")]
    Truncated,
}

fn check_sigma(formula: &Formula, sigma: &Assignment) -> Result<(), StructureError> {
    if sigma.n() != formula.n() || !sigma.covers(&formula.free_vars()) {
        return Err(StructureError::ScopeMismatch);
    }
    if !formula.is_satisfied_by(sigma) {
        return Err(StructureError::NotSatisfying);
    }
    Ok(())
}

/// The literal of `var` that is true under `sigma`.
fn true_literal(sigma: &Assignment, var: u32) -> Literal {
    Literal::new(var, sigma.get(var).unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportTable {
    pub vars: Vec<u32>,
    /// `S_x`: clauses supported by the true literal of each free variable.
    pub support: Vec<usize>,
    /// Supporting variable of each clause, if any.
    pub supporter: Vec<Option<u32>>,
}

impl SupportTable {
    fn index(&self, var: u32) -> Option<usize> {
        self.vars.binary_search(&var).ok()
    }

    pub fn get(&self, var: u32) -> Option<usize> {
        self.index(var).map(|i| self.support[i])
    }

    /// Number of variables supporting 0, 1, 2 and at least 3 clauses.
    pub fn histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for &s in &self.support {
            h[s.min(3)] += 1;
        }
        h
    }

    pub fn total(&self) -> usize {
        self.support.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.vars.is_empty() {
            0.0
        } else {
            self.total() as f64 / self.vars.len() as f64
        }
    }
}

pub fn support_table(formula: &Formula, sigma: &Assignment) -> Result<SupportTable, StructureError> {
    check_sigma(formula, sigma)?;
    let vars = formula.free_vars();
    let mut support = vec![0; vars.len()];
    let mut supporter = Vec::with_capacity(formula.num_clauses());
    for c in formula.clauses() {
        let mut true_vars: Vec<u32> = c
            .lits()
            .iter()
            .filter(|l| l.is_true_under(sigma.get(l.var()).unwrap()))
            .map(|l| l.var())
            .collect();
        true_vars.sort_unstable();
        true_vars.dedup();
        let s = match true_vars.as_slice() {
            [v] => {
                support[vars.binary_search(v).unwrap()] += 1;
                Some(*v)
            }
            _ => None,
        };
        supporter.push(s);
    }
    debug_assert!(support.iter().sum::<usize>() <= formula.num_clauses());
    Ok(SupportTable {
        vars,
        support,
        supporter,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LooseFlags {
    pub vars: Vec<u32>,
    /// The true literal supports no clause.
    pub one_loose: Vec<bool>,
    /// Every clause the true literal supports contains a 1-loose variable.
    pub two_loose: Vec<bool>,
}

pub fn classify_two_loose(formula: &Formula, sigma: &Assignment) -> Result<LooseFlags, StructureError> {
    let table = support_table(formula, sigma)?;
    let one_loose: Vec<bool> = table.support.iter().map(|&s| s == 0).collect();
    let mut two_loose = one_loose.clone();
    for (i, &x) in table.vars.iter().enumerate() {
        if one_loose[i] {
            continue;
        }
        two_loose[i] = formula
            .clauses()
            .iter()
            .zip(&table.supporter)
            .filter(|(_, s)| **s == Some(x))
            .all(|(c, _)| {
                c.vars()
                    .any(|y| y != x && one_loose[table.vars.binary_search(&y).unwrap()])
            });
    }
    Ok(LooseFlags {
        vars: table.vars,
        one_loose,
        two_loose,
    })
}

/// Variables occurring in a unit clause.
pub fn classify_forced(formula: &Formula) -> Vec<u32> {
    let mut out: Vec<u32> = formula
        .clauses()
        .iter()
        .filter(|c| {
            let mut vs: Vec<u32> = c.vars().collect();
            vs.dedup();
            vs.len() == 1
        })
        .map(|c| c.lits()[0].var())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Per free variable: the depth-3 ball is acyclic and has at most `⌈ln n⌉` variables.
pub fn classify_tame(formula: &Formula) -> Vec<(u32, bool)> {
    let fg = formula.factor_graph();
    let limit = ceil_ln(formula.n());
    fg.vars()
        .iter()
        .map(|&x| {
            let b = fg.ball(x, 3);
            (x, b.is_acyclic() && b.num_vars() <= limit)
        })
        .collect()
}

/// `d_min(x)`: smallest `d(σ,τ)` over solutions `τ` with `τ(x) ≠ σ(x)`; `None` if none exists.
pub fn flip_distances(set: &SolutionSet, sigma: &Assignment) -> Result<Vec<Option<usize>>, StructureError> {
    if set.is_truncated() {
        return Err(StructureError::Truncated);
    }
    let s = set.pack(sigma).map_err(|_| StructureError::ScopeMismatch)?;
    if !set.contains_mask(s) {
        return Err(StructureError::NotInSolutionSet);
    }
    let mut best: Vec<Option<usize>> = vec![None; set.num_free()];
    for &t in set.masks() {
        let diff = s ^ t;
        let d = diff.count_ones() as usize;
        let mut m = diff;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            best[i] = Some(best[i].map_or(d, |b| b.min(d)));
            m &= m - 1;
        }
    }
    Ok(best)
}

/// Loose: `d_min(x) ≤ ⌈ln n⌉`.
pub fn classify_loose(
    formula: &Formula,
    sigma: &Assignment,
    set: &SolutionSet,
) -> Result<Vec<(u32, bool)>, StructureError> {
    let d = flip_distances(set, sigma)?;
    let limit = ceil_ln(formula.n());
    Ok(set
        .free_vars()
        .iter()
        .zip(d)
        .map(|(&v, d)| (v, d.is_some_and(|d| d <= limit)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rigidity {
    pub var: u32,
    /// `None` when no solution flips the variable.
    pub d_min: Option<usize>,
    pub rigid: bool,
}

/// ω-rigid: every flip costs at least `ω`.
pub fn classify_rigid(
    sigma: &Assignment,
    set: &SolutionSet,
    omega: usize,
) -> Result<Vec<Rigidity>, StructureError> {
    let d = flip_distances(set, sigma)?;
    Ok(set
        .free_vars()
        .iter()
        .zip(d)
        .map(|(&var, d_min)| Rigidity {
            var,
            d_min,
            rigid: d_min.is_none_or(|d| d >= omega),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfContainedSet {
    /// True literals in the set, by variable.
    pub literals: Vec<Literal>,
    /// Two supported clauses per literal whose variables all lie in the set.
    pub certificate: Vec<(Literal, [usize; 2])>,
}

impl SelfContainedSet {
    pub fn vars(&self) -> Vec<u32> {
        self.literals.iter().map(|l| l.var()).collect()
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }
}

/// Largest set of true literals each supporting at least two clauses whose
/// variables lie in the set, by peeling. Assigned variables have already
/// been removed from the clauses, so "in the set" is the only condition.
pub fn max_self_contained(formula: &Formula, sigma: &Assignment) -> Result<SelfContainedSet, StructureError> {
    let table = support_table(formula, sigma)?;
    let vars = &table.vars;
    let nv = vars.len();
    let idx = |v: u32| vars.binary_search(&v).unwrap();

    let clause_vars: Vec<Vec<usize>> = formula
        .clauses()
        .iter()
        .map(|c| {
            let mut vs: Vec<usize> = c.vars().map(idx).collect();
            vs.sort_unstable();
            vs.dedup();
            vs
        })
        .collect();
    let mut occurs: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (c, vs) in clause_vars.iter().enumerate() {
        for &v in vs {
            occurs[v].push(c);
        }
    }

    let mut in_set = vec![true; nv];
    let mut closed = vec![true; clause_vars.len()];
    let mut count = table.support.clone();
    let mut queue: VecDeque<usize> = (0..nv).filter(|&v| count[v] < 2).collect();
    while let Some(y) = queue.pop_front() {
        if !in_set[y] {
            continue;
        }
        in_set[y] = false;
        for &c in &occurs[y] {
            if !closed[c] {
                continue;
            }
            closed[c] = false;
            if let Some(z) = table.supporter[c].map(idx) {
                count[z] -= 1;
                if in_set[z] && count[z] < 2 {
                    queue.push_back(z);
                }
            }
        }
    }

    let mut literals = Vec::new();
    let mut certificate = Vec::new();
    for v in (0..nv).filter(|&v| in_set[v]) {
        let lit = true_literal(sigma, vars[v]);
        let cl: Vec<usize> = (0..clause_vars.len())
            .filter(|&c| closed[c] && table.supporter[c] == Some(vars[v]))
            .take(2)
            .collect();
        literals.push(lit);
        certificate.push((lit, [cl[0], cl[1]]));
    }
    Ok(SelfContainedSet {
        literals,
        certificate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionMode {
    /// Every `Q` of the allowed sizes was checked.
    Exhaustive,
    /// A peeling search found no violation; this is not a proof.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub holds: bool,
    pub witness: Option<Vec<u32>>,
    pub mode: ExpansionMode,
    /// Largest `|Q|` considered, `⌊χ·n⌋`.
    pub q_max: usize,
}

/// Largest number of free variables for which the expansion check is exhaustive.
pub const EXHAUSTIVE_EXPANSION_VARS: usize = 20;

/// Look for `Q` with `1 ≤ |Q| ≤ χn` and at least `2|Q|` clauses that contain
/// two or more variables of `Q`.
pub fn expansion_check(formula: &Formula, chi: f64) -> ExpansionReport {
    let vars = formula.free_vars();
    let nv = vars.len();
    let q_max = ((chi * formula.n() as f64 + 1e-9).floor().max(0.0) as usize).min(nv);
    let idx = |v: u32| vars.binary_search(&v).unwrap();
    if nv <= EXHAUSTIVE_EXPANSION_VARS {
        let masks: Vec<u64> = formula
            .clauses()
            .iter()
            .map(|c| c.vars().fold(0u64, |m, v| m | 1 << idx(v)))
            .filter(|m| m.count_ones() >= 2)
            .collect();
        for size in 1..=q_max {
            // Gosper's hack over subsets of the given size.
            let mut q: u64 = (1u64 << size) - 1;
            while q < 1u64 << nv {
                let e = masks.iter().filter(|&&m| (m & q).count_ones() >= 2).count();
                if e >= 2 * size {
                    let witness = (0..nv).filter(|&i| q >> i & 1 == 1).map(|i| vars[i]).collect();
                    return ExpansionReport {
                        holds: false,
                        witness: Some(witness),
                        mode: ExpansionMode::Exhaustive,
                        q_max,
                    };
                }
                let c = q & q.wrapping_neg();
                let r = q + c;
                q = (((r ^ q) >> 2) / c) | r;
            }
        }
        return ExpansionReport {
            holds: true,
            witness: None,
            mode: ExpansionMode::Exhaustive,
            q_max,
        };
    }

    // Peel from the full variable set, dropping the variable whose removal
    // loses the fewest dense clauses, and test every intermediate Q.
    let clause_vars: Vec<Vec<usize>> = formula
        .clauses()
        .iter()
        .map(|c| {
            let mut vs: Vec<usize> = c.vars().map(idx).collect();
            vs.sort_unstable();
            vs.dedup();
            vs
        })
        .collect();
    let mut occurs: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (c, vs) in clause_vars.iter().enumerate() {
        for &v in vs {
            occurs[v].push(c);
        }
    }
    let mut inside: Vec<usize> = clause_vars.iter().map(Vec::len).collect();
    let mut in_q = vec![true; nv];
    let mut size = nv;
    let mut dense = inside.iter().filter(|&&c| c >= 2).count();
    let loss = |v: usize, inside: &[usize]| occurs[v].iter().filter(|&&c| inside[c] == 2).count();
    while size > 0 {
        if size <= q_max && dense >= 2 * size {
            let witness = (0..nv).filter(|&i| in_q[i]).map(|i| vars[i]).collect();
            return ExpansionReport {
                holds: false,
                witness: Some(witness),
                mode: ExpansionMode::Heuristic,
                q_max,
            };
        }
        let v = (0..nv)
            .filter(|&v| in_q[v])
            .min_by_key(|&v| (loss(v, &inside), v))
            .unwrap();
        in_q[v] = false;
        size -= 1;
        for &c in &occurs[v] {
            if inside[c] == 2 {
                dense -= 1;
            }
            inside[c] -= 1;
        }
    }
    ExpansionReport {
        holds: true,
        witness: None,
        mode: ExpansionMode::Heuristic,
        q_max,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Q0Report {
    pub passes: bool,
    pub max_degree: usize,
    /// `⌈ln n⌉`.
    pub degree_threshold: usize,
    /// Variables occurring in more than `degree_threshold` clauses.
    pub high_degree_vars: Vec<u32>,
    /// Extra copies of clauses equal as literal sets.
    pub duplicate_clauses: usize,
    /// Clauses mentioning a variable more than once.
    pub repeated_var_clauses: usize,
    /// `⌈ln ln n⌉`.
    pub redundant_threshold: usize,
}

pub fn q0_check(formula: &Formula) -> Q0Report {
    let deg = formula.var_degrees();
    let degree_threshold = ceil_ln(formula.n());
    let high_degree_vars: Vec<u32> = deg
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > degree_threshold)
        .map(|(i, _)| i as u32 + 1)
        .collect();
    let mut seen: HashMap<Vec<Literal>, usize> = HashMap::new();
    for c in formula.clauses() {
        *seen.entry(c.literal_set()).or_default() += 1;
    }
    let duplicate_clauses = seen.values().map(|&c| c - 1).sum();
    let repeated_var_clauses = formula.clauses().iter().filter(|c| c.has_repeated_var()).count();
    let redundant_threshold = ceil_ln_ln(formula.n());
    Q0Report {
        passes: high_degree_vars.is_empty() && duplicate_clauses + repeated_var_clauses <= redundant_threshold,
        max_degree: deg.iter().copied().max().unwrap_or(0),
        degree_threshold,
        high_degree_vars,
        duplicate_clauses,
        repeated_var_clauses,
        redundant_threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableStructure {
    pub var: u32,
    pub support: usize,
    pub one_loose: bool,
    pub two_loose: bool,
    pub forced: bool,
    pub tame: bool,
    pub self_contained: bool,
    /// Only with an enumerated solution set.
    pub loose: Option<bool>,
    /// Flip distance, `None` for infinity; absent without a solution set.
    pub d_min: Option<Option<usize>>,
    pub rigid: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    /// `θn`.
    pub free_vars: usize,
    pub loose_threshold: usize,
    pub rigid_omega: usize,
    pub forced_fraction: f64,
    pub one_loose_fraction: f64,
    pub two_loose_fraction: f64,
    pub tame_fraction: f64,
    pub self_contained_fraction: f64,
    pub loose_fraction: Option<f64>,
    pub rigid_fraction: Option<f64>,
    pub mean_support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub variables: Vec<VariableStructure>,
    pub summary: StructureSummary,
    pub q0: Q0Report,
}

/// All detectors at once; flip-distance based ones only when `set` is given.
pub fn analyze(
    formula: &Formula,
    sigma: &Assignment,
    set: Option<&SolutionSet>,
    rigid_omega: usize,
) -> Result<StructureReport, StructureError> {
    let table = support_table(formula, sigma)?;
    let loose = classify_two_loose(formula, sigma)?;
    let forced = classify_forced(formula);
    let tame = classify_tame(formula);
    let sc = max_self_contained(formula, sigma)?.vars();
    let dist = set.map(|s| flip_distances(s, sigma)).transpose()?;
    let limit = ceil_ln(formula.n());
    let variables: Vec<VariableStructure> = table
        .vars
        .iter()
        .enumerate()
        .map(|(i, &var)| {
            let d = dist.as_ref().map(|d| d[i]);
            VariableStructure {
                var,
                support: table.support[i],
                one_loose: loose.one_loose[i],
                two_loose: loose.two_loose[i],
                forced: forced.binary_search(&var).is_ok(),
                tame: tame[i].1,
                self_contained: sc.binary_search(&var).is_ok(),
                loose: d.map(|d| d.is_some_and(|d| d <= limit)),
                d_min: d,
                rigid: d.map(|d| d.is_none_or(|d| d >= rigid_omega)),
            }
        })
        .collect();
    let nf = variables.len();
    let frac = |p: &dyn Fn(&VariableStructure) -> bool| {
        if nf == 0 {
            0.0
        } else {
            variables.iter().filter(|v| p(v)).count() as f64 / nf as f64
        }
    };
    let summary = StructureSummary {
        free_vars: nf,
        loose_threshold: limit,
        rigid_omega,
        forced_fraction: frac(&|v| v.forced),
        one_loose_fraction: frac(&|v| v.one_loose),
        two_loose_fraction: frac(&|v| v.two_loose),
        tame_fraction: frac(&|v| v.tame),
        self_contained_fraction: frac(&|v| v.self_contained),
        loose_fraction: dist.as_ref().map(|_| frac(&|v| v.loose == Some(true))),
        rigid_fraction: dist.as_ref().map(|_| frac(&|v| v.rigid == Some(true))),
        mean_support: table.mean(),
    };
    Ok(StructureReport {
        variables,
        summary,
        q0: q0_check(formula),
    })
}
