//! CNF formulas, substitution with simplification, and the factor graph.
//!
//! A [`Formula`] lives over the variables `x_1..x_n` and keeps track of which
//! variables are still free. Clauses only ever mention free variables; once a
//! variable has been substituted it disappears from every clause. During the
//! decimation process the free set is the suffix `x_{t+1}..x_n`, but the type
//! allows arbitrary free sets (neighbourhood subformulas need them).

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Assignment;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("variable {var} is out of range 1..={n}")]
    VarOutOfRange { var: u32, n: usize },
    #[error("variable x{0} is already assigned")]
    AlreadyAssigned(u32),
    #[error("clause {index} is empty")]
    EmptyClause { index: usize },
    #[error("clause {index} has {len} literals, more than k = {k}")]
    ClauseTooLong { index: usize, len: usize, k: usize },
    #[error("clause {index} mentions assigned variable x{var}")]
    AssignedVarInClause { index: usize, var: u32 },
    #[error("free-variable mask has length {got}, expected {expected}")]
    FreeMaskLength { got: usize, expected: usize },
}

/// A variable together with a polarity (`positive == true` for `x`, false for `¬x`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    var: u32,
    positive: bool,
}

impl Literal {
    pub fn new(var: u32, positive: bool) -> Self {
        assert!(var >= 1, "variables are 1-based");
        Self { var, positive }
    }

    pub fn pos(var: u32) -> Self {
        Self::new(var, true)
    }

    pub fn neg(var: u32) -> Self {
        Self::new(var, false)
    }

    /// From a non-zero DIMACS integer.
    pub fn from_dimacs(lit: i32) -> Self {
        assert_ne!(lit, 0);
        Self::new(lit.unsigned_abs(), lit > 0)
    }

    pub fn to_dimacs(self) -> i64 {
        if self.positive {
            self.var as i64
        } else {
            -(self.var as i64)
        }
    }

    pub fn var(self) -> u32 {
        self.var
    }

    pub fn is_positive(self) -> bool {
        self.positive
    }

    pub fn negated(self) -> Self {
        Self {
            var: self.var,
            positive: !self.positive,
        }
    }

    /// Whether the literal is true when its variable takes `value`.
    pub fn is_true_under(self, value: bool) -> bool {
        self.positive == value
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "x{}", self.var)
        } else {
            write!(f, "¬x{}", self.var)
        }
    }
}

/// A disjunction of literals.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Clause {
    lits: Vec<Literal>,
}

impl Clause {
    pub fn new(lits: Vec<Literal>) -> Self {
        Self { lits }
    }

    /// Build from DIMACS integers, e.g. `Clause::from_dimacs(&[1, -2])`.
    pub fn from_dimacs(lits: &[i32]) -> Self {
        Self::new(lits.iter().map(|&l| Literal::from_dimacs(l)).collect())
    }

    pub fn lits(&self) -> &[Literal] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = u32> + '_ {
        self.lits.iter().map(|l| l.var())
    }

    pub fn contains_var(&self, var: u32) -> bool {
        self.lits.iter().any(|l| l.var() == var)
    }

    /// True if some variable occurs more than once (with either sign).
    pub fn has_repeated_var(&self) -> bool {
        let mut vars: Vec<u32> = self.vars().collect();
        vars.sort_unstable();
        vars.windows(2).any(|w| w[0] == w[1])
    }

    /// Literals as a sorted, deduplicated set; used to detect duplicate clauses.
    pub fn literal_set(&self) -> Vec<Literal> {
        let mut lits = self.lits.clone();
        lits.sort_unstable();
        lits.dedup();
        lits
    }

    /// `Some(true)` if satisfied, `Some(false)` if every literal is false,
    /// `None` if some variable is unassigned and no literal is true yet.
    pub fn evaluate(&self, sigma: &Assignment) -> Option<bool> {
        let mut undetermined = false;
        for lit in &self.lits {
            match sigma.get(lit.var()) {
                Some(v) if lit.is_true_under(v) => return Some(true),
                Some(_) => {}
                None => undetermined = true,
            }
        }
        if undetermined {
            None
        } else {
            Some(false)
        }
    }
}

impl fmt::Debug for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.lits.iter().enumerate() {
            if i > 0 {
                write!(f, " ∨ ")?;
            }
            write!(f, "{l:?}")?;
        }
        write!(f, ")")
    }
}

/// Result of substituting a value for one variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimplifyOutcome {
    /// Some clauses remain.
    Reduced(Formula),
    /// No clauses remain; the formula still carries its free variables.
    Satisfied(Formula),
    /// The clause at this index (in the input formula) became empty.
    Unsatisfiable { clause: usize },
}

impl SimplifyOutcome {
    /// The simplified formula, unless a clause became empty.
    pub fn into_formula(self) -> Option<Formula> {
        match self {
            Self::Reduced(f) | Self::Satisfied(f) => Some(f),
            Self::Unsatisfiable { .. } => None,
        }
    }

    pub fn is_unsatisfiable(&self) -> bool {
        matches!(self, Self::Unsatisfiable { .. })
    }
}

/// A CNF over `x_1..x_n` with a set of free (not yet assigned) variables.
#[derive(Clone, PartialEq, Eq)]
pub struct Formula {
    n: usize,
    k: usize,
    clauses: Vec<Clause>,
    free: Vec<bool>,
}

impl Formula {
    /// A formula in which all `n` variables are free.
    pub fn new(n: usize, k: usize, clauses: Vec<Clause>) -> Result<Self, FormulaError> {
        Self::with_free(n, k, clauses, vec![true; n])
    }

    /// A formula whose first `t` variables are already assigned.
    pub fn with_prefix(
        n: usize,
        k: usize,
        clauses: Vec<Clause>,
        t: usize,
    ) -> Result<Self, FormulaError> {
        let free = (0..n).map(|i| i >= t).collect();
        Self::with_free(n, k, clauses, free)
    }

    /// A formula with an explicit free mask (`free[i]` refers to `x_{i+1}`).
    pub fn with_free(
        n: usize,
        k: usize,
        clauses: Vec<Clause>,
        free: Vec<bool>,
    ) -> Result<Self, FormulaError> {
        if free.len() != n {
            return Err(FormulaError::FreeMaskLength {
                got: free.len(),
                expected: n,
            });
        }
        for (index, c) in clauses.iter().enumerate() {
            if c.is_empty() {
                return Err(FormulaError::EmptyClause { index });
            }
            if c.len() > k {
                return Err(FormulaError::ClauseTooLong {
                    index,
                    len: c.len(),
                    k,
                });
            }
            for var in c.vars() {
                if var as usize > n {
                    return Err(FormulaError::VarOutOfRange { var, n });
                }
                if !free[var as usize - 1] {
                    return Err(FormulaError::AssignedVarInClause { index, var });
                }
            }
        }
        Ok(Self {
            n,
            k,
            clauses,
            free,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The clause width of the undecimated formula.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn max_clause_len(&self) -> usize {
        self.clauses.iter().map(Clause::len).max().unwrap_or(0)
    }

    pub fn is_free(&self, var: u32) -> bool {
        var >= 1 && (var as usize) <= self.n && self.free[var as usize - 1]
    }

    pub fn free_mask(&self) -> &[bool] {
        &self.free
    }

    /// Free variables in index order.
    pub fn free_vars(&self) -> Vec<u32> {
        (1..=self.n as u32).filter(|&v| self.is_free(v)).collect()
    }

    pub fn num_free(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    /// Number of assigned variables.
    pub fn num_assigned(&self) -> usize {
        self.n - self.num_free()
    }

    /// `Some(t)` if exactly `x_1..x_t` are assigned.
    pub fn decimated_prefix(&self) -> Option<usize> {
        let t = self.free.iter().take_while(|&&f| !f).count();
        self.free[t..].iter().all(|&f| f).then_some(t)
    }

    /// Fraction of free variables, `1 - t/n`.
    pub fn theta(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.num_free() as f64 / self.n as f64
        }
    }

    /// Whether every clause has a literal that is true under `sigma`.
    pub fn is_satisfied_by(&self, sigma: &Assignment) -> bool {
        self.clauses.iter().all(|c| c.evaluate(sigma) == Some(true))
    }

    /// Number of clauses each variable occurs in (index `var - 1`).
    /// A clause mentioning a variable twice counts once.
    pub fn var_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for c in &self.clauses {
            let mut vars: Vec<u32> = c.vars().collect();
            vars.sort_unstable();
            vars.dedup();
            for v in vars {
                deg[v as usize - 1] += 1;
            }
        }
        deg
    }

    /// Substitute `value` for `var`: satisfied clauses are deleted and the
    /// variable is removed from all others.
    pub fn substitute(&self, var: u32, value: bool) -> Result<SimplifyOutcome, FormulaError> {
        if var == 0 || var as usize > self.n {
            return Err(FormulaError::VarOutOfRange { var, n: self.n });
        }
        if !self.free[var as usize - 1] {
            return Err(FormulaError::AlreadyAssigned(var));
        }
        let mut clauses = Vec::with_capacity(self.clauses.len());
        for (index, c) in self.clauses.iter().enumerate() {
            if !c.contains_var(var) {
                clauses.push(c.clone());
                continue;
            }
            if c
                .lits()
                .iter()
                .any(|l| l.var() == var && l.is_true_under(value))
            {
                continue;
            }
            let rest: Vec<Literal> = c.lits().iter().copied().filter(|l| l.var() != var).collect();
            if rest.is_empty() {
                return Ok(SimplifyOutcome::Unsatisfiable { clause: index });
            }
            clauses.push(Clause::new(rest));
        }
        let mut free = self.free.clone();
        free[var as usize - 1] = false;
        let f = Self {
            n: self.n,
            k: self.k,
            clauses,
            free,
        };
        Ok(if f.clauses.is_empty() {
            SimplifyOutcome::Satisfied(f)
        } else {
            SimplifyOutcome::Reduced(f)
        })
    }

    /// Substitute the value of the next undecimated variable `x_{t+1}`.
    pub fn substitute_next(&self, value: bool) -> Result<SimplifyOutcome, FormulaError> {
        match self.free_vars().first() {
            Some(&v) => self.substitute(v, value),
            None => Err(FormulaError::VarOutOfRange {
                var: self.n as u32 + 1,
                n: self.n,
            }),
        }
    }

    pub fn factor_graph(&self) -> FactorGraph {
        FactorGraph::build(self.free_vars(), self.clauses.iter().map(Clause::lits))
    }

    /// The subformula spanned by factor-graph vertices within distance `2ω`
    /// of `x`: clauses at distance at most `2ω - 1` and the variables at
    /// distance at most `2ω`, which stay free.
    pub fn neighborhood(&self, x: u32, omega: usize) -> Formula {
        let fg = self.factor_graph();
        let ball = fg.ball(x, 2 * omega);
        let mut free = vec![false; self.n];
        for (local, d) in ball.var_dist.iter().enumerate() {
            if d.is_some() {
                free[fg.vars()[local] as usize - 1] = true;
            }
        }
        let clauses = ball
            .clause_dist
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some())
            .map(|(c, _)| self.clauses[c].clone())
            .collect();
        Formula {
            n: self.n,
            k: self.k,
            clauses,
            free,
        }
    }

    /// Whether the factor graph restricted to the radius-`2ω` ball of `x` is acyclic.
    pub fn is_tree_neighborhood(&self, x: u32, omega: usize) -> bool {
        self.factor_graph().ball(x, 2 * omega).is_acyclic()
    }

    /// Whether the whole factor graph is a forest.
    pub fn is_forest(&self) -> bool {
        let fg = self.factor_graph();
        let edges = fg.num_edges();
        let vertices = fg.num_vars() + fg.num_clauses();
        edges + fg.num_components() == vertices
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Formula(n={}, k={}, free={}, {:?})",
            self.n,
            self.k,
            self.num_free(),
            self.clauses
        )
    }
}

/// Bipartite variable/clause incidence graph with one edge per literal occurrence.
///
/// Variables are stored under local indices `0..num_vars()`; [`FactorGraph::vars`]
/// maps them back to variable numbers. Edges of clause `c` are the contiguous
/// range `clause_edges(c)`, in literal order.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    vars: Vec<u32>,
    var_edges: Vec<Vec<usize>>,
    clause_offsets: Vec<usize>,
    edge_var: Vec<usize>,
    edge_positive: Vec<bool>,
}

impl FactorGraph {
    /// `vars` must be sorted and contain every variable mentioned by `clauses`.
    pub fn build<'a, I>(vars: Vec<u32>, clauses: I) -> Self
    where
        I: IntoIterator<Item = &'a [Literal]>,
    {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        let mut var_edges = vec![Vec::new(); vars.len()];
        let mut clause_offsets = vec![0];
        let mut edge_var = Vec::new();
        let mut edge_positive = Vec::new();
        for lits in clauses {
            for lit in lits {
                let local = vars
                    .binary_search(&lit.var())
                    .expect("clause variable missing from factor graph");
                var_edges[local].push(edge_var.len());
                edge_var.push(local);
                edge_positive.push(lit.is_positive());
            }
            clause_offsets.push(edge_var.len());
        }
        Self {
            vars,
            var_edges,
            clause_offsets,
            edge_var,
            edge_positive,
        }
    }

    pub fn vars(&self) -> &[u32] {
        &self.vars
    }

    pub fn local(&self, var: u32) -> Option<usize> {
        self.vars.binary_search(&var).ok()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_clauses(&self) -> usize {
        self.clause_offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.edge_var.len()
    }

    pub fn clause_edges(&self, c: usize) -> std::ops::Range<usize> {
        self.clause_offsets[c]..self.clause_offsets[c + 1]
    }

    pub fn var_edges(&self, local: usize) -> &[usize] {
        &self.var_edges[local]
    }

    pub fn edge_var(&self, e: usize) -> usize {
        self.edge_var[e]
    }

    /// `sign(x, a) = +1` iff the occurrence is positive.
    pub fn edge_positive(&self, e: usize) -> bool {
        self.edge_positive[e]
    }

    /// Clause owning edge `e`.
    pub fn edge_clause(&self, e: usize) -> usize {
        self.clause_offsets.partition_point(|&o| o <= e) - 1
    }

    /// Breadth-first ball of the given radius around variable `x`.
    /// Clauses sit at odd distances, variables at even ones.
    pub fn ball(&self, x: u32, radius: usize) -> Ball<'_> {
        let mut var_dist = vec![None; self.num_vars()];
        let mut clause_dist = vec![None; self.num_clauses()];
        let mut edge_clause = vec![0; self.num_edges()];
        for c in 0..self.num_clauses() {
            for e in self.clause_edges(c) {
                edge_clause[e] = c;
            }
        }
        let Some(start) = self.local(x) else {
            return Ball {
                graph: self,
                var_dist,
                clause_dist,
            };
        };
        var_dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let dv = var_dist[v].unwrap();
            if dv + 1 > radius {
                continue;
            }
            for &e in &self.var_edges[v] {
                let c = edge_clause[e];
                if clause_dist[c].is_some() {
                    continue;
                }
                clause_dist[c] = Some(dv + 1);
                if dv + 2 > radius {
                    continue;
                }
                for e2 in self.clause_edges(c) {
                    let w = self.edge_var[e2];
                    if var_dist[w].is_none() {
                        var_dist[w] = Some(dv + 2);
                        queue.push_back(w);
                    }
                }
            }
        }
        Ball {
            graph: self,
            var_dist,
            clause_dist,
        }
    }

    /// Number of connected components (isolated variables count).
    pub fn num_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.num_vars() + self.num_clauses()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let nv = self.num_vars();
        for c in 0..self.num_clauses() {
            for e in self.clause_edges(c) {
                let a = find(&mut parent, nv + c);
                let b = find(&mut parent, self.edge_var[e]);
                parent[a] = b;
            }
        }
        (0..parent.len()).filter(|&i| find(&mut parent, i) == i).count()
    }
}

/// Distances from a root variable inside a [`FactorGraph`], truncated at a radius.
#[derive(Debug, Clone)]
pub struct Ball<'g> {
    graph: &'g FactorGraph,
    /// Distance of each local variable, `None` if outside the ball.
    pub var_dist: Vec<Option<usize>>,
    /// Distance of each clause, `None` if outside the ball.
    pub clause_dist: Vec<Option<usize>>,
}

impl Ball<'_> {
    pub fn num_vars(&self) -> usize {
        self.var_dist.iter().filter(|d| d.is_some()).count()
    }

    pub fn num_clauses(&self) -> usize {
        self.clause_dist.iter().filter(|d| d.is_some()).count()
    }

    /// Whether the subgraph induced on the ball's vertices is acyclic.
    /// The ball is connected, so this is `edges == vertices - 1`.
    pub fn is_acyclic(&self) -> bool {
        let vertices = self.num_vars() + self.num_clauses();
        if vertices == 0 {
            return true;
        }
        let mut edges = 0;
        for (c, d) in self.clause_dist.iter().enumerate() {
            if d.is_none() {
                continue;
            }
            edges += self
                .graph
                .clause_edges(c)
                .filter(|&e| self.var_dist[self.graph.edge_var(e)].is_some())
                .count();
        }
        edges + 1 == vertices
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(n: usize, clauses: &[&[i32]]) -> Formula {
        let k = clauses.iter().map(|c| c.len()).max().unwrap_or(1);
        Formula::new(n, k, clauses.iter().map(|c| Clause::from_dimacs(c)).collect()).unwrap()
    }

    #[test]
    fn satisfied_clause_deleted() {
        let out = f(2, &[&[1, 2]]).substitute(1, true).unwrap();
        match out {
            SimplifyOutcome::Satisfied(g) => {
                assert_eq!(g.num_clauses(), 0);
                assert_eq!(g.free_vars(), vec![2]);
            }
            other => panic!("expected Satisfied, got {other:?}"),
        }
    }

    #[test]
    fn false_literal_omitted() {
        let out = f(2, &[&[1, 2]]).substitute(1, false).unwrap();
        let SimplifyOutcome::Reduced(g) = out else {
            panic!("expected Reduced")
        };
        assert_eq!(g.clauses(), &[Clause::from_dimacs(&[2])]);
        assert_eq!(g.decimated_prefix(), Some(1));
    }

    #[test]
    fn empty_clause_is_unsatisfiable() {
        let out = f(1, &[&[1]]).substitute(1, false).unwrap();
        assert_eq!(out, SimplifyOutcome::Unsatisfiable { clause: 0 });
    }

    #[test]
    fn substituting_assigned_variable_is_an_error() {
        let g = f(2, &[&[1, 2]]).substitute(1, false).unwrap().into_formula().unwrap();
        assert_eq!(g.substitute(1, true), Err(FormulaError::AlreadyAssigned(1)));
        assert!(matches!(
            g.substitute(3, true),
            Err(FormulaError::VarOutOfRange { var: 3, .. })
        ));
    }

    #[test]
    fn tautology_and_repeats() {
        let c = Clause::from_dimacs(&[1, -1, 2]);
        assert!(c.has_repeated_var());
        let g = f(2, &[&[1, -1, 2]]);
        assert!(matches!(g.substitute(1, false).unwrap(), SimplifyOutcome::Satisfied(_)));
        assert!(matches!(g.substitute(1, true).unwrap(), SimplifyOutcome::Satisfied(_)));
    }

    #[test]
    fn construction_validates() {
        assert!(matches!(
            Formula::new(2, 2, vec![Clause::from_dimacs(&[3])]),
            Err(FormulaError::VarOutOfRange { var: 3, .. })
        ));
        assert!(matches!(
            Formula::new(3, 2, vec![Clause::from_dimacs(&[1, 2, 3])]),
            Err(FormulaError::ClauseTooLong { .. })
        ));
        assert!(matches!(
            Formula::with_prefix(3, 2, vec![Clause::from_dimacs(&[1, 2])], 1),
            Err(FormulaError::AssignedVarInClause { var: 1, .. })
        ));
        assert!(matches!(
            Formula::new(2, 2, vec![Clause::new(vec![])]),
            Err(FormulaError::EmptyClause { index: 0 })
        ));
    }

    #[test]
    fn neighborhood_drops_disconnected_component() {
        let g = f(4, &[&[1, 2], &[3, 4]]).neighborhood(1, 1);
        assert_eq!(g.clauses(), &[Clause::from_dimacs(&[1, 2])]);
        assert_eq!(g.free_vars(), vec![1, 2]);
    }

    #[test]
    fn neighborhood_radius_two_omega() {
        // x3 is at distance 4 and (x2 ∨ x3) at distance 3 > 2·1 - 1.
        let chain = f(3, &[&[1, 2], &[2, 3]]);
        let g = chain.neighborhood(1, 1);
        assert_eq!(g.clauses(), &[Clause::from_dimacs(&[1, 2])]);
        assert_eq!(g.free_vars(), vec![1, 2]);
        let whole = chain.neighborhood(1, 2);
        assert_eq!(whole.clauses(), chain.clauses());
        assert_eq!(whole.free_vars(), vec![1, 2, 3]);
    }

    #[test]
    fn tree_detection() {
        assert!(f(3, &[&[1, 2, 3]]).is_tree_neighborhood(1, 1));
        assert!(!f(2, &[&[1, 2], &[1, -2]]).is_tree_neighborhood(1, 1));
        assert!(f(3, &[&[1, 2], &[2, 3]]).is_tree_neighborhood(1, 2));
        // A clause repeating a variable is a double edge.
        assert!(!f(2, &[&[1, 1, 2]]).is_tree_neighborhood(1, 1));
        assert!(f(4, &[&[1, 2], &[3, 4]]).is_forest());
        assert!(!f(2, &[&[1, 2], &[-1, -2]]).is_forest());
    }

    #[test]
    fn factor_graph_shape() {
        let g = f(3, &[&[1, -2], &[2, 3]]);
        let fg = g.factor_graph();
        assert_eq!(fg.num_edges(), 4);
        assert_eq!(fg.clause_edges(1), 2..4);
        assert_eq!(fg.edge_clause(3), 1);
        assert!(!fg.edge_positive(1));
        assert_eq!(fg.var_edges(fg.local(2).unwrap()), &[1, 2]);
        assert_eq!(fg.num_components(), 1);
    }
}
