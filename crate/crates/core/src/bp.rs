//! Belief Propagation on the factor graph and BP-guided decimation.
//!
//! Messages live on edges (literal occurrences). For an edge between `x` and
//! clause `a`, `μ_{x→a}(ζ)` is the probability that `x` takes value `ζ`, and
//!
//! ```text
//! μ_{a→x}(ζ) = 1                                      if ζ satisfies x's literal in a
//!            = 1 − Π_{y∈N(a)∖x} μ_{y→a}(value falsifying y's literal)   otherwise
//! BP(μ)_{x→a}(ζ) ∝ Π_{b∈N(x)∖a} μ_{b→x}(ζ)           (½ if both products vanish)
//! ```
//!
//! `μ[0]` has every entry ½ and `μ[ℓ] = BP(μ[ℓ−1])`. The marginal after `ω`
//! sweeps is `Π_b μ_{b→x}(1) / (Π_b μ_{b→x}(0) + Π_b μ_{b→x}(1))`, with the
//! clause messages computed from `μ[ω]`, and ½ when the denominator vanishes.
//!
//! The value at `x` after `ω` sweeps only depends on clauses within
//! factor-graph distance `2ω+1`, so decimation runs BP on that ball only.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::formula::{FactorGraph, Formula, Literal};
use crate::oracle::{true_marginals, OracleConfig, OracleError};

/// Products over more factors than this are taken in log space.
pub const LOG_SPACE_DEGREE: usize = 64;

/// `⌈ln n⌉`, a convenience choice of `ω`.
pub fn default_omega(n: usize) -> usize {
    crate::ceil_ln(n)
}

/// Messages of one BP iteration.
#[derive(Debug, Clone)]
pub struct MessageState {
    graph: FactorGraph,
    /// `μ_{x→a}` per edge as `[μ(0), μ(1)]`.
    var_to_clause: Vec<[f64; 2]>,
    iteration: usize,
    zero_denominators: usize,
}

impl MessageState {
    /// The all-½ state `μ[0]`.
    pub fn new(graph: FactorGraph) -> Self {
        let e = graph.num_edges();
        Self {
            graph,
            var_to_clause: vec![[0.5, 0.5]; e],
            iteration: 0,
            zero_denominators: 0,
        }
    }

    pub fn for_formula(formula: &Formula) -> Self {
        Self::new(formula.factor_graph())
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    /// Number of sweeps applied so far, `ℓ`.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Zero-denominator events in all sweeps so far.
    pub fn zero_denominators(&self) -> usize {
        self.zero_denominators
    }

    pub fn var_to_clause(&self, edge: usize) -> [f64; 2] {
        self.var_to_clause[edge]
    }

    pub fn var_to_clause_all(&self) -> &[[f64; 2]] {
        &self.var_to_clause
    }

    /// The edge joining clause `c` and variable `var`, if any.
    pub fn edge(&self, c: usize, var: u32) -> Option<usize> {
        let local = self.graph.local(var)?;
        self.graph
            .clause_edges(c)
            .find(|&e| self.graph.edge_var(e) == local)
    }

    /// All clause-to-variable messages computed from the current state.
    pub fn clause_messages(&self) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; self.graph.num_edges()];
        clause_update(&self.graph, &self.var_to_clause, &mut out);
        out
    }

    /// Apply the BP operator once, in place.
    pub fn sweep(&mut self) {
        let c2v = self.clause_messages();
        let mut next = vec![[0.0; 2]; self.graph.num_edges()];
        self.zero_denominators += var_update(&self.graph, &c2v, &mut next);
        self.var_to_clause = next;
        self.iteration += 1;
    }
}

/// `μ_{a→x}(ζ)` on `edge` from the current messages.
pub fn clause_to_var(state: &MessageState, edge: usize, zeta: bool) -> f64 {
    let g = &state.graph;
    if zeta == g.edge_positive(edge) {
        return 1.0;
    }
    let c = g.edge_clause(edge);
    let others: Vec<f64> = g
        .clause_edges(c)
        .filter(|&e| e != edge)
        .map(|e| falsifying(&state.var_to_clause, g, e))
        .collect();
    1.0 - product(&others)
}

/// One application of the BP operator: `μ[ℓ] → μ[ℓ+1]`.
pub fn bp_sweep(state: &MessageState) -> MessageState {
    let mut next = state.clone();
    next.sweep();
    next
}

fn falsifying(v2c: &[[f64; 2]], g: &FactorGraph, e: usize) -> f64 {
    if g.edge_positive(e) {
        v2c[e][0]
    } else {
        v2c[e][1]
    }
}

fn product(vals: &[f64]) -> f64 {
    if vals.len() > LOG_SPACE_DEGREE {
        if vals.contains(&0.0) {
            0.0
        } else {
            vals.iter().map(|v| v.ln()).sum::<f64>().exp()
        }
    } else {
        vals.iter().product()
    }
}

/// Leave-one-out products `Π_{j≠i} vals[j]`.
fn leave_one_out(vals: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let n = vals.len();
    let mut suffix = vec![1.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * vals[i];
    }
    let mut prefix = 1.0;
    for i in 0..n {
        out.push(prefix * suffix[i + 1]);
        prefix *= vals[i];
    }
}

/// Leave-one-out sums of logarithms (`-∞` for zero factors).
fn leave_one_out_log(vals: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let logs: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let n = logs.len();
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + logs[i];
    }
    let mut prefix = 0.0;
    for i in 0..n {
        out.push(prefix + suffix[i + 1]);
        prefix += logs[i];
    }
}

fn clause_update(g: &FactorGraph, v2c: &[[f64; 2]], c2v: &mut [[f64; 2]]) {
    let mut vals = Vec::new();
    let mut loo = Vec::new();
    for c in 0..g.num_clauses() {
        let edges = g.clause_edges(c);
        vals.clear();
        vals.extend(edges.clone().map(|e| falsifying(v2c, g, e)));
        if vals.len() > LOG_SPACE_DEGREE {
            leave_one_out_log(&vals, &mut loo);
            loo.iter_mut().for_each(|l| *l = l.exp());
        } else {
            leave_one_out(&vals, &mut loo);
        }
        for (i, e) in edges.enumerate() {
            let sat = g.edge_positive(e) as usize;
            c2v[e][sat] = 1.0;
            c2v[e][1 - sat] = 1.0 - loo[i];
        }
    }
}

/// Normalize `(p0, p1)`; `None` if both vanish.
fn normalize(p0: f64, p1: f64) -> Option<[f64; 2]> {
    let den = p0 + p1;
    (den > 0.0).then(|| [p0 / den, p1 / den])
}

/// Normalize `(e^{l0}, e^{l1})`; `None` if both are `-∞`.
fn normalize_log(l0: f64, l1: f64) -> Option<[f64; 2]> {
    let m = l0.max(l1);
    if m == f64::NEG_INFINITY {
        return None;
    }
    normalize((l0 - m).exp(), (l1 - m).exp())
}

/// Variable-to-clause update; returns the number of zero denominators.
fn var_update(g: &FactorGraph, c2v: &[[f64; 2]], v2c: &mut [[f64; 2]]) -> usize {
    let mut zeros = 0;
    let (mut v0, mut v1) = (Vec::new(), Vec::new());
    let (mut l0, mut l1) = (Vec::new(), Vec::new());
    for x in 0..g.num_vars() {
        let edges = g.var_edges(x);
        v0.clear();
        v1.clear();
        v0.extend(edges.iter().map(|&e| c2v[e][0]));
        v1.extend(edges.iter().map(|&e| c2v[e][1]));
        let log = edges.len() > LOG_SPACE_DEGREE;
        if log {
            leave_one_out_log(&v0, &mut l0);
            leave_one_out_log(&v1, &mut l1);
        } else {
            leave_one_out(&v0, &mut l0);
            leave_one_out(&v1, &mut l1);
        }
        for (i, &e) in edges.iter().enumerate() {
            let m = if log {
                normalize_log(l0[i], l1[i])
            } else {
                normalize(l0[i], l1[i])
            };
            v2c[e] = m.unwrap_or_else(|| {
                zeros += 1;
                [0.5, 0.5]
            });
        }
    }
    zeros
}

/// Marginal of local variable `x` from clause messages; `None` on a zero denominator.
fn marginal_at(g: &FactorGraph, c2v: &[[f64; 2]], x: usize) -> Option<f64> {
    let edges = g.var_edges(x);
    let v0: Vec<f64> = edges.iter().map(|&e| c2v[e][0]).collect();
    let v1: Vec<f64> = edges.iter().map(|&e| c2v[e][1]).collect();
    let m = if edges.len() > LOG_SPACE_DEGREE {
        let s0: f64 = v0.iter().map(|v| v.ln()).sum();
        let s1: f64 = v1.iter().map(|v| v.ln()).sum();
        normalize_log(s0, s1)
    } else {
        normalize(v0.iter().product(), v1.iter().product())
    };
    m.map(|p| p[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpResult {
    pub vars: Vec<u32>,
    /// `μ_x(Φ, ω)` per free variable.
    pub marginals: Vec<f64>,
    pub omega: usize,
    /// Zero denominators met in the sweeps and in the marginal formula.
    pub zero_denominators: usize,
}

impl BpResult {
    pub fn get(&self, var: u32) -> Option<f64> {
        self.vars.binary_search(&var).ok().map(|i| self.marginals[i])
    }

    /// `|μ_x − ½|`.
    pub fn bias(&self, var: u32) -> Option<f64> {
        self.get(var).map(|m| (m - 0.5).abs())
    }

    /// Free variables whose marginal differs from ½ by more than `delta`.
    pub fn biased(&self, delta: f64) -> Vec<u32> {
        self.vars
            .iter()
            .zip(&self.marginals)
            .filter(|(_, &m)| (m - 0.5).abs() > delta)
            .map(|(&v, _)| v)
            .collect()
    }
}

fn run(graph: FactorGraph, omega: usize) -> (MessageState, Vec<[f64; 2]>) {
    let mut state = MessageState::new(graph);
    for _ in 0..omega {
        state.sweep();
    }
    let c2v = state.clause_messages();
    (state, c2v)
}

/// `μ_x(Φ, ω)` for every free variable: `ω` synchronous sweeps from `μ[0]`.
pub fn bp_marginals(formula: &Formula, omega: usize) -> BpResult {
    let (state, c2v) = run(formula.factor_graph(), omega);
    let g = state.graph();
    let mut zeros = state.zero_denominators();
    let marginals = (0..g.num_vars())
        .map(|x| {
            marginal_at(g, &c2v, x).unwrap_or_else(|| {
                zeros += 1;
                0.5
            })
        })
        .collect();
    BpResult {
        vars: g.vars().to_vec(),
        marginals,
        omega,
        zero_denominators: zeros,
    }
}

/// `μ_x(Φ, ω)` for a single variable, computed on the ball of clauses within
/// distance `2ω+1` of `x`. Returns the marginal and the zero-denominator count.
pub fn bp_marginal_of(formula: &Formula, x: u32, omega: usize) -> (f64, usize) {
    let local = formula.neighborhood(x, omega + 1);
    let (state, c2v) = run(local.factor_graph(), omega);
    let g = state.graph();
    let i = g.local(x).expect("x is free");
    match marginal_at(g, &c2v, i) {
        Some(m) => (m, 0),
        None => (0.5, 1),
    }
}

/// Clause store supporting cheap substitution, for long decimation runs.
struct LiveFormula {
    clauses: Vec<Vec<Literal>>,
    alive: Vec<bool>,
    occurrences: Vec<Vec<usize>>,
}

impl LiveFormula {
    fn new(formula: &Formula) -> Self {
        let mut occurrences = vec![Vec::new(); formula.n() + 1];
        let clauses: Vec<Vec<Literal>> = formula.clauses().iter().map(|c| c.lits().to_vec()).collect();
        for (i, c) in clauses.iter().enumerate() {
            for l in c {
                let occ: &mut Vec<usize> = &mut occurrences[l.var() as usize];
                if occ.last() != Some(&i) {
                    occ.push(i);
                }
            }
        }
        Self {
            alive: vec![true; clauses.len()],
            clauses,
            occurrences,
        }
    }

    /// Substitute; returns false if some clause became empty.
    fn substitute(&mut self, var: u32, value: bool) -> bool {
        let mut ok = true;
        for &c in &self.occurrences[var as usize] {
            if !self.alive[c] {
                continue;
            }
            let lits = &mut self.clauses[c];
            if lits.iter().any(|l| l.var() == var && l.is_true_under(value)) {
                self.alive[c] = false;
            } else {
                lits.retain(|l| l.var() != var);
                if lits.is_empty() {
                    ok = false;
                }
            }
        }
        ok
    }

    /// Factor graph of the live clauses within distance `radius` of `x`, in
    /// original clause order, with `x`'s local index.
    fn ball_graph(&self, x: u32, radius: usize) -> (FactorGraph, usize) {
        let mut var_seen = std::collections::HashSet::from([x]);
        let mut clause_seen = std::collections::HashSet::new();
        let mut queue = VecDeque::from([(x, 0usize)]);
        while let Some((v, d)) = queue.pop_front() {
            if d + 1 > radius {
                continue;
            }
            for &c in &self.occurrences[v as usize] {
                if !self.alive[c] || !clause_seen.insert(c) {
                    continue;
                }
                if d + 2 > radius {
                    continue;
                }
                for l in &self.clauses[c] {
                    if var_seen.insert(l.var()) {
                        queue.push_back((l.var(), d + 2));
                    }
                }
            }
        }
        // Variables of retained clauses beyond the radius still need nodes.
        let mut clause_ids: Vec<usize> = clause_seen.into_iter().collect();
        clause_ids.sort_unstable();
        let mut vars: Vec<u32> = var_seen.into_iter().collect();
        for &c in &clause_ids {
            vars.extend(self.clauses[c].iter().map(|l| l.var()));
        }
        vars.sort_unstable();
        vars.dedup();
        let g = FactorGraph::build(vars, clause_ids.iter().map(|&c| self.clauses[c].as_slice()));
        let i = g.local(x).unwrap();
        (g, i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpStep {
    pub var: u32,
    pub mu: f64,
    pub value: bool,
    pub zero_denominators: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum BpOutcome {
    Success { sigma: String },
    /// The assignment of `x_t` produced an empty clause.
    Failure { t: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpDecimation {
    pub outcome: BpOutcome,
    pub trace: Vec<BpStep>,
}

impl BpDecimation {
    pub fn succeeded(&self) -> bool {
        matches!(self.outcome, BpOutcome::Success { .. })
    }

    pub fn assignment(&self) -> Option<Assignment> {
        match &self.outcome {
            BpOutcome::Success { sigma } => Assignment::from_bitstring(sigma).ok(),
            BpOutcome::Failure { .. } => None,
        }
    }
}

/// For each free variable `x_t` in index order: compute `μ_{x_t}(Φ_{t−1}, ω)`,
/// set `x_t` true with that probability, substitute and simplify. Stops at
/// the first empty clause.
pub fn bp_decimation<R: Rng + ?Sized>(formula: &Formula, omega: usize, rng: &mut R) -> BpDecimation {
    let mut live = LiveFormula::new(formula);
    let mut sigma = Assignment::empty(formula.n());
    let mut trace = Vec::with_capacity(formula.num_free());
    for var in formula.free_vars() {
        let (g, i) = live.ball_graph(var, 2 * omega + 1);
        let (state, c2v) = run(g, omega);
        let (mu, z) = match marginal_at(state.graph(), &c2v, i) {
            Some(m) => (m, state.zero_denominators()),
            None => (0.5, state.zero_denominators() + 1),
        };
        let value = rng.random::<f64>() < mu;
        trace.push(BpStep {
            var,
            mu,
            value,
            zero_denominators: z,
        });
        sigma.set(var, value);
        if !live.substitute(var, value) {
            return BpDecimation {
                outcome: BpOutcome::Failure { t: var },
                trace,
            };
        }
    }
    BpDecimation {
        outcome: BpOutcome::Success {
            sigma: sigma.to_bitstring(),
        },
        trace,
    }
}

/// Lower edge of the extreme band, `2^{−k/2}`.
pub fn extreme_band(k: usize) -> f64 {
    2f64.powf(-(k as f64) / 2.0)
}

pub fn in_extreme_band(m: f64, k: usize) -> bool {
    let e = extreme_band(k);
    m <= e || m >= 1.0 - e
}

pub fn in_bp_band(mu: f64) -> bool {
    (0.49..=0.51).contains(&mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalComparison {
    pub vars: Vec<u32>,
    pub bp: Vec<f64>,
    pub exact: Vec<f64>,
    /// `|μ_x(Φ,ω) − M_x(Φ)|`.
    pub discrepancy: Vec<f64>,
    pub max_discrepancy: f64,
    pub mean_discrepancy: f64,
    /// Variables with `μ_x ∈ [0.49, 0.51]`.
    pub bp_band: usize,
    /// Variables with `M_x ∈ [0, 2^{−k/2}] ∪ [1 − 2^{−k/2}, 1]`.
    pub extreme_band: usize,
    /// Variables in both bands.
    pub mismatch: usize,
    /// Variables with `M_x ∈ [0.01, 0.99]`.
    pub central_band: usize,
    pub zero_denominators: usize,
}

pub fn compare_marginals(
    formula: &Formula,
    omega: usize,
    config: &OracleConfig,
) -> Result<MarginalComparison, OracleError> {
    let exact = true_marginals(formula, config)?.values();
    let bp = bp_marginals(formula, omega);
    let k = formula.k();
    let discrepancy: Vec<f64> = bp.marginals.iter().zip(&exact).map(|(a, b)| (a - b).abs()).collect();
    let nv = discrepancy.len();
    let mismatch = bp
        .marginals
        .iter()
        .zip(&exact)
        .filter(|(&mu, &m)| in_bp_band(mu) && in_extreme_band(m, k))
        .count();
    Ok(MarginalComparison {
        max_discrepancy: discrepancy.iter().fold(0.0, |a: f64, &b| a.max(b)),
        mean_discrepancy: if nv == 0 { 0.0 } else { discrepancy.iter().sum::<f64>() / nv as f64 },
        bp_band: bp.marginals.iter().filter(|&&m| in_bp_band(m)).count(),
        extreme_band: exact.iter().filter(|&&m| in_extreme_band(m, k)).count(),
        central_band: exact.iter().filter(|&&m| (0.01..=0.99).contains(&m)).count(),
        mismatch,
        zero_denominators: bp.zero_denominators,
        vars: bp.vars,
        bp: bp.marginals,
        exact,
        discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Clause;
    use crate::generators::rng;

    fn f(n: usize, clauses: &[&[i32]]) -> Formula {
        let k = clauses.iter().map(|c| c.len()).max().unwrap_or(1);
        Formula::new(n, k, clauses.iter().map(|c| Clause::from_dimacs(c)).collect()).unwrap()
    }

    #[test]
    fn clause_messages_by_hand() {
        let unit = MessageState::for_formula(&f(1, &[&[1]]));
        assert_eq!(clause_to_var(&unit, 0, true), 1.0);
        assert_eq!(clause_to_var(&unit, 0, false), 0.0);
        let two = MessageState::for_formula(&f(2, &[&[1, 2]]));
        assert_eq!(clause_to_var(&two, 0, false), 0.5);
        let three = MessageState::for_formula(&f(3, &[&[1, 2, 3]]));
        assert_eq!(clause_to_var(&three, 0, false), 0.75);
        assert_eq!(three.clause_messages()[0], [0.75, 1.0]);
    }

    #[test]
    fn chain_sweep() {
        let s = bp_sweep(&MessageState::for_formula(&f(3, &[&[1, 2], &[2, 3]])));
        let e = s.edge(0, 2).unwrap();
        let m = s.var_to_clause(e);
        assert!((m[0] - 1.0 / 3.0).abs() < 1e-15 && (m[1] - 2.0 / 3.0).abs() < 1e-15);
        let lone = s.edge(0, 1).unwrap();
        assert_eq!(s.var_to_clause(lone), [0.5, 0.5]);
    }

    #[test]
    fn single_clause_fixed_point() {
        let s1 = bp_sweep(&MessageState::for_formula(&f(3, &[&[1, -2, 3]])));
        let s2 = bp_sweep(&s1);
        assert_eq!(s1.var_to_clause_all(), s2.var_to_clause_all());
    }

    #[test]
    fn marginals_by_hand() {
        assert!((bp_marginals(&f(2, &[&[1, 2]]), 1).get(1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        for w in 1..4 {
            assert_eq!(bp_marginals(&f(1, &[&[-1]]), w).get(1), Some(0.0));
        }
        let sym = bp_marginals(&f(2, &[&[1, 2], &[-1, -2]]), 1);
        assert_eq!(sym.get(1), Some(0.5));
    }

    #[test]
    fn contradiction_has_zero_denominator() {
        let r = bp_marginals(&f(1, &[&[1], &[-1]]), 1);
        assert_eq!(r.get(1), Some(0.5));
        assert!(r.zero_denominators >= 1);
        let mut g = rng::stream(5, 0);
        let d = bp_decimation(&f(1, &[&[1], &[-1]]), 1, &mut g);
        assert_eq!(d.outcome, BpOutcome::Failure { t: 1 });
    }

    #[test]
    fn forced_chain_succeeds() {
        for seed in 0..10 {
            let mut g = rng::stream(seed, 0);
            let d = bp_decimation(&f(2, &[&[1], &[-1, 2]]), 1, &mut g);
            assert_eq!(d.outcome, BpOutcome::Success { sigma: "11".into() });
        }
    }

    #[test]
    fn local_marginal_matches_global() {
        let g = f(5, &[&[1, 2], &[2, -3], &[3, 4], &[-4, 5], &[1, -5]]);
        for w in 0..4 {
            let all = bp_marginals(&g, w);
            for x in 1..=5 {
                assert_eq!(bp_marginal_of(&g, x, w).0, all.get(x).unwrap());
            }
        }
    }

    #[test]
    fn log_space_agrees_with_linear() {
        let vals: Vec<f64> = (0..10).map(|i| 0.5 + 0.04 * i as f64).collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        leave_one_out(&vals, &mut a);
        leave_one_out_log(&vals, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y.exp()).abs() < 1e-14);
        }
    }
}
