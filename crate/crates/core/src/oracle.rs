//! Exact enumeration of satisfying assignments.
//!
//! Counting is a DPLL search with unit propagation over the free variables,
//! which are relabelled `0..nf` and packed into `u64` masks. Counts are exact
//! `u128` integers. On top of this sit exact marginals, the decimation process
//! driven by exact marginals, exact uniform sampling, and queries on the
//! geometry of the solution set.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Assignment;
use crate::formula::Formula;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Largest number of free variables the oracle accepts (at most 64).
    pub max_free_vars: usize,
    /// Largest number of solutions that are materialized.
    pub cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_free_vars: 30,
            cap: 1_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{got} free variables exceed the oracle limit of {limit}")]
    TooManyFreeVars { got: usize, limit: usize },
    #[error("formula is unsatisfiable")]
    Unsatisfiable,
    #[error("reference assignment does not cover the free variables")]
    ScopeMismatch,
    #[error("assignment is not a solution of the formula")]
    NotASolution,
    #[error("{count} solutions exceed the materialization cap {cap}")]
    TooManySolutions { count: u128, cap: usize },
}

/// Clauses over local variable indices as `(positive mask, negative mask)`.
#[derive(Debug, Clone)]
struct Compact {
    vars: Vec<u32>,
    clauses: Vec<(u64, u64)>,
}

impl Compact {
    fn new(formula: &Formula, config: &OracleConfig) -> Result<Self, OracleError> {
        let vars = formula.free_vars();
        let limit = config.max_free_vars.min(64);
        if vars.len() > limit {
            return Err(OracleError::TooManyFreeVars {
                got: vars.len(),
                limit,
            });
        }
        let clauses = formula
            .clauses()
            .iter()
            .map(|c| {
                c.lits().iter().fold((0u64, 0u64), |(p, n), l| {
                    let bit = 1u64 << vars.binary_search(&l.var()).unwrap();
                    if l.is_positive() {
                        (p | bit, n)
                    } else {
                        (p, n | bit)
                    }
                })
            })
            .collect();
        Ok(Self { vars, clauses })
    }

    fn all_free(&self) -> u64 {
        mask_of(self.vars.len())
    }
}

fn mask_of(nf: usize) -> u64 {
    if nf == 64 {
        u64::MAX
    } else {
        (1u64 << nf) - 1
    }
}

/// Set local variable `v` to `value`. `None` if a clause becomes empty.
fn apply(clauses: &[(u64, u64)], v: usize, value: bool) -> Option<Vec<(u64, u64)>> {
    let bit = 1u64 << v;
    let mut out = Vec::with_capacity(clauses.len());
    for &(p, n) in clauses {
        if (value && p & bit != 0) || (!value && n & bit != 0) {
            continue;
        }
        let (p2, n2) = (p & !bit, n & !bit);
        if p2 | n2 == 0 {
            return None;
        }
        out.push((p2, n2));
    }
    Some(out)
}

/// Unit propagation. Returns the remaining clauses and the forced
/// assignments as (variables mask, ones mask), or `None` on conflict.
fn propagate(mut clauses: Vec<(u64, u64)>) -> Option<(Vec<(u64, u64)>, u64, u64)> {
    let (mut set, mut ones) = (0u64, 0u64);
    while let Some(&(p, n)) = clauses.iter().find(|(p, n)| (p | n).count_ones() == 1) {
        let v = (p | n).trailing_zeros() as usize;
        let value = p != 0;
        clauses = apply(&clauses, v, value)?;
        set |= 1 << v;
        if value {
            ones |= 1 << v;
        }
    }
    Some((clauses, set, ones))
}

/// Most frequent variable among the clauses.
fn branch_var(clauses: &[(u64, u64)]) -> usize {
    let mut occ = [0u32; 64];
    for &(p, n) in clauses {
        let mut m = p | n;
        while m != 0 {
            occ[m.trailing_zeros() as usize] += 1;
            m &= m - 1;
        }
    }
    (0..64).max_by_key(|&i| (occ[i], std::cmp::Reverse(i))).unwrap()
}

fn count(clauses: Vec<(u64, u64)>, free: u64) -> u128 {
    let Some((clauses, set, _)) = propagate(clauses) else {
        return 0;
    };
    let free = free & !set;
    if clauses.is_empty() {
        return 1u128 << free.count_ones();
    }
    let v = branch_var(&clauses);
    let rest = free & !(1 << v);
    let a = apply(&clauses, v, true).map_or(0, |c| count(c, rest));
    let b = apply(&clauses, v, false).map_or(0, |c| count(c, rest));
    a + b
}

/// Count and add to `ones[v]` the number of solutions with `v` true.
fn count_marginals(clauses: Vec<(u64, u64)>, free: u64, path_ones: u64, ones: &mut [u128]) -> u128 {
    let Some((clauses, set, forced_ones)) = propagate(clauses) else {
        return 0;
    };
    let free = free & !set;
    let path_ones = path_ones | forced_ones;
    if clauses.is_empty() {
        let f = free.count_ones();
        let total = 1u128 << f;
        for (v, o) in ones.iter_mut().enumerate() {
            if path_ones >> v & 1 == 1 {
                *o += total;
            } else if free >> v & 1 == 1 {
                *o += total >> 1;
            }
        }
        return total;
    }
    let v = branch_var(&clauses);
    let rest = free & !(1 << v);
    let a = apply(&clauses, v, true).map_or(0, |c| count_marginals(c, rest, path_ones | 1 << v, ones));
    let b = apply(&clauses, v, false).map_or(0, |c| count_marginals(c, rest, path_ones, ones));
    a + b
}

fn enumerate(clauses: Vec<(u64, u64)>, free: u64, path: u64, cap: usize, out: &mut Vec<u64>) {
    if out.len() >= cap {
        return;
    }
    let Some((clauses, set, forced_ones)) = propagate(clauses) else {
        return;
    };
    let free = free & !set;
    let path = path | forced_ones;
    if clauses.is_empty() {
        // All subsets of `free`, in increasing order.
        let mut sub = 0u64;
        loop {
            if out.len() >= cap {
                return;
            }
            out.push(path | sub);
            if sub == free {
                return;
            }
            sub = (sub.wrapping_sub(free)) & free;
        }
    }
    let v = branch_var(&clauses);
    let rest = free & !(1 << v);
    if let Some(c) = apply(&clauses, v, false) {
        enumerate(c, rest, path, cap, out);
    }
    if let Some(c) = apply(&clauses, v, true) {
        enumerate(c, rest, path | 1 << v, cap, out);
    }
}

/// Exact number of satisfying assignments over the free variables.
pub fn count_solutions(formula: &Formula, config: &OracleConfig) -> Result<u128, OracleError> {
    let c = Compact::new(formula, config)?;
    let free = c.all_free();
    Ok(count(c.clauses, free))
}

/// Satisfying assignments over the free variables, packed as bitmasks.
///
/// Bit `i` of a solution is the value of `free_vars[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionSet {
    n: usize,
    free_vars: Vec<u32>,
    solutions: Vec<u64>,
    count: u128,
    truncated: bool,
}

impl SolutionSet {
    /// Build from explicit bitmasks (deduplicated and sorted).
    pub fn from_masks(n: usize, free_vars: Vec<u32>, mut solutions: Vec<u64>) -> Self {
        solutions.sort_unstable();
        solutions.dedup();
        let count = solutions.len() as u128;
        Self {
            n,
            free_vars,
            solutions,
            count,
            truncated: false,
        }
    }

    /// Build from bitstrings over `x_1..x_nf`, all variables free.
    pub fn from_bitstrings(strings: &[&str]) -> Self {
        let nf = strings.first().map_or(0, |s| s.len());
        let vars: Vec<u32> = (1..=nf as u32).collect();
        let masks = strings
            .iter()
            .map(|s| {
                Assignment::from_bitstring_n(s, nf)
                    .ok()
                    .and_then(|a| a.pack(&vars))
                    .expect("bitstring of 0/1 with common length")
            })
            .collect();
        Self::from_masks(nf, vars, masks)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn free_vars(&self) -> &[u32] {
        &self.free_vars
    }

    /// `θn`, the number of free variables.
    pub fn num_free(&self) -> usize {
        self.free_vars.len()
    }

    pub fn masks(&self) -> &[u64] {
        &self.solutions
    }

    /// Exact number of solutions (also when truncated).
    pub fn count(&self) -> u128 {
        self.count
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn assignment(&self, i: usize) -> Assignment {
        Assignment::unpack(&self.free_vars, self.solutions[i], self.n)
    }

    pub fn iter(&self) -> impl Iterator<Item = Assignment> + '_ {
        (0..self.len()).map(|i| self.assignment(i))
    }

    /// Pack an assignment over the free variables.
    pub fn pack(&self, sigma: &Assignment) -> Result<u64, OracleError> {
        sigma.pack(&self.free_vars).ok_or(OracleError::ScopeMismatch)
    }

    pub fn contains(&self, sigma: &Assignment) -> bool {
        self.pack(sigma)
            .map(|m| self.solutions.binary_search(&m).is_ok())
            .unwrap_or(false)
    }

    pub fn contains_mask(&self, mask: u64) -> bool {
        self.solutions.binary_search(&mask).is_ok()
    }
}

/// Count, and materialize up to `config.cap` solutions.
pub fn enumerate_solutions(formula: &Formula, config: &OracleConfig) -> Result<SolutionSet, OracleError> {
    let c = Compact::new(formula, config)?;
    let free = c.all_free();
    let total = count(c.clauses.clone(), free);
    let mut solutions = Vec::with_capacity(total.min(config.cap as u128) as usize);
    enumerate(c.clauses, free, 0, config.cap, &mut solutions);
    solutions.sort_unstable();
    Ok(SolutionSet {
        n: formula.n(),
        free_vars: c.vars,
        truncated: (solutions.len() as u128) < total,
        solutions,
        count: total,
    })
}

/// Exact marginals `M_x = #{σ ∈ S : σ(x) = 1} / |S|` for every free variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalVector {
    pub vars: Vec<u32>,
    pub ones: Vec<u128>,
    pub total: u128,
}

impl MarginalVector {
    fn index(&self, var: u32) -> Option<usize> {
        self.vars.binary_search(&var).ok()
    }

    /// Exact fraction `(ones, total)`.
    pub fn exact(&self, var: u32) -> Option<(u128, u128)> {
        self.index(var).map(|i| (self.ones[i], self.total))
    }

    /// Nearest `f64` to the quotient when both counts are below `2^53`.
    pub fn get(&self, var: u32) -> Option<f64> {
        self.index(var).map(|i| self.ones[i] as f64 / self.total as f64)
    }

    pub fn values(&self) -> Vec<f64> {
        self.ones
            .iter()
            .map(|&o| o as f64 / self.total as f64)
            .collect()
    }

    /// Whether `x` takes the same value in every solution.
    pub fn is_frozen(&self, var: u32) -> bool {
        self.exact(var)
            .is_some_and(|(o, t)| o == 0 || o == t)
    }
}

pub fn true_marginals(formula: &Formula, config: &OracleConfig) -> Result<MarginalVector, OracleError> {
    let c = Compact::new(formula, config)?;
    let mut ones = vec![0u128; c.vars.len()];
    let free = c.all_free();
    let total = count_marginals(c.clauses, free, 0, &mut ones);
    if total == 0 {
        return Err(OracleError::Unsatisfiable);
    }
    Ok(MarginalVector {
        vars: c.vars,
        ones,
        total,
    })
}

/// Marginals read off a fully materialized set.
pub fn marginals_from_set(set: &SolutionSet) -> Result<MarginalVector, OracleError> {
    if set.is_truncated() {
        return Err(OracleError::TooManySolutions {
            count: set.count(),
            cap: set.len(),
        });
    }
    if set.is_empty() {
        return Err(OracleError::Unsatisfiable);
    }
    let ones = (0..set.num_free())
        .map(|i| set.masks().iter().filter(|&&m| m >> i & 1 == 1).count() as u128)
        .collect();
    Ok(MarginalVector {
        vars: set.free_vars().to_vec(),
        ones,
        total: set.len() as u128,
    })
}

/// One step of the decimation process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecimationStep {
    pub var: u32,
    /// Solutions of the current formula with `var` true.
    pub ones: u128,
    /// Solutions of the current formula.
    pub total: u128,
    pub value: bool,
}

impl DecimationStep {
    pub fn marginal(&self) -> f64 {
        self.ones as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecimationRun {
    pub sigma: Assignment,
    pub trace: Vec<DecimationStep>,
}

/// Assign the free variables in index order, each set to true with
/// probability equal to its exact marginal in the current formula, then
/// substitute and simplify.
pub fn decimation_process<R: Rng + ?Sized>(
    formula: &Formula,
    config: &OracleConfig,
    rng: &mut R,
) -> Result<DecimationRun, OracleError> {
    let c = Compact::new(formula, config)?;
    let mut free = c.all_free();
    let mut clauses = c.clauses;
    let mut total = count(clauses.clone(), free);
    if total == 0 {
        return Err(OracleError::Unsatisfiable);
    }
    let mut sigma = Assignment::empty(formula.n());
    let mut trace = Vec::with_capacity(c.vars.len());
    for (i, &var) in c.vars.iter().enumerate() {
        free &= !(1 << i);
        let with_one = apply(&clauses, i, true);
        let ones = with_one.as_ref().map_or(0, |cl| count(cl.clone(), free));
        let value = rng.random_range(0..total) < ones;
        trace.push(DecimationStep {
            var,
            ones,
            total,
            value,
        });
        clauses = if value {
            total = ones;
            with_one.unwrap()
        } else {
            total -= ones;
            apply(&clauses, i, false).expect("positive count implies no empty clause")
        };
        sigma.set(var, value);
    }
    debug_assert!(formula.is_satisfied_by(&sigma));
    Ok(DecimationRun { sigma, trace })
}

/// An exactly uniform element of `S(Φ)`, by count-weighted DPLL descent.
pub fn uniform_solution_sample<R: Rng + ?Sized>(
    formula: &Formula,
    config: &OracleConfig,
    rng: &mut R,
) -> Result<Assignment, OracleError> {
    let c = Compact::new(formula, config)?;
    let mut free = c.all_free();
    let mut clauses = c.clauses;
    let mut ones_mask = 0u64;
    if count(clauses.clone(), free) == 0 {
        return Err(OracleError::Unsatisfiable);
    }
    loop {
        let (cl, set, forced) = propagate(clauses).expect("satisfiable branch");
        ones_mask |= forced;
        free &= !set;
        if cl.is_empty() {
            let mut f = free;
            while f != 0 {
                let v = f.trailing_zeros();
                if rng.random::<bool>() {
                    ones_mask |= 1 << v;
                }
                f &= f - 1;
            }
            break;
        }
        let v = branch_var(&cl);
        free &= !(1 << v);
        let a = apply(&cl, v, true);
        let b = apply(&cl, v, false);
        let ca = a.as_ref().map_or(0, |x| count(x.clone(), free));
        let cb = b.as_ref().map_or(0, |x| count(x.clone(), free));
        if rng.random_range(0..ca + cb) < ca {
            ones_mask |= 1 << v;
            clauses = a.unwrap();
        } else {
            clauses = b.unwrap();
        }
    }
    Ok(Assignment::unpack(&c.vars, ones_mask, formula.n()))
}

/// `X_d = #{τ ∈ S : d(reference, τ) = d}` for `d = 0..=θn`.
pub fn distance_profile(set: &SolutionSet, reference: &Assignment) -> Result<Vec<u128>, OracleError> {
    let r = set.pack(reference)?;
    let mut x = vec![0u128; set.num_free() + 1];
    for &m in set.masks() {
        x[(m ^ r).count_ones() as usize] += 1;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub count: u128,
    /// `Σ_{σ,τ} d(σ,τ) / |S|²` over ordered pairs, self-pairs included.
    pub average_distance: f64,
    /// Zero when computed exactly.
    pub average_std_error: f64,
    /// Largest pairwise distance; a lower bound when `exact` is false.
    pub diameter: usize,
    /// False when estimated from sampled pairs.
    pub exact: bool,
    pub pairs_sampled: usize,
}

impl GeometryReport {
    /// `diameter ≤ α·n`.
    pub fn is_condensed(&self, alpha: f64, n: usize) -> bool {
        self.diameter as f64 <= alpha * n as f64
    }
}

/// Exact average distance and diameter of a materialized set.
pub fn geometry(set: &SolutionSet) -> GeometryReport {
    let nf = set.num_free();
    let big_n = set.len() as u128;
    let mut sum = 0u128;
    for i in 0..nf {
        let c = set.masks().iter().filter(|&&m| m >> i & 1 == 1).count() as u128;
        sum += 2 * c * (big_n - c);
    }
    let average_distance = if big_n == 0 {
        0.0
    } else {
        sum as f64 / (big_n * big_n) as f64
    };
    GeometryReport {
        count: set.count(),
        average_distance,
        average_std_error: 0.0,
        diameter: diameter(set),
        exact: !set.is_truncated(),
        pairs_sampled: 0,
    }
}

/// Largest pairwise distance. For up to 22 free variables this is `nf` minus
/// the distance between `S` and its complement image, found by breadth-first
/// search on the cube; otherwise all pairs are scanned.
fn diameter(set: &SolutionSet) -> usize {
    let nf = set.num_free();
    if set.is_empty() {
        return 0;
    }
    let n_sol = set.len();
    if nf <= 22 && (n_sol as u128) * (n_sol as u128) > (1u128 << nf) * nf as u128 {
        let full = mask_of(nf);
        let size = 1usize << nf;
        let mut target = vec![false; size];
        for &m in set.masks() {
            target[(m ^ full) as usize] = true;
        }
        let mut dist = vec![u8::MAX; size];
        let mut frontier: Vec<u64> = set.masks().to_vec();
        for &m in &frontier {
            dist[m as usize] = 0;
        }
        let mut d = 0usize;
        loop {
            if frontier.iter().any(|&m| target[m as usize]) {
                return nf - d;
            }
            let mut next = Vec::new();
            for &m in &frontier {
                for b in 0..nf {
                    let w = m ^ (1 << b);
                    if dist[w as usize] == u8::MAX {
                        dist[w as usize] = (d + 1) as u8;
                        next.push(w);
                    }
                }
            }
            frontier = next;
            d += 1;
        }
    }
    let masks = set.masks();
    let mut best = 0;
    for (i, &a) in masks.iter().enumerate() {
        for &b in &masks[i + 1..] {
            best = best.max((a ^ b).count_ones() as usize);
        }
    }
    best
}

/// Geometry from `pairs` independent pairs of uniform solutions.
pub fn geometry_sampled<R: Rng + ?Sized>(
    formula: &Formula,
    config: &OracleConfig,
    pairs: usize,
    rng: &mut R,
) -> Result<GeometryReport, OracleError> {
    let count = count_solutions(formula, config)?;
    if count == 0 {
        return Err(OracleError::Unsatisfiable);
    }
    let mut ds = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let a = uniform_solution_sample(formula, config, rng)?;
        let b = uniform_solution_sample(formula, config, rng)?;
        ds.push(a.hamming(&b) as f64);
    }
    let p = pairs.max(1) as f64;
    let mean = ds.iter().sum::<f64>() / p;
    let var = if pairs > 1 {
        ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (p - 1.0)
    } else {
        0.0
    };
    Ok(GeometryReport {
        count,
        average_distance: mean,
        average_std_error: (var / p).sqrt(),
        diameter: ds.iter().fold(0.0f64, |a, &b| a.max(b)) as usize,
        exact: false,
        pairs_sampled: pairs,
    })
}

/// Exact geometry when the set fits under the cap, sampled otherwise.
pub fn geometry_of<R: Rng + ?Sized>(
    formula: &Formula,
    config: &OracleConfig,
    pairs: usize,
    rng: &mut R,
) -> Result<GeometryReport, OracleError> {
    let count = count_solutions(formula, config)?;
    if count == 0 {
        return Err(OracleError::Unsatisfiable);
    }
    if count <= config.cap as u128 {
        Ok(geometry(&enumerate_solutions(formula, config)?))
    } else {
        geometry_sampled(formula, config, pairs, rng)
    }
}

/// Parameters of the greedy cluster decomposition. Distances are absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShatterParams {
    /// Cluster radius `a1·n`.
    pub radius: usize,
    /// SH1 rate: clusters must have at most `exp(-α·θn)·|S|` elements.
    pub alpha: f64,
    /// SH2 rate: distinct clusters at distance at least `⌈β·θn⌉`.
    pub beta: f64,
    /// Largest leftover fraction `|R_0|/|S|` accepted for a shattered verdict.
    pub max_leftover: f64,
    /// Optional outer radius: centres need no solution at distance in `(radius, outer]`.
    pub shell_outer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShatterReport {
    /// Cluster members as indices into the solution set.
    pub clusters: Vec<Vec<usize>>,
    pub centres: Vec<usize>,
    pub leftover: usize,
    pub leftover_fraction: f64,
    pub sh1: bool,
    pub sh2: bool,
    /// Smallest distance between members of distinct clusters.
    pub min_inter_distance: Option<usize>,
    /// Threshold `⌈β·θn⌉` that SH2 was checked against.
    pub sh2_threshold: usize,
    pub shattered: bool,
    /// True when the set was truncated, so the verdict concerns a subset.
    pub estimated: bool,
}

/// Greedy ball peeling: among the uncovered solutions whose ball
/// `C(τ) = {χ ∈ S : d(χ,τ) ≤ radius}` is small enough for SH1 (and whose
/// shell is empty, if requested), take the one with the most uncovered
/// solutions in its ball, carve that ball off as the next cluster, repeat.
/// Solutions never covered form the leftover `R_0`. Shattered means at least
/// two clusters, SH1, SH2 and a leftover fraction within bounds.
pub fn shatter_decomposition(set: &SolutionSet, params: &ShatterParams) -> ShatterReport {
    let masks = set.masks();
    let big_n = masks.len();
    let theta_n = set.num_free() as f64;
    let limit = (-params.alpha * theta_n).exp() * big_n as f64;
    let dist = |i: usize, j: usize| (masks[i] ^ masks[j]).count_ones() as usize;

    let mut ball: Vec<Vec<usize>> = vec![Vec::new(); big_n];
    let mut good = vec![true; big_n];
    for i in 0..big_n {
        for j in 0..big_n {
            let d = dist(i, j);
            if d <= params.radius {
                ball[i].push(j);
            } else if params.shell_outer.is_some_and(|o| d <= o) {
                good[i] = false;
            }
        }
        if ball[i].len() as f64 > limit * (1.0 + 1e-12) {
            good[i] = false;
        }
    }

    let mut uncovered_in_ball: Vec<usize> = ball.iter().map(Vec::len).collect();
    let mut label = vec![usize::MAX; big_n];
    let mut clusters = Vec::new();
    let mut centres = Vec::new();
    loop {
        let pick = (0..big_n)
            .filter(|&i| good[i] && label[i] == usize::MAX)
            .max_by_key(|&i| (uncovered_in_ball[i], std::cmp::Reverse(i)));
        let Some(c) = pick else { break };
        let id = clusters.len();
        let members: Vec<usize> = ball[c].iter().copied().filter(|&j| label[j] == usize::MAX).collect();
        for &j in &members {
            label[j] = id;
            // Every centre whose ball contains j loses one uncovered element.
            for &i in &ball[j] {
                uncovered_in_ball[i] -= 1;
            }
        }
        clusters.push(members);
        centres.push(c);
    }

    let leftover = label.iter().filter(|&&l| l == usize::MAX).count();
    let leftover_fraction = if big_n == 0 { 0.0 } else { leftover as f64 / big_n as f64 };
    let sh1 = clusters.iter().all(|c| c.len() as f64 <= limit * (1.0 + 1e-12));
    let mut min_inter: Option<usize> = None;
    for i in 0..big_n {
        if label[i] == usize::MAX {
            continue;
        }
        for j in i + 1..big_n {
            if label[j] != usize::MAX && label[j] != label[i] {
                let d = dist(i, j);
                min_inter = Some(min_inter.map_or(d, |m| m.min(d)));
            }
        }
    }
    let sh2_threshold = (params.beta * theta_n - 1e-9).ceil().max(0.0) as usize;
    let sh2 = min_inter.is_none_or(|d| d >= sh2_threshold);
    ShatterReport {
        shattered: clusters.len() >= 2 && sh1 && sh2 && leftover_fraction <= params.max_leftover,
        clusters,
        centres,
        leftover,
        leftover_fraction,
        sh1,
        sh2,
        min_inter_distance: min_inter,
        sh2_threshold,
        estimated: set.is_truncated(),
    }
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

    fn cfg() -> OracleConfig {
        OracleConfig::default()
    }

    #[test]
    fn counts() {
        assert_eq!(count_solutions(&f(2, &[&[1, 2]]), &cfg()).unwrap(), 3);
        assert_eq!(count_solutions(&f(3, &[]), &cfg()).unwrap(), 8);
        let g = f(3, &[&[1, 2], &[-1, 3]]);
        let s = enumerate_solutions(&g, &cfg()).unwrap();
        assert_eq!(s.count(), 4);
        let mut bits: Vec<String> = s.iter().map(|a| a.to_bitstring()).collect();
        bits.sort();
        assert_eq!(bits, vec!["010", "011", "101", "111"]);
    }

    #[test]
    fn marginals() {
        let m = true_marginals(&f(3, &[&[1, 2], &[-1, 3]]), &cfg()).unwrap();
        assert_eq!(m.exact(1), Some((2, 4)));
        assert_eq!(m.exact(2), Some((3, 4)));
        assert_eq!(m.exact(3), Some((3, 4)));
        assert_eq!(true_marginals(&f(1, &[&[1]]), &cfg()).unwrap().get(1), Some(1.0));
        assert!(true_marginals(&f(2, &[]), &cfg()).unwrap().values().iter().all(|&v| v == 0.5));
        assert_eq!(
            true_marginals(&f(1, &[&[1], &[-1]]), &cfg()),
            Err(OracleError::Unsatisfiable)
        );
    }

    #[test]
    fn limit_and_truncation() {
        let big = f(31, &[]);
        assert!(matches!(
            count_solutions(&big, &cfg()),
            Err(OracleError::TooManyFreeVars { got: 31, limit: 30 })
        ));
        let small = OracleConfig { cap: 5, ..cfg() };
        let s = enumerate_solutions(&f(4, &[]), &small).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.count(), 16);
        assert!(s.is_truncated());
    }

    #[test]
    fn forced_chain_decimation() {
        let mut r = rng::stream(1, 0);
        let run = decimation_process(&f(2, &[&[1], &[2]]), &cfg(), &mut r).unwrap();
        assert_eq!(run.sigma.to_bitstring(), "11");
        assert_eq!(run.trace[0].marginal(), 1.0);
    }

    #[test]
    fn decimation_trace_for_disjunction() {
        let mut r = rng::stream(2, 0);
        let run = decimation_process(&f(2, &[&[1, 2]]), &cfg(), &mut r).unwrap();
        assert_eq!((run.trace[0].ones, run.trace[0].total), (2, 3));
        let second = &run.trace[1];
        if run.sigma.get(1) == Some(true) {
            assert_eq!((second.ones, second.total), (1, 2));
        } else {
            assert_eq!((second.ones, second.total), (1, 1));
        }
    }

    #[test]
    fn profile_and_geometry() {
        let s = enumerate_solutions(&f(3, &[&[1, 2, 3]]), &cfg()).unwrap();
        let r = Assignment::from_bitstring("111").unwrap();
        assert_eq!(distance_profile(&s, &r).unwrap(), vec![1, 3, 3, 0]);
        let two = SolutionSet::from_bitstrings(&["000", "001"]);
        let g = geometry(&two);
        assert_eq!(g.average_distance, 0.5);
        assert_eq!(g.diameter, 1);
        let cube = enumerate_solutions(&f(3, &[]), &cfg()).unwrap();
        let g = geometry(&cube);
        assert_eq!(g.average_distance, 1.5);
        assert_eq!(g.diameter, 3);
        let single = SolutionSet::from_bitstrings(&["0101"]);
        let g = geometry(&single);
        assert_eq!((g.average_distance, g.diameter), (0.0, 0));
        assert!(g.is_condensed(0.0, 4));
    }

    #[test]
    fn two_points_shatter() {
        let s = SolutionSet::from_bitstrings(&["000000", "111111"]);
        let p = ShatterParams {
            radius: 1,
            alpha: 0.1,
            beta: 1.0,
            max_leftover: 0.0,
            shell_outer: None,
        };
        let r = shatter_decomposition(&s, &p);
        assert_eq!(r.clusters.len(), 2);
        assert_eq!(r.min_inter_distance, Some(6));
        assert!(r.shattered);
    }
}
