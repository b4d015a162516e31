//! Seeded random formulas: the uniform model and the planted models.
//!
//! * Uniform: a set of `m` distinct proper k-clauses, drawn without
//!   replacement from all `2^k·C(n,k)` of them.
//! * Planted (fixed `m`): a uniform `σ`, then `m` clauses drawn independently
//!   **with** replacement from the `(2^k-1)·C(n,k)` clauses that `σ` satisfies.
//! * Planted (binomial): a uniform `σ`, then each satisfied clause kept
//!   independently with probability `p = m/((2^k-1)·C(n,k))`.
//!
//! The first two differ in replacement on purpose; at small `n` repeated
//! clauses are common in the planted model and absent from the uniform one.
//!
//! Clause literals are always sorted by variable.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Assignment;
use crate::formula::{Clause, Formula, FormulaError, Literal};

/// Deterministic random streams.
///
/// Every random quantity is drawn from ChaCha20 keyed by `seed_from_u64(seed)`
/// with the stream id selected by `set_stream`. Streams are independent, so a
/// caller can hand one to each parallel task. The harness uses
/// `stream = (repetition << 8) | purpose` with the `PURPOSE_*` constants.
pub mod rng {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub const PURPOSE_GENERATE: u64 = 0;
    pub const PURPOSE_SOLUTION: u64 = 1;
    pub const PURPOSE_BP: u64 = 2;
    pub const PURPOSE_DECIMATION: u64 = 3;
    pub const PURPOSE_SAMPLING: u64 = 4;

    pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }

    pub fn substream(seed: u64, repetition: u64, purpose: u64) -> ChaCha20Rng {
        stream(seed, (repetition << 8) | (purpose & 0xff))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Uniform,
    #[serde(alias = "planted")]
    PlantedFixed,
    PlantedBinomial,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::PlantedFixed => "planted-fixed",
            Self::PlantedBinomial => "planted-binomial",
        }
    }

    pub fn is_planted(self) -> bool {
        !matches!(self, Self::Uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub model: ModelKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("m = {m} exceeds the clause universe of size {universe}")]
    UniverseExceeded { m: usize, universe: u128 },
    #[error("inclusion probability m/N = {m}/{universe} exceeds 1")]
    ProbabilityExceedsOne { m: usize, universe: u128 },
    #[error("assignment does not satisfy the formula")]
    NotSatisfying,
    #[error("assignment must be total over {n} variables")]
    NotTotal { n: usize },
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

impl GenConfig {
    pub fn new(model: ModelKind, n: usize, k: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            k,
            m,
            seed,
            model,
        }
    }

    /// `m = round(ρ·2^k·n/k)`.
    pub fn m_for_rho(n: usize, k: usize, rho: f64) -> usize {
        (rho * 2f64.powi(k as i32) * n as f64 / k as f64).round() as usize
    }

    /// Clause density `r = m/n`.
    pub fn r(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Rescaled density `ρ = k·r/2^k`.
    pub fn rho(&self) -> f64 {
        self.k as f64 * self.r() / 2f64.powi(self.k as i32)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.k < 2 {
            return Err(GenError::InvalidConfig(format!("k = {} < 2", self.k)));
        }
        if self.k > 62 {
            return Err(GenError::InvalidConfig(format!("k = {} > 62", self.k)));
        }
        if self.n < self.k {
            return Err(GenError::InvalidConfig(format!(
                "n = {} < k = {}",
                self.n, self.k
            )));
        }
        if self.n > u32::MAX as usize {
            return Err(GenError::InvalidConfig("n does not fit in u32".into()));
        }
        Ok(())
    }
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(c)
}

/// `2^k·C(n,k)`, the number of proper k-clauses over `n` variables.
pub fn uniform_universe(n: usize, k: usize) -> Option<u128> {
    binomial(n as u64, k as u64)?.checked_mul(1u128 << k)
}

/// `(2^k-1)·C(n,k)`, the number of proper k-clauses satisfied by a fixed assignment.
pub fn planted_universe(n: usize, k: usize) -> Option<u128> {
    binomial(n as u64, k as u64)?.checked_mul((1u128 << k) - 1)
}

/// The k-subset of `{1..n}` with lexicographic rank `rank`.
pub fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<u32> {
    let mut out = Vec::with_capacity(k);
    let mut next = 1usize;
    for i in 0..k {
        let rest = (k - i - 1) as u64;
        loop {
            let count = binomial((n - next) as u64, rest).expect("rank overflows");
            if rank < count {
                break;
            }
            rank -= count;
            next += 1;
        }
        out.push(next as u32);
        next += 1;
    }
    out
}

/// Lexicographic rank of a sorted k-subset of `{1..n}`; inverse of [`unrank_combination`].
pub fn rank_combination(n: usize, vars: &[u32]) -> u128 {
    let k = vars.len();
    let mut rank = 0u128;
    let mut next = 1usize;
    for (i, &v) in vars.iter().enumerate() {
        let rest = (k - i - 1) as u64;
        while next < v as usize {
            rank += binomial((n - next) as u64, rest).unwrap();
            next += 1;
        }
        next += 1;
    }
    rank
}

fn clause_from_pattern(vars: &[u32], pattern: u64) -> Clause {
    Clause::new(
        vars.iter()
            .enumerate()
            .map(|(i, &v)| Literal::new(v, pattern >> i & 1 == 1))
            .collect(),
    )
}

/// Sign pattern (bit `i` = polarity of `vars[i]`) of the only clause on `vars` that `sigma` falsifies.
fn falsifying_pattern(vars: &[u32], sigma: &Assignment) -> u64 {
    vars.iter()
        .enumerate()
        .fold(0, |acc, (i, &v)| if sigma.get(v) == Some(true) { acc } else { acc | 1 << i })
}

/// Clause with index `idx` in the uniform universe: combination `idx >> k`, signs `idx & (2^k-1)`.
pub fn unrank_uniform_clause(n: usize, k: usize, idx: u128) -> Clause {
    let vars = unrank_combination(n, k, idx >> k);
    clause_from_pattern(&vars, (idx & ((1u128 << k) - 1)) as u64)
}

/// Clause with index `idx` in the universe of clauses satisfied by `sigma`:
/// combination `idx / (2^k-1)`, then the `idx mod (2^k-1)`-th non-falsifying pattern.
pub fn unrank_planted_clause(n: usize, k: usize, sigma: &Assignment, idx: u128) -> Clause {
    let per = (1u128 << k) - 1;
    let vars = unrank_combination(n, k, idx / per);
    let j = (idx % per) as u64;
    let bad = falsifying_pattern(&vars, sigma);
    clause_from_pattern(&vars, if j >= bad { j + 1 } else { j })
}

/// A uniform k-subset of `{1..n}` (Floyd's algorithm), sorted.
pub fn random_k_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<u32> {
    let mut chosen: Vec<u32> = Vec::with_capacity(k);
    for j in (n - k + 1)..=n {
        let t = rng.random_range(1..=j as u64) as u32;
        if chosen.contains(&t) {
            chosen.push(j as u32);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// A uniform `m`-subset of `0..universe` (Floyd's algorithm), ascending.
fn floyd_subset<R: Rng + ?Sized>(rng: &mut R, universe: u64, m: usize) -> Vec<u64> {
    let mut set = HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    for j in (universe - m as u64)..universe {
        let t = rng.random_range(0..=j);
        let pick = if set.contains(&t) { j } else { t };
        set.insert(pick);
        out.push(pick);
    }
    out.sort_unstable();
    out
}

/// `m` distinct clauses from a universe of size `universe`, either by Floyd
/// sampling of indices or by rejection of random elements.
fn distinct_clauses<R: Rng + ?Sized>(
    rng: &mut R,
    universe: Option<u128>,
    m: usize,
    unrank: impl Fn(u128) -> Clause,
    mut random: impl FnMut(&mut R) -> Clause,
) -> Vec<Clause> {
    if let Some(u) = universe.and_then(|u| u64::try_from(u).ok()) {
        if m as u64 >= u / 16 {
            return floyd_subset(rng, u, m)
                .into_iter()
                .map(|i| unrank(i as u128))
                .collect();
        }
    }
    let mut seen = HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let c = random(rng);
        if seen.insert(c.clone()) {
            out.push(c);
        }
    }
    out
}

fn random_sigma<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Assignment {
    let bits: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    Assignment::from_bools(&bits)
}

fn random_planted_clause<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, sigma: &Assignment) -> Clause {
    let vars = random_k_subset(rng, n, k);
    let bad = falsifying_pattern(&vars, sigma);
    let j = rng.random_range(0..(1u64 << k) - 1);
    clause_from_pattern(&vars, if j >= bad { j + 1 } else { j })
}

/// A formula paired with an assignment that satisfies it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedPair {
    pub formula: Formula,
    pub sigma: Assignment,
}

pub fn gen_uniform(config: &GenConfig) -> Result<Formula, GenError> {
    let mut rng = rng::stream(config.seed, 0);
    gen_uniform_with(config, &mut rng)
}

pub fn gen_uniform_with<R: Rng + ?Sized>(config: &GenConfig, rng: &mut R) -> Result<Formula, GenError> {
    config.validate()?;
    let (n, k, m) = (config.n, config.k, config.m);
    let universe = uniform_universe(n, k);
    if let Some(u) = universe {
        if m as u128 > u {
            return Err(GenError::UniverseExceeded { m, universe: u });
        }
    }
    let clauses = distinct_clauses(
        rng,
        universe,
        m,
        |i| unrank_uniform_clause(n, k, i),
        |r| {
            let vars = random_k_subset(r, n, k);
            clause_from_pattern(&vars, r.random_range(0..1u64 << k))
        },
    );
    Ok(Formula::new(n, k, clauses)?)
}

pub fn gen_planted_fixed(config: &GenConfig) -> Result<PlantedPair, GenError> {
    let mut rng = rng::stream(config.seed, 0);
    gen_planted_fixed_with(config, &mut rng)
}

pub fn gen_planted_fixed_with<R: Rng + ?Sized>(
    config: &GenConfig,
    rng: &mut R,
) -> Result<PlantedPair, GenError> {
    config.validate()?;
    let (n, k) = (config.n, config.k);
    let sigma = random_sigma(rng, n);
    let clauses = (0..config.m)
        .map(|_| random_planted_clause(rng, n, k, &sigma))
        .collect();
    let formula = Formula::new(n, k, clauses)?;
    debug_assert!(formula.is_satisfied_by(&sigma));
    Ok(PlantedPair { formula, sigma })
}

pub fn gen_planted_binomial(config: &GenConfig) -> Result<PlantedPair, GenError> {
    let mut rng = rng::stream(config.seed, 0);
    gen_planted_binomial_with(config, &mut rng)
}

/// The clause count is drawn from `Binomial(N, m/N)` and that many distinct
/// satisfied clauses are chosen uniformly, which is the same distribution as
/// independent inclusion. When `N` does not fit in 64 bits the count is drawn
/// from `Poisson(m)` instead.
pub fn gen_planted_binomial_with<R: Rng + ?Sized>(
    config: &GenConfig,
    rng: &mut R,
) -> Result<PlantedPair, GenError> {
    config.validate()?;
    let (n, k, m) = (config.n, config.k, config.m);
    let universe = planted_universe(n, k);
    if let Some(u) = universe {
        if m as u128 > u {
            return Err(GenError::ProbabilityExceedsOne { m, universe: u });
        }
    }
    let sigma = random_sigma(rng, n);
    let count = match universe.and_then(|u| u64::try_from(u).ok()) {
        _ if m == 0 => 0,
        Some(u) => Binomial::new(u, m as f64 / u as f64)
            .expect("p in [0,1]")
            .sample(rng) as usize,
        None => Poisson::new(m as f64).expect("m > 0").sample(rng) as usize,
    };
    let clauses = distinct_clauses(
        rng,
        universe,
        count,
        |i| unrank_planted_clause(n, k, &sigma, i),
        |r| random_planted_clause(r, n, k, &sigma),
    );
    let formula = Formula::new(n, k, clauses)?;
    debug_assert!(formula.is_satisfied_by(&sigma));
    Ok(PlantedPair { formula, sigma })
}

/// Generate according to `config.model`; planted models also return `σ`.
pub fn generate(config: &GenConfig) -> Result<(Formula, Option<Assignment>), GenError> {
    let mut rng = rng::stream(config.seed, 0);
    generate_with(config, &mut rng)
}

pub fn generate_with<R: Rng + ?Sized>(
    config: &GenConfig,
    rng: &mut R,
) -> Result<(Formula, Option<Assignment>), GenError> {
    Ok(match config.model {
        ModelKind::Uniform => (gen_uniform_with(config, rng)?, None),
        ModelKind::PlantedFixed => {
            let p = gen_planted_fixed_with(config, rng)?;
            (p.formula, Some(p.sigma))
        }
        ModelKind::PlantedBinomial => {
            let p = gen_planted_binomial_with(config, rng)?;
            (p.formula, Some(p.sigma))
        }
    })
}

/// Substitute `σ(x_i)` for every free `x_i` with `i ≤ t` and simplify.
pub fn decimate_under(formula: &Formula, sigma: &Assignment, t: usize) -> Result<Formula, GenError> {
    if sigma.n() != formula.n() || !formula.free_vars().iter().all(|&v| sigma.get(v).is_some()) {
        return Err(GenError::NotTotal { n: formula.n() });
    }
    if !formula.is_satisfied_by(sigma) {
        return Err(GenError::NotSatisfying);
    }
    let t = t.min(formula.n());
    let mut f = formula.clone();
    for var in 1..=t as u32 {
        if !f.is_free(var) {
            continue;
        }
        f = f
            .substitute(var, sigma.get(var).unwrap())?
            .into_formula()
            .expect("a satisfying assignment never empties a clause");
    }
    Ok(f)
}
