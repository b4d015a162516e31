#![allow(dead_code)]

use decilab_core::{Assignment, Clause, Formula, Literal};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

/// Random formula over `n` variables with clause lengths in `1..=k` and distinct variables per clause.
pub fn random_formula<R: Rng>(rng: &mut R, n: usize, k: usize, m: usize) -> Formula {
    let vars: Vec<u32> = (1..=n as u32).collect();
    let clauses = (0..m)
        .map(|_| {
            let len = rng.random_range(1..=k.min(n));
            let lits = vars
                .choose_multiple(rng, len)
                .map(|&v| Literal::new(v, rng.random()))
                .collect();
            Clause::new(lits)
        })
        .collect();
    Formula::new(n, k, clauses).unwrap()
}

/// Proper `k`-clauses only.
pub fn random_k_formula<R: Rng>(rng: &mut R, n: usize, k: usize, m: usize) -> Formula {
    let vars: Vec<u32> = (1..=n as u32).collect();
    let clauses = (0..m)
        .map(|_| {
            let lits = vars
                .choose_multiple(rng, k)
                .map(|&v| Literal::new(v, rng.random()))
                .collect();
            Clause::new(lits)
        })
        .collect();
    Formula::new(n, k, clauses).unwrap()
}

/// Formula whose factor graph is a tree: each new clause touches exactly one
/// variable already in the graph.
pub fn random_tree_formula<R: Rng>(rng: &mut R, n: usize, k: usize) -> Formula {
    let mut clauses = Vec::new();
    let mut used = 1u32;
    while (used as usize) < n {
        let anchor = rng.random_range(1..=used);
        let fresh = rng.random_range(1..k).min(n - used as usize) as u32;
        let mut lits = vec![Literal::new(anchor, rng.random())];
        for v in used + 1..=used + fresh {
            lits.push(Literal::new(v, rng.random()));
        }
        used += fresh;
        lits.shuffle(rng);
        clauses.push(Clause::new(lits));
    }
    if rng.random_bool(0.5) {
        let v = rng.random_range(1..=n as u32);
        clauses.push(Clause::new(vec![Literal::new(v, rng.random())]));
    }
    Formula::new(n, k, clauses).unwrap()
}

/// Satisfying assignments of the free variables by scanning all `2^θn` of them.
pub fn brute_solutions(f: &Formula) -> Vec<Assignment> {
    let vars = f.free_vars();
    assert!(vars.len() <= 20);
    (0..1u64 << vars.len())
        .map(|bits| Assignment::unpack(&vars, bits, f.n()))
        .filter(|a| f.is_satisfied_by(a))
        .collect()
}

pub fn brute_count(f: &Formula) -> u128 {
    brute_solutions(f).len() as u128
}

/// Exact marginal of `x` as `(ones, total)`.
pub fn brute_marginal(f: &Formula, x: u32) -> (u128, u128) {
    let s = brute_solutions(f);
    let ones = s.iter().filter(|a| a.get(x) == Some(true)).count();
    (ones as u128, s.len() as u128)
}
