mod common;

use common::*;
use decilab_core::bp::{bp_decimation, bp_marginal_of, bp_marginals, MessageState};
use decilab_core::dimacs::{emit_dimacs_with_sigma, parse_dimacs_with_sigma};
use decilab_core::generators::{decimate_under, generate, rng, GenConfig, ModelKind};
use decilab_core::oracle::{
    count_solutions, distance_profile, enumerate_solutions, geometry, marginals_from_set, true_marginals,
    OracleConfig,
};
use decilab_core::phase::{classify_regime, entropy_h, first_moment_bound, psi, PhaseConfig, PhasePoint, Regime};
use decilab_core::structure::{analyze, classify_forced, max_self_contained, support_table};
use decilab_core::{Assignment, Formula, SimplifyOutcome};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn formula_from(seed: u64, n: usize, k: usize, m: usize) -> Formula {
    random_formula(&mut ChaCha20Rng::seed_from_u64(seed), n, k, m)
}

fn oc() -> OracleConfig {
    OracleConfig::default()
}

/// A planted instance decimated at `t`, with its planted assignment.
fn planted_decimated(seed: u64, n: usize, k: usize, m: usize, t: usize) -> (Formula, Assignment) {
    let cfg = GenConfig::new(ModelKind::PlantedFixed, n, k, m, seed);
    let (f, s) = generate(&cfg).unwrap();
    let s = s.unwrap();
    (decimate_under(&f, &s, t).unwrap(), s)
}

/// Brute-force maximum self-contained set over the true literals of `sigma`.
fn brute_self_contained(f: &Formula, sigma: &Assignment) -> Vec<u32> {
    let vars = f.free_vars();
    let table = support_table(f, sigma).unwrap();
    let mut best: Vec<u32> = Vec::new();
    for mask in 0u64..1 << vars.len() {
        let set: Vec<u32> = (0..vars.len()).filter(|&i| mask >> i & 1 == 1).map(|i| vars[i]).collect();
        let ok = set.iter().all(|&y| {
            f.clauses()
                .iter()
                .enumerate()
                .filter(|(c, cl)| table.supporter[*c] == Some(y) && cl.vars().all(|v| set.binary_search(&v).is_ok()))
                .count()
                >= 2
        });
        if ok && set.len() > best.len() {
            best = set;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn substitution_shrinks_and_preserves_solutions(seed in any::<u64>(), n in 2usize..9, m in 0usize..20, value in any::<bool>()) {
        let f = formula_from(seed, n, 3, m);
        let out = f.substitute(1, value).unwrap();
        let sols: Vec<Assignment> = brute_solutions(&f);
        match out {
            SimplifyOutcome::Unsatisfiable { .. } => {
                prop_assert!(sols.iter().all(|a| a.get(1) != Some(value)));
            }
            SimplifyOutcome::Reduced(g) | SimplifyOutcome::Satisfied(g) => {
                prop_assert!(g.num_clauses() <= f.num_clauses());
                prop_assert!(g.max_clause_len() <= f.max_clause_len());
                let vars = g.free_vars();
                for bits in 0..1u64 << vars.len() {
                    let mut tau = Assignment::unpack(&vars, bits, n);
                    let inner = g.is_satisfied_by(&tau);
                    tau.set(1, value);
                    prop_assert_eq!(inner, f.is_satisfied_by(&tau));
                }
            }
        }
    }

    #[test]
    fn neighborhood_is_local(seed in any::<u64>(), n in 2usize..12, m in 0usize..25, omega in 0usize..4) {
        let f = formula_from(seed, n, 3, m);
        let x = 1 + (seed % n as u64) as u32;
        let sub = f.neighborhood(x, omega);
        prop_assert!(sub.is_free(x));
        let fg = f.factor_graph();
        let ball = fg.ball(x, 2 * omega);
        if omega == 0 {
            prop_assert_eq!(sub.num_clauses(), 0);
        }
        for c in sub.clauses() {
            let d = c.vars().filter_map(|v| ball.var_dist[fg.local(v).unwrap()]).min();
            prop_assert!(d.is_some_and(|d| d + 1 <= 2 * omega - 1));
        }
    }

    #[test]
    fn count_matches_naive_scan(seed in any::<u64>(), n in 1usize..13, m in 0usize..40) {
        let f = formula_from(seed, n, 3, m);
        prop_assert_eq!(count_solutions(&f, &oc()).unwrap(), brute_count(&f));
    }

    #[test]
    fn marginals_match_enumeration(seed in any::<u64>(), n in 1usize..11, m in 0usize..30) {
        let f = formula_from(seed, n, 3, m);
        let Ok(mv) = true_marginals(&f, &oc()) else {
            prop_assert_eq!(brute_count(&f), 0);
            return Ok(());
        };
        let set = enumerate_solutions(&f, &oc()).unwrap();
        prop_assert_eq!(&mv, &marginals_from_set(&set).unwrap());
        for &v in &mv.vars {
            prop_assert_eq!(mv.exact(v).unwrap(), brute_marginal(&f, v));
        }
        for v in classify_forced(&f) {
            let (ones, total) = mv.exact(v).unwrap();
            prop_assert!(ones == 0 || ones == total);
        }
    }

    #[test]
    fn distance_profiles_sum_and_average(seed in any::<u64>(), n in 1usize..10, m in 0usize..20) {
        let f = formula_from(seed, n, 3, m);
        let set = enumerate_solutions(&f, &oc()).unwrap();
        if set.is_empty() {
            prop_assert_eq!(brute_count(&f), 0);
            return Ok(());
        }
        let mut total = 0u128;
        for sigma in set.iter() {
            let p = distance_profile(&set, &sigma).unwrap();
            prop_assert_eq!(p.iter().sum::<u128>(), set.count());
            total += p.iter().enumerate().map(|(d, &c)| d as u128 * c).sum::<u128>();
        }
        let sols: Vec<Assignment> = set.iter().collect();
        let pairwise: usize = sols.iter().flat_map(|a| sols.iter().map(move |b| a.hamming(b))).sum();
        prop_assert_eq!(total, pairwise as u128);
        let g = geometry(&set);
        let big_n = set.count() as f64;
        prop_assert!((g.average_distance - total as f64 / (big_n * big_n)).abs() < 1e-9);
    }

    #[test]
    fn bp_messages_stay_normalized(seed in any::<u64>(), n in 2usize..15, m in 0usize..40, sweeps in 0usize..6) {
        let f = formula_from(seed, n, 4, m);
        let mut st = MessageState::for_formula(&f);
        for _ in 0..sweeps {
            st.sweep();
            for mu in st.var_to_clause_all() {
                prop_assert!((mu[0] + mu[1] - 1.0).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(&mu[0]) && (0.0..=1.0).contains(&mu[1]));
            }
        }
        for &mu in &bp_marginals(&f, sweeps).marginals {
            prop_assert!((0.0..=1.0).contains(&mu));
        }
    }

    #[test]
    fn bp_marginal_depends_only_on_neighborhood(seed in any::<u64>(), n in 2usize..20, m in 0usize..50, omega in 0usize..4) {
        let f = formula_from(seed, n, 3, m);
        let global = bp_marginals(&f, omega);
        for (i, &x) in global.vars.iter().enumerate() {
            let (local, _) = bp_marginal_of(&f, x, omega);
            prop_assert_eq!(local.to_bits(), global.marginals[i].to_bits());
        }
    }

    #[test]
    fn bp_decimation_is_deterministic(seed in any::<u64>(), n in 2usize..30, m in 0usize..80) {
        let f = formula_from(seed, n, 3, m);
        let a = bp_decimation(&f, 2, &mut rng::stream(seed, 2));
        let b = bp_decimation(&f, 2, &mut rng::stream(seed, 2));
        prop_assert_eq!(&a, &b);
        if let Some(s) = a.assignment() {
            prop_assert!(f.is_satisfied_by(&s));
        }
    }

    #[test]
    fn entropy_is_symmetric(x in 0.0f64..=1.0) {
        let a = entropy_h(x).unwrap();
        let b = entropy_h(1.0 - x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn regime_regions_are_theta_intervals(k in 2usize..40, rho in 0.5f64..30.0) {
        let cfg = PhaseConfig::default();
        for regime in Regime::ALL {
            let hits: Vec<bool> = (1..=400)
                .map(|i| classify_regime(&PhasePoint::new(k, rho, i as f64 / 400.0).unwrap(), &cfg).has(regime))
                .collect();
            let changes = hits.windows(2).filter(|w| w[0] != w[1]).count();
            let inner = hits.windows(2).filter(|w| !w[0] && w[1]).count();
            prop_assert!(inner <= 1 && changes <= 2, "{:?} not an interval", regime);
        }
    }

    #[test]
    fn peeling_finds_the_maximum(seed in any::<u64>(), n in 3usize..13, ratio in 2usize..8, t in 0usize..4) {
        let k = 3;
        let (f, s) = planted_decimated(seed, n, k, ratio * n, t.min(n));
        let peeled = max_self_contained(&f, &s).unwrap();
        prop_assert_eq!(peeled.vars(), brute_self_contained(&f, &s));
        for (lit, [a, b]) in &peeled.certificate {
            prop_assert_ne!(a, b);
            prop_assert!(s.get(lit.var()) == Some(lit.is_positive()));
        }
    }

    #[test]
    fn structure_implications(seed in any::<u64>(), n in 4usize..13, ratio in 1usize..10, t in 0usize..6) {
        let (f, s) = planted_decimated(seed, n, 3, ratio * n, t.min(n));
        let table = support_table(&f, &s).unwrap();
        prop_assert!(table.total() <= f.num_clauses());
        let set = enumerate_solutions(&f, &oc()).unwrap();
        let report = analyze(&f, &s, Some(&set), 3).unwrap();
        for v in &report.variables {
            if v.one_loose {
                prop_assert!(v.two_loose);
            }
            if v.two_loose && v.tame {
                prop_assert_eq!(v.loose, Some(true), "x{} is 2-loose and tame", v.var);
            }
            if v.forced {
                prop_assert_eq!(v.d_min, Some(None));
                prop_assert_eq!(v.loose, Some(false));
            }
        }
    }

    #[test]
    fn generators_are_deterministic_and_planted_pairs_satisfy(seed in any::<u64>(), n in 5usize..40, k in 2usize..5, ratio in 0usize..6, model in 0usize..3) {
        let kind = [ModelKind::Uniform, ModelKind::PlantedFixed, ModelKind::PlantedBinomial][model];
        let m = (ratio * n).min(decilab_core::generators::uniform_universe(n, k).unwrap() as usize);
        let cfg = GenConfig::new(kind, n, k, m, seed);
        let a = generate(&cfg).unwrap();
        prop_assert_eq!(&a, &generate(&cfg).unwrap());
        prop_assert!(a.0.clauses().iter().all(|c| c.len() == k && !c.has_repeated_var()));
        if let Some(s) = &a.1 {
            prop_assert!(a.0.is_satisfied_by(s));
        }
    }

    #[test]
    fn dimacs_round_trip(seed in any::<u64>(), n in 3usize..30, t in 0usize..3) {
        let (f, s) = planted_decimated(seed, n, 3, 2 * n, t);
        let text = emit_dimacs_with_sigma(&f, &s);
        let (g, s2) = parse_dimacs_with_sigma(&text).unwrap();
        prop_assert_eq!(g, f);
        prop_assert_eq!(s2, Some(s));
    }
}

#[test]
fn entropy_and_chernoff_endpoints() {
    use decilab_core::phase::chernoff_phi;
    assert_eq!(entropy_h(0.0).unwrap(), 0.0);
    assert_eq!(entropy_h(1.0).unwrap(), 0.0);
    assert_eq!(chernoff_phi(0.0).unwrap(), 0.0);
    assert_eq!(chernoff_phi(-1.0).unwrap(), 1.0);
}

#[test]
fn psi_matches_finite_first_moment() {
    for &n in &[10_000usize, 100_000] {
        for &(k, rho, theta) in &[(5usize, 2.0f64, 1.0f64), (8, 3.0, 0.6), (20, 5.0, 0.9)] {
            let r = decilab_core::phase::r_from_rho(k, rho);
            let m = (r * n as f64).round() as usize;
            for i in 1..20 {
                let alpha = i as f64 / 20.0;
                let b = first_moment_bound(alpha, theta, k, n, m).unwrap();
                let tol = 2.0 * (n as f64).ln() / n as f64;
                assert!((b.log_bound / n as f64 - b.psi).abs() <= tol, "n={n} k={k} alpha={alpha}");
                assert!((b.log_exact / n as f64 - b.psi).abs() <= tol, "n={n} k={k} alpha={alpha}");
                let direct = psi(b.j as f64 / (theta * n as f64).round(), theta, k, m as f64 / n as f64).unwrap();
                assert!((direct - b.psi).abs() <= 1e-12);
            }
        }
    }
}

/// Each proper clause should appear with frequency `m / (2^k C(n,k))`.
#[test]
fn uniform_clause_frequencies() {
    let (n, k, m) = (5usize, 2usize, 6usize);
    let universe = decilab_core::generators::uniform_universe(n, k).unwrap() as usize;
    let runs = 20_000u64;
    let mut hits = vec![0u64; universe];
    for seed in 0..runs {
        let f = decilab_core::generators::gen_uniform(&GenConfig::new(ModelKind::Uniform, n, k, m, seed)).unwrap();
        for c in f.clauses() {
            let vars: Vec<u32> = {
                let mut v: Vec<u32> = c.lits().iter().map(|l| l.var()).collect();
                v.sort_unstable();
                v
            };
            let combo = decilab_core::generators::rank_combination(n, &vars) as usize;
            let mut signs = 0;
            for (i, &v) in vars.iter().enumerate() {
                let lit = c.lits().iter().find(|l| l.var() == v).unwrap();
                if !lit.is_positive() {
                    signs |= 1 << i;
                }
            }
            let idx = (combo << k) | signs;
            hits[idx] += 1;
        }
    }
    let p = m as f64 / universe as f64;
    let se = (runs as f64 * p * (1.0 - p)).sqrt();
    let mut outside = 0;
    for &h in &hits {
        if (h as f64 - runs as f64 * p).abs() > 3.0 * se {
            outside += 1;
        }
    }
    // 3σ leaves about 0.3% of cells outside by chance; allow one of the 40.
    assert!(outside <= 1, "{outside} cells outside 3 standard errors");
}

#[test]
fn forced_variables_have_extreme_marginals_on_random_instances() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(2..10);
        let m = rng.random_range(1..20);
        let f = random_formula(&mut rng, n, 3, m);
        if let Ok(mv) = true_marginals(&f, &oc()) {
            for v in classify_forced(&f) {
                let m = mv.get(v).unwrap();
                assert!(m == 0.0 || m == 1.0);
            }
        }
    }
}
