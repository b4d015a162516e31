use decilab_core::generators::{decimate_under, generate_with, rng};
use decilab_core::harness::{
    draw_instance, from_jsonl, run_bp_comparison, run_decimation_experiment, run_spec, to_csv, to_jsonl,
    ExperimentRecord, ExperimentSpec, Mode,
};
use decilab_core::oracle::{enumerate_solutions, OracleConfig};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn spec(json: &str) -> ExperimentSpec {
    ExperimentSpec::from_json(json).unwrap()
}

/// Randomized probability integral transform of `σ`'s rank in `S(Φ)`;
/// uniform on `[0,1)` iff `σ` is uniform on `S(Φ)`.
fn pit_p_value(mode: &str, reps: usize) -> f64 {
    let s = spec(&format!(
        r#"{{"model": {{"kind": "uniform", "n": 7, "k": 3, "m": 20}}, "mode": "{mode}",
            "t_schedule": [0.5], "omega": 1, "repetitions": {reps}, "seed": 99, "analyses": []}}"#
    ));
    let bins = 20;
    let mut hist = vec![0usize; bins];
    let mut aux = rng::stream(7, 77);
    for rep in 0..reps {
        let inst = draw_instance(&s, rep).unwrap();
        let set = enumerate_solutions(&inst.formula, &OracleConfig::default()).unwrap();
        let mask = set.pack(&inst.sigma).unwrap();
        let rank = set.masks().binary_search(&mask).unwrap();
        let u = (rank as f64 + aux.random::<f64>()) / set.len() as f64;
        hist[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = reps as f64 / bins as f64;
    let stat: f64 = hist.iter().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn u_mode_and_decimation_mode_sample_uniform_solutions() {
    let pu = pit_p_value("U", 6000);
    let pd = pit_p_value("D", 6000);
    assert!(pu > 1e-3, "U-mode p = {pu}");
    assert!(pd > 1e-3, "D-mode p = {pd}");
}

#[test]
fn u_and_d_modes_share_formulas() {
    let u = spec(
        r#"{"model": {"kind": "uniform", "n": 10, "k": 3, "m": 35}, "mode": "U",
            "t_schedule": [0.3], "omega": 1, "repetitions": 20, "seed": 5, "analyses": []}"#,
    );
    let mut d = u.clone();
    d.mode = Mode::D;
    for rep in 0..20 {
        let a = draw_instance(&u, rep).unwrap();
        let b = draw_instance(&d, rep).unwrap();
        assert_eq!(a.formula, b.formula);
        assert_eq!(a.attempts, b.attempts);
        assert!(a.formula.is_satisfied_by(&a.sigma) && b.formula.is_satisfied_by(&b.sigma));
    }
}

#[test]
fn records_are_tagged_with_model_and_mode() {
    let p = spec(
        r#"{"model": {"kind": "planted", "n": 10, "k": 3, "rho": 1.0}, "mode": "P",
            "t_schedule": [0.0, 0.5], "omega": 1, "repetitions": 2, "seed": 3, "analyses": ["count"]}"#,
    );
    let mut u = p.clone();
    u.mode = Mode::U;
    for (s, model, mode) in [(&p, "planted-fixed", "P"), (&u, "planted-fixed", "U")] {
        let recs = run_decimation_experiment(s).unwrap();
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert_eq!((r.model.as_str(), r.mode.as_str()), (model, mode));
            assert_eq!(r.config_hash, s.config_hash());
            assert_eq!(r.m, 27);
            assert!(r.solution_count.unwrap() >= 1);
        }
    }
}

#[test]
fn bp_comparison_is_exact_on_forests() {
    let s = spec(
        r#"{"model": {"kind": "planted-fixed", "n": 20, "k": 3, "m": 5}, "mode": "P",
            "t_schedule": [0.0, 0.25], "omega": 20, "repetitions": 40, "seed": 17, "analyses": []}"#,
    );
    let recs = run_bp_comparison(&s).unwrap();
    let cfg = s.gen_config(s.seed).unwrap();
    let mut forests = 0;
    for r in &recs {
        let (f, sigma) = generate_with(&cfg, &mut rng::substream(s.seed, r.repetition as u64, rng::PURPOSE_GENERATE)).unwrap();
        let ft = decimate_under(&f, &sigma.unwrap(), r.t).unwrap();
        assert_eq!(r.free_vars, ft.num_free());
        if ft.is_forest() {
            forests += 1;
            assert!(r.max_discrepancy.unwrap() <= 1e-9, "rep {} t {}", r.repetition, r.t);
        }
    }
    assert!(forests >= 40, "only {forests} forest instances");
}

#[test]
fn bp_gets_forced_variables_right() {
    let s = spec(
        r#"{"model": {"kind": "planted-fixed", "n": 24, "k": 3, "rho": 2.5}, "mode": "P",
            "t_schedule": [0.5, 0.75, 0.9], "omega": 2, "repetitions": 10, "seed": 4, "analyses": []}"#,
    );
    for r in run_bp_comparison(&s).unwrap() {
        assert!(r.error.is_none());
        assert_eq!(r.forced_mismatch, Some(0));
        assert!((0.0..=1.0).contains(&r.mismatch_fraction.unwrap()));
    }
}

#[test]
fn output_files_are_byte_identical_on_rerun() {
    let dir = std::env::temp_dir().join(format!("decilab-harness-{}", std::process::id()));
    let mut outputs = Vec::new();
    for run in 0..2 {
        let mut s = spec(
            r#"{"model": {"kind": "uniform", "n": 12, "k": 3, "m": 40}, "mode": "U",
                "t_schedule": [0.0, 0.25, 0.5, 0.75], "omega": 2, "repetitions": 6, "seed": 21,
                "analyses": ["count", "marginals", "bp", "bp-decimation", "structure", "geometry", "regime"]}"#,
        );
        let d = dir.join(run.to_string());
        s.outputs.jsonl = Some(d.join("r.jsonl"));
        s.outputs.csv = Some(d.join("r.csv"));
        s.outputs.bp_jsonl = Some(d.join("bp.jsonl"));
        s.outputs.bp_csv = Some(d.join("bp.csv"));
        let summary = run_spec(&s).unwrap();
        assert_eq!(summary.records, 24);
        assert_eq!(summary.bp_records, 24);
        let files: Vec<Vec<u8>> = summary.files.iter().map(|p| std::fs::read(p).unwrap()).collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0][0].clone()).unwrap();
    let recs: Vec<ExperimentRecord> = from_jsonl(&text).unwrap();
    assert_eq!(to_jsonl(&recs).unwrap(), text);
    assert_eq!(to_csv(&recs).unwrap().as_bytes(), &outputs[0][1][..]);
    for r in &recs {
        for f in [r.forced_fraction, r.loose_fraction, r.rigid_fraction, r.self_contained_fraction, r.tame_fraction] {
            assert!(f.is_some_and(|f| (0.0..=1.0).contains(&f)));
        }
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn csv_header_is_fixed() {
    let s = spec(
        r#"{"model": {"kind": "planted-fixed", "n": 8, "k": 3, "m": 10}, "mode": "P",
            "t_schedule": [0.5], "omega": 1, "repetitions": 1, "seed": 1, "analyses": []}"#,
    );
    let csv = to_csv(&run_decimation_experiment(&s).unwrap()).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("schema_version,config_hash,seed,repetition,model,mode,n,k,m,rho,t,theta,"));
    assert!(header.ends_with(",condensation_radius,condensed,geometry_exact,regime"));
    assert_eq!(header.split(',').count(), 45);
}

#[test]
fn failures_are_recorded_not_raised() {
    // Dense uniform instances are unsatisfiable; U-mode gives up and writes the error.
    let s = spec(
        r#"{"model": {"kind": "uniform", "n": 5, "k": 2, "m": 40}, "mode": "U",
            "t_schedule": [0.0], "omega": 1, "repetitions": 2, "seed": 1, "analyses": ["count"]}"#,
    );
    let recs = run_decimation_experiment(&s).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.error.is_some() && r.solution_count.is_none()));
}
