use std::path::Path;
use std::process::{Command, Output};

fn decilab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decilab")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = decilab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_then_oracle_counts_the_planted_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("f.cnf");
    ok(&["gen", "--model", "planted", "--n", "14", "--k", "3", "--rho", "1.5", "--seed", "8", "--out", p(&cnf)]);
    let text = std::fs::read_to_string(&cnf).unwrap();
    let sigma = text.lines().find_map(|l| l.strip_prefix("c sigma ")).unwrap().to_string();
    let v = json(&["oracle", "--in", p(&cnf), "--marginals", "--geometry", "--profile-from", &sigma]);
    let count = v["count"].as_u64().unwrap();
    assert!(count >= 1);
    assert_eq!(v["profile"][0].as_u64(), Some(1));
    let total: u64 = v["profile"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).sum();
    assert_eq!(total, count);
    assert_eq!(v["marginals"].as_array().unwrap().len(), 14);
}

#[test]
fn gen_is_deterministic_and_decimates() {
    let a = ok(&["gen", "--model", "uniform", "--n", "20", "--k", "3", "--m", "30", "--seed", "4"]);
    let b = ok(&["gen", "--model", "uniform", "--n", "20", "--k", "3", "--m", "30", "--seed", "4"]);
    assert_eq!(a, b);
    let d = ok(&["gen", "--model", "planted-binomial", "--n", "20", "--k", "3", "--rho", "1", "--decimate", "5"]);
    assert!(d.starts_with("c decimated 5\nc sigma "));
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("d.cnf");
    std::fs::write(&cnf, &d).unwrap();
    assert_eq!(json(&["oracle", "--in", p(&cnf)])["free_vars"].as_u64(), Some(15));
}

#[test]
fn bp_is_exact_on_a_tree() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("t.cnf");
    std::fs::write(&cnf, "p cnf 4 2\n1 2 0\n-2 3 4 0\n").unwrap();
    let v = json(&["bp", "--in", p(&cnf), "--omega", "6", "--compare", "--decimate", "--seed", "3"]);
    assert!(v["comparison"]["max_discrepancy"].as_f64().unwrap() < 1e-12);
    assert_eq!(v["decimation"]["outcome"]["status"], "success");
}

#[test]
fn analyze_reads_sigma_and_reports_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("a.cnf");
    ok(&["gen", "--model", "planted", "--n", "12", "--k", "3", "--rho", "2", "--seed", "2", "--out", p(&cnf)]);
    let out = decilab(&["analyze", "--in", p(&cnf), "--oracle"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ceil(ln n) = 3"));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["thresholds"]["rigid_omega"].as_u64(), Some(4));
    assert_eq!(v["structure"]["variables"].as_array().unwrap().len(), 12);

    let plain = dir.path().join("b.cnf");
    std::fs::write(&plain, "p cnf 2 1\n1 2 0\n").unwrap();
    assert_eq!(decilab(&["analyze", "--in", p(&plain)]).status.code(), Some(2));
    assert!(decilab(&["analyze", "--in", p(&plain), "--sigma", "10"]).status.success());
    assert_eq!(decilab(&["analyze", "--in", p(&plain), "--sigma", "00"]).status.code(), Some(2));
}

#[test]
fn phase_grid_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("phase.csv");
    ok(&["phase", "--k", "20", "--grid", "rho=4:6:1,theta=0.1:0.5:0.2", "--csv", p(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 9);
    assert!(lines[0].starts_with("k,rho,theta,k_theta,regime,"));
    assert!(lines[1].starts_with("20,4.0,0.1,2.0,"));
    let v = json(&["phase", "--k", "20", "--rho", "5", "--theta", "0.3", "--conditions"]);
    assert!(v["verdict"]["labels"].is_array());
    assert!(v["conditions"]["shatters"].is_boolean());
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(run.to_string());
        let spec = dir.path().join(format!("spec{run}.json"));
        std::fs::write(
            &spec,
            format!(
                r#"{{"model": {{"kind": "planted-fixed", "n": 14, "k": 3, "rho": 1.5}}, "mode": "P",
                    "t_schedule": [0.0, 0.5], "omega": 2, "repetitions": 3, "seed": 11,
                    "analyses": ["count", "bp", "structure"],
                    "outputs": {{"jsonl": "{0}/r.jsonl", "csv": "{0}/r.csv", "bp_jsonl": "{0}/bp.jsonl"}}}}"#,
                out.display()
            ),
        )
        .unwrap();
        ok(&["experiment", "--spec", p(&spec)]);
        files.push(
            ["r.jsonl", "r.csv", "bp.jsonl"].map(|f| std::fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(String::from_utf8_lossy(&files[0][0]).lines().count(), 6);
}

#[test]
fn experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.json");
    std::fs::write(
        &spec,
        r#"{"model": {"kind": "uniform", "n": 10, "k": 3, "m": 20}, "mode": "U",
            "t_schedule": [0.5], "omega": 1, "repetitions": 2, "seed": 1, "analyses": []}"#,
    )
    .unwrap();
    let stdout = ok(&["experiment", "--spec", p(&spec)]);
    assert_eq!(stdout.lines().count(), 2);

    std::fs::write(
        &spec,
        r#"{"model": {"kind": "uniform", "n": 10, "k": 3, "m": 20}, "mode": "P",
            "t_schedule": [0.5], "omega": 1, "repetitions": 2, "seed": 1, "analyses": []}"#,
    )
    .unwrap();
    assert_eq!(decilab(&["experiment", "--spec", p(&spec)]).status.code(), Some(2));

    std::fs::write(
        &spec,
        r#"{"model": {"kind": "uniform", "n": 200, "k": 3, "m": 100}, "mode": "U",
            "t_schedule": [0.5], "omega": 1, "repetitions": 2, "seed": 1, "analyses": []}"#,
    )
    .unwrap();
    assert_eq!(decilab(&["experiment", "--spec", p(&spec)]).status.code(), Some(3));

    std::fs::write(&spec, "{not json").unwrap();
    assert_eq!(decilab(&["experiment", "--spec", p(&spec)]).status.code(), Some(2));
}

#[test]
fn oracle_limit_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("big.cnf");
    ok(&["gen", "--model", "uniform", "--n", "40", "--k", "3", "--m", "10", "--out", p(&cnf)]);
    assert_eq!(decilab(&["oracle", "--in", p(&cnf)]).status.code(), Some(3));
    assert_eq!(decilab(&["oracle", "--in", "/nonexistent.cnf"]).status.code(), Some(2));
    assert_eq!(decilab(&["gen", "--model", "uniform", "--n", "2", "--k", "3", "--m", "1"]).status.code(), Some(2));
}
