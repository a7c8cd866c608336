use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_slowvar"));
    c.env_remove("SLOWVAR_WORKERS");
    c
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn fig1a_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["experiment", "fig1a", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("fig1a.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("K,error_qssa"));
    assert_eq!(lines.count(), 17);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig1a.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 1);
    assert!(meta["rng"].as_str().unwrap().contains("ChaCha8"));
    assert!(meta.get("commit").is_some());
    let slope = meta["summary"]["slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn single_k_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["experiment", "fig1a", "--sweep", "10", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("fig1a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn validate_prints_report() {
    let out = run(&["validate", workspace_file("networks/bistable").to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("reaction R5: fast"));
    assert!(stdout.contains("status: valid"));
}

#[test]
fn invalid_network_fails_with_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(workspace_file("networks/linear.toml")).unwrap();
    // R2 (degradation of X2) cannot be fast under S = X1 + X2.
    let path = dir.path().join("bad.toml");
    fs::write(&path, text.replace("fast = [3, 4]", "fast = [2, 3, 4]")).unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("status: invalid"));
    assert_eq!(error_line(&out)["error"]["kind"], "invalid_network");
}

#[test]
fn missing_file_is_a_parse_error() {
    let out = run(&["validate", "/nonexistent/net.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"]["kind"], "parse");
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["frobnicate"][..],
        &["experiment", "fig1a", "--bogus"],
        &["estimate", "--method", "cma", "--grid", "300:101", "--budget", "10"],
        &["experiment", "fig9"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_line(&out)["error"]["kind"], "usage", "{args:?}");
    }
    // Detected after parsing: empty sweep from a config file.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "experiment = \"fig1a\"\nsweep = []\n").unwrap();
    let out = run(&["experiment", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"]["kind"], "invalid_argument");
}

fn estimate(workers: &str, out: &Path) {
    let o = run(&[
        "estimate", "--method", "cma", "--grid", "101:300", "--budget", "10000", "--seed", "7", "--workers", workers,
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn estimate_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    estimate("4", &a);
    estimate("4", &b);
    estimate("1", &c);
    let a = fs::read(a).unwrap();
    assert_eq!(a, fs::read(b).unwrap());
    assert_eq!(a, fs::read(c).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 201);
    assert!(text.lines().nth(1).unwrap().starts_with("101,"));
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "estimate".to_string(),
            "--method".into(),
            "nma".into(),
            "--grid".into(),
            "101:140".into(),
            "--budget".into(),
            "1000".into(),
            "--out".into(),
            p.to_str().unwrap().into(),
        ]
    };
    assert!(bin().args(args(&a)).env("SLOWVAR_WORKERS", "3").status().unwrap().success());
    assert!(bin().args(args(&b)).env("SLOWVAR_WORKERS", "1").status().unwrap().success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    let out = bin().args(args(&dir.path().join("c.csv"))).env("SLOWVAR_WORKERS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn qssma_table_round_trips_through_solve_fpe() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    let pmf = dir.path().join("pmf.csv");
    let density = dir.path().join("p.csv");
    assert!(run(&["estimate", "--method", "qssma", "--out", table.to_str().unwrap()]).status.success());
    let out = run(&[
        "solve-fpe",
        table.to_str().unwrap(),
        "--out",
        pmf.to_str().unwrap(),
        "--density",
        density.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(pmf).unwrap();
    assert_eq!(text.lines().next(), Some("n,P"));
    let total: f64 = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
    assert!(fs::read_to_string(density).unwrap().starts_with("s,p\n"));
}

#[test]
fn solve_fpe_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    fs::write(&table, "s,V,D\n1,2\n").unwrap();
    let out = run(&["solve-fpe", table.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"]["kind"], "parse");
}

#[test]
fn simulate_counts_are_monotone() {
    let out = run(&["simulate", "--t-end", "0.5", "--mesh", "0.1", "--seed", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,X1,X2,R1,R2,R3,R4"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 6);
    for w in rows.windows(2) {
        assert!(w[1][3..].iter().zip(&w[0][3..]).all(|(b, a)| b >= a));
    }
}

#[test]
fn solve_cme_writes_marginal() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve-cme",
        workspace_file("networks/linear.toml").to_str().unwrap(),
        "--domain",
        "200,200",
        "--tol",
        "1e-10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let marginal = fs::read_to_string(dir.path().join("cme_marginal.csv")).unwrap();
    assert_eq!(marginal.lines().next(), Some("s,P"));
    let lattice = fs::read_to_string(dir.path().join("cme_lattice.csv")).unwrap();
    assert_eq!(lattice.lines().next(), Some("x1,x2,p"));
}
