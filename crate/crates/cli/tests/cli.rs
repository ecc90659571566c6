use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rksens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rksens")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn header(csv: &str) -> String {
    format!("{}\n", csv.lines().next().unwrap())
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn cell(rows: &[Vec<String>], r: usize, c: usize) -> f64 {
    rows[r][c].parse().unwrap()
}

fn keys(v: &Value) -> String {
    v.as_object().unwrap().keys().map(|k| format!("{k}\n")).collect()
}

#[test]
fn simulate_linear_midpoint() {
    let csv = stdout(&rksens(&["simulate", "--model", "linear", "--family", "gl", "--s", "1", "--T", "0.1"]));
    assert_eq!(header(&csv), golden("simulate_linear.header"));
    let r = rows(&csv);
    assert_eq!(r.len(), 2);
    assert!((cell(&r, 1, 1) - 0.9047619048).abs() < 1e-10);
    // the CSV round-trips the library value exactly
    let cfg = rksens::SimConfig::new(rksens::make_tableau(rksens::SchemeFamily::GaussLegendre, 1).unwrap(), 0.1, 1);
    let mut integ = rksens::Integrator::new(rksens::model::make_linear_test(-1.0), cfg).unwrap();
    assert_eq!(cell(&r, 1, 1), integ.simulate(&[1.0], &[0.0]).unwrap().x_next()[0]);
}

#[test]
fn simulate_chain_rest_state_is_fixed() {
    let csv = stdout(&rksens(&["simulate", "--model", "chain-3", "--T", "1", "--n-steps", "5"]));
    let r = rows(&csv);
    assert_eq!(r.len(), 6);
    for c in 1..r[0].len() {
        assert!((cell(&r, 5, c) - cell(&r, 0, c)).abs() < 1e-10);
    }
}

#[test]
fn simulate_zero_horizon_and_dae() {
    let csv = stdout(&rksens(&["simulate", "--model", "linear", "--T", "0", "--x0", "0.3"]));
    let r = rows(&csv);
    assert_eq!(r.len(), 1);
    assert_eq!(cell(&r, 0, 1), 0.3);
    let csv = stdout(&rksens(&["simulate", "--model", "dae-test", "--T", "0.2", "--n-steps", "2", "--x0", "0.5", "--u0", "-0.2"]));
    assert_eq!(header(&csv), golden("simulate_dae.header"));
    let r = rows(&csv);
    // z = x^2 on the initial row
    assert_eq!(cell(&r, 0, 2), 0.25);
}

#[test]
fn sens_check_reports() {
    let out = stdout(&rksens(&["sens-check", "--model", "chain-3", "--s", "2", "--points", "4"]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(keys(&v), golden("sens_check.keys"));
    assert!(v["adj_consistency"].as_f64().unwrap() < 1e-12);
    assert_eq!(v["pass"], Value::Bool(true));

    let v: Value = serde_json::from_str(&stdout(&rksens(&["sens-check", "--model", "linear", "--points", "3"]))).unwrap();
    assert_eq!(v["hess_fd_err"].as_f64(), Some(0.0));

    let v: Value = serde_json::from_str(&stdout(&rksens(&["sens-check", "--model", "dae-test", "--points", "5"]))).unwrap();
    assert!(v["checks"].as_object().unwrap().values().all(|c| c == &Value::Bool(true)));
}

fn orders(args: &[&str]) -> Vec<f64> {
    let csv = stdout(&rksens(args));
    assert_eq!(header(&csv), golden("order_study.header"));
    let r = rows(&csv);
    assert_eq!(r.len(), 4);
    assert_eq!(r[0][2], "");
    (1..4).map(|i| cell(&r, i, 2)).collect()
}

#[test]
fn order_study_estimates() {
    let chain = ["--model", "chain-3", "--T", "0.5", "--u0", "0.1,-0.1,0.1"];
    let gl1 = orders(&[&["order-study", "--family", "gl", "--s", "1", "--n-steps", "8"], &chain[..]].concat());
    assert!(gl1.iter().all(|p| (1.8..=2.2).contains(p)), "{gl1:?}");
    let radau = orders(&[&["order-study", "--family", "radau", "--s", "2", "--n-steps", "16"], &chain[..]].concat());
    assert!(radau.iter().all(|p| (2.8..=3.2).contains(p)), "{radau:?}");
    let rk4 = orders(&["order-study", "--model", "linear", "--family", "rk4", "--n-steps", "8", "--u0", "0.5"]);
    assert!(rk4.iter().all(|p| (3.8..=4.2).contains(p)), "{rk4:?}");
}

#[test]
fn solve_ocp_transcriptions_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut trajectories = Vec::new();
    for how in ["shooting", "collocation"] {
        let json = dir.path().join(format!("{how}.json"));
        let out = rksens(&["solve-ocp", "--model", "chain-3", "--N", "20", "--transcription", how, "--out", json.to_str().unwrap()]);
        assert!(out.status.success());
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(keys(&v), golden("solve_ocp.keys"));
        assert_eq!(keys(&v["timings"]), golden("solve_ocp_timings.keys"));
        assert_eq!(v["status"], "converged");
        assert!(v["iters"].as_u64().unwrap() <= 30);
        let n_vars = v["n_vars"].as_u64().unwrap();
        // (nx + nu + s * nx) per interval plus the final state
        let expected = if how == "shooting" { 20 * 12 + 9 } else { 20 * (12 + 18) + 9 };
        assert_eq!(n_vars, expected);
        let csv = std::fs::read_to_string(dir.path().join(format!("{how}_trajectory.csv"))).unwrap();
        trajectories.push(rows(&csv));
    }
    let (a, b) = (&trajectories[0], &trajectories[1]);
    assert_eq!(a.len(), 21);
    for r in 0..a.len() {
        for c in 2..a[r].len() {
            if a[r][c].is_empty() {
                assert!(b[r][c].is_empty());
                continue;
            }
            assert!((cell(a, r, c) - cell(b, r, c)).abs() < 1e-6);
        }
    }
}

#[test]
fn solve_ocp_linear_matches_riccati() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let out = rksens(&[
        "solve-ocp", "--model", "linear", "--lambda", "-1", "--N", "5", "--T", "0.5", "--family", "gl", "--s", "1",
        "--x0", "1", "--trajectory", traj.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["iters"], 1);
    let csv = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(header(&csv), golden("solve_ocp_linear_trajectory.header"));
    let r = rows(&csv);

    // midpoint one-step map and unit-weight Riccati recursion
    let h: f64 = 0.1;
    let a = (1.0 - h / 2.0) / (1.0 + h / 2.0);
    let b = h / (1.0 + h / 2.0);
    let mut p = 1.0;
    let mut gains = [0.0; 5];
    for k in (0..5).rev() {
        gains[k] = a * b * p / (1.0 + b * b * p);
        p = 1.0 + a * a * p - a * b * p * gains[k];
    }
    let mut x = 1.0;
    for (k, g) in gains.iter().enumerate() {
        assert!((cell(&r, k, 2) - x).abs() < 1e-8);
        let u = -g * x;
        assert!((cell(&r, k, 3) - u).abs() < 1e-8);
        x = a * x + b * u;
    }
    assert!((cell(&r, 5, 2) - x).abs() < 1e-8);
}

#[test]
fn bench_rows_and_determinism() {
    let run = |reps: &str| {
        let csv = stdout(&rksens(&["bench", "--masses", "3,4,5", "--configs", "gl2x1,gl4x4", "--N", "10", "--reps", reps]));
        assert_eq!(header(&csv), golden("bench.header"));
        rows(&csv)
    };
    let r = run("3");
    assert_eq!(r.len(), 6);
    for cfg in r.chunks(3) {
        assert!(cfg.iter().all(|row| row[6] == "converged"));
        let t: Vec<f64> = cfg.iter().map(|row| row[3].parse().unwrap()).collect();
        assert!(t.windows(2).all(|w| w[1] >= w[0]), "{t:?}");
    }
    let once = run("1");
    let five = run("5");
    let iters = |r: &[Vec<String>]| r.iter().map(|row| row[4].clone()).collect::<Vec<_>>();
    assert_eq!(iters(&once), iters(&five));
    assert_eq!(iters(&once), iters(&r));
}

#[test]
fn config_precedence_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"model": "linear", "T": 0.2, "n_steps": 2}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let r = rows(&stdout(&rksens(&["simulate", "--config", c])));
    assert_eq!(r.len(), 3);
    assert!((cell(&r, 2, 0) - 0.2).abs() < 1e-15);
    let r = rows(&stdout(&rksens(&["simulate", "--config", c, "--T", "0.1"])));
    assert!((cell(&r, 2, 0) - 0.1).abs() < 1e-15);

    std::fs::write(&cfg, r#"{"model": "linear", "bogus": 1}"#).unwrap();
    assert_eq!(rksens(&["simulate", "--config", c]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"masses": []}"#).unwrap();
    assert_eq!(rksens(&["bench", "--config", c]).status.code(), Some(2));
    assert_eq!(rksens(&["simulate", "--model", "nonexistent"]).status.code(), Some(2));
    assert_eq!(rksens(&["simulate", "--family", "bogus"]).status.code(), Some(2));
    assert_eq!(rksens(&["simulate", "--model", "linear", "--x0", "1,2"]).status.code(), Some(2));
    assert_eq!(rksens(&["solve-ocp", "--transcription", "collocation", "--family", "rk4"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_one() {
    let out = rksens(&["solve-ocp", "--model", "chain-3", "--N", "10", "--sqp-iters", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_iters"));
}

#[test]
fn commands_are_deterministic() {
    let args = ["simulate", "--model", "chain-4", "--family", "radau", "--s", "3", "--T", "0.3", "--n-steps", "3", "--u0", "0.1,0.2,0.3"];
    assert_eq!(stdout(&rksens(&args)), stdout(&rksens(&args)));
}

#[test]
fn help_documents_columns() {
    for (cmd, text) in [("simulate", "t,x0"), ("order-study", "h,error,estimated_order"), ("bench", "time_per_iter_s")] {
        let help = stdout(&rksens(&[cmd, "--help"]));
        assert!(help.contains(text), "{cmd}");
    }
}
