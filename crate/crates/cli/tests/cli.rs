use std::fs::{self, File};
use std::path::Path;
use std::process::{Command, Output};

use grouse::io;

fn grouse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grouse"))
        .args(args)
        .output()
        .expect("spawn grouse")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn field(line: &str, key: &str) -> f64 {
    let prefix = format!("{key}=");
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in {line:?}"))
        .parse()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn partial_run_writes_readable_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let res = grouse(&[
        "partial", "--n", "100", "--d", "3", "--q", "40", "--iters", "200", "--seed", "7", "--out",
        path_str(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let rows = io::read_trajectory(File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 201);
    assert_eq!(rows[0].t, 0);
    assert!(rows[0].gate_passed.is_none());
    let first = rows[0].epsilon.unwrap();
    let last = rows.last().unwrap().epsilon.unwrap();
    assert!(last < first * 1e-3, "ε {first} -> {last}");
    assert!((field(&stdout(&res), "final_epsilon") - last).abs() <= 1e-12 * first);
}

#[test]
fn full_run_with_one_dimension_converges_in_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("full.csv");
    let res = grouse(&[
        "full", "--n", "50", "--d", "1", "--iters", "1", "--seed", "3", "--out", path_str(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(field(&stdout(&res), "final_epsilon") <= 1e-20);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let res = grouse(&[
            "partial", "--n", "80", "--d", "4", "--q", "30", "--iters", "50", "--seed", "11",
            "--out", path_str(p),
        ]);
        assert!(res.status.success(), "{}", stderr(&res));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn spec_round_trip_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("run.toml");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let res = grouse(&[
        "partial", "--n", "60", "--d", "2", "--q", "20", "--iters", "30", "--seed", "5",
        "--spec-out", path_str(&spec), "--out", path_str(&a),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let res = grouse(&["partial", "--spec", path_str(&spec), "--out", path_str(&b)]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn q_below_d_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let res = grouse(&[
        "partial", "--n", "100", "--d", "5", "--q", "3", "--iters", "10", "--seed", "1", "--out",
        path_str(&dir.path().join("x.csv")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("q must be ≥ d"), "{}", stderr(&res));
}

#[test]
fn missing_flag_is_a_usage_error() {
    let res = grouse(&["partial", "--n", "100", "--d", "5", "--out", "x.csv"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("traj.csv");
    let res = grouse(&[
        "full", "--n", "20", "--d", "2", "--iters", "5", "--seed", "1", "--out", path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(1), "{}", stderr(&res));
    assert!(stderr(&res).starts_with("error["));
}

#[test]
fn expectation_at_zero_error_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp.csv");
    let res = grouse(&[
        "validate-expectation", "--n", "40", "--d", "3", "--epsilon", "0", "--trials", "200",
        "--seed", "2", "--out", path_str(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(field(&stdout(&res), "mean"), 0.0);
}

#[test]
fn sweep_writes_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let res = grouse(&[
        "sweep", "--n", "60", "--d", "2,4", "--q", "3,20,40", "--trials", "2", "--iters", "40",
        "--seed", "9", "--out", path_str(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let rows = io::read_sweep(File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    let infeasible = rows.iter().find(|r| r.d == 4 && r.q == 3).unwrap();
    assert_eq!(infeasible.trials, 0);
    assert!(infeasible.mean_x.is_none());
    for d in [2, 4] {
        let xs: Vec<f64> = rows
            .iter()
            .filter(|r| r.d == d && r.q >= d)
            .map(|r| {
                assert_eq!(r.trials, 2);
                r.mean_x.unwrap()
            })
            .collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "d={d}: {xs:?}");
    }
}

#[test]
fn validation_reports_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let conc = dir.path().join("conc.csv");
    let resid = dir.path().join("resid.csv");
    let res = grouse(&[
        "validate-concentration", "--n", "200", "--d", "2", "--trials", "50", "--seed", "4",
        "--out", path_str(&conc),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(io::read_concentration(File::open(&conc).unwrap()).unwrap().len(), 50);
    let res = grouse(&[
        "validate-residual", "--n", "200", "--d", "2", "--epsilon", "0.01", "--omega-size", "100",
        "--trials", "40", "--seed", "4", "--out", path_str(&resid),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(io::read_residual(File::open(&resid).unwrap()).unwrap().len(), 40);
}
