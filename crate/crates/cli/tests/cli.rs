use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gnep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON summary on stdout")
}

fn records(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    let rows = reader.records().collect::<Result<Vec<_>, _>>().unwrap();
    (header, rows)
}

fn column(header: &csv::StringRecord, name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn solve_writes_one_row_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnep(&[
        "solve",
        "example_eq26",
        "--N",
        "30",
        "--x0",
        "1.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    assert!(s["solution"]["epsilon"].as_f64().unwrap() <= 1e-6);
    assert_eq!(s["solution"]["certified"], Value::Bool(true));
    let (header, rows) = records(&dir.path().join("solve.csv"));
    assert_eq!(rows.len(), 31);
    let x = column(&header, "x[0]");
    assert_eq!(rows[0][x].parse::<f64>().unwrap(), 1.0);
    // No inputs at the final stage.
    assert_eq!(&rows[30][column(&header, "u[1][0]")], "");
    assert!(dir.path().join("solve.json").exists());
}

#[test]
fn missing_game_file_is_a_config_error() {
    let out = gnep(&["solve", "--game", "/nonexistent/game.toml"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/game.toml"));
}

#[test]
fn unreachable_initial_state_is_infeasible() {
    let out = gnep(&["solve", "--N", "30", "--x0", "10"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn empty_horizon_list_is_rejected() {
    assert_eq!(code(&gnep(&["solve", "--N="])), 3);
    assert_eq!(code(&gnep(&["turnpike-sweep", "--N", "0"])), 3);
}

#[test]
fn sweep_covers_every_pair_and_stabilises() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnep(&[
        "turnpike-sweep",
        "--N",
        "10,20,40,60",
        "--x0",
        "-1,0,1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = records(&dir.path().join("turnpike_sweep.csv"));
    assert_eq!(rows.len(), 12);
    let (n_col, x_col, out_col) = (
        column(&header, "N"),
        column(&header, "x0"),
        column(&header, "outside_count"),
    );
    for x0 in ["-1.0", "0.0", "1.0"] {
        let counts: Vec<&str> = rows
            .iter()
            .filter(|r| &r[x_col] == x0 && r[n_col].parse::<usize>().unwrap() >= 40)
            .map(|r| r.get(out_col).unwrap())
            .collect();
        assert_eq!(counts.len(), 2);
        assert_eq!(counts[0], counts[1], "x0 = {x0}");
    }
    assert_eq!(summary(&out)["verdict"]["outside_count_stable"], Value::Bool(true));
    assert!(dir.path().join("turnpike_profiles.csv").exists());
}

#[test]
fn steady_state_penalty_removes_the_leaving_arc() {
    let out = gnep(&["penalty", "--N", "60", "--x0", "1", "--penalty", "lambda_s"]);
    assert_eq!(code(&out), 0);
    assert_eq!(summary(&out)["verdict"]["no-leaving-arc"], Value::Bool(true));
    let without = gnep(&["penalty", "--N", "60", "--x0", "1", "--penalty", "none"]);
    assert_eq!(summary(&without)["verdict"]["no-leaving-arc"], Value::Bool(false));
}

#[test]
fn terminal_constraint_lands_on_the_steady_state() {
    let out = gnep(&["penalty", "--N", "60", "--penalty", "terminal"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    assert!(s["verdict"]["final_deviation"].as_f64().unwrap() <= 1e-9);
    assert!(s["solution"]["epsilon"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn penalty_file_matches_the_steady_state_penalty() {
    let dir = tempfile::tempdir().unwrap();
    let steady = summary(&gnep(&["penalty", "--N", "40"]));
    let lambda = &steady["steady_state"]["lambda_s"];
    let path = dir.path().join("p.toml");
    fs::write(&path, format!("p = {lambda}\n")).unwrap();
    let mode = format!("file:{}", path.display());
    let from_file = summary(&gnep(&["penalty", "--N", "40", "--penalty", &mode]));
    assert_eq!(from_file["verdict"], steady["verdict"]);
}

#[test]
fn one_learning_step_records_two_entries() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnep(&[
        "learn",
        "--N",
        "60",
        "--imax",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary(&out)["history"].as_array().unwrap().len(), 2);
    let (header, rows) = records(&dir.path().join("learn.csv"));
    assert_eq!(rows.len(), 2);
    let dev = column(&header, "leaving_deviation");
    let first: f64 = rows[0][dev].parse().unwrap();
    let second: f64 = rows[1][dev].parse().unwrap();
    assert!(second <= 0.1 * first, "{first} -> {second}");
}

#[test]
fn learning_needs_an_even_horizon() {
    assert_eq!(code(&gnep(&["learn", "--N", "31"])), 3);
}

#[test]
fn dissipativity_reports_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnep(&["dissipativity", "--N", "20", "--out", dir.path().to_str().unwrap()]);
    let verdict = &summary(&out)["verdict"];
    for key in [
        "seeded_storage",
        "quadratic_fit",
        "available_storage",
        "optimal_operation",
    ] {
        assert!(!verdict[key].is_null(), "missing {key}");
    }
    assert!(verdict["telescoping_residual_max"].as_f64().unwrap() <= 1e-9);
    assert!(dir.path().join("dissipativity.csv").exists());
}

#[test]
fn sensitivity_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnep(&[
        "sensitivity",
        "--N",
        "20",
        "--x0",
        "0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(matches!(code(&out), 0 | 2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!summary(&out)["verdict"].is_null());
    let (_, rows) = records(&dir.path().join("sensitivity.csv"));
    assert!(!rows.is_empty());
}

#[test]
fn csv_output_is_byte_identical_across_runs() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = gnep(&["turnpike-sweep", "--N", "10,20", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&out), 0);
        ["turnpike_sweep.csv", "turnpike_profiles.csv"].map(|f| fs::read(dir.path().join(f)).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(code(&gnep(&["--help"])), 0);
    assert_eq!(code(&gnep(&["frobnicate"])), 3);
}

#[test]
fn perturbing_a_boundary_start_is_infeasible() {
    let out = gnep(&["sensitivity", "--N", "20", "--x0", "1"]);
    assert_eq!(code(&out), 1);
}
