use std::process::{Command, Output};

use gibbslab_cli::{cli_run, EXIT_FAIL, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

fn gibbslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gibbslab"))
        .args(args)
        .env("GIBBSLAB_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn last_json(out: &Output) -> Value {
    serde_json::from_str(stdout(out).lines().last().expect("output")).unwrap()
}

#[test]
fn certify_independent_set() {
    let out = gibbslab(&["certify", "--model", "independent_set", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("PsdForAlpha(1)"));
    let cert = last_json(&out);
    assert_eq!(cert["verdict"], "psd_for_alpha");
    assert_eq!(cert["alpha"], 1.0);
}

#[test]
fn certify_reports_missing_shift() {
    let out = gibbslab(&["certify", "--model", "ising", "--beta", "1", "--h", "1"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert_eq!(last_json(&out)["verdict"], "no_alpha");
}

#[test]
fn exact_logz_of_free_potts() {
    let out = gibbslab(&["logz", "--model", "potts", "--q", "3", "--beta", "0", "--n", "4", "--c", "1", "--seed", "7", "--exact"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let row = last_json(&out);
    assert_eq!(row["method"], "exact");
    assert!((row["logz"].as_f64().unwrap() - 4.0 * 3f64.ln()).abs() < 1e-12);
}

#[test]
fn monte_carlo_logz_carries_standard_error() {
    let out = gibbslab(&["logz", "--model", "independent_set", "--n", "6", "--seed", "3", "--samples", "20000"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let row = last_json(&out);
    assert_eq!(row["method"], "mc");
    assert!(row["se"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_file_supplies_model_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.json");
    std::fs::write(&cfg, r#"{"model": "ksat", "params": {"k": 3, "beta": 1.5}, "seed": 11}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let a = gibbslab(&["logz", "--config", cfg, "--n", "5", "--c", "2"]);
    let b = gibbslab(&["logz", "--model", "ksat", "--k", "3", "--beta", "1.5", "--seed", "11", "--n", "5", "--c", "2"]);
    assert_eq!(a.status.code(), Some(EXIT_OK));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(last_json(&a)["seed"], 11);

    let show = gibbslab(&["model", "show", "--config", cfg]);
    assert_eq!(show.status.code(), Some(EXIT_OK));
    let spec: Value = serde_json::from_str(&stdout(&show)).unwrap();
    assert_eq!(spec["edge_pot"]["arity"], 3);
}

#[test]
fn generated_graphs_are_seed_stable() {
    let args = ["gen", "--n", "12", "--c", "1.5", "--arity", "3", "--seed", "4"];
    let a = gibbslab(&args);
    let b = gibbslab(&args);
    assert_eq!(a.stdout, b.stdout);
    let graph = last_json(&a);
    assert_eq!(graph["n"], 12);
    assert_eq!(graph["k"], 3);
    assert_eq!(graph["edges"].as_array().unwrap().len(), 18);

    let split = gibbslab(&["gen", "--n", "6", "--arity", "2", "--seed", "4", "--n1", "3", "--t", "6"]);
    for e in last_json(&split)["edges"].as_array().unwrap() {
        let e: Vec<u64> = e.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert_eq!(e[0] < 3, e[1] < 3);
    }
}

#[test]
fn experiments_write_jsonl_csv_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let jsonl = dir.path().join("runs.jsonl");
    let csv = dir.path().join("runs.csv");
    let (jsonl_s, csv_s) = (jsonl.to_str().unwrap(), csv.to_str().unwrap());
    let runs: Vec<Vec<&str>> = vec![
        vec!["interpolate", "--model", "independent_set", "--n", "6", "--n1", "3", "--samples", "200", "--seed", "1"],
        vec!["moments", "--model", "potts", "--q", "2", "--beta", "0.5", "--n", "3", "--n1", "1", "--r", "2"],
        vec!["concentrate", "--model", "independent_set", "--n-list", "4,6,8", "--samples", "100"],
        vec!["converge", "--model", "independent_set", "--n-list", "4,8", "--samples", "50"],
        vec!["endpoint", "--model", "independent_set", "--n", "6", "--n1", "2", "--samples", "200"],
    ];
    for run in &runs {
        let mut args = run.clone();
        args.extend(["--out", jsonl_s]);
        let out = gibbslab(&args);
        assert!(matches!(out.status.code(), Some(EXIT_OK) | Some(EXIT_FAIL)), "{run:?}");
    }
    let lines = std::fs::read_to_string(&jsonl).unwrap();
    assert_eq!(lines.lines().count(), runs.len());

    let replayed = gibbslab(&["replay", jsonl_s, "--csv", csv_s]);
    assert_ne!(replayed.status.code(), Some(EXIT_USAGE));
    assert!(!String::from_utf8_lossy(&replayed.stderr).contains("differ"));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("experiment,verdict,timestamp"));
    assert_eq!(table.lines().count(), runs.len() + 1);
}

#[test]
fn uncertified_interpolation_needs_force() {
    let base = ["interpolate", "--model", "ising", "--beta", "0.5", "--h", "1", "--n", "4", "--n1", "2", "--samples", "20"];
    assert_eq!(gibbslab(&base).status.code(), Some(EXIT_USAGE));
    let mut forced = base.to_vec();
    forced.push("--force");
    let out = gibbslab(&forced);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert_eq!(last_json(&out)["verdict"], "report_only");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cli_run(["gibbslab", "certify", "--bogus"]), EXIT_USAGE);
    assert_eq!(cli_run(["gibbslab", "frobnicate"]), EXIT_USAGE);
    assert_eq!(cli_run(["gibbslab", "certify"]), EXIT_USAGE);
    assert_eq!(cli_run(["gibbslab", "certify", "--model", "no_such_model"]), EXIT_USAGE);
    assert_eq!(cli_run(["gibbslab", "logz", "--model", "potts", "--q", "0", "--n", "3"]), EXIT_USAGE);
    assert_eq!(cli_run(["gibbslab", "--help"]), EXIT_OK);
}

#[test]
fn bad_worker_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_gibbslab"))
        .args(["certify", "--model", "independent_set"])
        .env("GIBBSLAB_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}
