use std::path::Path;
use std::process::{Command, Output};

use bdt_cli::source::{parse_model_document, parse_param};
use bdt_cli::sweep::{point_seed, Grid, Outputs, CSV_HEADER};
use bdt_core::models::{mmsk_reneging, BuiltModel};
use serde_json::Value;

fn bdt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdt")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn erlang_both_paths() {
    let out = bdt(&[
        "compute", "--model", "mm1k", "--param", "K=1", "lambda=1", "mu=1", "--format", "json",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["d_closed"], 0.5);
    assert_eq!(v["d_oracle"], 0.5);
}

#[test]
fn full_count_single_step_file_is_poisson() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(
        &path,
        r#"{"J": 1, "lambda": [1, 0], "mu": [0, 1], "q_plus": [1, 0], "q_minus": [0, 1]}"#,
    )
    .unwrap();
    let out = bdt(&["compute", "--file", path.to_str().unwrap(), "--format", "json"]);
    let v = stdout_json(&out);
    assert!((v["d_closed"].as_f64().unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn reneging_paths_agree() {
    let out = bdt(&[
        "compute",
        "--model",
        "mmsk_reneging",
        "--param",
        "K=20",
        "s=10",
        "mu=1",
        "lambda=10",
        "gamma=0",
        "--format",
        "json",
    ]);
    let v = stdout_json(&out);
    let (a, b) = (v["d_closed"].as_f64().unwrap(), v["d_oracle"].as_f64().unwrap());
    assert!((a - b).abs() / a < 1e-9);
}

#[test]
fn json_report_parses_back_as_the_model() {
    let out = bdt(&[
        "compute",
        "--model",
        "mmsk_reneging",
        "--param",
        "K=12",
        "s=4",
        "lambda=5",
        "gamma=0.5",
        "--format",
        "json",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let (BuiltModel::Finite(m), _) = parse_model_document(&text).unwrap() else {
        panic!("finite")
    };
    assert_eq!(m, mmsk_reneging(12, 4, 5.0, 1.0, 0.5).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    std::fs::write(&path, &text).unwrap();
    let again = stdout_json(&bdt(&["compute", "--file", path.to_str().unwrap(), "--format", "json"]));
    assert_eq!(
        again["d_closed"],
        serde_json::from_str::<Value>(&text).unwrap()["d_closed"]
    );
}

#[test]
fn named_model_document() {
    let (built, spec) = parse_model_document(r#"{"name": "mm1_busy_cycle", "params": {"rho": 0.5}}"#).unwrap();
    assert!(matches!(built, BuiltModel::Infinite(_)));
    assert_eq!(spec.unwrap().params["rho"], 0.5);
    assert_eq!(parse_model_document("[1, 2]").unwrap_err().kind(), "Parse");
}

#[test]
fn input_errors_exit_2_with_error_field() {
    for args in [
        &[
            "compute", "--model", "mm1k", "--param", "K=0", "lambda=1", "--format", "json",
        ][..],
        &["compute", "--model", "nope", "--format", "json"],
        &["compute", "--model", "mm1k", "--param", "K=3", "--format", "json"],
        &[
            "simulate", "--model", "mm1k", "--param", "K=3", "lambda=1", "--cycles", "5", "--format", "json",
        ],
        &[
            "sweep", "--model", "mm1k", "--param", "K=3", "--vary", "lambda", "--from", "1", "--to", "2", "--points",
            "1", "--format", "json",
        ],
    ] {
        let out = bdt(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert!(err["error"]["kind"].is_string(), "{args:?}");
    }
    let out = bdt(&[
        "simulate", "--model", "mm1k", "--param", "K=3", "lambda=1", "--cycles", "5",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[InvalidConfig]"));
}

#[test]
fn bad_thread_count_is_an_input_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_bdt"))
        .args(["verify", "--models", "2"])
        .env("BDT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn two_point_sweep() {
    let out = bdt(&[
        "sweep", "--model", "mm1k", "--param", "K=5", "--vary", "lambda", "--from", "0.5", "--to", "2", "--points", "2",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("5.0000000000000000e-1,"));
    assert!(lines[2].starts_with("2.0000000000000000e0,"));
    // D_sim and its error stay empty when not requested.
    assert_eq!(lines[1].split(',').nth(3), Some(""));
}

#[test]
fn csv_numbers_round_trip() {
    let out = bdt(&[
        "sweep",
        "--model",
        "billabong",
        "--param",
        "J=7",
        "--vary",
        "lambda",
        "--from",
        "0.1",
        "--to",
        "10",
        "--points",
        "9",
        "--log",
        "--format",
        "json",
    ]);
    let json = stdout_json(&out);
    let csv = String::from_utf8(
        bdt(&[
            "sweep",
            "--model",
            "billabong",
            "--param",
            "J=7",
            "--vary",
            "lambda",
            "--from",
            "0.1",
            "--to",
            "10",
            "--points",
            "9",
            "--log",
        ])
        .stdout,
    )
    .unwrap();
    for (row, line) in json["rows"].as_array().unwrap().iter().zip(csv.lines().skip(1)) {
        let d: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(d, row["d_closed"].as_f64().unwrap());
    }
}

#[test]
fn out_file_gets_sidecar_and_failures_leave_it_alone() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig.csv");
    let p = path.to_str().unwrap();
    let ok = bdt(&[
        "sweep", "--model", "mm1k", "--param", "K=5", "--vary", "lambda", "--from", "0.5", "--to", "2", "--points",
        "3", "--out", p,
    ]);
    assert!(ok.status.success() && ok.stdout.is_empty());
    let before = std::fs::read(&path).unwrap();
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("fig.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "sweep");
    assert_eq!(meta["spec"]["variable"], "lambda");

    // K sweeps through non-integers, so some grid point fails.
    let bad = bdt(&[
        "sweep", "--model", "mm1k", "--param", "lambda=1", "--vary", "K", "--from", "1", "--to", "4", "--points", "5",
        "--out", p,
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(std::fs::read(&path).unwrap(), before);
    let fresh = dir.path().join("never.csv");
    bdt(&[
        "sweep",
        "--model",
        "mm1k",
        "--param",
        "lambda=1",
        "--vary",
        "K",
        "--from",
        "1",
        "--to",
        "4",
        "--points",
        "5",
        "--out",
        fresh.to_str().unwrap(),
    ]);
    assert!(!Path::new(&fresh).exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn simulate_echoes_seed_and_reports_disagreement_as_data() {
    let out = bdt(&[
        "simulate", "--model", "mm1k", "--param", "K=5", "lambda=1", "--seed", "77", "--cycles", "200", "--format",
        "json",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["estimate"]["seed"], 77);
    assert_eq!(v["config"]["seed"], 77);
    assert!(v["d_closed"].is_number());
}

#[test]
fn infinite_models_skip_the_oracle_and_refuse_simulation() {
    let v = stdout_json(&bdt(&[
        "compute",
        "--model",
        "mm1_two_sided",
        "--param",
        "rho=0.4",
        "q_plus=0.3",
        "q_minus=0.3",
        "--format",
        "json",
    ]));
    assert!((v["d_closed"].as_f64().unwrap() - 1.3).abs() < 1e-8);
    assert!(v["d_oracle"].is_null());
    let out = bdt(&["simulate", "--model", "mm1_busy_cycle", "--param", "rho=0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let out = bdt(&["verify", "--models", "20", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!(v.as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn grid_endpoints_are_exact() {
    let g = Grid::linear(0.5, 1.5, 81).values();
    assert_eq!((g[0], g[40], g[80]), (0.5, 1.0, 1.5));
    let g = Grid::log(0.01, 100.0, 5).values();
    assert_eq!((g[0], g[4]), (0.01, 100.0));
    assert!((g[2] - 1.0).abs() < 1e-15);
}

#[test]
fn small_helpers() {
    assert_eq!(parse_param("lambda = 2.5").unwrap(), ("lambda".into(), 2.5));
    assert!(parse_param("lambda").is_err() && parse_param("K=x").is_err());
    assert!(Outputs::parse("closed_form,simulation").unwrap().simulation);
    assert!(Outputs::parse("plot").is_err());
    let seeds: std::collections::HashSet<u64> = (0..100).map(|i| point_seed(9, i)).collect();
    assert_eq!(seeds.len(), 100);
    assert_eq!(point_seed(9, 3), point_seed(9, 3));
}
