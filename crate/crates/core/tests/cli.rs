use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxrenyi"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn toy_passes_and_fails_on_zero_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = run(tmp.path(), &["--out", "a", "toy"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("G = 43.1"));
    let toy = read_json(&tmp.path().join("a/toy.json"));
    assert_eq!(toy["pass"], true);

    let bad = run(
        tmp.path(),
        &["--out", "b", "toy", "--check", "--tolerance-scale", "0"],
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL"));

    let shannon = run(tmp.path(), &["--out", "c", "toy", "--alpha", "1"]);
    assert_eq!(shannon.status.code(), Some(0));
}

#[test]
fn contour_writes_every_lattice_point() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        tmp.path(),
        &["--out", "o", "contour", "--k", "50", "--objective", "g"],
    );
    assert!(o.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("o/contour.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1326);
}

#[test]
fn reduced_search_finds_no_counterexample() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        tmp.path(),
        &[
            "--out", "o", "search", "--step", "0.5", "--alpha", "0.1", "--gamma", "0.9", "--check",
        ],
    );
    assert!(o.status.success());
    let summary = read_json(&tmp.path().join("o/search_summary.json"));
    assert_eq!(summary["n_cmps"], 243);
    assert_eq!(summary["n_counterexamples"], 0);
    let manifest = read_json(&tmp.path().join("o/manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v == "search.csv"));
}

#[test]
fn bound_evaluates_the_formula() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        tmp.path(),
        &[
            "--out", "o", "bound", "--alpha", "0", "--S", "2", "--A", "2", "--H", "3", "--eps",
            "0.1", "--p", "0.1",
        ],
    );
    assert!(o.status.success());
    let b: f64 = stdout(&o).trim().parse().unwrap();
    assert!((b / 1.378e6 - 1.0).abs() < 1e-3, "{b}");
    let diverging = run(
        tmp.path(),
        &[
            "--out", "o", "bound", "--alpha", "1", "--S", "2", "--A", "2", "--H", "3", "--eps",
            "0.1", "--p", "0.1",
        ],
    );
    assert_eq!(diverging.status.code(), Some(2));
}

#[test]
fn pipeline_runs_and_rejects_an_empty_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        tmp.path(),
        &[
            "--out",
            "o",
            "pipeline",
            "--exploration",
            "uniform",
            "--transitions",
            "2000",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("o/manifest.json").exists());

    let empty = run(
        tmp.path(),
        &["--out", "e", "pipeline", "--transitions", "0"],
    );
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&empty.stderr).contains("empty dataset"));
}

#[test]
fn config_file_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("run.json"),
        r#"{"subcommand": "contour", "out_dir": "from-config"}"#,
    )
    .unwrap();
    let o = run(tmp.path(), &["--config", "run.json", "contour", "--k", "2"]);
    assert!(o.status.success());
    assert!(tmp.path().join("from-config/contour.csv").exists());
    // a flag beats the config file
    let o = run(
        tmp.path(),
        &[
            "--config", "run.json", "--out", "flag", "contour", "--k", "2",
        ],
    );
    assert!(o.status.success());
    assert!(tmp.path().join("flag/contour.csv").exists());

    let mismatch = run(tmp.path(), &["--config", "run.json", "toy"]);
    assert_eq!(mismatch.status.code(), Some(2));
    std::fs::write(tmp.path().join("bad.json"), r#"{"colour": 1}"#).unwrap();
    let unknown = run(tmp.path(), &["--config", "bad.json", "contour"]);
    assert_eq!(unknown.status.code(), Some(2));
    let flag = run(tmp.path(), &["contour", "--no-such-flag"]);
    assert_eq!(flag.status.code(), Some(2));
}

#[test]
fn validate_reports_a_bad_model() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("bad.json"),
        r#"{"n_states":2,"n_actions":1,"gamma":0.9,"transition":[[[0.5,0.4]],[[0,1]]],"init":[1,0]}"#,
    )
    .unwrap();
    let o = run(
        tmp.path(),
        &["--out", "o", "validate", "--model", "bad.json"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(tmp.path().join("o/validation.json").exists());
    let good = run(
        tmp.path(),
        &["--out", "g", "validate", "--env", "two-state-gap"],
    );
    assert!(good.status.success());
}
