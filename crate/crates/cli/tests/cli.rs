use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn rhoblo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhoblo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not json ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn fixture(name: &str) -> String {
    fixtures().join(name).to_string_lossy().into_owned()
}

#[test]
fn bundled_theorem_fixture_passes() {
    let out = rhoblo(&["check", "--theorem", "6.1", "--config", &fixture("check-6.1.conf")]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["command"], "check 6.1");
    assert_eq!(r["passed"], true);
    assert_eq!(r["version"], rhoblo_cli::VERSION);
    assert_eq!(r["params"]["theta1"], "0.5");
    assert_eq!(r["results"]["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn undersized_comparison_constant_is_a_violation() {
    let out = rhoblo(&["rho", "--config", &fixture("negative-c0.conf")]);
    assert_eq!(code(&out), 1);
    let r = report(&out);
    assert_eq!(r["passed"], false);
    let cmp = &r["results"]["reports"][0];
    assert!(cmp["violations"].as_u64().unwrap() > 0);
    assert_eq!(cmp["witness"]["kind"], "pair", "{}", cmp["witness"]);
}

#[test]
fn corrupted_field_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.rsf");
    std::fs::write(&path, b"RSF9\x00garbage").unwrap();
    let src = format!("f={}", path.display());
    let out = rhoblo(&["seminorm", "--set", &src]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn config_mistakes_are_input_errors() {
    assert_eq!(code(&rhoblo(&["seminorm", "--set", "thetaa=1"])), 2);
    assert_eq!(code(&rhoblo(&["seminorm", "--set", "theta=abc"])), 2);
    assert_eq!(code(&rhoblo(&["seminorm", "--set", "f=no-such-generator"])), 2);
    assert_eq!(
        code(&rhoblo(&["check", "--theorem", "4.6", "--grid", "8"])),
        2,
        "pairs need a seed"
    );
    assert_eq!(code(&rhoblo(&["check", "--theorem", "7.1"])), 2);
}

#[test]
fn reports_are_reproducible() {
    let args = [
        "check",
        "--theorem",
        "4.6",
        "--grid",
        "8",
        "--window",
        "2",
        "--seed",
        "3",
        "--set",
        "v=potential-abs-square",
    ];
    let a = rhoblo(&args);
    let b = rhoblo(&args);
    assert_eq!(code(&a), 0, "stderr: {}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn generate_writes_a_readable_field() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("gen");
    let out = rhoblo(&[
        "generate",
        "--grid",
        "8",
        "--set",
        "spec=dyadic-martingale:seed=7,depth=3,step=1,density=0.5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let bound = r["results"]["dyadic_bound"].as_f64().unwrap();
    assert!(r["results"]["dyadic_seminorm"].as_f64().unwrap() <= bound);
    for name in ["report.json", "field.rsf", "field.csv"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    // both file forms load back as the same field
    let a = format!("f={}", out_dir.join("field.rsf").display());
    let b = format!("f={}", out_dir.join("field.csv").display());
    let ra = report(&rhoblo(&["seminorm", "--set", &a]));
    let rb = report(&rhoblo(&["seminorm", "--set", &b]));
    assert_eq!(ra["results"]["value"], rb["results"]["value"]);
}

#[test]
fn csv_format_prints_the_primary_table() {
    let out = rhoblo(&[
        "jn",
        "--grid",
        "8",
        "--format",
        "csv",
        "--set",
        "f=log-spike:point=0.1/0/0",
        "--set",
        "lambdas=16",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,empirical,bound"));
    assert_eq!(lines.count(), 16);
}

#[test]
fn cz_exports_tree_and_generations() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhoblo(&[
        "cz",
        "--grid",
        "16",
        "--set",
        "f=dyadic-martingale:seed=2,depth=4,step=1,density=0.4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let tree: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("tree.json")).unwrap()).unwrap();
    assert!(tree["generations"].is_array());
    assert!(dir.path().join("generations.csv").is_file());
}

#[test]
fn every_theorem_runs_on_a_small_grid() {
    for t in ["6.1", "6.2", "6.3", "6.4", "cor", "5.3", "5.4", "4.6"] {
        let out = rhoblo(&["check", "--theorem", t, "--grid", "8", "--seed", "1"]);
        assert_eq!(code(&out), 0, "theorem {t}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn weight_constant_with_measure_comparison() {
    let out = rhoblo(&[
        "weight",
        "--grid",
        "8",
        "--window",
        "2",
        "--seed",
        "4",
        "--set",
        "w=weight-power:gamma=4",
        "--set",
        "draws=200",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    // the adapted factor can pull the constant below one
    assert!(r["results"]["constant"]["value"].as_f64().unwrap() > 0.0);
    let cmp = &r["results"]["reports"][0]["measure_comparison"];
    assert_eq!(cmp["check"], "measure-comparison");
    assert!(cmp["fitted"].as_f64().unwrap() <= cmp["bound"].as_f64().unwrap());
}
