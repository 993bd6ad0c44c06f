use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TARIFFS: &str = "[report.tariffs]\n\"7204\" = 0.05\n\"8502\" = 0.0\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wastesig"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "wastesig {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth_corpus() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    run(dir.path(), &["synth", "--out-dir", "."]);
    let corpus = dir.path().join("corpus.csv");
    assert!(corpus.exists());
    assert!(dir.path().join("truth.csv").exists());
    (dir, corpus)
}

#[test]
fn run_all_writes_every_artifact() {
    let (dir, _) = synth_corpus();
    run(dir.path(), &["run-all", "corpus.csv", "--out-dir", "out"]);
    let out = dir.path().join("out");
    for name in [
        "series.csv",
        "features.csv",
        "segments.csv",
        "risk.csv",
        "forecasts.csv",
        "validation.json",
        "hotspots.csv",
        "treemap.csv",
        "model.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let dashboards = fs::read_dir(out.join("dashboards")).unwrap().count();
    // One json and one svg per modeled product.
    assert_eq!(dashboards % 2, 0);
    assert!(dashboards >= 2 * 200);
}

#[test]
fn run_all_is_deterministic() {
    let (dir, _) = synth_corpus();
    run(dir.path(), &["run-all", "corpus.csv", "--out-dir", "a", "--seed", "7"]);
    run(dir.path(), &["run-all", "corpus.csv", "--out-dir", "b", "--seed", "7"]);
    for name in ["segments.csv", "risk.csv", "forecasts.csv", "validation.json", "dashboards/720410.svg"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn report_carries_configured_tariff() {
    let (dir, _) = synth_corpus();
    fs::write(dir.path().join("cfg.toml"), TARIFFS).unwrap();
    run(dir.path(), &["--config", "cfg.toml", "report", "corpus.csv", "--hs", "720410", "--out-dir", "r"]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/dashboards/720410.json")).unwrap()).unwrap();
    assert_eq!(json["tariff_rate"].as_f64(), Some(0.05));
    let svg = fs::read_to_string(dir.path().join("r/dashboards/720410.svg")).unwrap();
    assert!(svg.contains("Tariff rate: 5%"));
}

#[test]
fn validate_reports_accuracy_against_baseline() {
    let (dir, _) = synth_corpus();
    let out = run(dir.path(), &["validate", "corpus.csv", "--out-dir", "v", "--format", "json"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("out-of-bag accuracy"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v/validation.json")).unwrap()).unwrap();
    let oob = v["oob_accuracy"].as_f64().unwrap();
    let base = v["majority_baseline"].as_f64().unwrap();
    assert!(oob >= base, "oob {oob} below baseline {base}");
}

#[test]
fn tab_delimited_output_uses_tsv() {
    let (dir, _) = synth_corpus();
    // Rewrite the corpus with tabs; no field contains a comma.
    let text = fs::read_to_string(dir.path().join("corpus.csv")).unwrap().replace(',', "\t");
    fs::write(dir.path().join("corpus.tsv"), text).unwrap();
    run(dir.path(), &["--delimiter", "tab", "features", "export", "corpus.tsv", "--out-dir", "t", "--format", "csv"]);
    let table = fs::read_to_string(dir.path().join("t/features.tsv")).unwrap();
    assert!(table.lines().next().unwrap().starts_with("hs_code\t"));
}

#[test]
fn invalid_config_is_rejected() {
    let (dir, _) = synth_corpus();
    fs::write(dir.path().join("bad.toml"), "[risk]\nl2_lambda = -1.0\n").unwrap();
    let out = bin()
        .current_dir(dir.path())
        .args(["--config", "bad.toml", "score", "corpus.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_input_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out = bin().current_dir(dir.path()).args(["ingest", "nope.csv"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn example_config_is_accepted() {
    let (dir, _) = synth_corpus();
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config.example.toml");
    let out = run(
        dir.path(),
        &["--config", example.to_str().unwrap(), "report", "corpus.csv", "--hs", "850213", "--out-dir", "e"],
    );
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("e/dashboards/850213.json")).unwrap()).unwrap();
    assert_eq!(json["tariff_rate"].as_f64(), Some(0.0));
}
