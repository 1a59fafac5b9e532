use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn small_config() -> Value {
    json!({
        "seed": 5,
        "data": "data.csv",
        "output_dir": "out",
        "model": "full_st",
        "models": ["covariate_only", "full_st"],
        "mesh": {"max_edge_inner": 250.0, "max_edge_outer": 500.0, "extension": 250.0, "cutoff": 40.0},
        "inference": {"strategy": "mode"},
        "train_months": 12,
        "prediction": {"grid": "grid.csv"},
        "simulation": {
            "sites": {"type": "lattice", "lon": [36.0, 42.0], "lat": [6.0, 11.0], "nx": 5, "ny": 4},
            "n_times": 14,
            "year0": 2020,
            "truth": {
                "kind": "full_st",
                "beta": [270.0, 3.0, -2.0, 5.0],
                "sigma_eps": 2.0,
                "range_r": 600.0,
                "sigma_omega": 5.0,
                "phi": 0.7
            },
            "covariates": {"n_normal": 2, "sine_sheet": true, "wavelength": 800.0},
            "grid": {"n_points": 40, "year": 2020}
        }
    })
}

fn write_config(dir: &Path, cfg: &Value) {
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}

fn spdest(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdest"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPDEST_OUTPUT_DIR")
        .env_remove("SPDEST_THREADS")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("error JSON on stderr");
    serde_json::from_str(line).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn simulated(cfg: &Value) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), cfg);
    ok(&spdest(dir.path(), &["simulate", "-c", "run.json"]));
    dir
}

#[test]
fn simulate_fit_predict() {
    let dir = simulated(&small_config());
    let d = dir.path();
    assert_eq!(csv_rows(&d.join("data.csv")).len(), 20 * 14);
    assert_eq!(csv_rows(&d.join("grid.csv")).len(), 40 * 12);

    ok(&spdest(d, &["fit", "-c", "run.json"]));
    let out = d.join("out");
    let beta = csv_rows(&out.join("beta_table.csv"));
    assert_eq!(beta.len(), 4);
    assert_eq!(&beta[0][1], "intercept");
    let hash = beta[0][7].to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(csv_rows(&out.join("hyper_table.csv")).len(), 4);
    assert_eq!(csv_rows(&out.join("cpo_pit.csv")).len(), 20 * 12);
    let n_vertices = csv_rows(&out.join("vertices.csv")).len();
    assert!(n_vertices >= 20);
    assert_eq!(csv_rows(&out.join("latent_marginals.csv")).len(), n_vertices * 12);
    let scaling: Value = serde_json::from_str(&std::fs::read_to_string(out.join("scaling.json")).unwrap()).unwrap();
    assert!(scaling["tco"]["sd"].as_f64().unwrap() > 0.0);
    let scores: Value = serde_json::from_str(&std::fs::read_to_string(out.join("scores.json")).unwrap()).unwrap();
    assert!(scores["validation"]["standardized"]["rmse"].as_f64().unwrap() > 0.0);

    ok(&spdest(d, &["predict", "-c", "run.json"]));
    assert_eq!(csv_rows(&out.join("predictions.csv")).len(), 40 * 12);
    assert_eq!(csv_rows(&out.join("seasonal_predictions.csv")).len(), 40 * 4);
    assert!(out.join("monthly_latent.csv").is_file());

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    let command_of = |name: &str| {
        files
            .iter()
            .find(|f| f["file"] == name)
            .map(|f| f["command"].as_str().unwrap().to_string())
    };
    assert_eq!(command_of("fit.json").as_deref(), Some("fit"));
    assert_eq!(command_of("predictions.csv").as_deref(), Some("predict"));
    assert!(files.iter().all(|f| f["config_hash"] == hash.as_str()));
}

#[test]
fn fit_is_byte_deterministic() {
    let dir = simulated(&small_config());
    let d = dir.path();
    ok(&spdest(d, &["fit", "-c", "run.json", "--output-dir", "a"]));
    ok(&spdest(d, &["fit", "-c", "run.json", "--output-dir", "b", "--threads", "1"]));
    for name in ["fit.json", "criteria.json", "scores.json", "beta_table.csv", "hyper_table.csv", "cpo_pit.csv"] {
        let a = std::fs::read(d.join("a").join(name)).unwrap();
        let b = std::fs::read(d.join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn missing_data_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config());
    let out = spdest(dir.path(), &["fit", "-c", "run.json", "--data", "nowhere.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let e = error_json(&out);
    assert_eq!(e["code"], "missing_path");
    assert!(e["context"]["path"].as_str().unwrap().ends_with("nowhere.csv"));
    assert_eq!(e["context"]["command"], "fit");
}

#[test]
fn predict_without_fit_names_the_artifact() {
    let dir = simulated(&small_config());
    let e = error_json(&spdest(dir.path(), &["predict", "-c", "run.json"]));
    assert_eq!(e["code"], "missing_path");
    assert!(e["context"]["path"].as_str().unwrap().ends_with("fit.json"));
}

#[test]
fn compare_needs_two_models() {
    let dir = simulated(&small_config());
    let out = spdest(dir.path(), &["compare", "-c", "run.json", "--models", "full_st"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["code"], "precondition");
}

#[test]
fn compare_writes_one_row_per_model() {
    let dir = simulated(&small_config());
    ok(&spdest(dir.path(), &["compare", "-c", "run.json"]));
    let rows = csv_rows(&dir.path().join("out").join("comparison.csv"));
    assert_eq!(rows.len(), 2);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["mystery"] = json!(1);
    write_config(dir.path(), &cfg);
    let out = spdest(dir.path(), &["fit", "-c", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["code"], "config");

    let mut cfg = small_config();
    cfg.as_object_mut().unwrap().remove("seed");
    write_config(dir.path(), &cfg);
    let out = spdest(dir.path(), &["simulate", "-c", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_dir_flag_beats_environment() {
    let dir = simulated(&small_config());
    let d = dir.path();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_spdest"))
            .args(args)
            .current_dir(d)
            .env("SPDEST_OUTPUT_DIR", "from_env")
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    };
    ok(&run(&["fit", "-c", "run.json", "--model", "covariate_only"]));
    assert!(d.join("from_env").join("fit.json").is_file());
    ok(&run(&["fit", "-c", "run.json", "--model", "covariate_only", "--output-dir", "from_flag"]));
    assert!(d.join("from_flag").join("fit.json").is_file());
}

#[test]
fn report_runs_the_whole_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config());
    ok(&spdest(dir.path(), &["report", "-c", "run.json"]));
    let out = dir.path().join("out");
    let report = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("model1") || report.contains("covariate_only"));
    assert!(out.join("comparison.csv").is_file());
    assert!(out.join("predictions.csv").is_file());
}
