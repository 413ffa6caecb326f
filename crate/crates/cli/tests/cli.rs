use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cascade(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
        .env_remove("CASCADE_OUT_DIR")
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 7] = [
        &["recur", "--n-max", "0"],
        &["recur", "--n-max", "10", "--h", "-1"],
        &["recur", "--n-max", "10", "--store", "11"],
        &["mc", "--x", "3", "--replicates", "10"],
        &["wave", "--fit-window", "50"],
        &["wave", "--fit-window", "90,40"],
        &["discrete", "--m", "10", "--c", "1.5", "--replicates", "3", "--seed", "1"],
    ];
    for args in cases {
        let out = cascade(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn node_cap_abort_exits_one_and_names_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let out = cascade(dir.path(), &["mc", "--x", "10", "--replicates", "4", "--seed", "1", "--node-cap", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replicate 0"));
}

#[test]
fn recur_output_is_byte_identical_and_has_manifests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["recur", "--n-max", "30", "--store", "10,30", "--mean-height-at", "2"];
    assert!(cascade(a.path(), &args).status.success());
    assert!(cascade(b.path(), &args).status.success());
    for name in ["fronts.csv", "profile_n10.csv", "profile_n30.csv", "mean_height.csv"] {
        let left = fs::read(a.path().join(name)).unwrap();
        assert_eq!(left, fs::read(b.path().join(name)).unwrap(), "{name}");
        let manifest = json(&a.path().join(format!("{name}.manifest.json")));
        assert_eq!(manifest["command"], "recur");
        assert_eq!(manifest["parameters"]["n_max"], 30);
        assert_eq!(manifest["parameters"]["h"], 1e-3);
        assert!(manifest["parameters"]["x_max"].as_f64().unwrap() > 30.0 / std::f64::consts::E);
        assert_eq!(manifest["outputs"][0], name);
    }
    let fronts = fs::read_to_string(a.path().join("fronts.csv")).unwrap();
    let first: f64 = fronts.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((first - 2f64.ln()).abs() < 1e-6);
}

#[test]
fn mc_results_do_not_depend_on_threads() {
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let args = ["mc", "--x", "3", "--replicates", "20000", "--seed", "7"];
    let mut with_one = vec!["--threads", "1"];
    with_one.extend(args);
    let mut with_four = vec!["--threads", "4"];
    with_four.extend(args);
    assert!(cascade(one.path(), &with_one).status.success());
    assert!(cascade(four.path(), &with_four).status.success());
    for name in ["trees.csv", "height_cdf.csv", "mc_summary.json", "mc_summary.json.manifest.json"] {
        assert_eq!(
            fs::read(one.path().join(name)).unwrap(),
            fs::read(four.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let manifest = json(&one.path().join("height_cdf.csv.manifest.json"));
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn series_table_follows_factorial_pattern() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cascade(dir.path(), &["series", "--n", "6", "--order", "9"]).status.success());
    let csv = fs::read_to_string(dir.path().join("series_n6.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "k,numerator,denominator");
    assert_eq!(rows[1], "0,1,1");
    for k in 1..=6 {
        assert_eq!(rows[k + 1], format!("{k},0,1"));
    }
    assert_eq!(rows[8], "7,-1,5040");
    assert_eq!(rows[9], "8,1,40320");
    assert_eq!(rows[10], "9,1,181440");
    let report = json(&dir.path().join("series_n6.json"));
    assert_eq!(report["vanishing_prefix"], 6);
}

#[test]
fn wave_reports_velocity_and_empty_dispersion() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cascade(dir.path(), &["wave", "--n-max", "200", "--v", "0.4"]).status.success());
    let fit = json(&dir.path().join("velocity_fit.json"));
    for key in ["v", "b", "c0", "residual_rms", "window"] {
        assert!(fit.get(key).is_some(), "{key}");
    }
    assert!((fit["v"].as_f64().unwrap() - 0.3679).abs() < 2e-3);
    let disp = json(&dir.path().join("dispersion.json"));
    assert_eq!(disp["query"]["roots"].as_array().unwrap().len(), 0);
    let profile = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(profile.starts_with("xi,pi\n"));
}

#[test]
fn config_file_fills_flags_and_explicit_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("batch.toml");
    fs::write(&config, "x = 2.0\nreplicates = 500\nseed = 11\n").unwrap();
    let cfg = config.to_str().unwrap();
    let out = cascade(dir.path(), &["--config", cfg, "mc", "--seed", "12", "--no-samples"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("mc_summary.json"));
    assert_eq!(summary["seed"], 12);
    assert_eq!(summary["replicates"], 500);
    assert_eq!(summary["x"], 2.0);
    assert!(!dir.path().join("trees.csv").exists());
}

#[test]
fn out_dir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cascade"))
        .env("CASCADE_OUT_DIR", dir.path())
        .args(["series", "--n", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("series_n2.json.manifest.json").exists());
}
