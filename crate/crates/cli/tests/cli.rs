use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use survstack_cli::config::{PipelineConfig, DEFAULT_CONFIG};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_survstack"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn text(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// A temp dir holding a small synthetic dataset in `d/` with its truth sidecar.
fn with_data() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.toml"),
        "n = 600\nd = 3\nseed = 5\n[hazard]\nform = \"proportional\"\nbeta = [1.0, -0.5, 0.0]\n",
    )
    .unwrap();
    let o = run(&["synth", "--spec", "spec.toml", "--out", "d"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

#[test]
fn config_command_prints_the_default_template() {
    let o = bin().arg("config").output().unwrap();
    assert_eq!(code(&o), 0);
    let printed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(printed, DEFAULT_CONFIG);
    assert_eq!(PipelineConfig::parse(&printed).unwrap(), PipelineConfig::default());
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&run(&["synth", "--spec", "missing.toml"], p)), 2);
    std::fs::write(p.join("bad.toml"), "n = 0\n").unwrap();
    assert_eq!(code(&run(&["synth", "--spec", "bad.toml"], p)), 2);
    assert_eq!(code(&run(&["run"], p)), 2);
    std::fs::write(p.join("typo.toml"), "[stacking]\ngama = 0.1\n").unwrap();
    let o = run(&["run", "--config", "typo.toml"], p);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));
    assert_eq!(code(&run(&["no-such-command"], p)), 2);
    assert_eq!(code(&run(&["run", "--data", "absent.csv"], p)), 2);
}

#[test]
fn synth_writes_data_and_truth() {
    let dir = with_data();
    let data = text(dir.path().join("d/data.csv"));
    assert!(data.starts_with("x1,x2,x3,time,event\n"));
    assert_eq!(data.lines().count(), 601);
    let truth: serde_json::Value = serde_json::from_str(&text(dir.path().join("d/truth.json"))).unwrap();
    assert!(truth["censoring_fraction"].as_f64().unwrap() < 0.95);
}

#[test]
fn run_writes_every_output() {
    let dir = with_data();
    let p = dir.path();
    std::fs::write(
        p.join("cfg.toml"),
        "[paths]\ndata = \"d/data.csv\"\ntruth = \"d/truth.json\"\nout_dir = \"o\"\n[stacking]\ngamma = 0.05\n",
    )
    .unwrap();
    let o = run(&["run", "--config", "cfg.toml"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = text(p.join("o/report.txt"));
    for key in ["mean_auc\t", "integrated_brier\t", "raw_hazard_integrated_brier\t", "truth_curve_mae\t", "hazard\tcalibrated"] {
        assert!(report.contains(key), "missing {key:?} in\n{report}");
    }
    let curves = text(p.join("o/curves.csv"));
    assert!(curves.starts_with("patient_id,time,survival_prob\n"));
    assert_eq!(curves.lines().count(), 1 + 120 * 21);
    assert!(text(p.join("o/shape_functions.csv")).starts_with("term,bin_low,bin_high,contribution\n"));
    assert!(text(p.join("o/importance.csv")).starts_with("term,importance\n"));
    let model: serde_json::Value = serde_json::from_str(&text(p.join("o/model.json"))).unwrap();
    assert_eq!(model["schema"], "survstack-model/1");
}

#[test]
fn cox_run_has_no_gam_exports() {
    let dir = with_data();
    let p = dir.path();
    std::fs::write(p.join("cfg.toml"), "[model]\nkind = \"cox\"\n").unwrap();
    let o = run(&["run", "--config", "cfg.toml", "--data", "d/data.csv", "--out", "o"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text(p.join("o/report.txt")).contains("model\tcox"));
    assert!(!p.join("o/shape_functions.csv").exists());
}

#[test]
fn seed_changes_the_split() {
    let dir = with_data();
    let p = dir.path();
    for (seed, out) in [("1", "a"), ("2", "b")] {
        let o = run(&["run", "--data", "d/data.csv", "--seed", seed, "--out", out], p);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_ne!(text(p.join("a/report.txt")), text(p.join("b/report.txt")));
}

#[test]
fn standalone_commands_chain() {
    let dir = with_data();
    let p = dir.path();
    let ok = |args: &[&str]| {
        let o = run(args, p);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    ok(&["stack", "--data", "d/data.csv", "--gamma", "0.1", "--out", "s"]);
    assert!(text(p.join("s/stacked.csv")).starts_with("x1,x2,x3,stack_time,label\n"));
    ok(&["train", "--data", "d/data.csv", "--out", "m"]);
    ok(&["explain", "--model", "m/model.json", "--stacked", "s/stacked.csv", "--out", "m"]);
    assert!(text(p.join("m/importance.csv")).contains("stack_time,"));
    ok(&["predict", "--model", "m/model.json", "--data", "d/data.csv", "--grid", "1,2,4", "--out", "m"]);
    assert_eq!(text(p.join("m/curves.csv")).lines().count(), 1 + 600 * 3);
    ok(&["evaluate", "--train", "d/data.csv", "--test", "d/data.csv", "--curves", "m/curves.csv", "--out", "m"]);
    assert!(text(p.join("m/report.txt")).starts_with("mean_auc\t"));
    ok(&["select", "--data", "d/data.csv", "--k", "2", "--out", "sel"]);
    assert!(text(p.join("sel/selection.txt")).starts_with("method\tcontrolburn\n"));
}

#[test]
fn stage_failures_exit_with_1() {
    let dir = with_data();
    let p = dir.path();
    assert_eq!(code(&run(&["train", "--data", "d/data.csv", "--model", "cox", "--out", "m"], p)), 0);
    // curves for 2 patients against a 600-record test set
    std::fs::write(p.join("c.csv"), "patient_id,time,survival_prob\n0,1,0.9\n1,1,0.8\n").unwrap();
    let o = run(&["evaluate", "--train", "d/data.csv", "--test", "d/data.csv", "--curves", "c.csv"], p);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage `evaluate`"));
    std::fs::write(p.join("e.csv"), "x1,time,event\n0.5,1.0,0\n0.2,2.0,0\n").unwrap();
    assert_eq!(code(&run(&["train", "--data", "e.csv"], p)), 1);
    assert_eq!(code(&run(&["explain", "--model", "m/model.json"], p)), 2);
}

#[test]
fn compare_estimators_reports_truth() {
    let dir = with_data();
    let p = dir.path();
    std::fs::write(
        p.join("cfg.toml"),
        "[paths]\ndata = \"d/data.csv\"\ntruth = \"d/truth.json\"\n[stacking]\ngamma = 0.05\n[compare]\ntime = 3.0\nbins = 10\n",
    )
    .unwrap();
    let o = run(&["compare-estimators", "--config", "cfg.toml", "--out", "c"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = text(p.join("c/compare.txt"));
    for key in ["discrete\t", "exponential\t", "exponential_raw\t", "truth\t", "mae_vs_truth_exponential\t"] {
        assert!(summary.contains(key), "missing {key:?}");
    }
    let hist = text(p.join("c/compare_histogram.csv"));
    assert_eq!(hist.lines().count(), 11);
    let counts: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counts, 120);
    std::fs::write(p.join("cox.toml"), "[model]\nkind = \"cox\"\n").unwrap();
    assert_eq!(code(&run(&["compare-estimators", "--config", "cox.toml", "--data", "d/data.csv"], p)), 2);
}

#[test]
fn threads_flag_keeps_results() {
    let dir = with_data();
    let p = dir.path();
    for (t, out) in [("1", "a"), ("3", "b")] {
        let o = run(&["run", "--data", "d/data.csv", "--threads", t, "--out", out], p);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(text(p.join("a/report.txt")), text(p.join("b/report.txt")));
    assert_eq!(text(p.join("a/curves.csv")), text(p.join("b/curves.csv")));
}
