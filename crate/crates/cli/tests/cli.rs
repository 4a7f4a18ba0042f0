use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use balfuse_cli::config::{IntervalConfig, StateConfig, PRESETS};
use balfuse_cli::{preset, run_pipeline, run_subcommand, CliError, RunConfig, Subcommand};

const STAGES: [&str; 4] = ["trajectory.csv", "forward.csv", "backward.csv", "smoothed.csv"];

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Ten nodes: observed, gap, observed.
fn tiny(out: &Path) -> RunConfig {
    let mut cfg = preset("paper-example-coarse").unwrap();
    cfg.horizon = 0.9;
    cfg.step = 0.1;
    cfg.seed = 17;
    cfg.out = out.to_path_buf();
    let iv = |start, end, state| IntervalConfig { start, end, state };
    cfg.pattern.intervals = vec![
        iv(0.0, 0.3, StateConfig::Observed),
        iv(0.3, 0.6, StateConfig::Gap),
        iv(0.6, 0.9, StateConfig::Observed),
    ];
    cfg
}

#[test]
fn presets_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in PRESETS {
        let cfg = preset(name).unwrap();
        let path = dir.path().join(format!("{name}.json"));
        fs::write(&path, cfg.to_json()).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), cfg.to_json());
    }
}

#[test]
fn malformed_dimensions_name_the_field() {
    let text = preset("paper-example-coarse").unwrap().to_json();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["system"]["b"] = serde_json::json!([[0.0, 0.0], [1.0, 0.0, 3.0]]);
    match RunConfig::from_json(&v.to_string()) {
        Err(CliError::Config { field, message }) => {
            assert_eq!(field, "system.b");
            assert!(message.contains("row 1"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    v["system"]["b"] = serde_json::json!([[0.0, 0.0], [1.0, 0.0]]);
    v["system"]["c"] = serde_json::json!([[1.0, 0.0], [0.0, 1.0]]);
    match RunConfig::from_json(&v.to_string()) {
        Err(CliError::Config { field, .. }) => assert_eq!(field, "system.c"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn syntax_errors_carry_a_line() {
    match RunConfig::from_json("{\n  \"horizon\": 5.0,\n  \"step\": ,\n}") {
        Err(CliError::Config { field, .. }) => assert!(field.starts_with("line 3"), "{field}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn later_stages_need_earlier_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    match run_subcommand(Subcommand::Smooth, &cfg) {
        Err(CliError::MissingInput(path)) => assert!(path.ends_with("forward.csv")),
        other => panic!("{other:?}"),
    }
    match run_subcommand(Subcommand::Filter, &cfg) {
        Err(CliError::MissingInput(path)) => assert!(path.ends_with("trajectory.csv")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn staged_run_matches_one_shot_run() {
    let staged = tempfile::tempdir().unwrap();
    let whole = tempfile::tempdir().unwrap();
    let cfg = tiny(staged.path());
    for cmd in [Subcommand::Simulate, Subcommand::Filter, Subcommand::Smooth] {
        run_subcommand(cmd, &cfg).unwrap();
    }
    run_pipeline(&tiny(whole.path())).unwrap();
    for name in STAGES {
        let a = fs::read(staged.path().join(name)).unwrap();
        let b = fs::read(whole.path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = preset("paper-example-coarse").unwrap();
    cfg.out = a.path().to_path_buf();
    run_pipeline(&cfg).unwrap();
    cfg.out = b.path().to_path_buf();
    run_pipeline(&cfg).unwrap();
    for name in STAGES.iter().chain(&["report.json"]) {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    cfg.seed += 1;
    let c = tempfile::tempdir().unwrap();
    cfg.out = c.path().to_path_buf();
    run_subcommand(Subcommand::Simulate, &cfg).unwrap();
    assert_ne!(fs::read(a.path().join(STAGES[0])).unwrap(), fs::read(c.path().join(STAGES[0])).unwrap());
}

/// Set `BALFUSE_BLESS=1` to regenerate the golden files after an intended format change.
#[test]
fn golden_ten_node_run() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&tiny(dir.path())).unwrap();
    let bless = std::env::var_os("BALFUSE_BLESS").is_some();
    for name in STAGES {
        let got = fs::read_to_string(dir.path().join(name)).unwrap();
        let path = golden_dir().join(name);
        if bless {
            fs::write(&path, &got).unwrap();
            continue;
        }
        let want = fs::read_to_string(&path).unwrap();
        assert_eq!(got.lines().count(), 11, "{name}");
        assert!(!got.contains('\r'));
        assert_eq!(got, want, "{name} drifted from the golden copy");
    }
}

#[test]
fn report_is_a_flat_map_of_checks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("paper-example-coarse").unwrap();
    cfg.out = dir.path().to_path_buf();
    let report = run_pipeline(&cfg).unwrap();
    assert!(report.all_pass(), "{:?}", report.failures());
    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let map = v.as_object().unwrap();
    assert_eq!(map.len(), report.checks.len());
    for (name, entry) in map {
        let e = entry.as_object().unwrap();
        let keys: Vec<_> = e.keys().map(String::as_str).collect();
        assert_eq!(keys, ["pass", "residual", "tolerance"], "{name}");
    }
    assert!(map["oracle_max_error.y"]["residual"].as_f64().unwrap() <= 1e-6);
    assert!(map["gap_trace_growth"]["tolerance"].is_null());
}

#[test]
fn binary_verify_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_balfuse"))
        .args(["verify", "--preset", "paper-example-coarse", "--replications", "400", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("mc_increment_normalization"));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn binary_reports_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_balfuse"))
        .args(["smooth", "--preset", "paper-example-coarse", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("forward.csv"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let cfg = tiny(&dir.path().join("a"));
    fs::write(&cfg_path, cfg.to_json()).unwrap();
    let run = |seed: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_balfuse"))
            .args(["simulate", "--seed", seed, "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(dir.path().join(out).join("trajectory.csv")).unwrap()
    };
    run_subcommand(Subcommand::Simulate, &cfg).unwrap();
    let base = fs::read(dir.path().join("a/trajectory.csv")).unwrap();
    assert_eq!(run("17", "b"), base);
    assert_ne!(run("18", "c"), base);
}
