//! Black-box tests of the `coilalign` binary: subcommands, flags, file
//! outputs, and exit codes (0 ok, 2 config, 3 data, 4 ambiguous).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coilalign"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Simulate the bundled lab scenario into `dir`, with a lowered read rate so
/// the whole suite stays quick; returns the log path.
fn simulate_lab(dir: &Path) -> PathBuf {
    let lab = scenario("lab.json");
    let out = run(&[
        "simulate",
        "--scenario",
        lab.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    dir.join("reads.csv")
}

#[test]
fn simulate_writes_log_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let log = simulate_lab(dir.path());
    let text = fs::read_to_string(&log).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epc,t_s,phase_deg,rssi_dbm,channel_mhz");
    assert_eq!(text.lines().count(), 3001, "header + 3000 rows");

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reads.truth.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["true_start"][1], 0.2);
    assert_eq!(sidecar["seed"], 0);
}

#[test]
fn simulate_seed_changes_phases_not_count() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let lab = scenario("lab.json");
    for (dir, seed) in [(&dir_a, "1"), (&dir_b, "2")] {
        let out = run(&[
            "simulate",
            "--scenario",
            lab.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code(&out), 0);
    }
    let a = fs::read_to_string(dir_a.path().join("reads.csv")).unwrap();
    let b = fs::read_to_string(dir_b.path().join("reads.csv")).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
    assert_ne!(a, b);
}

#[test]
fn estimate_recovers_start_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let log = simulate_lab(dir.path());
    let est_dir = dir.path().join("est");
    let out = run(&[
        "estimate",
        "--scenario",
        scenario("lab.json").to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
        "--out",
        est_dir.to_str().unwrap(),
        "--grid-res",
        "0.01",
        "--map-format",
        "pgm",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(est_dir.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(report["estimate"]["ambiguous"], false);
    let err = report["error_m"].as_f64().unwrap();
    assert!(err <= 0.02, "error {err}");
    let lat = report["estimate"]["lateral_offset_m"].as_f64().unwrap();
    assert!((lat - 0.2).abs() < 0.02, "lateral {lat}");

    let pgm = fs::read(est_dir.join("map.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
}

#[test]
fn estimate_without_prior_on_symmetric_map_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let log = simulate_lab(dir.path());
    let out = run(&[
        "estimate",
        "--scenario",
        scenario("lab.json").to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
        "--out",
        dir.path().join("amb").to_str().unwrap(),
        "--grid-res",
        "0.01",
        "--prior",
        "none",
    ]);
    assert_eq!(code(&out), 4, "ambiguous estimate must exit 4");
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("amb").join("estimate.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["estimate"]["ambiguous"], true);
}

#[test]
fn missing_scenario_is_config_error() {
    let out = run(&["simulate", "--scenario", "/nonexistent.json", "--out", "/tmp/x"]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn invalid_scenario_json_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"tags\": []").unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn single_read_log_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("one.csv");
    fs::write(
        &log,
        "epc,t_s,phase_deg,rssi_dbm,channel_mhz\nE20034120000000000000001,0.000000,10.000000,-60.000000,910.000000\n",
    )
    .unwrap();
    let out = run(&[
        "estimate",
        "--scenario",
        scenario("lab.json").to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient"));
}

#[test]
fn malformed_log_strict_vs_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let log = simulate_lab(dir.path());
    // Corrupt one mid-file row.
    let mut text = fs::read_to_string(&log).unwrap();
    let bad_row_start = text.lines().nth(100).unwrap().to_string();
    text = text.replace(&bad_row_start, "E20034120000000000000001,not_a_number,10.0,-60.0,910.0");
    fs::write(&log, text).unwrap();

    let strict = run(&[
        "estimate",
        "--scenario",
        scenario("lab.json").to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
        "--out",
        dir.path().join("s").to_str().unwrap(),
        "--grid-res",
        "0.02",
    ]);
    assert_eq!(code(&strict), 3);
    assert!(String::from_utf8_lossy(&strict.stderr).contains("line 101"));

    let lenient = run(&[
        "estimate",
        "--scenario",
        scenario("lab.json").to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
        "--out",
        dir.path().join("l").to_str().unwrap(),
        "--grid-res",
        "0.02",
        "--lenient",
    ]);
    assert_eq!(code(&lenient), 0, "stderr: {}", String::from_utf8_lossy(&lenient.stderr));
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("skipped 1"));
}

#[test]
fn replay_field_scenario_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let field = scenario("field.json");
    let sim = run(&[
        "simulate",
        "--scenario",
        field.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&sim), 0, "stderr: {}", String::from_utf8_lossy(&sim.stderr));
    assert!(dir.path().join("gps.csv").exists());

    let out = run(&[
        "replay",
        "--scenario",
        field.to_str().unwrap(),
        "--gps",
        dir.path().join("gps.csv").to_str().unwrap(),
        "--log",
        dir.path().join("reads.csv").to_str().unwrap(),
        "--out",
        dir.path().join("replay").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("replay").join("estimate.json")).unwrap(),
    )
    .unwrap();
    let err = report["error_m"].as_f64().unwrap();
    assert!(err < 0.15, "replay error {err}");
}

#[test]
fn estimate_never_errors_on_bundled_simulate_output() {
    // Same invariant for both bundled scenarios: estimate (known trajectory)
    // on freshly simulated logs exits 0.
    for name in ["lab.json", "field.json"] {
        let dir = tempfile::tempdir().unwrap();
        let sc = scenario(name);
        let sim = run(&[
            "simulate",
            "--scenario",
            sc.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&sim), 0, "{name} simulate");
        let out = run(&[
            "estimate",
            "--scenario",
            sc.to_str().unwrap(),
            "--log",
            dir.path().join("reads.csv").to_str().unwrap(),
            "--out",
            dir.path().join("est").to_str().unwrap(),
            "--grid-res",
            "0.01",
        ]);
        assert_eq!(
            code(&out),
            0,
            "{name} estimate stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn replay_with_non_covering_gps_is_range_error() {
    let dir = tempfile::tempdir().unwrap();
    let field = scenario("field.json");
    let sim = run(&[
        "simulate",
        "--scenario",
        field.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&sim), 0);
    // Truncate the GPS track to its first second.
    let gps = fs::read_to_string(dir.path().join("gps.csv")).unwrap();
    let truncated: Vec<&str> = gps.lines().take(30).collect();
    fs::write(dir.path().join("gps.csv"), truncated.join("\n") + "\n").unwrap();

    let out = run(&[
        "replay",
        "--scenario",
        field.to_str().unwrap(),
        "--gps",
        dir.path().join("gps.csv").to_str().unwrap(),
        "--log",
        dir.path().join("reads.csv").to_str().unwrap(),
        "--out",
        dir.path().join("replay").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cover"));
}

/// A cut-down lab variant so sweep runs stay quick.
fn write_quick_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("quick.json");
    fs::write(
        &path,
        r#"{
  "tags": [{"epc": "E20034120000000000000001", "position": [0.75, 0.0, 0.0]}],
  "trajectory": {"type": "stepped", "start": [0.0, 0.2, 0.0],
                 "step": [0.005, 0.0, 0.0], "dwell_s": 0.1, "n_steps": 301},
  "read_rate_hz": 20.0,
  "grid": {
    "x": {"min": -0.1, "max": 0.1, "resolution_m": 0.01},
    "y": {"min": -0.4, "max": 0.4, "resolution_m": 0.01},
    "z": {"fixed": 0.0}
  },
  "side_prior": "left"
}"#,
    )
    .unwrap();
    path
}

#[test]
fn sweep_writes_stats_table() {
    let dir = tempfile::tempdir().unwrap();
    let quick = write_quick_scenario(dir.path());
    let out = run(&[
        "sweep",
        "--scenario",
        quick.to_str().unwrap(),
        "--param",
        "phase_sigma",
        "--values",
        "0,15",
        "--trials",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "77",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "param,value,trials,median_m,mean_m,p90_m,max_m");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("phase_sigma,0.000000,3,"));
    assert!(lines[2].starts_with("phase_sigma,15.000000,3,"));
}

#[test]
fn sweep_rejects_unknown_param() {
    let out = run(&[
        "sweep",
        "--scenario",
        scenario("lab.json").to_str().unwrap(),
        "--param",
        "banana",
        "--values",
        "1",
        "--trials",
        "1",
        "--out",
        "/tmp/x",
    ]);
    assert_eq!(code(&out), 2);
}
