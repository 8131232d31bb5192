use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chcbf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = chcbf(&["simulate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(chcbf(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[stepper]\ndtt = 0.1\n");
    let o = chcbf(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dtt"), "{}", stderr(&o));
}

#[test]
fn out_of_range_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[params]\nnu = -1.0\n");
    let o = chcbf(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let o = chcbf(&["simulate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn zero_horizon_simulation_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[domain]\nmodes = 16\n[experiment]\nt_final = 0.0\nsnapshot_interval = 1\n",
    );
    let out = dir.path().join("out");
    let o = chcbf(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS finite energy"));
    assert!(out.join("snapshot_00000.bin").is_file());
    assert!(out.join("simulate.json").is_file());
    let csv = fs::read_to_string(out.join("energy.csv")).unwrap();
    // header plus the initial record
    assert_eq!(csv.lines().count(), 2, "{csv}");
    let json = fs::read_to_string(out.join("simulate.json")).unwrap();
    assert!(json.contains("\"config_hash\""));
}

#[test]
fn short_simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[domain]\nmodes = 8\n[experiment]\nt_final = 0.01\n",
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = chcbf(&[
            "simulate",
            "--config",
            &cfg,
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(out.join("energy.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn verify_operators_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = chcbf(&["verify-operators", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
    assert!(dir.path().join("verify_operators.json").is_file());
}

#[test]
fn uniqueness_runs_on_a_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[domain]\nmodes = 16\n[experiment]\nt_final = 0.02\n",
    );
    let o = chcbf(&["uniqueness", "--config", &cfg, "--sequential"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
}
