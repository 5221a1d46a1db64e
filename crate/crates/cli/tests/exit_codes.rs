use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nsch(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsch"))
        .args(args)
        .env("NSCH_OUTPUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "\
[domain]
Lx = 3.2
Ly = 3.2
[grid]
nx = 16
ny = 16
[time]
dt = 1e-3
t_end = 5e-3
[output]
every = 2
[init]
kind = spinodal
amplitude = 0.3
modes = 2
seed = 3
velocity = shear
u_magnitude = 0.2
";

#[test]
fn check_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nsch(&["check"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("summation by parts"));
}

#[test]
fn missing_dt_exits_two_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("dt = 1e-3\n", ""));
    let o = nsch(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("time.dt"));
}

#[test]
fn unknown_key_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}bogus = 1\n"));
    let o = nsch(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("init.bogus"));
}

#[test]
fn cfl_violation_exits_two_before_stepping() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SMALL.replace("dt = 1e-3", "dt = 1.0").replace("t_end = 5e-3", "t_end = 2.0")
        + "[solver]\nstrict_energy = true\n";
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &body);
    let o = nsch(&["run", &cfg], &out);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CFL"));
    assert!(!out.join("diagnostics.csv").exists());
}

#[test]
fn run_writes_csv_and_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = nsch(&["run", &cfg], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(out.join("snapshot_00000004.bin").exists());
}

#[test]
fn unreadable_snapshot_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.bin");
    fs::write(&bad, b"not a snapshot").unwrap();
    let body = format!("{SMALL}[stationary]\nsnapshot = {}\n", bad.display());
    let cfg = write_config(tmp.path(), &body);
    let o = nsch(&["stationary", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn stationary_and_weakstrong_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = nsch(&["stationary", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("stationary.bin").exists());
    let o = nsch(&["weakstrong", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("weakstrong.csv")).unwrap();
    assert!(csv.starts_with("t,D_eps,D_half_eps\n"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(nsch(&["frobnicate"], tmp.path()).status.code(), Some(2));
}
