use std::fs;
use std::process::Command;

fn shortlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shortlab"))
}

#[test]
fn eta_check_succeeds_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[run]\ncommand = eta-check\n[params]\nn_hi = 20\n").unwrap();
    let out = dir.path().join("out");
    let st = shortlab()
        .args(["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--threads", "2"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let m = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(m.contains("\"eta_growth.json\""));
    assert!(out.join("timing.json").exists());
}

#[test]
fn bad_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[run]\ncommand = basin\n[sequence]\na = 1.5\n").unwrap();
    let out = shortlab().args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn hypothesis_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    let out = dir.path().join("out");
    fs::write(&cfg, format!("[run]\ncommand = prop12\nout_dir = {}\n[params]\nkdeg = 2\n", out.display())).unwrap();
    let o = shortlab().args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn print_config_resolves_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[run]\ncommand = disjoint\n").unwrap();
    let o = shortlab().args(["--config", cfg.to_str().unwrap(), "--seed", "9", "--print-config"]).output().unwrap();
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("seed = 9"));
    assert!(s.contains("dominant_axis = 3"));
}
