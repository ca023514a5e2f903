use std::path::Path;
use std::process::{Command, Output};

fn sega(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sega")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        "name = \"small\"\niterations = 200\nseeds = [0, 1]\nrecord_every = 10\n\n[problem]\nkind = \"synthetic\"\nspectrum = 1\nn = 8\n\n[method]\nsolver = \"sega\"\n{extra}\n[output]\ndir = \"out\"\n"
    );
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_one_trace_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = sega(&["run", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("sega seed=")).count(), 2);
    assert!(tmp.path().join("out/small_seed0.csv").exists());
    assert!(tmp.path().join("out/small_seed1.csv").exists());
}

#[test]
fn seed_flag_replaces_seed_list() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = sega(&["run", &cfg, "--seed", "7", "--override", "iterations=20"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed=7 k=20"));
    assert!(!tmp.path().join("out/small_seed0.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "stepsize_typo = 1\n");
    let out = sega(&["run", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("method"));

    let cfg = write_config(tmp.path(), "");
    assert_eq!(sega(&["run", &cfg, "--override", "problem.spectrum=9"], tmp.path()).status.code(), Some(2));
    assert_eq!(sega(&["run", &cfg, "--override", "no_equals_sign"], tmp.path()).status.code(), Some(2));
    assert_eq!(sega(&["run", "missing.toml"], tmp.path()).status.code(), Some(2));
    assert_eq!(sega(&["run", &cfg, "--trajectory"], tmp.path()).status.code(), Some(2));
}

#[test]
fn plot_renders_svg_from_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    assert_eq!(sega(&["run", &cfg], tmp.path()).status.code(), Some(0));
    let out = sega(&["plot", "out/small_seed0.csv", "out/small_seed1.csv", "--x", "oracle", "--y", "dist", "--out", "p.svg"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(tmp.path().join("p.svg")).unwrap().contains("<svg"));
    assert_ne!(sega(&["plot", "--out", "p.svg"], tmp.path()).status.code(), Some(0));
    assert_ne!(sega(&["plot", "nothing.csv", "--out", "q.svg"], tmp.path()).status.code(), Some(0));
}

#[test]
fn verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sega(&["verify"], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().count() > 0);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
}
