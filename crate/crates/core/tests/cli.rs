use std::path::Path;
use std::process::Command;

use marcinkiewicz::functions::read_grid_text;
use marcinkiewicz::harness::{exit_code, CsvTable, EXIT_BLOW_UP, EXIT_CONFIG, EXIT_USAGE};
use marcinkiewicz::Error;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_marcinkiewicz"))
}

fn code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary runs").status.code().expect("exit code")
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.cfg");
    assert_eq!(code(bin().arg("exp-uniformity").arg("--config").arg(&missing)), EXIT_CONFIG);
}

#[test]
fn bad_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "grid=64\nbogus=1\n").unwrap();
    assert_eq!(code(bin().arg("eval").arg("--config").arg(&cfg)), EXIT_CONFIG);
}

#[test]
fn usage_errors_exit_64() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&mut bin()), EXIT_USAGE);
    assert_eq!(code(bin().arg("--help")), 0);
}

#[test]
fn blow_up_maps_to_exit_3() {
    let e = Error::DominationBlowUp { level: 0, index: vec![0, 0], d: 1.0 };
    assert_eq!(exit_code(&e), EXIT_BLOW_UP);
}

fn eval_into(dir: &Path) {
    let out = bin()
        .args(["eval", "--grid", "64", "--beta", "0.1", "--out"])
        .arg(dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_writes_grid_and_norms() {
    let dir = tempfile::tempdir().unwrap();
    eval_into(dir.path());
    let grid = std::fs::read_to_string(dir.path().join("mu_beta_0.1.grid")).unwrap();
    let f = read_grid_text(&grid).unwrap();
    assert_eq!(f.grid().points_per_axis(), 64);
    let t = CsvTable::read(&dir.path().join("eval_norms.csv")).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.column_f64("beta").unwrap()[0] == 0.1);
    assert!(dir.path().join("eval_norms.csv.provenance").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    eval_into(a.path());
    eval_into(b.path());
    for name in ["eval_norms.csv", "mu_beta_0.1.grid"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn report_summarizes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |cmd: &str| {
        code(
            bin()
                .args([cmd, "--grid", "32", "--beta", "0.25,0.1", "--out"])
                .arg(dir.path()),
        )
    };
    assert_eq!(run("exp-uniformity"), 0);
    assert_eq!(run("exp-multiplier"), 0);
    let out = bin().arg("report").arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("uniformity weight=1 rows=2"), "{text}");
    assert!(text.contains("multiplier rows="), "{text}");
}

#[test]
fn report_on_empty_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("report").arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no experiment CSVs found"));
}
