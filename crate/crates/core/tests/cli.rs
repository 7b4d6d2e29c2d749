use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_measure-pgm"))
        .args(args)
        .current_dir(dir)
        .env("MPGM_WORKERS", "1")
        .output()
        .unwrap()
}

fn meta(path: &Path, key: &str) -> Option<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
}

#[test]
fn flags_override_config_and_values_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "# defaults\nproblem = lb:I\ngrid-n = 500\niters = 300\ndgf = ent\n").unwrap();
    let out = cli(dir.path(), &["run", "--config", "c.cfg", "--iters", "200", "--out", "t.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = dir.path().join("t.csv");
    assert_eq!(meta(&trace, "iters").as_deref(), Some("200"));
    assert_eq!(meta(&trace, "grid_n").as_deref(), Some("500"));
    assert_eq!(meta(&trace, "dgf").as_deref(), Some("ent"));
    assert_eq!(meta(&trace, "method").as_deref(), Some("pgm"));
    assert_eq!(meta(&trace, "config_file").as_deref(), Some("c.cfg"));
    assert_eq!(meta(&trace, "inf_source").as_deref(), Some("closed_form"));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "problem=lb:I\ndgf=ent\nunknown_key=1\n").unwrap();
    for args in [
        &["run", "--problem", "lb:I", "--bogus"][..],
        &["run", "--config", "bad.cfg"],
        &["run", "--problem", "lb:III", "--dgf", "ent"],
        &["run", "--problem", "lb:I", "--dgf", "p:0.5"],
        &["run", "--problem", "lb:I", "--dgf", "ent", "--iters", "0"],
        &["run", "--problem", "lb:I", "--dgf", "ent,p:2", "--out", "x.csv"],
        &["psi", "--problem", "relu"],
        &["nonsense"],
    ] {
        let out = cli(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = Command::new(env!("CARGO_BIN_EXE_measure-pgm"))
        .args(["verify"])
        .env("MPGM_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_2_and_keep_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["rates", "missing.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(
        dir.path(),
        &["run", "--problem", "deconv1d", "--grid-n", "50", "--dgf", "ent", "--iters", "50", "--step", "1e300", "--out", "x.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("x.csv").exists());
}

#[test]
fn verify_fails_with_exit_3_under_sign_flip() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["verify", "--flip-gradient-sign"]);
    assert_eq!(out.status.code(), Some(3));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().any(|l| l.starts_with("FAIL") && l.contains("fd")), "{table}");
}

#[test]
fn run_then_rates_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(
        dir.path(),
        &["run", "--problem", "lb:I", "--grid-n", "2000", "--dgf", "p:2,ent", "--method", "pgm,apgm", "--iters", "2000", "--out-dir", "traces"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traces: Vec<String> = fs::read_dir(dir.path().join("traces"))
        .unwrap()
        .map(|e| e.unwrap().path().display().to_string())
        .collect();
    assert_eq!(traces.len(), 4);
    let mut args = vec!["rates", "--fit-lo", "100", "--out", "rates.csv"];
    args.extend(traces.iter().map(String::as_str));
    let out = cli(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert!(report.starts_with("file,problem,dgf,method,slope,r2"));
    assert_eq!(report.lines().count(), 5);
}

#[test]
fn psi_writes_envelope_with_zero_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["psi", "--problem", "lb:II*", "--grid-n", "2000", "--out", "psi.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("psi.csv")).unwrap();
    let mut rows = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(rows.next(), Some("alpha,psi_hat,eps_star"));
    assert!(rows.next().unwrap().starts_with("0"));
}
