use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riccati-hjb"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(config: &Path, out: &Path, sets: &[&str], sub: &str) -> (i32, String) {
    let mut cmd = bin();
    cmd.arg("--config").arg(config).arg("--out").arg(out);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    let o = cmd.arg(sub).env("RUST_LOG", "error").output().expect("binary runs");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned())
}

#[test]
fn alpha_table_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&data("synthetic5.conf"), dir.path(), &["h_phi=0.5"], "alpha-table");
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.path().join("alpha_table.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("phi,alpha,alpha_prime"), "{header}");
    assert_eq!(text.lines().count(), 1 + 33);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&data("synthetic5.conf"), dir.path(), &["no_such_key=1"], "solve");
    assert_eq!(code, 2);
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&dir.path().join("absent.conf"), dir.path(), &[], "solve");
    assert_eq!(code, 2);
}

#[test]
fn bad_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&data("synthetic5.conf"), dir.path(), &["x_left=3", "x_right=1"], "solve");
    assert_eq!(code, 2);
}

#[test]
fn benchmark_outside_eoc_window_fails_acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["h_ladder=0.2,0.1", "eoc_min=2.5", "eoc_max=3"];
    let (code, stdout) = run(&data("synthetic5.conf"), dir.path(), &sets, "benchmark");
    assert_eq!(code, 4, "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "h,errL2,eocL2,errLinf,eocLinf");
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("error_profile_h0.2.csv").exists());
}

#[test]
fn solve_exports_fields() {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["x_left=-1", "x_right=1", "h=0.04", "x_star=0", "snapshots=2"];
    let (code, _) = run(&data("synthetic5.conf"), dir.path(), &sets, "solve");
    assert_eq!(code, 0);
    for f in ["V.csv", "psi.csv", "theta.csv", "alpha_table.csv", "manifest.txt", "phi_tau_0.0000.csv", "phi_tau_1.0000.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let v = std::fs::read_to_string(dir.path().join("V.csv")).unwrap();
    assert_eq!(v.lines().next().unwrap(), "x,tau,V");
    assert_eq!(v.lines().count(), 1 + 51 * 3);
}

#[test]
fn crosscheck_with_tiny_tolerance_fails_acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["h=0.05", "crosscheck_tol=1e-12"];
    let (code, _) = run(&data("d0_crosscheck.conf"), dir.path(), &sets, "crosscheck");
    assert_eq!(code, 4);
    let manifest = std::fs::read_to_string(dir.path().join("crosscheck_manifest.txt")).unwrap();
    assert!(manifest.contains("v_rel_discrepancy"));
}

#[test]
fn portfolio_writes_one_directory_per_d() {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["h=0.05", "x_left=-1", "x_right=3", "x_star=0", "d_values=0,8"];
    let (code, stdout) = run(&data("synthetic5.conf"), dir.path(), &sets, "portfolio");
    assert_eq!(code, 0, "{stdout}");
    assert!(dir.path().join("d_0/V.csv").exists());
    assert!(dir.path().join("d_8/V.csv").exists());
    let summary = std::fs::read_to_string(dir.path().join("portfolio_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn coarse_portfolio_grid_is_a_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&data("synthetic5.conf"), dir.path(), &["h=0.05", "d_values=0"], "portfolio");
    assert_eq!(code, 3);
}
