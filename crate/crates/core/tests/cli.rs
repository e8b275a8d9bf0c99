use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_convex-probe");

const SMALL: &str = r#"
seed = 5
[scene]
bound_M = 1.0
body = { shape = "ellipse", params = { a = 0.7, b = 0.5 } }
intensity = { profile = "sharp" }
[kernel]
family = "sobolev"
beta = 1.0
L = 1.0
[grid]
n = 256
[noise]
eps = 0.003
mode = "oracle"
[estimator]
r_grid_n = 128
[sweep]
eps = [0.03, 0.01, 0.003]
reps = 50
directions = 6
"#;

fn run(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--out").arg(dir);
    if let Some(text) = config {
        let path = dir.join("config.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn validate_kernel_passes_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(dir.path(), None, &["validate-kernel"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("pass"));
    assert_eq!(lines(&dir.path().join("kernel.csv")), 2);

    let overclaimed = SMALL.replace("L = 1.0", "L = 2.0");
    let bad = run(dir.path(), Some(&overclaimed), &["validate-kernel"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(fs::read_to_string(dir.path().join("kernel.csv")).unwrap().contains("false"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = run(dir.path(), Some("[kernel]\nfamily = \"boxcar\"\n"), &["estimate"]);
    assert_eq!(unknown.status.code(), Some(2));
    let out = run(dir.path(), Some(&SMALL.replace("eps = 0.003", "eps = 0.5")), &["estimate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn single_direction_commands_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let probe = run(dir.path(), Some(SMALL), &["probe", "--angle", "0.5"]);
    assert_eq!(probe.status.code(), Some(0), "{}", String::from_utf8_lossy(&probe.stderr));
    assert_eq!(lines(&dir.path().join("probe.csv")), 1 + 129);

    let est = run(dir.path(), Some(SMALL), &["estimate", "--angle", "-1.0"]);
    assert_eq!(est.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("estimate.csv")).unwrap();
    assert!(text.starts_with("direction,angle,h_true,h_hat,crossed,sigma_noise\n"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn reconstruct_writes_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), Some(SMALL), &["reconstruct", "--directions", "24"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("hausdorff="));
    assert_eq!(lines(&dir.path().join("reconstruction.csv")), 25);
    let svg = fs::read_to_string(dir.path().join("overlay.svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), 2);
}

#[test]
fn rates_are_reproducible_and_seeded() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = run(dir.path(), Some(SMALL), &["rates"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(c.path(), Some(SMALL), &["rates", "--seed", "6"]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["rates.csv", "summary.csv", "fit.csv", "diagnostics.csv", "overlay.svg"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_ne!(
        fs::read(a.path().join("rates.csv")).unwrap(),
        fs::read(c.path().join("rates.csv")).unwrap()
    );
    assert_eq!(lines(&a.path().join("rates.csv")), 1 + 3 * 50 * 6);
}

#[test]
fn calibrate_c3_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), Some(SMALL), &["calibrate-c3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("c3.csv")).unwrap();
    assert!(text.starts_with("eps,delta,quantile,c3,draws\n"));
    assert_eq!(text.lines().count(), 4);
    assert!(String::from_utf8_lossy(&out.stdout).contains("C3 = "));
}
