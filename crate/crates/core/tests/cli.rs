use std::path::Path;
use std::process::Command;

fn homlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_homlab"))
}

fn fixtures() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[test]
fn approx_prints_json() {
    let out = homlab().args(["approx", "--alpha", "0.3433333333333333", "--Q", "30"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["approximation"]["q"], 3);
    assert_eq!(v["certificate"]["valid"], true);
}

#[test]
fn invalid_input_exits_with_two() {
    let out = homlab().args(["approx", "--alpha", "0.5", "--Q", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Q"));
}

#[test]
fn sweep_writes_outputs_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = homlab()
        .args(["--threads", "2", "sweep-cz", "--config"])
        .arg(fixtures().join("golden.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "rates.csv", "profile.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let rates = std::fs::read(dir.path().join("rates.csv")).unwrap();
    assert_eq!(rates, std::fs::read(fixtures().join("golden_rates.csv")).unwrap());
}

#[test]
fn failing_verdict_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    std::fs::write(
        &cfg,
        "[coefficient]\nexpr = \"2 + sin(2*pi*y1)\"\n[family]\nrule = \"single\"\ndyadic = [2, 5]\n[cz]\nslope_tol = 1e-9\n",
    )
    .unwrap();
    let out = homlab().args(["sweep-cz", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[coefficient]\nexpr = \"2\"\nscale = 3\n[family]\nrule = \"single\"\neps1 = [0.1]\n").unwrap();
    let out = homlab().args(["sweep-cz", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scale") && err.contains("coefficient"), "{err}");
}

#[test]
fn cell_and_solve_subcommands() {
    let out = homlab().args(["cell", "--expr", "2 + sin(2*pi*y1)", "--cells", "128"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let a = v["effective"]["value"][0][0].as_f64().unwrap();
    assert!((a - 3f64.sqrt()).abs() < 1e-10);

    let dir = tempfile::tempdir().unwrap();
    let out = homlab()
        .args(["solve", "--expr", "2 + sin(2*pi*y1)", "--scales", "0.1", "--F", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = homlab::grid::load_grid(&dir.path().join("u.hlg")).unwrap();
    assert_eq!(grid.fields[0].cells, 160);
}

#[test]
fn reperiodize_subcommand() {
    let out = homlab()
        .args(["reperiodize", "--expr", "(2 + sin(2*pi*y1))*(2 + cos(2*pi*y2))", "--scales", "1,0.3433333333333333", "--Q", "30"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["approx"]["q"], 3);
    assert_eq!(v["separated"], true);
}
