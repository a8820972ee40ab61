//! End-to-end tests of the binary: exit codes, file outputs and CSV
//! determinism.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbit-averager"))
        .args(args)
        .arg("--out")
        .arg(out_dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn average_preset_reports_equator_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["average", "--config", "theorem1-example"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("theta0 = -3.141592653590e0"));
    assert!(stdout.contains("root in region: true"));
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn average_zero_perturbation_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "zero.toml", "[scenario]\nid = \"S1\"\n");
    let out = run(&["average", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn average_out_of_region_root_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "outregion.toml",
        "[scenario]\nid = \"S1\"\n\n[coefficients]\nb0 = 3.141592653589793\na1 = 1.0\nb2 = 1.0\n",
    );
    let out = run(&["average", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.toml", "[scenario]\nid = \"S9\"\n");
    let out = run(&["average", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let missing = run(&["average", "--config", "/does/not/exist.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn verify_preset_certifies_and_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["verify", "--config", "theorem1-example", "--jobs", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("status: verified"));
    let csv1 = std::fs::read(dir.path().join("sweep.csv")).unwrap();
    assert!(csv1.starts_with(b"eps,phi,r,residual"));

    // byte-identical output for an identical run
    let dir2 = tempfile::tempdir().unwrap();
    let out2 = run(
        &["verify", "--config", "theorem1-example", "--jobs", "4"],
        dir2.path(),
    );
    assert_eq!(out2.status.code(), Some(0));
    let csv2 = std::fs::read(dir2.path().join("sweep.csv")).unwrap();
    assert_eq!(csv1, csv2);
}

#[test]
fn verify_with_escaping_epsilon_exits_4_and_lists_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bigeps.toml",
        "[scenario]\nid = \"S1\"\n\n[coefficients]\na2 = 1.0\nb1 = 1.0\n\n[epsilons]\nvalues = [0.5, 1e-2, 5e-3]\n",
    );
    let out = run(&["verify", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("verification failed (rows: 0.5)"));
}

#[test]
fn selftest_passes_and_fault_injection_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(&["selftest", "--config", "theorem1-example"], dir.path());
    assert_eq!(ok.status.code(), Some(0));

    let faulty = run(
        &[
            "selftest",
            "--config",
            "theorem1-example",
            "--fault-inject",
            "integrand-table",
        ],
        dir.path(),
    );
    assert_eq!(faulty.status.code(), Some(5));
}

#[test]
fn selftest_is_seed_stable() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["1", "2", "3"] {
        let out = Command::new(env!("CARGO_BIN_EXE_orbit-averager"))
            .args(["selftest", "--config", "theorem1-example"])
            .arg("--out")
            .arg(dir.path())
            .env("ORBIT_AVERAGER_SEED", seed)
            .output()
            .expect("binary runs");
        assert_eq!(out.status.code(), Some(0), "seed {seed}");
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.contains(&format!("selftest seed {seed}")));
    }
}

#[test]
fn sweep_probe_reports_single_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "probe.toml",
        "[scenario]\nid = \"S1\"\n\n[coefficients]\na2 = 1.0\nb1 = 1.0\n\n[epsilons]\nvalues = [1e-2]\n",
    );
    let out = run(&["sweep", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("1 distinct certified cycle(s)"));
    assert!(dir.path().join("probe.csv").exists());
}
