use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn qheat(command: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qheat"))
        .args([command, config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .expect("binary runs")
}

fn code(command: &str, config: &Path, out: &Path) -> i32 {
    qheat(command, config, out).status.code().unwrap_or(-1)
}

/// Rows of a CSV artifact, header dropped.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, file) in [
        ("direct", "bad_q.toml"),
        ("inverse", "missing_eta.toml"),
        ("direct", "unknown_field.toml"),
        ("direct", "mismatched_modes.toml"),
        ("direct", "command_mismatch.toml"),
        ("direct", "bad_epsilon.toml"),
        ("inverse", "bad_g.toml"),
        ("sweep", "empty_q_list.toml"),
        ("direct", "wrong_beta.toml"),
    ] {
        let out = qheat(cmd, &fixture(file), dir.path());
        assert_eq!(out.status.code(), Some(2), "{cmd} {file}");
        assert!(!out.stderr.is_empty(), "{cmd} {file} should explain the failure");
    }
}

#[test]
fn missing_config_file_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code("direct", &dir.path().join("absent.toml"), dir.path()), 2);
}

#[test]
fn failed_checks_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code("verify", &fixture("wrong_beta.toml"), &dir.path().join("a")), 1);
    assert_eq!(code("verify", &fixture("short_truncation.toml"), &dir.path().join("b")), 1);
    assert_eq!(code("direct", &fixture("short_truncation.toml"), &dir.path().join("c")), 1);
}

#[test]
fn bundled_configs_pass_every_command() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["direct", "inverse", "verify"] {
        let out = qheat(cmd, &bundled("involution.toml"), &dir.path().join(cmd));
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stdout));
    }
    assert_eq!(code("sweep", &bundled("sweep.toml"), &dir.path().join("sweep")), 0);
    assert!(dir.path().join("verify/verify_report.json").exists());
    assert!(dir.path().join("sweep/sweep.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code("inverse", &bundled("involution.toml"), &a), 0);
    assert_eq!(code("inverse", &bundled("involution.toml"), &b), 0);
    for name in ["source.csv", "trajectory.csv", "diagnostics.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_data_gives_zero_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code("direct", &fixture("zero_data.toml"), &dir.path().join("d")), 0);
    for row in rows(&dir.path().join("d/trajectory.csv")) {
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(code("inverse", &fixture("zero_inverse.toml"), &dir.path().join("i")), 0);
    for row in rows(&dir.path().join("i/source.csv")) {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn trajectory_is_ascending_in_time_with_one_based_modes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code("direct", &fixture("landau.toml"), dir.path()), 0);
    let table = rows(&dir.path().join("trajectory.csv"));
    let times: Vec<f64> = table.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(table[0][1], "1");
}

#[test]
fn direct_output_feeds_the_inverse_solver() {
    let dir = tempfile::tempdir().unwrap();
    let forward = dir.path().join("forward");
    assert_eq!(code("direct", &fixture("roundtrip_direct.toml"), &forward), 0);
    let table = rows(&forward.join("trajectory.csv"));
    let horizon = table.last().unwrap()[0].clone();
    let eta: Vec<String> = table.iter().filter(|r| r[0] == horizon).map(|r| r[2].clone()).collect();
    assert_eq!(eta.len(), 8);

    let direct_config = fs::read_to_string(fixture("roundtrip_direct.toml")).unwrap();
    let base = direct_config.split("[source]").next().unwrap();
    let inverse_config = format!(
        "{base}[eta]\ncoeffs = [{}]\n\n[g]\nkind = \"affine\"\na = 1.0\nb = 1.0\nalpha0 = 0.5\nbeta0 = 2.0\n",
        eta.join(", ")
    );
    let config = dir.path().join("inverse.toml");
    fs::write(&config, inverse_config).unwrap();
    let back = dir.path().join("back");
    assert_eq!(code("inverse", &config, &back), 0);

    let expected = [2.0, -1.0, 0.5, 1.5, 0.0, -0.25, 3.0, 1.0];
    let recovered: Vec<f64> = rows(&back.join("source.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    for (got, want) in recovered.iter().zip(expected) {
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn sweep_reports_decreasing_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code("sweep", &bundled("sweep.toml"), dir.path()), 0);
    let errors: Vec<f64> = rows(&dir.path().join("sweep.csv")).iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(errors.len() >= 2);
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}
