use std::collections::HashMap;
use std::path::Path;
use std::process::Command;

use phtrack_cli::sweep::{run_sweep, SweepSpec};

fn phtrack() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phtrack"));
    cmd.env_remove("PHTRACK_OUT_DIR");
    cmd
}

fn spec_path(name: &str) -> String {
    format!("{}/sweeps/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn csv_rows(path: &Path) -> Vec<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

#[test]
fn single_point_grid_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = phtrack()
        .args(["sweep", "--spec", &spec_path("nominal-point.json"), "--seed", "0", "--out"])
        .arg(dir.path().join("sweep"))
        .output()
        .unwrap();
    // the certified bound on the second axis exceeds its limit
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("axis 2"), "{stderr}");

    let status = phtrack()
        .args(["run", "--preset", "pera-sim", "--out"])
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let rows = csv_rows(&dir.path().join("sweep/leaderboard.csv"));
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row["feasible"], "false");
    assert_eq!(row["binding_axis"], "2");
    let metrics: HashMap<String, String> = std::fs::read_to_string(dir.path().join("run/metrics.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).unwrap())
        .collect();
    assert_eq!(row["config_hash"], metrics["config_hash"]);
    assert_eq!(row["settled_error"], metrics["settled_error"]);
    for i in 1..=3 {
        assert_eq!(row[&format!("peak_control{i}")], metrics[&format!("peak_control_{i}")]);
    }
}

#[test]
fn excessive_alpha_is_marked_infeasible() {
    let spec = SweepSpec::parse(
        r#"{
            "base": {"preset": "pera-sim"},
            "search": {"grid": {"alpha": [[11.0, 1.5, 6.0], [11.0, 1.5, 20.0]]}},
            "budget": 2,
            "certification": {"time_samples": 500, "grid_points": 21}
        }"#,
    )
    .unwrap();
    let board = run_sweep(&spec, 0).unwrap();
    assert_eq!(board.entries.len(), 2);
    assert!(board.entries[0].feasible());
    assert_eq!(board.entries[0].gains.alpha, vec![11.0, 1.5, 6.0]);
    let bad = &board.entries[1];
    assert!(!bad.feasible());
    assert_eq!(bad.budget.binding_axis(), Some(2));
    let csv = board.to_csv();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("1,true,"));
    assert!(csv.lines().nth(2).unwrap().starts_with("2,false,"));
}

#[test]
fn seeded_random_sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let status = phtrack()
            .args(["sweep", "--spec", &spec_path("alpha-random.json"), "--seed", "42", "--out"])
            .arg(dir.path().join(sub))
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a/leaderboard.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/leaderboard.csv")).unwrap();
    assert!(a == b);

    // thread count does not change the result
    let mut spec = SweepSpec::load(Path::new(&spec_path("alpha-random.json"))).unwrap();
    let serial = {
        spec.threads = Some(1);
        run_sweep(&spec, 42).unwrap().to_csv()
    };
    assert_eq!(serial.as_bytes(), &a[..]);
}

#[test]
fn invalid_spec_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    std::fs::write(&path, r#"{"base": {"preset": "pera-sim"}, "search": {"grid": {"alpha": []}}, "budget": 1}"#).unwrap();
    let out = phtrack().arg("sweep").arg("--spec").arg(&path).args(["--seed", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}
