use std::process::Command;

use phtrack_cli::verify::{run_checks, Fault};

#[test]
fn fast_suite_passes_from_the_command_line() {
    let out = Command::new(env!("CARGO_BIN_EXE_phtrack")).args(["verify", "--fast"]).output().unwrap();
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{table}");
    for name in [
        "factorization",
        "skew-symmetry",
        "bracket antisymmetry",
        "feasibility residual",
        "Lyapunov monotonicity",
        "energy conservation",
        "derivative consistency",
    ] {
        assert!(table.contains(name), "{name} missing from\n{table}");
    }
}

#[test]
fn flipped_gyroscopic_entry_breaks_skew_symmetry() {
    let report = run_checks(true, Fault::FlipGyroscopicEntry);
    assert!(!report.check("skew-symmetry").unwrap().passed);
    assert!(report.check("factorization").unwrap().passed);
    assert!(!report.passed());
}

#[test]
fn dropped_reference_gyroscopic_term_breaks_feasibility() {
    let report = run_checks(true, Fault::DropFeedforwardGyroscopic);
    let c = report.check("feasibility residual").unwrap();
    assert!(!c.passed, "{c:?}");
    assert!(report.check("skew-symmetry").unwrap().passed);
}
