//! The full validation suite: one line per criterion, all must pass.

use gflow_cli::validate::{default_suite_config, run_suite};

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let checks = run_suite(&default_suite_config(), dir.path());
    for c in &checks {
        println!("{c}");
    }
    let ids: Vec<u8> = checks.iter().map(|c| c.id).collect();
    assert_eq!(ids, (1..=17).collect::<Vec<u8>>());
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.to_string()).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
