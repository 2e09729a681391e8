//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p nlgrad --test acceptance -- --nocapture`.

use nlgrad::selftest::{run_all, KNOWN_UNATTAINABLE};

#[test]
fn acceptance_criteria() {
    let report = run_all();
    for check in &report.checks {
        let note = if !check.passed && KNOWN_UNATTAINABLE.contains(&check.id) {
            " [known]"
        } else {
            ""
        };
        println!("{check}{note}");
    }
    assert_eq!(report.checks.len(), 12);
    let failed = report.unexpected_failures();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
