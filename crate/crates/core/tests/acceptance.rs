//! End-to-end acceptance suite: runs every criterion at its pinned
//! tolerance and prints one pass/fail line per criterion.

use diffk_core::verify;

#[test]
fn acceptance_criteria() {
    let checks = verify::acceptance();
    let mut failures = Vec::new();
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        match (c.value, c.threshold) {
            (Some(v), Some(t)) => {
                println!("{status} {} (value {v:.6e}, threshold {t:.6e}) {}", c.name, c.detail)
            }
            _ => println!("{status} {} {}", c.name, c.detail),
        }
        if !c.passed {
            failures.push(c.name.clone());
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
