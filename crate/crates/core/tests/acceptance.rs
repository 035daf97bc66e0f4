//! Full acceptance suite; prints one line per criterion.

use seplab::acceptance::{run_suite, Context};

#[test]
fn acceptance() {
    let reports = run_suite(&Context::default(), &[], |r| println!("{}", r.line()));
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("[{}] {}", r.id, r.name)).collect();
    println!("{} of {} criteria passed", reports.len() - failed.len(), reports.len());
    assert!(failed.is_empty(), "failing criteria: {}", failed.join(", "));
}
