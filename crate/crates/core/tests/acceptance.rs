//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs every criterion by default; pass criterion numbers after `--` to run
//! a subset, e.g. `cargo test --test acceptance -- 7 9`.

use std::process::ExitCode;

use qsd::validation::{criterion, CRITERIA};

fn main() -> ExitCode {
    let selected: Vec<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let ids: Vec<u8> = if selected.is_empty() {
        CRITERIA.iter().map(|c| c.id).collect()
    } else {
        selected
    };
    let mut failed = 0;
    for id in ids {
        let Some(c) = criterion(id) else {
            println!("FAIL [{id:>2}] unknown criterion");
            failed += 1;
            continue;
        };
        let report = c.run();
        println!("{}", report.line());
        if !report.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
