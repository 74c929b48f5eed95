//! One line per acceptance criterion; exits nonzero if any fails.
//! `CUTOFF_LAB_ACCEPTANCE=quick` runs the cheap subset.

use std::time::Instant;

use cutoff_lab_core::acceptance::{default_ids, run_criterion, CriterionResult, Scale, Tolerances, CRITERIA};

fn main() {
    let scale = match std::env::var("CUTOFF_LAB_ACCEPTANCE").as_deref() {
        Ok("quick") => Scale::Quick,
        _ => Scale::Full,
    };
    let tol = Tolerances::default();
    let mut failed = 0;
    let ids = default_ids(scale);
    println!("acceptance: {} criteria ({scale:?})", ids.len());
    for id in ids {
        let start = Instant::now();
        let result = run_criterion(id, scale, &tol, 20_240_601).unwrap_or_else(|e| CriterionResult {
            id,
            name: CRITERIA[id as usize - 1].1,
            passed: false,
            detail: format!("error: {e}"),
        });
        println!("{result} [{:.1}s]", start.elapsed().as_secs_f64());
        if !result.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} failed");
        std::process::exit(1);
    }
    println!("acceptance: all passed");
}
