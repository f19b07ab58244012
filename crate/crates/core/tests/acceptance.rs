//! Runs every acceptance criterion at its pinned tolerance and prints one
//! PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

use std::time::Instant;

use qkd_workbench::check::criteria;

fn main() {
    let verbose = std::env::args().any(|a| a == "--verbose" || a == "-v");
    let mut failed = 0;
    for criterion in criteria() {
        let t = Instant::now();
        let outcome = criterion();
        println!("{}  [{:.1?}]", outcome.summary_line(), t.elapsed());
        for s in &outcome.subchecks {
            if verbose || !s.passed {
                println!("    {} {}: {}", if s.passed { "ok  " } else { "MISS" }, s.name, s.detail);
            }
        }
        failed += usize::from(!outcome.passed());
    }
    println!("{failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
