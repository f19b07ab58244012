//! Grade the reference issues, add one of our own to a ledger file and
//! export both as a table.

use qkd_workbench::risk::{parse_layers, reference_issues, IssueRecord, Ledger, RiskFactors};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("qkdbench-risk-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("ledger.jsonl");
    let _ = std::fs::remove_file(&path);

    let mut ledger = Ledger::open(&path)?;
    for rec in reference_issues() {
        ledger.add(rec)?;
    }
    ledger.add(IssueRecord::new(
        "afterpulse-timing",
        "Afterpulse-assisted timing attack",
        parse_layers("Q1,2")?,
        "SPDs",
        RiskFactors::new(0, 1, 1),
        "Measure afterpulse probability against hold-off time.",
    ))?;

    let reopened = Ledger::open(&path)?;
    println!("{} issues in {}", reopened.records().len(), path.display());
    print!("{}", reopened.export_table());
    Ok(())
}
