//! Trojan-horse leakage and light-injection budgets through Alice's optics,
//! for the data-sheet catalog and its transparent-window variant.

use qkd_workbench::lossbudget::{builtin, evaluate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, catalog) in [("table_ii", builtin::table_ii()), ("appendix_f", builtin::appendix_f())] {
        println!("catalog {name}");
        for (path_name, path) in &catalog.paths {
            let r = evaluate(&catalog, &builtin::scenario(path))?;
            if path.is_double_pass() {
                println!("  {path_name:<20} {:>7.2} dB  {:.3e} photons/pulse back out", r.total_loss_db, r.mean_photons_out);
            } else {
                println!("  {path_name:<20} {:>7.2} dB  {:.3e} W delivered", r.total_loss_db, r.delivered_power_w);
            }
        }
    }
    Ok(())
}
