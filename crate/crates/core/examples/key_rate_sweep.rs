//! Expected secret-key length against channel loss, from noise-free decoy
//! counts at a fixed number of sent pulses.

use qkd_workbench::linksim::{ChannelConfig, DetectorModel, SourceConfig};
use qkd_workbench::postproc::ProtocolConfig;
use qkd_workbench::scenario::expected_secret_length;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pulses: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1_000_000_000);
    let source = SourceConfig::default();
    let detectors = [DetectorModel::ideal(0.1, 1e-6), DetectorModel::ideal(0.1, 1e-6)];
    let cfg = ProtocolConfig::default();
    println!("# {pulses} pulses sent\n# loss_db  ell_sec");
    let mut loss = 0.0;
    while loss <= 40.0 {
        let l = expected_secret_length(&source, &ChannelConfig::new(loss, 0.01), &detectors, pulses, &cfg)?;
        println!("{loss:6.1} {l:>12}");
        if l <= 0 {
            break;
        }
        loss += 2.0;
    }
    Ok(())
}
