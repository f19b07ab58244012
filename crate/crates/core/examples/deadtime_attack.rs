//! Deadtime exploit against detectors with a cross-link delay, with and
//! without Bob's software deadtime filter.

use qkd_workbench::attacks::{covering_filter_window, deadtime_attack, AttackConfig};
use qkd_workbench::linksim::{ChannelConfig, DetectorModel, SessionOptions, SourceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trains: u32 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let source = SourceConfig::default();
    let channel = ChannelConfig::new(10.0, 0.01);
    let detectors = [DetectorModel::default(), DetectorModel::default()];
    let options = SessionOptions::new(trains, 2024);

    let n = covering_filter_window(&detectors);
    for filter in [None, Some(n)] {
        let cfg = AttackConfig { filter_gates: filter, ..AttackConfig::deadtime_exploit() };
        let t = std::time::Instant::now();
        let (_, m) = deadtime_attack(&source, &channel, &detectors, &options, &cfg)?;
        println!(
            "filter {:>4}: agreement {:.4} ({:+.1} sigma over {} sifted), one-detector clicks {}, qber {:.3}  [{:.1?}]",
            filter.map_or("off".to_string(), |v| v.to_string()),
            m.eve_bit_agreement,
            (m.eve_bit_agreement - 0.5) / m.agreement_sigma,
            m.accepted_sifted,
            m.one_detector_clicks,
            m.induced_qber,
            t.elapsed(),
        );
    }
    Ok(())
}
