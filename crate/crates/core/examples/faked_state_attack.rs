//! Faked-state attack on blinded detectors, with and without Eve matching
//! Bob's honest sifted-key rate.

use qkd_workbench::attacks::{faked_state_attack, AttackConfig};
use qkd_workbench::linksim::{ChannelConfig, DetectorModel, SessionOptions, SourceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = SourceConfig { train_length: 200_000, ..SourceConfig::default() };
    let channel = ChannelConfig::new(10.0, 0.01);
    let detectors = [DetectorModel::ideal(0.1, 1e-5), DetectorModel::ideal(0.1, 1e-5)];
    let options = SessionOptions::new(10, 7);

    for compensate in [false, true] {
        let cfg = AttackConfig { compensate_rate: compensate, ..AttackConfig::faked_state(5e-6) };
        let (_, m) = faked_state_attack(&source, &channel, &detectors, &options, &cfg)?;
        println!(
            "compensate {compensate:5}: resend fraction {:.4}, detection per resend {:.4}, qber {:.4} (honest {:.4}), \
             dark/gate {:.1e}, sifted rate ratio {:.3}, Eve agreement {:.4}",
            m.resend_fraction.unwrap_or(1.0),
            m.detection_per_resend.unwrap_or(0.0),
            m.induced_qber,
            m.honest_qber,
            m.dark_rate_under_attack,
            m.sifted_rate_ratio,
            m.eve_bit_agreement,
        );
    }
    Ok(())
}
