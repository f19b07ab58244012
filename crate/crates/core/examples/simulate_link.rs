//! Honest decoy-state link: gains and QBER per intensity against the
//! closed-form expectation, then a CSV round trip of the click log.

use qkd_workbench::linksim::{
    expected_link, read_csv, run_session, write_clicks_csv, write_pulses_csv, ChannelConfig, DetectorModel,
    Intensity, SessionOptions, SourceConfig,
};
use qkd_workbench::postproc::sift;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = SourceConfig { train_length: 200_000, ..SourceConfig::default() };
    let channel = ChannelConfig::new(6.0, 0.01);
    let detectors = [DetectorModel::ideal(0.1, 1e-6), DetectorModel::ideal(0.1, 1e-6)];
    let log = run_session(&source, &channel, &detectors, &SessionOptions::new(10, 42).with_pulses())?;

    let expected = expected_link(&source, &channel, &detectors);
    let sent = log.total_sent();
    let mut detected = [0u64; 3];
    for c in &log.clicks {
        detected[c.intensity.index()] += 1;
    }
    for class in Intensity::ALL {
        let i = class.index();
        println!(
            "{class:?}: gain {:.4e} (expected {:.4e}) over {} pulses",
            detected[i] as f64 / sent[i] as f64,
            expected.gain[i],
            sent[i]
        );
    }
    let s = sift(&log);
    println!("sifted {} bits, QBER {:.4} (expected {:.4})", s.len(), s.qber(), expected.qber[0]);

    let (mut pulses, mut clicks) = (Vec::new(), Vec::new());
    write_pulses_csv(&log, &mut pulses)?;
    write_clicks_csv(&log, &mut clicks)?;
    let back = read_csv(pulses.as_slice(), clicks.as_slice(), false)?;
    println!("CSV round trip: {} clicks, sifted QBER {:.4}", back.clicks.len(), sift(&back).qber());
    Ok(())
}
