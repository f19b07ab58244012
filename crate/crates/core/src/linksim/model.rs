//! Closed-form expectations for the deadtime-free link, used by sweeps and
//! as a cross-check on the Monte-Carlo engine.

use serde::{Deserialize, Serialize};

use super::{ChannelConfig, DetectorModel, Intensity, SourceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedLink {
    /// Detection probability per pulse of each class, any basis.
    pub gain: [f64; 3],
    /// Error rate of matched-basis detections per class.
    pub qber: [f64; 3],
    pub y0: f64,
    pub y1: f64,
    pub e1: f64,
}

/// (gain, error) for matched and mismatched bases given per-detector no-click
/// probabilities from each of the two ports.
fn combine(nc_match: &dyn Fn(usize, bool) -> f64, nc_mismatch: &dyn Fn(usize) -> f64) -> (f64, f64, f64) {
    let mut q_match = 0.0;
    let mut err = 0.0;
    for correct in 0..2 {
        let wrong = 1 - correct;
        let p_c = nc_match(correct, true);
        let p_w = nc_match(wrong, false);
        q_match += 0.5 * (1.0 - p_c * p_w);
        err += 0.5 * ((1.0 - p_w) * p_c + 0.5 * (1.0 - p_c) * (1.0 - p_w));
    }
    let q_mis = 1.0 - nc_mismatch(0) * nc_mismatch(1);
    (q_match, err, 0.5 * q_match + 0.5 * q_mis)
}

pub fn expected_link(source: &SourceConfig, channel: &ChannelConfig, detectors: &[DetectorModel; 2]) -> ExpectedLink {
    let t = channel.transmittance();
    let e = channel.misalignment;
    let eta = [detectors[0].efficiency, detectors[1].efficiency];
    let dark = [detectors[0].dark_prob, detectors[1].dark_prob];

    let mut gain = [0.0; 3];
    let mut qber = [0.0; 3];
    for class in Intensity::ALL {
        let a = source.intensity(class) * t;
        let nc_match = |det: usize, correct: bool| {
            let share = if correct { 1.0 - e } else { e };
            (-eta[det] * a * share).exp() * (1.0 - dark[det])
        };
        let nc_mis = |det: usize| (-eta[det] * a / 2.0).exp() * (1.0 - dark[det]);
        let (q_match, err, q) = combine(&nc_match, &nc_mis);
        gain[class.index()] = q;
        qber[class.index()] = if q_match > 0.0 { err / q_match } else { 0.0 };
    }

    let y0 = 1.0 - (1.0 - dark[0]) * (1.0 - dark[1]);
    // A single photon reaches at most one detector, so outcomes are enumerated.
    let mut y1_match = 0.0;
    let mut err1 = 0.0;
    for c in 0..2 {
        let w = 1 - c;
        let a = t * eta[c] * (1.0 - e);
        let b = t * eta[w] * e;
        let none = 1.0 - a - b;
        y1_match += 0.5 * (1.0 - none * (1.0 - dark[c]) * (1.0 - dark[w]));
        err1 += 0.5
            * (a * dark[w] * 0.5
                + b * ((1.0 - dark[c]) + 0.5 * dark[c])
                + none * (dark[w] * (1.0 - dark[c]) + 0.5 * dark[c] * dark[w]));
    }
    let none_mis = 1.0 - t * (eta[0] + eta[1]) / 2.0;
    let y1_mis = 1.0 - none_mis * (1.0 - dark[0]) * (1.0 - dark[1]);
    let y1 = 0.5 * y1_match + 0.5 * y1_mis;
    ExpectedLink { gain, qber, y0, y1, e1: if y1_match > 0.0 { err1 / y1_match } else { 0.0 } }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lossless_ideal_detectors() {
        let src = SourceConfig::default();
        let d = DetectorModel::ideal(1.0, 0.0);
        let m = expected_link(&src, &ChannelConfig::new(0.0, 0.0), &[d.clone(), d]);
        assert!((m.gain[0] - (1.0 - (-0.5f64).exp())).abs() < 1e-12);
        assert_eq!(m.qber[0], 0.0);
        assert_eq!(m.y1, 1.0);
    }

    #[test]
    fn dark_only_qber_is_half() {
        let src = SourceConfig::default();
        let d = DetectorModel::ideal(0.0, 1e-3);
        let m = expected_link(&src, &ChannelConfig::new(0.0, 0.0), &[d.clone(), d]);
        assert!((m.qber[0] - 0.5).abs() < 1e-12);
    }
}
