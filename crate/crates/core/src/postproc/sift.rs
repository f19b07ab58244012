use serde::{Deserialize, Serialize};

use super::DecoyStats;
use crate::linksim::{ClickRecord, Intensity, SessionLog};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiftResult {
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    /// (train, slot) of each sifted bit.
    pub positions: Vec<(u32, u32)>,
    /// Photons Alice actually emitted for each sifted bit, when known.
    pub photons: Vec<Option<u32>>,
    /// Counts over every click, before sifting.
    pub stats: DecoyStats,
}

impl SiftResult {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    pub fn qber(&self) -> f64 {
        if self.alice.is_empty() {
            return 0.0;
        }
        let errs = self.alice.iter().zip(&self.bob).filter(|(a, b)| a != b).count();
        errs as f64 / self.alice.len() as f64
    }
}

/// Matched-basis signal clicks count as key.
pub fn is_sifted(c: &ClickRecord) -> bool {
    c.intensity == Intensity::Mu && c.alice_basis == c.bob_basis
}

/// Keep matched-basis signal-intensity clicks. Bob's bits in the log are
/// already mapped through his detector swaps, so a four-state Bob needs no
/// extra step here.
pub fn sift(log: &SessionLog) -> SiftResult {
    let mut out = SiftResult { stats: DecoyStats { sent: log.total_sent(), detected: [0; 3] }, ..Default::default() };
    for c in &log.clicks {
        out.stats.detected[c.intensity.index()] += 1;
        if is_sifted(c) {
            out.alice.push(c.alice_bit);
            out.bob.push(c.bob_bit);
            out.positions.push((c.train, c.slot));
            out.photons.push(c.truth.map(|t| t.photons_sent));
        }
    }
    out
}
