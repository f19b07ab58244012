//! Gate-by-gate Monte-Carlo model of a decoy-state BB84 polarisation link:
//! Poissonian source, lossy channel and Bob's two gated threshold detectors.

mod detector;
mod io;
mod model;
mod session;
mod source;

pub use detector::{
    apply_hardware_deadtime, detect_bright, detect_single_photon, software_deadtime_filter, vulnerable_window_gates,
    DeadtimeTracker, DetectorModel, RampKind,
};
pub use io::{read_binary, read_csv, write_binary, write_clicks_csv, write_pulses_csv};
pub use model::{expected_link, ExpectedLink};
pub use session::{run_session, run_session_with, Arrival, Delivery, GateView, Honest, Interceptor, SessionOptions};
pub use source::{sample_photon_number, thin, PoissonTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lossbudget::db_to_linear;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("detector is not blinded")]
    NotBlinded,
    #[error("session log i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for LinkError {
    fn from(e: std::io::Error) -> Self {
        LinkError::Io(e.to_string())
    }
}

impl From<csv::Error> for LinkError {
    fn from(e: csv::Error) -> Self {
        LinkError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn from_bit(b: bool) -> Self {
        if b {
            Basis::X
        } else {
            Basis::Z
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }
}

/// Pulse intensity class: signal µ, weak decoy ν1, vacuum decoy ν2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Intensity {
    Mu,
    Nu1,
    Nu2,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Mu, Intensity::Nu1, Intensity::Nu2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub mu: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub p_mu: f64,
    pub p_nu1: f64,
    pub p_nu2: f64,
    #[serde(default = "default_pulse_rate")]
    pub pulse_rate_hz: f64,
    pub train_length: u32,
}

fn default_pulse_rate() -> f64 {
    312.5e6
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            nu1: 0.1,
            nu2: 0.01,
            p_mu: 0.8,
            p_nu1: 0.1,
            p_nu2: 0.1,
            pulse_rate_hz: default_pulse_rate(),
            train_length: 1_000_000,
        }
    }
}

impl SourceConfig {
    /// Signal intensity only; decoy classes still exist but are never chosen.
    pub fn signal_only(mu: f64, train_length: u32) -> Self {
        Self { mu, nu1: mu / 4.0, nu2: mu / 8.0, p_mu: 1.0, p_nu1: 0.0, p_nu2: 0.0, train_length, ..Self::default() }
    }

    pub fn intensity(&self, class: Intensity) -> f64 {
        match class {
            Intensity::Mu => self.mu,
            Intensity::Nu1 => self.nu1,
            Intensity::Nu2 => self.nu2,
        }
    }

    pub fn probability(&self, class: Intensity) -> f64 {
        match class {
            Intensity::Mu => self.p_mu,
            Intensity::Nu1 => self.p_nu1,
            Intensity::Nu2 => self.p_nu2,
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |m: &str| Err(LinkError::InvalidConfig(m.to_string()));
        if !(self.mu > 0.0 && self.nu1 >= 0.0 && self.nu2 >= 0.0) {
            return bad("intensities must be non-negative with µ > 0");
        }
        if !(self.nu2 < self.nu1 && self.nu1 + self.nu2 < self.mu) {
            return bad("intensities must satisfy ν2 < ν1 and ν1 + ν2 < µ");
        }
        let probs = [self.p_mu, self.p_nu1, self.p_nu2];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("intensity probabilities must lie in [0,1] and sum to 1");
        }
        if !(self.pulse_rate_hz > 0.0) {
            return bad("pulse rate must be positive");
        }
        if self.train_length == 0 {
            return bad("train length must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub loss_db: f64,
    /// Probability that a photon arriving in the matching basis flips bit.
    #[serde(default)]
    pub misalignment: f64,
}

impl ChannelConfig {
    pub fn new(loss_db: f64, misalignment: f64) -> Self {
        Self { loss_db, misalignment }
    }

    pub fn transmittance(&self) -> f64 {
        db_to_linear(self.loss_db)
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.loss_db >= 0.0 && self.loss_db.is_finite()) {
            return Err(LinkError::InvalidConfig("channel loss must be finite and >= 0 dB".into()));
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(LinkError::InvalidConfig("misalignment must lie in [0, 0.5]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickFlag {
    Single,
    Double,
    /// Single click with no photon reaching the clicking detector.
    Dark,
}

impl ClickFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ClickFlag::Single => "single",
            ClickFlag::Double => "double",
            ClickFlag::Dark => "dark",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single" => Some(ClickFlag::Single),
            "double" => Some(ClickFlag::Double),
            "dark" => Some(ClickFlag::Dark),
            _ => None,
        }
    }
}

/// What Alice prepared in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub train: u32,
    pub slot: u32,
    pub basis: Basis,
    pub bit: u8,
    pub intensity: Intensity,
}

/// Simulator-only knowledge attached to a click. Absent on imported logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClickTruth {
    pub photons_sent: u32,
    pub swapped: bool,
    /// Eve's best guess of Alice's bit in this slot, when she has one.
    pub eve_bit: Option<u8>,
    /// Eve replaced this slot's pulse.
    pub intercepted: bool,
    /// Only one detector could fire in this gate.
    pub one_sensitive: bool,
}

/// One registered detection joined with Alice's preparation for that slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub train: u32,
    pub slot: u32,
    /// Clicking detector; for double clicks the detector matching the resolved bit.
    pub detector: u8,
    pub bob_basis: Basis,
    pub bob_bit: u8,
    pub flag: ClickFlag,
    pub alice_basis: Basis,
    pub alice_bit: u8,
    pub intensity: Intensity,
    /// Pulses of each class sent in this train up to and including `slot`.
    pub sent_through: [u32; 3],
    pub truth: Option<ClickTruth>,
}

impl ClickRecord {
    pub fn gate(&self, train_length: u32) -> u64 {
        u64::from(self.train) * u64::from(train_length) + u64::from(self.slot)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionLog {
    pub train_length: u32,
    pub n_trains: u32,
    pub four_state_bob: bool,
    /// Pulses sent per intensity class, per train.
    pub train_counts: Vec<[u64; 3]>,
    /// Full per-pulse record; only kept when requested.
    pub pulses: Option<Vec<PulseRecord>>,
    pub clicks: Vec<ClickRecord>,
}

impl SessionLog {
    pub fn total_sent(&self) -> [u64; 3] {
        self.train_counts.iter().fold([0; 3], |mut acc, c| {
            for i in 0..3 {
                acc[i] += c[i];
            }
            acc
        })
    }

    pub fn total_gates(&self) -> u64 {
        u64::from(self.train_length) * u64::from(self.n_trains)
    }

    /// Click counts per detector, double clicks excluded.
    pub fn detector_counts(&self) -> [u64; 2] {
        let mut c = [0; 2];
        for k in self.clicks.iter().filter(|k| k.flag != ClickFlag::Double) {
            c[usize::from(k.detector)] += 1;
        }
        c
    }

    pub fn bit_counts(&self) -> [u64; 2] {
        let mut c = [0; 2];
        for k in &self.clicks {
            c[usize::from(k.bob_bit)] += 1;
        }
        c
    }
}
