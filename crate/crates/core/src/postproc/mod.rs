//! Post-processing chain for one key block: sifting, decoy statistics,
//! syndrome reconciliation with leak accounting, hash verification,
//! finite-key estimation and Toeplitz privacy amplification.

pub mod budget;
pub mod estimate;
pub mod ldpc;
pub mod pipeline;
pub mod polyhash;
pub mod reconcile;
pub mod sift;
pub mod toeplitz;
pub mod verify;

pub use budget::{epsilon_budget, SecurityBudget};
pub use estimate::{
    binary_entropy, decoy_bounds, estimate, quantile, secret_length, DecoyBounds, EstimateInputs, EstimationResult,
    Intensities,
};
pub use pipeline::{run_block, Block, BlockAssembler, BlockReport, ProtocolConfig};
pub use polyhash::{collision_probability, polyhash};
pub use reconcile::{reconcile, ReconcileConfig, ReconcileMode, ReconciliationOutcome, SubblockOutcome};
pub use sift::{is_sifted, sift, SiftResult};
pub use toeplitz::{privacy_amplify, privacy_amplify_to};
pub use verify::{verify, VerificationOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostprocError {
    #[error("key lengths differ or are not a whole number of subblocks: {0}")]
    LengthMismatch(String),
    #[error("Toeplitz seed of {seed} bits does not fit a {key}-bit key")]
    SeedLengthMismatch { key: usize, seed: usize },
    #[error("quantile needs 0 < ε_decoy < 7, got {0}")]
    QuantileDomain(f64),
    #[error("decoy intensities violate ν2 < ν1, ν1 + ν2 < µ")]
    IntensityOrderViolation,
    #[error("no pulses sent for intensity class {0}")]
    EmptyClass(usize),
    #[error("invalid QBER {0}")]
    InvalidQBER(f64),
    #[error("block aborted: {reason}")]
    AbortBlock { reason: String, ell_sec: i64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Sent and detected pulse counts per intensity class (µ, ν1, ν2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecoyStats {
    pub sent: [u64; 3],
    pub detected: [u64; 3],
}

impl DecoyStats {
    /// Q̂_α = M_α / N_α.
    pub fn gain(&self, class: usize) -> f64 {
        if self.sent[class] == 0 {
            0.0
        } else {
            self.detected[class] as f64 / self.sent[class] as f64
        }
    }

    pub fn add(&mut self, other: &DecoyStats) {
        for i in 0..3 {
            self.sent[i] += other.sent[i];
            self.detected[i] += other.detected[i];
        }
    }
}
