//! Per-subblock error correction with exact leak bookkeeping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ldpc::{code_for_rate, select_rate, BLOCK_LEN, DEFAULT_EFFICIENCY, MAX_ITERATIONS};
use super::polyhash::TAG_BITS;
use super::PostprocError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconcileMode {
    #[default]
    Ldpc,
    /// Copy Alice's subblock but charge the leak of the configured code.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconcileConfig {
    pub mode: ReconcileMode,
    /// Fixed code rate; chosen from the a-priori QBER when absent.
    pub rate: Option<f64>,
    pub efficiency: f64,
    /// Code positions filled with Alice's random bits instead of key.
    pub punctured: usize,
    /// Punctured bits revealed per extra round after a decoding failure.
    pub disclose_step: usize,
    pub max_disclosure_rounds: u32,
    pub max_iterations: u32,
}

impl Default for ReconcileConfig {
    fn default() -> Self {
        Self {
            mode: ReconcileMode::Ldpc,
            rate: None,
            efficiency: DEFAULT_EFFICIENCY,
            punctured: 0,
            disclose_step: 0,
            max_disclosure_rounds: 0,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

impl ReconcileConfig {
    pub fn oracle(rate: f64) -> Self {
        Self { mode: ReconcileMode::Oracle, rate: Some(rate), ..Self::default() }
    }

    /// Key bits per subblock.
    pub fn subblock_len(&self) -> usize {
        BLOCK_LEN - self.punctured
    }

    pub fn validate(&self) -> Result<(), PostprocError> {
        if self.punctured >= BLOCK_LEN {
            return Err(PostprocError::InvalidParameter("too many punctured bits".into()));
        }
        if let Some(r) = self.rate {
            if !super::ldpc::RATES.iter().any(|&x| (x - r).abs() < 1e-9) {
                return Err(PostprocError::InvalidParameter(format!("no shipped code of rate {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubblockOutcome {
    pub index: usize,
    pub corrected: bool,
    /// Bits Bob flipped (or, in oracle mode, true mismatches).
    pub errors: usize,
    pub e_mu: f64,
    pub disclosed: usize,
    pub iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationOutcome {
    /// Concatenated corrected subblocks.
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    /// Every input subblock, corrected or not.
    pub subblocks: Vec<SubblockOutcome>,
    pub subblock_len: usize,
    pub rate: f64,
    pub syndrome_len: usize,
    pub punctured: usize,
}

impl ReconciliationOutcome {
    pub fn corrected(&self) -> impl Iterator<Item = &SubblockOutcome> {
        self.subblocks.iter().filter(|s| s.corrected)
    }

    pub fn n_cor(&self) -> usize {
        self.corrected().count()
    }

    pub fn l_cor(&self) -> usize {
        self.n_cor() * self.subblock_len
    }

    /// Σ_{i∈V} (ℓ_synd − p + d_i) + ξ·ℓ_hash over the verified subblocks `verified`
    /// (indices into [`Self::subblocks`]).
    pub fn leak(&self, verified: &[usize], xi: u64) -> f64 {
        let per: f64 = verified
            .iter()
            .map(|&i| (self.syndrome_len as f64) - self.punctured as f64 + self.subblocks[i].disclosed as f64)
            .sum();
        per + (xi * u64::from(TAG_BITS)) as f64
    }
}

fn punctured_positions(p: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..BLOCK_LEN).collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5055_4e43));
    let mut chosen = all[..p].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Correct Bob's key towards Alice's subblock by subblock.
pub fn reconcile<R: Rng + ?Sized>(
    alice: &[u8],
    bob: &[u8],
    apriori_qber: f64,
    cfg: &ReconcileConfig,
    rng: &mut R,
) -> Result<ReconciliationOutcome, PostprocError> {
    cfg.validate()?;
    let sub = cfg.subblock_len();
    if alice.len() != bob.len() || alice.len() % sub != 0 {
        return Err(PostprocError::LengthMismatch(format!(
            "Alice {} bits, Bob {} bits, subblock {sub}",
            alice.len(),
            bob.len()
        )));
    }
    let rate = cfg.rate.unwrap_or_else(|| select_rate(apriori_qber, cfg.efficiency));
    let code = code_for_rate(rate);
    let punct = punctured_positions(cfg.punctured);
    let is_punct = {
        let mut v = vec![false; BLOCK_LEN];
        for &p in &punct {
            v[p] = true;
        }
        v
    };
    let key_pos: Vec<usize> = (0..BLOCK_LEN).filter(|&i| !is_punct[i]).collect();
    let q = apriori_qber.clamp(1e-4, 0.49);
    let key_llr = ((1.0 - q) / q).ln();

    let mut out = ReconciliationOutcome {
        alice: Vec::new(),
        bob: Vec::new(),
        subblocks: Vec::new(),
        subblock_len: sub,
        rate,
        syndrome_len: code.m,
        punctured: cfg.punctured,
    };

    for (index, (a, b)) in alice.chunks(sub).zip(bob.chunks(sub)).enumerate() {
        if cfg.mode == ReconcileMode::Oracle {
            let errors = a.iter().zip(b).filter(|(x, y)| x != y).count();
            out.alice.extend_from_slice(a);
            out.bob.extend_from_slice(a);
            out.subblocks.push(SubblockOutcome {
                index,
                corrected: true,
                errors,
                e_mu: errors as f64 / sub as f64,
                disclosed: 0,
                iterations: 0,
            });
            continue;
        }

        let mut x_a = vec![0u8; BLOCK_LEN];
        let mut y_b = vec![0u8; BLOCK_LEN];
        for (k, &pos) in key_pos.iter().enumerate() {
            x_a[pos] = a[k] & 1;
            y_b[pos] = b[k] & 1;
        }
        for &pos in &punct {
            x_a[pos] = u8::from(rng.gen::<bool>());
        }
        let s_a = code.syndrome(&x_a);
        let mut prior: Vec<f64> = (0..BLOCK_LEN).map(|i| if is_punct[i] { 0.0 } else { key_llr }).collect();

        let mut disclosed = 0usize;
        let mut result = None;
        let mut iterations = 0;
        for round in 0..=cfg.max_disclosure_rounds {
            if round > 0 {
                let next = (disclosed + cfg.disclose_step).min(punct.len());
                if next == disclosed {
                    break;
                }
                for &pos in &punct[disclosed..next] {
                    y_b[pos] = x_a[pos];
                    prior[pos] = 30.0;
                }
                disclosed = next;
            }
            let s_b = code.syndrome(&y_b);
            let target: Vec<u8> = s_a.iter().zip(&s_b).map(|(x, y)| x ^ y).collect();
            if let Some((e, it)) = code.decode_syndrome(&prior, &target, cfg.max_iterations) {
                iterations += it;
                result = Some(e);
                break;
            }
            iterations += cfg.max_iterations;
        }

        match result {
            Some(e) => {
                let errors = key_pos.iter().filter(|&&p| e[p] == 1).count();
                out.alice.extend_from_slice(a);
                out.bob.extend(key_pos.iter().map(|&p| y_b[p] ^ e[p]));
                out.subblocks.push(SubblockOutcome {
                    index,
                    corrected: true,
                    errors,
                    e_mu: errors as f64 / sub as f64,
                    disclosed,
                    iterations,
                });
            }
            None => out.subblocks.push(SubblockOutcome {
                index,
                corrected: false,
                errors: 0,
                e_mu: 0.0,
                disclosed,
                iterations,
            }),
        }
    }
    Ok(out)
}
