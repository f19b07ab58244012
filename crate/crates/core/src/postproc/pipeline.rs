//! Block assembly and the per-block chain from sifted keys to secret keys.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::budget::{epsilon_budget, SecurityBudget};
use super::estimate::{decoy_bounds, estimate, quantile, DecoyBounds, EstimateInputs, EstimationResult, Intensities};
use super::reconcile::{reconcile, ReconcileConfig};
use super::sift::is_sifted;
use super::toeplitz::privacy_amplify;
use super::verify::verify;
use super::{DecoyStats, PostprocError};
use crate::linksim::{SessionLog, SourceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub eps_decoy: f64,
    pub eps_pa: f64,
    pub subblocks_per_block: usize,
    pub reconcile: ReconcileConfig,
    /// QBER assumed when choosing the code rate.
    pub apriori_qber: f64,
    pub round: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            eps_decoy: 1e-12,
            eps_pa: 1e-12,
            subblocks_per_block: 50,
            reconcile: ReconcileConfig::default(),
            apriori_qber: 0.02,
            round: 1,
        }
    }
}

impl ProtocolConfig {
    pub fn block_len(&self) -> usize {
        self.subblocks_per_block * self.reconcile.subblock_len()
    }

    pub fn validate(&self) -> Result<(), PostprocError> {
        quantile(self.eps_decoy)?;
        if !(self.eps_pa > 0.0 && self.eps_pa < 1.0) {
            return Err(PostprocError::InvalidParameter("ε_pa must lie in (0,1)".into()));
        }
        if self.subblocks_per_block == 0 || self.round == 0 {
            return Err(PostprocError::InvalidParameter("need at least one subblock and round ≥ 1".into()));
        }
        self.reconcile.validate()
    }
}

/// One post-processing block of sifted bits with its decoy statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: usize,
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    pub photons: Vec<Option<u32>>,
    pub stats: DecoyStats,
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    train: u32,
    sent_through: [u32; 3],
}

/// Collects sifted bits across sessions and cuts fixed-size blocks. Decoy
/// counts cover exactly the pulses up to the slot that completes a block.
#[derive(Debug, Clone)]
pub struct BlockAssembler {
    block_len: usize,
    pending: Block,
    next_index: usize,
}

impl BlockAssembler {
    pub fn new(block_len: usize) -> Self {
        assert!(block_len > 0);
        Self { block_len, pending: Self::empty(0), next_index: 0 }
    }

    fn empty(index: usize) -> Block {
        Block { index, alice: Vec::new(), bob: Vec::new(), photons: Vec::new(), stats: DecoyStats::default() }
    }

    /// Sifted bits waiting for the next block.
    pub fn pending_len(&self) -> usize {
        self.pending.alice.len()
    }

    pub fn push(&mut self, log: &SessionLog) -> Vec<Block> {
        let mut out = Vec::new();
        let mut cursor = Cursor { train: 0, sent_through: [0; 3] };
        let add_sent = |pending: &mut Block, from: Cursor, to_train: u32, to_sent: [u32; 3]| {
            for cls in 0..3 {
                let mut n = 0u64;
                if from.train == to_train {
                    n += u64::from(to_sent[cls] - from.sent_through[cls]);
                } else {
                    n += log.train_counts[from.train as usize][cls] - u64::from(from.sent_through[cls]);
                    for t in from.train + 1..to_train {
                        n += log.train_counts[t as usize][cls];
                    }
                    n += u64::from(to_sent[cls]);
                }
                pending.stats.sent[cls] += n;
            }
        };

        for c in &log.clicks {
            self.pending.stats.detected[c.intensity.index()] += 1;
            if !is_sifted(c) {
                continue;
            }
            self.pending.alice.push(c.alice_bit);
            self.pending.bob.push(c.bob_bit);
            self.pending.photons.push(c.truth.map(|t| t.photons_sent));
            if self.pending.alice.len() == self.block_len {
                add_sent(&mut self.pending, cursor, c.train, c.sent_through);
                cursor = Cursor { train: c.train, sent_through: c.sent_through };
                self.next_index += 1;
                out.push(std::mem::replace(&mut self.pending, Self::empty(self.next_index)));
            }
        }
        // Pulses after the last cut belong to the block still being filled.
        if log.n_trains > 0 {
            let last = log.n_trains - 1;
            let end = log.train_counts[last as usize].map(|v| v as u32);
            add_sent(&mut self.pending, cursor, last, end);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub index: usize,
    pub l_block: usize,
    pub code_rate: f64,
    pub n_cor: usize,
    pub l_cor: usize,
    pub n_ver: usize,
    pub l_ver: usize,
    pub e_mu: f64,
    pub stats: DecoyStats,
    pub bounds: Option<DecoyBounds>,
    pub estimation: Option<EstimationResult>,
    pub leak: f64,
    pub xi: u64,
    pub ell_sec: i64,
    pub budget: SecurityBudget,
    pub abort: Option<String>,
    /// Simulator truth over the verified key, when photon numbers are known.
    pub true_m1: Option<u64>,
    pub true_e1: Option<f64>,
    #[serde(skip)]
    pub alice_secret: Vec<u8>,
    #[serde(skip)]
    pub bob_secret: Vec<u8>,
}

impl BlockReport {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }
}

/// Count single-photon bits and their errors in the given subblocks.
fn single_photon_truth(block: &Block, sub: usize, subblocks: &[usize]) -> Option<(u64, f64)> {
    let mut m1 = 0u64;
    let mut err = 0u64;
    for &i in subblocks {
        for k in i * sub..(i + 1) * sub {
            match block.photons.get(k).copied().flatten() {
                Some(1) => {
                    m1 += 1;
                    err += u64::from(block.alice[k] != block.bob[k]);
                }
                Some(_) => {}
                None => return None,
            }
        }
    }
    Some((m1, if m1 == 0 { 0.0 } else { err as f64 / m1 as f64 }))
}

/// Reconcile, verify, estimate and amplify one block.
pub fn run_block<R: Rng + ?Sized>(
    block: &Block,
    source: &SourceConfig,
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<BlockReport, PostprocError> {
    cfg.validate()?;
    let it = Intensities { mu: source.mu, nu1: source.nu1, nu2: source.nu2 };
    let z = quantile(cfg.eps_decoy)?;
    let rec = reconcile(&block.alice, &block.bob, cfg.apriori_qber, &cfg.reconcile, rng)?;
    let ver = verify(&rec, rng);

    let mut report = BlockReport {
        index: block.index,
        l_block: block.alice.len(),
        code_rate: rec.rate,
        n_cor: rec.n_cor(),
        l_cor: rec.l_cor(),
        n_ver: ver.n_ver,
        l_ver: ver.l_ver,
        e_mu: ver.e_mu,
        stats: block.stats,
        bounds: None,
        estimation: None,
        leak: rec.leak(&ver.verified, ver.xi),
        xi: ver.xi,
        ell_sec: 0,
        budget: epsilon_budget(cfg.eps_decoy, ver.eps_ver, cfg.eps_pa, cfg.round),
        abort: None,
        true_m1: None,
        true_e1: None,
        alice_secret: Vec::new(),
        bob_secret: Vec::new(),
    };
    if let Some((m1, e1)) = single_photon_truth(block, rec.subblock_len, &ver.verified) {
        report.true_m1 = Some(m1);
        report.true_e1 = Some(e1);
    }
    if ver.l_ver == 0 {
        report.abort = Some("no subblock survived verification".into());
        return Ok(report);
    }

    let bounds = decoy_bounds(&block.stats, &it, z)?;
    let est = estimate(&EstimateInputs {
        q1_lower: bounds.q1_lower,
        q_mu_upper: bounds.q_upper[0],
        y0_lower: bounds.y0_lower,
        l_ver: ver.l_ver as u64,
        e_mu: ver.e_mu,
        n_mu: block.stats.sent[0],
        mu: it.mu,
        leak: report.leak,
        z,
        eps_pa: cfg.eps_pa,
    })?;
    report.bounds = Some(bounds);
    report.ell_sec = est.ell_sec;
    report.abort = est.abort_reason.clone();
    report.estimation = Some(est);
    if report.abort.is_some() {
        return Ok(report);
    }

    let l_sec = report.ell_sec as usize;
    let seed: Vec<u8> = (0..ver.l_ver + l_sec - 1).map(|_| u8::from(rng.gen::<bool>())).collect();
    report.alice_secret = privacy_amplify(&ver.alice, &seed)?;
    report.bob_secret = privacy_amplify(&ver.bob, &seed)?;
    Ok(report)
}
