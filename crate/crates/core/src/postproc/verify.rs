use rand::Rng;
use serde::{Deserialize, Serialize};

use super::polyhash::{collision_probability, polyhash, Q};
use super::reconcile::ReconciliationOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    /// Indices (into the reconciliation subblocks) that passed.
    pub verified: Vec<usize>,
    pub n_ver: usize,
    pub l_ver: usize,
    pub eps_ver: f64,
    /// 1 when the whole-key tags matched, n_cor + 1 otherwise.
    pub xi: u64,
    pub e_mu: f64,
    pub full_match: bool,
    pub hash_key: u64,
}

/// `1 − (1 − ε)^n` without cancellation.
fn any_of(eps: f64, n: usize) -> f64 {
    -((n as f64) * (-eps).ln_1p()).exp_m1()
}

/// Compare whole-key tags, falling back to per-subblock tags on mismatch.
pub fn verify<R: Rng + ?Sized>(rec: &ReconciliationOutcome, rng: &mut R) -> VerificationOutcome {
    let k = rng.gen_range(0..Q);
    let sub = rec.subblock_len;
    let corrected: Vec<usize> = rec.subblocks.iter().filter(|s| s.corrected).map(|s| s.index).collect();
    let n_cor = corrected.len();
    let full_match = polyhash(k, &rec.alice) == polyhash(k, &rec.bob);

    let (kept, xi, eps_ver) = if full_match {
        ((0..n_cor).collect::<Vec<_>>(), 1, collision_probability((n_cor * sub) as u64))
    } else {
        let kept: Vec<usize> = (0..n_cor)
            .filter(|&j| {
                let r = j * sub..(j + 1) * sub;
                polyhash(k, &rec.alice[r.clone()]) == polyhash(k, &rec.bob[r])
            })
            .collect();
        let eps = any_of(collision_probability(sub as u64), kept.len());
        (kept, n_cor as u64 + 1, eps)
    };

    let mut alice = Vec::with_capacity(kept.len() * sub);
    let mut bob = Vec::with_capacity(kept.len() * sub);
    for &j in &kept {
        alice.extend_from_slice(&rec.alice[j * sub..(j + 1) * sub]);
        bob.extend_from_slice(&rec.bob[j * sub..(j + 1) * sub]);
    }
    let verified: Vec<usize> = kept.iter().map(|&j| corrected[j]).collect();
    let e_mu = if verified.is_empty() {
        0.0
    } else {
        verified.iter().map(|&i| rec.subblocks[i].e_mu).sum::<f64>() / verified.len() as f64
    };
    VerificationOutcome {
        n_ver: verified.len(),
        l_ver: verified.len() * sub,
        alice,
        bob,
        verified,
        eps_ver,
        xi,
        e_mu,
        full_match,
        hash_key: k,
    }
}
