//! Fixed regular LDPC codes and a sum-product syndrome decoder.
//!
//! Each code has block length 27200 and column weight 3. Matrices come from
//! a seeded random socket permutation, so every build is identical.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::estimate::binary_entropy;

pub const BLOCK_LEN: usize = 27_200;
pub const COLUMN_WEIGHT: usize = 3;
pub const RATES: [f64; 3] = [0.5, 0.625, 0.75];
pub const MAX_ITERATIONS: u32 = 60;
/// Syndrome length over Shannon limit required before a rate is picked.
pub const DEFAULT_EFFICIENCY: f64 = 1.8;

const LLR_CLAMP: f64 = 30.0;

/// Sparse parity-check matrix, stored both ways.
#[derive(Debug, Clone)]
pub struct ParityCheck {
    pub n: usize,
    pub m: usize,
    /// Edge `e` of check `c` lives in `row_ptr[c]..row_ptr[c+1]`.
    row_ptr: Vec<usize>,
    edge_var: Vec<u32>,
    /// Edges touching variable `v`: `var_edges[var_ptr[v]..var_ptr[v+1]]`.
    var_ptr: Vec<usize>,
    var_edges: Vec<u32>,
}

impl ParityCheck {
    /// Regular code: every column has weight `col_w`, every row `n·col_w/m`.
    pub fn regular(n: usize, m: usize, col_w: usize, seed: u64) -> Self {
        assert!(n * col_w % m == 0, "row weight must be an integer");
        let row_w = n * col_w / m;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sockets: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat(v).take(col_w)).collect();
        sockets.shuffle(&mut rng);

        // Remove repeated variables inside a row by swapping with random edges.
        for _ in 0..100 {
            let mut clean = true;
            for c in 0..m {
                for i in 0..row_w {
                    let e = c * row_w + i;
                    if sockets[c * row_w..e].contains(&sockets[e]) {
                        clean = false;
                        let other = rng.gen_range(0..sockets.len());
                        sockets.swap(e, other);
                    }
                }
            }
            if clean {
                break;
            }
        }

        let row_ptr: Vec<usize> = (0..=m).map(|c| c * row_w).collect();
        let mut var_count = vec![0usize; n];
        for &v in &sockets {
            var_count[v as usize] += 1;
        }
        let mut var_ptr = vec![0usize; n + 1];
        for v in 0..n {
            var_ptr[v + 1] = var_ptr[v] + var_count[v];
        }
        let mut fill = var_ptr.clone();
        let mut var_edges = vec![0u32; sockets.len()];
        for (e, &v) in sockets.iter().enumerate() {
            var_edges[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        Self { n, m, row_ptr, edge_var: sockets, var_ptr, var_edges }
    }

    pub fn rate(&self) -> f64 {
        1.0 - self.m as f64 / self.n as f64
    }

    pub fn check_vars(&self, c: usize) -> &[u32] {
        &self.edge_var[self.row_ptr[c]..self.row_ptr[c + 1]]
    }

    pub fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        (0..self.m).map(|c| self.check_vars(c).iter().fold(0u8, |acc, &v| acc ^ (bits[v as usize] & 1))).collect()
    }

    /// Find an error pattern `e` with `H·e = target` from per-bit LLRs
    /// (positive favours 0). Returns the pattern and the iterations used.
    pub fn decode_syndrome(&self, prior: &[f64], target: &[u8], max_iter: u32) -> Option<(Vec<u8>, u32)> {
        let mut hard: Vec<u8> = prior.iter().map(|&l| u8::from(l < 0.0)).collect();
        if self.syndrome(&hard) == target {
            return Some((hard, 0));
        }
        let n_edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| prior[v as usize]).collect();
        let mut c2v = vec![0.0f64; n_edges];
        let mut tanhs = Vec::new();
        let mut suffix = Vec::new();
        for iter in 1..=max_iter {
            for c in 0..self.m {
                let (lo, hi) = (self.row_ptr[c], self.row_ptr[c + 1]);
                tanhs.clear();
                tanhs.extend(v2c[lo..hi].iter().map(|&l| (l / 2.0).tanh()));
                suffix.clear();
                suffix.resize(tanhs.len() + 1, 1.0);
                for i in (0..tanhs.len()).rev() {
                    suffix[i] = suffix[i + 1] * tanhs[i];
                }
                let sign = if target[c] == 1 { -1.0 } else { 1.0 };
                let mut prefix = 1.0;
                for i in 0..tanhs.len() {
                    let p = (prefix * suffix[i + 1]).clamp(-0.999_999_999_999, 0.999_999_999_999);
                    c2v[lo + i] = (sign * 2.0 * p.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP);
                    prefix *= tanhs[i];
                }
            }
            for v in 0..self.n {
                let edges = &self.var_edges[self.var_ptr[v]..self.var_ptr[v + 1]];
                let total: f64 = prior[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                hard[v] = u8::from(total < 0.0);
                for &e in edges {
                    v2c[e as usize] = (total - c2v[e as usize]).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
            }
            if self.syndrome(&hard) == target {
                return Some((hard, iter));
            }
        }
        None
    }
}

fn seed_for_rate(rate: f64) -> u64 {
    0x51_4b_44_00 + (rate * 1000.0).round() as u64
}

/// The shipped code for one of [`RATES`].
pub fn code_for_rate(rate: f64) -> &'static ParityCheck {
    static CODES: [OnceLock<ParityCheck>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let idx = RATES.iter().position(|&r| (r - rate).abs() < 1e-9).expect("unsupported code rate");
    CODES[idx].get_or_init(|| {
        let m = ((1.0 - RATES[idx]) * BLOCK_LEN as f64).round() as usize;
        ParityCheck::regular(BLOCK_LEN, m, COLUMN_WEIGHT, seed_for_rate(RATES[idx]))
    })
}

/// Highest shipped rate whose syndrome share covers `efficiency · h2(qber)`;
/// the lowest rate when none does.
pub fn select_rate(apriori_qber: f64, efficiency: f64) -> f64 {
    let need = efficiency * binary_entropy(apriori_qber.clamp(0.0, 0.5));
    RATES.iter().rev().copied().find(|&r| 1.0 - r >= need).unwrap_or(RATES[0])
}
