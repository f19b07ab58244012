//! Toeplitz-matrix privacy amplification over GF(2).
//!
//! Row `i`, column `j` of T_S is `S[i + j]`, so output bit `i` is the parity
//! of `S[i..i + ℓ_ver] · K`. Large instances go through a number-theoretic
//! convolution; all arithmetic is exact.

use super::PostprocError;

const P: u64 = 998_244_353;
const G: u64 = 3;
const DIRECT_LIMIT: u64 = 1 << 22;

/// `K_sec = T_S · key`, one bit per byte.
pub fn privacy_amplify(key: &[u8], seed: &[u8]) -> Result<Vec<u8>, PostprocError> {
    let l_ver = key.len();
    if l_ver == 0 || seed.len() < l_ver {
        return Err(PostprocError::SeedLengthMismatch { key: l_ver, seed: seed.len() });
    }
    let l_sec = seed.len() + 1 - l_ver;
    if (l_sec as u64) * (l_ver as u64) <= DIRECT_LIMIT {
        return Ok(toeplitz_direct(key, seed, l_sec));
    }
    // Correlation via convolution with the reversed key.
    let rev: Vec<u64> = key.iter().rev().map(|&b| u64::from(b & 1)).collect();
    let s: Vec<u64> = seed.iter().map(|&b| u64::from(b & 1)).collect();
    let conv = convolve(&s, &rev);
    Ok((0..l_sec).map(|i| (conv[i + l_ver - 1] & 1) as u8).collect())
}

/// As [`privacy_amplify`], but insists on the exact seed length for `l_sec` output bits.
pub fn privacy_amplify_to(key: &[u8], seed: &[u8], l_sec: usize) -> Result<Vec<u8>, PostprocError> {
    if l_sec == 0 || seed.len() != seed_length(key.len(), l_sec) {
        return Err(PostprocError::SeedLengthMismatch { key: key.len(), seed: seed.len() });
    }
    privacy_amplify(key, seed)
}

/// Seed length needed for an `l_sec`-bit output from an `l_ver`-bit key.
pub fn seed_length(l_ver: usize, l_sec: usize) -> usize {
    l_ver + l_sec - 1
}

fn toeplitz_direct(key: &[u8], seed: &[u8], l_sec: usize) -> Vec<u8> {
    let ones: Vec<usize> = key.iter().enumerate().filter(|(_, &b)| b & 1 == 1).map(|(j, _)| j).collect();
    (0..l_sec).map(|i| ones.iter().fold(0u8, |acc, &j| acc ^ (seed[i + j] & 1))).collect()
}

fn pow_mod(mut b: u64, mut e: u64) -> u64 {
    let mut r = 1;
    b %= P;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % P;
        }
        b = b * b % P;
        e >>= 1;
    }
    r
}

fn ntt(a: &mut [u64], invert: bool) {
    let n = a.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j ^= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let mut w = pow_mod(G, (P - 1) / len as u64);
        if invert {
            w = pow_mod(w, P - 2);
        }
        for start in (0..n).step_by(len) {
            let mut wn = 1u64;
            for k in 0..len / 2 {
                let u = a[start + k];
                let v = a[start + k + len / 2] * wn % P;
                a[start + k] = if u + v >= P { u + v - P } else { u + v };
                a[start + k + len / 2] = if u >= v { u - v } else { u + P - v };
                wn = wn * w % P;
            }
        }
        len <<= 1;
    }
    if invert {
        let inv_n = pow_mod(n as u64, P - 2);
        for x in a.iter_mut() {
            *x = *x * inv_n % P;
        }
    }
}

/// Exact integer convolution of 0/1 sequences (sums stay below P).
fn convolve(a: &[u64], b: &[u64]) -> Vec<u64> {
    let need = a.len() + b.len() - 1;
    let n = need.next_power_of_two();
    let mut fa = a.to_vec();
    fa.resize(n, 0);
    let mut fb = b.to_vec();
    fb.resize(n, 0);
    ntt(&mut fa, false);
    ntt(&mut fb, false);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = *x * y % P;
    }
    ntt(&mut fa, true);
    fa.truncate(need);
    fa
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_schoolbook() {
        let a = [1, 0, 1, 1, 0, 1];
        let b = [1, 1, 0, 1];
        let fast = convolve(&a, &b);
        let mut slow = vec![0u64; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                slow[i + j] += x * y;
            }
        }
        assert_eq!(fast, slow);
    }

    #[test]
    fn ntt_path_matches_direct_path() {
        let key: Vec<u8> = (0..3000).map(|i| ((i * 7 + i / 3) % 5 == 0) as u8).collect();
        let seed: Vec<u8> = (0..(3000 + 2000 - 1)).map(|i| ((i * 13 + 1) % 3 == 0) as u8).collect();
        let direct = toeplitz_direct(&key, &seed, 2000);
        let rev: Vec<u64> = key.iter().rev().map(|&b| u64::from(b)).collect();
        let s: Vec<u64> = seed.iter().map(|&b| u64::from(b)).collect();
        let conv = convolve(&s, &rev);
        let fast: Vec<u8> = (0..2000).map(|i| (conv[i + 2999] & 1) as u8).collect();
        assert_eq!(direct, fast);
    }

    #[test]
    fn seed_length_checked() {
        assert!(privacy_amplify(&[1, 0, 1], &[1]).is_err());
        assert!(privacy_amplify(&[], &[1]).is_err());
    }
}
