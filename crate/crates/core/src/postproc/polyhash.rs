//! Polynomial hash over GF(q), q = 2^50 − 27, on 49-bit message blocks.
//!
//! The message gets a single 1 bit and then zeros up to a whole number of
//! blocks, plus one trailing block holding the original bit length. Blocks
//! are read MSB-first and evaluated with Horner's rule at the key `k`.

pub const Q: u64 = (1u64 << 50) - 27;
/// ⌊log2 q⌋.
pub const BLOCK_BITS: usize = 49;
/// ⌈log2 q⌉, the tag length.
pub const TAG_BITS: u32 = 50;

/// Message blocks after padding, length block included.
pub fn blocks(bits: &[u8]) -> Vec<u64> {
    let n_data = bits.len() / BLOCK_BITS + 1;
    let mut out = Vec::with_capacity(n_data + 1);
    for b in 0..n_data {
        let mut v = 0u64;
        for i in 0..BLOCK_BITS {
            let pos = b * BLOCK_BITS + i;
            let bit = match pos.cmp(&bits.len()) {
                std::cmp::Ordering::Less => u64::from(bits[pos] & 1),
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Greater => 0,
            };
            v = (v << 1) | bit;
        }
        out.push(v);
    }
    out.push(bits.len() as u64 % Q);
    out
}

fn mul_mod(a: u64, b: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(Q)) as u64
}

/// 50-bit tag of `bits` (one bit per byte) under key `k < q`.
pub fn polyhash(k: u64, bits: &[u8]) -> u64 {
    debug_assert!(k < Q);
    blocks(bits).into_iter().fold(0u64, |h, b| (mul_mod(h, k) + b) % Q)
}

/// Collision probability bound for keys of `len_bits`.
pub fn collision_probability(len_bits: u64) -> f64 {
    let blocks = len_bits.div_ceil(BLOCK_BITS as u64);
    blocks.saturating_sub(1) as f64 / Q as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_is_fifty_bits() {
        assert_eq!(64 - Q.leading_zeros(), TAG_BITS);
        assert_eq!(BLOCK_BITS as u32, TAG_BITS - 1);
    }

    #[test]
    fn padding_distinguishes_trailing_zero() {
        assert_ne!(polyhash(12345, &[1, 0]), polyhash(12345, &[1, 0, 0]));
    }

    #[test]
    fn empty_message_is_pad_block() {
        // One block holding the pad bit at the MSB, then length 0.
        let pad = 1u64 << 48;
        assert_eq!(blocks(&[]), vec![pad, 0]);
        assert_eq!(polyhash(7, &[]), pad * 7 % Q);
    }
}
