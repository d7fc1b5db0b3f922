//! Confirmation of reconciled blocks by short universal hashes.
//!
//! A hash choice is a pair `(r, a)` with `a ≠ 0`. The block is read as 64-bit
//! words `m_1..m_L`, followed by a length word, and
//! `h(x) = trunc_t(a · Σ m_i r^(L+2−i))` over GF(2^64) with modulus
//! `x^64 + x^4 + x^3 + x + 1`. Two distinct blocks collide with probability
//! at most `(L+1)/2^64 + 2^−t` over the choice of `(r, a)`.

use super::CryptoError;

/// Product in GF(2^64).
pub fn gf64_mul(a: u64, b: u64) -> u64 {
    let mut r = 0u64;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        let carry = a >> 63;
        a <<= 1;
        if carry == 1 {
            a ^= 0x1b;
        }
    }
    r
}

/// One hash function from the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfirmSeed {
    pub r: u64,
    pub a: u64,
}

impl ConfirmSeed {
    pub fn new(r: u64, a: u64) -> Result<Self, CryptoError> {
        if a == 0 {
            return Err(CryptoError::ZeroMultiplier);
        }
        Ok(ConfirmSeed { r, a })
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        let mut b = [0u8; 16];
        b[..8].copy_from_slice(&self.r.to_le_bytes());
        b[8..].copy_from_slice(&self.a.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; 16]) -> Result<Self, CryptoError> {
        Self::new(u64::from_le_bytes(b[..8].try_into().unwrap()), u64::from_le_bytes(b[8..].try_into().unwrap()))
    }
}

/// Tag length `⌈log2(1/ε_c) + log2(blocks)⌉`, so the union over all blocks
/// stays within `ε_c`.
pub fn tag_bits(epsilon_c: f64, blocks: usize) -> Result<u32, CryptoError> {
    let t = ((1.0 / epsilon_c).log2() + (blocks.max(1) as f64).log2()).ceil();
    if !(1.0..=64.0).contains(&t) {
        return Err(CryptoError::BadTagLength(t.max(0.0).min(u32::MAX as f64) as u32));
    }
    Ok(t as u32)
}

/// Hash of a block of symbols truncated to `t` bits.
pub fn confirm_hash(seed: &ConfirmSeed, symbols: &[u16], t: u32) -> Result<u64, CryptoError> {
    if !(1..=64).contains(&t) {
        return Err(CryptoError::BadTagLength(t));
    }
    let mut acc = 0u64;
    for chunk in symbols.chunks(4) {
        let mut w = 0u64;
        for (i, &s) in chunk.iter().enumerate() {
            w |= (s as u64) << (16 * i);
        }
        acc = gf64_mul(acc ^ w, seed.r);
    }
    acc = gf64_mul(acc ^ symbols.len() as u64, seed.r);
    let h = gf64_mul(seed.a, acc);
    Ok(if t == 64 { h } else { h & ((1u64 << t) - 1) })
}

/// Compares both parties' hashes of a block. Returns the match flag and the
/// number of tag bits disclosed.
pub fn confirm(
    block_a: &[u16],
    block_b: &[u16],
    seed: &ConfirmSeed,
    t: u32,
) -> Result<(bool, u32), CryptoError> {
    Ok((confirm_hash(seed, block_a, t)? == confirm_hash(seed, block_b, t)?, t))
}
