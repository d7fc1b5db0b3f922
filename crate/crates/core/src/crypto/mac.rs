//! One-time Wegman–Carter authentication.
//!
//! A tag is `P_r(m) ⊕ pad`, where `P_r` evaluates the message, split into
//! 16-byte blocks plus a final length block, as a polynomial at `r` over
//! GF(2^128) with modulus `x^128 + x^7 + x^2 + x + 1`. Every message consumes
//! a fresh 32-byte `(r, pad)` pair from the pre-shared key.

use super::CryptoError;

/// Bytes of pre-shared key consumed per tag.
pub const KEY_BYTES_PER_TAG: usize = 32;
pub const TAG_BYTES: usize = 16;

/// Product in GF(2^128); bit `i` of the integer is the coefficient of `x^i`.
pub fn gf128_mul(a: u128, b: u128) -> u128 {
    let mut r = 0u128;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        let carry = a >> 127;
        a <<= 1;
        if carry == 1 {
            a ^= 0x87;
        }
    }
    r
}

/// Polynomial hash of `message` at `r`.
pub fn poly_hash(r: u128, message: &[u8]) -> u128 {
    let mut acc = 0u128;
    for chunk in message.chunks(16) {
        let mut buf = [0u8; 16];
        buf[..chunk.len()].copy_from_slice(chunk);
        acc = gf128_mul(acc ^ u128::from_le_bytes(buf), r);
    }
    gf128_mul(acc ^ message.len() as u128, r)
}

/// Key for a single message.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct MacKey {
    pub r: u128,
    pub pad: u128,
}

impl std::fmt::Debug for MacKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MacKey(..)")
    }
}

impl MacKey {
    pub fn from_bytes(b: &[u8; KEY_BYTES_PER_TAG]) -> Self {
        MacKey {
            r: u128::from_le_bytes(b[..16].try_into().unwrap()),
            pad: u128::from_le_bytes(b[16..].try_into().unwrap()),
        }
    }
}

pub fn mac_tag(key: &MacKey, message: &[u8]) -> [u8; TAG_BYTES] {
    (poly_hash(key.r, message) ^ key.pad).to_le_bytes()
}

/// Equality without early exit.
pub fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn mac_verify(key: &MacKey, message: &[u8], tag: &[u8]) -> bool {
    ct_eq(&mac_tag(key, message), tag)
}

/// Pre-shared key material for one direction, consumed front to back.
#[derive(Clone)]
pub struct AuthenticatedChannelKey {
    material: Vec<u8>,
    used: usize,
}

impl std::fmt::Debug for AuthenticatedChannelKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthenticatedChannelKey")
            .field("used", &self.used)
            .field("remaining", &self.remaining())
            .finish()
    }
}

impl AuthenticatedChannelKey {
    pub fn new(material: Vec<u8>) -> Self {
        AuthenticatedChannelKey { material, used: 0 }
    }

    /// Splits a shared secret into the Alice→Bob and Bob→Alice halves.
    pub fn split_directions(psk: &[u8]) -> (Self, Self) {
        let half = psk.len() / 2;
        (Self::new(psk[..half].to_vec()), Self::new(psk[half..2 * half].to_vec()))
    }

    pub fn remaining(&self) -> usize {
        self.material.len() - self.used
    }

    pub fn used(&self) -> usize {
        self.used
    }

    /// Messages that can still be authenticated.
    pub fn tags_left(&self) -> usize {
        self.remaining() / KEY_BYTES_PER_TAG
    }

    /// Takes the next unused key.
    pub fn next_key(&mut self) -> Result<MacKey, CryptoError> {
        if self.remaining() < KEY_BYTES_PER_TAG {
            return Err(CryptoError::KeyExhausted { needed: KEY_BYTES_PER_TAG, remaining: self.remaining() });
        }
        let b: &[u8; KEY_BYTES_PER_TAG] =
            self.material[self.used..self.used + KEY_BYTES_PER_TAG].try_into().unwrap();
        self.used += KEY_BYTES_PER_TAG;
        Ok(MacKey::from_bytes(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_reduction() {
        assert_eq!(gf128_mul(1u128 << 127, 2), 0x87);
        assert_eq!(gf128_mul(1, 0xdead_beef), 0xdead_beef);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (a, b, c): (u128, u128, u128) = (rng.random(), rng.random(), rng.random());
            assert_eq!(gf128_mul(a, b), gf128_mul(b, a));
            assert_eq!(gf128_mul(gf128_mul(a, b), c), gf128_mul(a, gf128_mul(b, c)));
            assert_eq!(gf128_mul(a, b ^ c), gf128_mul(a, b) ^ gf128_mul(a, c));
        }
    }

    #[test]
    fn empty_message_tag_is_pad() {
        let k = MacKey { r: 12345, pad: 0xffee };
        assert_eq!(mac_tag(&k, &[]), 0xffeeu128.to_le_bytes());
    }

    #[test]
    fn different_pads_differ() {
        let a = MacKey { r: 7, pad: 1 };
        let b = MacKey { r: 7, pad: 2 };
        assert_ne!(mac_tag(&a, b"hello"), mac_tag(&b, b"hello"));
    }

    #[test]
    fn trailing_zero_is_not_a_collision() {
        let k = MacKey { r: 99, pad: 0 };
        assert_ne!(mac_tag(&k, b"ab"), mac_tag(&k, b"ab\0"));
    }

    #[test]
    fn tampered_bit_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut msg = vec![0u8; 40];
        let mut accepted = 0;
        let trials = 1_000_000;
        for _ in 0..trials {
            rng.fill_bytes(&mut msg);
            let key = MacKey { r: rng.random(), pad: rng.random() };
            let tag = mac_tag(&key, &msg);
            let bit = rng.random_range(0..msg.len() * 8);
            msg[bit / 8] ^= 1 << (bit % 8);
            if mac_verify(&key, &msg, &tag) {
                accepted += 1;
            }
        }
        assert!(accepted <= 1, "{accepted} forgeries accepted");
    }

    #[test]
    fn key_accounting() {
        let (mut ab, ba) = AuthenticatedChannelKey::split_directions(&[7u8; 130]);
        assert_eq!(ab.remaining(), 65);
        assert_eq!(ba.remaining(), 65);
        assert_eq!(ab.tags_left(), 2);
        let k1 = ab.next_key().unwrap();
        let k2 = ab.next_key().unwrap();
        assert_eq!(ab.used(), 64);
        assert_eq!(k1, k2); // constant material, but distinct slices were consumed
        assert_eq!(
            ab.next_key(),
            Err(CryptoError::KeyExhausted { needed: 32, remaining: 1 })
        );
    }

    #[test]
    fn constant_time_compare() {
        assert!(ct_eq(b"abc", b"abc"));
        assert!(!ct_eq(b"abc", b"abd"));
        assert!(!ct_eq(b"abc", b"ab"));
    }
}
