//! Randomness, authentication, confirmation hashing and privacy amplification.

pub mod confirm;
pub mod mac;
pub mod pa;
pub mod rng;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("authentication key exhausted: {needed} bytes needed, {remaining} left")]
    KeyExhausted { needed: usize, remaining: usize },
    #[error("invalid output length {ell} for input of {n} bits")]
    BadOutputLength { ell: i64, n: usize },
    #[error("seed has {got} bits, expected {expected}")]
    BadSeedLength { expected: usize, got: usize },
    #[error("tag length {0} outside 1..=64")]
    BadTagLength(u32),
    #[error("confirmation seed multiplier must be nonzero")]
    ZeroMultiplier,
}
