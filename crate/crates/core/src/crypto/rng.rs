//! Seeded randomness with labeled, domain-separated sub-streams.
//!
//! Each label gets its own ChaCha20 stream keyed by
//! `SHA-256("cvqkd/rng/v1" || seed || label)`. Streams for different labels
//! are independent; asking for the same label twice continues that stream.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::bits::BitString;

/// Identifier of the generator behind [`RandomnessService`].
pub const RNG_ALGORITHM: &str = "chacha20-sha256-label-v1";

/// Derives the ChaCha20 key for `(seed, label)`.
pub fn stream_key(seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"cvqkd/rng/v1");
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

/// A fresh generator for `(seed, label)`, independent of any service state.
pub fn labeled_rng(seed: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(stream_key(seed, label))
}

/// Deterministic stand-in for a hardware random number generator.
#[derive(Debug, Clone)]
pub struct RandomnessService {
    seed: u64,
    streams: HashMap<String, ChaCha20Rng>,
}

impl RandomnessService {
    pub fn new(seed: u64) -> Self {
        RandomnessService { seed, streams: HashMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// The running stream for `label`.
    pub fn stream(&mut self, label: &str) -> &mut ChaCha20Rng {
        let seed = self.seed;
        self.streams
            .entry(label.to_owned())
            .or_insert_with(|| labeled_rng(seed, label))
    }

    /// Next `count` bits of the `label` stream.
    pub fn random_bits(&mut self, label: &str, count: usize) -> BitString {
        let rng = self.stream(label);
        let mut words: Vec<u64> = (0..count.div_ceil(64)).map(|_| rng.next_u64()).collect();
        if !count.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (count % 64)) - 1;
            }
        }
        BitString::from_words(words, count)
    }

    pub fn next_u64(&mut self, label: &str) -> u64 {
        self.stream(label).next_u64()
    }

    pub fn fill_bytes(&mut self, label: &str, out: &mut [u8]) {
        self.stream(label).fill_bytes(out)
    }

    /// Uniform value in `0..bound`.
    pub fn below(&mut self, label: &str, bound: u64) -> u64 {
        self.stream(label).random_range(0..bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_label_repeat() {
        let a = RandomnessService::new(42).random_bits("basis", 10_000);
        let b = RandomnessService::new(42).random_bits("basis", 10_000);
        assert_eq!(a, b);
    }

    #[test]
    fn stream_continues_across_calls() {
        let mut s = RandomnessService::new(5);
        let first = s.random_bits("x", 128);
        let second = s.random_bits("x", 128);
        assert_ne!(first, second);
        let whole = RandomnessService::new(5).random_bits("x", 256);
        assert_eq!(whole.slice(0, 128), first);
        assert_eq!(whole.slice(128, 256), second);
    }

    #[test]
    fn monobit_and_runs() {
        let n = 1_000_000;
        let bits = RandomnessService::new(9).random_bits("qrng", n);
        let ones = bits.count_ones() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((ones - n as f64 / 2.0).abs() < 3.0 * sigma, "ones = {ones}");
        // Runs test: number of runs ≈ 2 n p (1-p) + 1.
        let runs = 1 + (1..n).filter(|&i| bits.get(i) != bits.get(i - 1)).count();
        let p = ones / n as f64;
        let expected = 2.0 * n as f64 * p * (1.0 - p) + 1.0;
        let sd = 2.0 * (n as f64).sqrt() * p * (1.0 - p);
        assert!((runs as f64 - expected).abs() < 4.0 * sd, "runs = {runs}, expected {expected}");
    }

    #[test]
    fn labels_are_uncorrelated() {
        let n = 1_000_000;
        let mut s = RandomnessService::new(3);
        let a = s.random_bits("basis", n);
        let b = s.random_bits("peg", n);
        let agree = (0..n).filter(|&i| a.get(i) == b.get(i)).count() as f64;
        let corr = 2.0 * agree / n as f64 - 1.0;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }
}
