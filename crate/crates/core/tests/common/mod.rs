//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use cvqkd::ldpc::Codebook;

/// Codebook for `orders × rates` at block length `n`, generated once and
/// cached under the cargo temp directory.
pub fn cached_codebook(orders: &[usize], rates: std::ops::RangeInclusive<u16>, n: usize, seed: u64) -> (Arc<Codebook>, PathBuf) {
    let tag: Vec<String> = orders.iter().map(|o| o.to_string()).collect();
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join(format!("codes-{}-{}-{}-{n}-{seed}", tag.join("_"), rates.start(), rates.end()));
    if let Ok(b) = Codebook::load(&dir) {
        if !b.is_empty() {
            return (Arc::new(b), dir);
        }
    }
    let rates: Vec<u16> = rates.collect();
    let (book, _) = Codebook::generate(orders, &rates, n, seed);
    let tmp = dir.with_extension("partial");
    let _ = std::fs::remove_dir_all(&tmp);
    book.store(&tmp).expect("store codebook");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::rename(&tmp, &dir).expect("publish codebook");
    (Arc::new(book), dir)
}

/// Short codes for quick sessions.
pub fn small_codebook() -> (Arc<Codebook>, PathBuf) {
    cached_codebook(&[32, 64], 70..=95, 1000, 7)
}

/// GF(64) codes of length 10^4 around the default operating point.
pub fn gf64_codebook() -> (Arc<Codebook>, PathBuf) {
    cached_codebook(&[64], 85..=95, 10_000, 1)
}
