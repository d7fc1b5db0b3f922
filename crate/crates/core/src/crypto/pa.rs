//! Privacy amplification by Toeplitz hashing.
//!
//! The `ℓ × n` matrix is `T(i, j) = t[i − j + n − 1]` for a seed `t` of
//! `n + ℓ − 1` bits, so output bit `i` is bit `i + n − 1` of the binary
//! convolution `t * x`. Small inputs are hashed row by row with word-level
//! AND/popcount; large ones by chunked number-theoretic transforms.

use rayon::prelude::*;

use super::CryptoError;
use crate::bits::BitString;

/// Seed length for an `n`-bit input and `ell`-bit output.
pub fn seed_len(n: usize, ell: usize) -> usize {
    n + ell - 1
}

/// Matrix-vector products below this many bit operations use the direct
/// method.
const DIRECT_LIMIT: u128 = 1 << 34;

/// Compresses `input` to `ell` bits.
pub fn privacy_amplify(input: &BitString, ell: i64, seed: &BitString) -> Result<BitString, CryptoError> {
    let n = input.len();
    if ell <= 0 || ell as usize > n {
        return Err(CryptoError::BadOutputLength { ell, n });
    }
    let ell = ell as usize;
    if seed.len() != seed_len(n, ell) {
        return Err(CryptoError::BadSeedLength { expected: seed_len(n, ell), got: seed.len() });
    }
    if (n as u128) * (ell as u128) <= DIRECT_LIMIT {
        Ok(toeplitz_direct(input, ell, seed))
    } else {
        Ok(toeplitz_ntt(input, ell, seed, 22))
    }
}

/// Row-by-row evaluation. Row `i` is the seed reversed, read from offset
/// `ell − 1 − i`.
pub fn toeplitz_direct(input: &BitString, ell: usize, seed: &BitString) -> BitString {
    let n = input.len();
    let total = seed.len();
    let mut rev = BitString::zeros(total);
    for k in 0..total {
        if seed.get(total - 1 - k) {
            rev.set(k, true);
        }
    }
    let x = input.words();
    let out: Vec<bool> = (0..ell)
        .into_par_iter()
        .map(|i| {
            let start = ell - 1 - i;
            let mut acc = 0u32;
            for (w, &xw) in x.iter().enumerate() {
                let mut row = rev.word_at(start + 64 * w);
                let remaining = n - 64 * w;
                if remaining < 64 {
                    row &= (1u64 << remaining) - 1;
                }
                acc ^= (row & xw).count_ones() & 1;
            }
            acc == 1
        })
        .collect();
    BitString::from_bools(&out)
}

const P: u64 = 469_762_049; // 7·2^26 + 1
const G: u64 = 3;

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
        j |= bit;
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
        let half = len / 2;
        let mut tw = Vec::with_capacity(half);
        let mut cur = 1u64;
        for _ in 0..half {
            tw.push(cur);
            cur = cur * w % P;
        }
        for block in a.chunks_mut(len) {
            let (lo, hi) = block.split_at_mut(half);
            for k in 0..half {
                let u = lo[k];
                let v = hi[k] * tw[k] % P;
                lo[k] = if u + v >= P { u + v - P } else { u + v };
                hi[k] = if u >= v { u - v } else { u + P - v };
            }
        }
        len <<= 1;
    }
    if invert {
        let inv_n = pow_mod(n as u64, P - 2);
        a.iter_mut().for_each(|x| *x = *x * inv_n % P);
    }
}

fn bits_to_field(bits: &BitString, start: i64, len: usize, size: usize) -> Vec<u64> {
    let mut v = vec![0u64; size];
    for (u, slot) in v.iter_mut().enumerate().take(len) {
        let idx = start + u as i64;
        if idx >= 0 && (idx as usize) < bits.len() && bits.get(idx as usize) {
            *slot = 1;
        }
    }
    v
}

/// Chunked evaluation with cyclic transforms of size `2^log_size`. Input and
/// output are cut into pieces of half that size; input pieces are processed
/// one at a time and their parities folded into every output piece.
pub fn toeplitz_ntt(input: &BitString, ell: usize, seed: &BitString, log_size: u32) -> BitString {
    let n = input.len();
    let size = 1usize << log_size;
    let li = size / 2;
    let lo = size / 2;
    let mut parity: Vec<Vec<u8>> = (0..ell.div_ceil(lo)).map(|oc| vec![0u8; lo.min(ell - oc * lo)]).collect();
    for ic in 0..n.div_ceil(li) {
        let i0 = ic * li;
        let mut xh = bits_to_field(input, i0 as i64, li.min(n - i0), size);
        ntt(&mut xh, false);
        parity.par_iter_mut().enumerate().for_each(|(oc, acc)| {
            let o0 = oc * lo;
            let base = o0 as i64 - i0 as i64 - li as i64 + n as i64;
            let mut seg = bits_to_field(seed, base, li + lo - 1, size);
            ntt(&mut seg, false);
            seg.iter_mut().zip(&xh).for_each(|(s, &x)| *s = *s * x % P);
            ntt(&mut seg, true);
            for (a, &c) in acc.iter_mut().zip(&seg[li - 1..]) {
                *a ^= (c & 1) as u8;
            }
        });
    }
    let bits: Vec<bool> = parity.concat().into_iter().map(|b| b == 1).collect();
    BitString::from_bools(&bits)
}
