//! Probability-domain belief propagation for syndrome decoding.
//!
//! Check nodes are evaluated in the Walsh-Hadamard domain: the sum of
//! independent GF(2^m) variables has the XOR-convolution of their
//! distributions, and the length-`2^m` Hadamard transform (one butterfly
//! stage per GF(2) dimension) diagonalises that convolution. Multiplying a
//! variable by a coefficient `h` permutes its distribution by `p -> h·p`.
//!
//! Messages are renormalised after every update so they stay summing to one
//! without underflow.

use super::{LdpcError, ParityCheckMatrix};
use crate::fieldmath::GaloisField;

pub const DEFAULT_MAX_ITERS: usize = 60;

/// Per-position probability tables for the transmitted word.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPrior {
    q: usize,
    probs: Vec<f64>,
}

impl SymbolPrior {
    /// `probs` holds `len` consecutive tables of `q` entries each.
    pub fn new(q: usize, probs: Vec<f64>) -> Result<Self, LdpcError> {
        if q == 0 || !probs.len().is_multiple_of(q) {
            return Err(LdpcError::InvalidPrior(format!(
                "{} entries is not a multiple of {q}",
                probs.len()
            )));
        }
        for (i, t) in probs.chunks(q).enumerate() {
            if t.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(LdpcError::InvalidPrior(format!("negative entry at position {i}")));
            }
            let s: f64 = t.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(LdpcError::InvalidPrior(format!("position {i} sums to {s}")));
            }
        }
        Ok(SymbolPrior { q, probs })
    }

    /// Point mass on each symbol of `word`.
    pub fn point_mass(q: usize, word: &[u8]) -> Self {
        let mut probs = vec![0.0; q * word.len()];
        for (i, &x) in word.iter().enumerate() {
            probs[i * q + x as usize] = 1.0;
        }
        SymbolPrior { q, probs }
    }

    pub fn alphabet(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.q
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.probs[i * self.q..(i + 1) * self.q]
    }

    /// Most likely symbol per position (lowest symbol on ties).
    pub fn hard_decision(&self) -> Vec<u8> {
        self.probs.chunks(self.q).map(argmax).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub estimate: Vec<u8>,
    /// Stopped before `max_iters` because the syndrome matched.
    pub converged: bool,
    pub iterations: usize,
    pub syndrome_matched: bool,
}

fn argmax(t: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &p) in t.iter().enumerate() {
        if p > t[best] {
            best = i;
        }
    }
    best as u8
}

fn normalize(t: &mut [f64]) {
    let s: f64 = t.iter().sum();
    if s > 0.0 && s.is_finite() {
        let inv = 1.0 / s;
        t.iter_mut().for_each(|p| *p *= inv);
    } else {
        let u = 1.0 / t.len() as f64;
        t.iter_mut().for_each(|p| *p = u);
    }
}

/// In-place unnormalised Walsh-Hadamard transform; `a.len()` must be a power of two.
pub fn walsh_hadamard(a: &mut [f64]) {
    let n = a.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in a.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

/// Reusable buffers for one check-node evaluation.
struct CheckScratch {
    transformed: Vec<f64>,
    prefix: Vec<f64>,
    tmp: Vec<f64>,
}

impl CheckScratch {
    fn new(q: usize) -> Self {
        CheckScratch { transformed: Vec::new(), prefix: Vec::new(), tmp: vec![0.0; q] }
    }
}

/// Computes every outgoing message of one check node.
///
/// `incoming[i]` is the distribution of the variable on edge `i`, `perms[i]`
/// the table `p -> h_i·p`, and `target` the check's syndrome value. The
/// outgoing message on edge `i` is the distribution of `x_i` implied by
/// `Σ_k h_k x_k = target` and the other incoming messages. Results are
/// written into `outgoing`, normalised.
fn check_update_into(
    incoming: &[&[f64]],
    perms: &[&[u8]],
    target: u8,
    outgoing: &mut [&mut [f64]],
    scratch: &mut CheckScratch,
) {
    let d = incoming.len();
    let q = scratch.tmp.len();
    let inv_q = 1.0 / q as f64;
    scratch.transformed.resize(d * q, 0.0);
    scratch.prefix.resize(d * q, 0.0);

    for i in 0..d {
        let t = &mut scratch.transformed[i * q..(i + 1) * q];
        // Distribution of y_i = h_i·x_i.
        for (a, &p) in incoming[i].iter().enumerate() {
            t[perms[i][a] as usize] = p;
        }
        walsh_hadamard(t);
    }
    // prefix[i] = Π_{k<i} T_k
    scratch.prefix[..q].iter_mut().for_each(|v| *v = 1.0);
    for i in 1..d {
        let (done, rest) = scratch.prefix.split_at_mut(i * q);
        let prev = &done[(i - 1) * q..];
        let t = &scratch.transformed[(i - 1) * q..i * q];
        for ((o, &a), &b) in rest[..q].iter_mut().zip(prev).zip(t) {
            *o = a * b;
        }
    }
    // Walk backwards with a running suffix product stored in `tmp`.
    let mut suffix = vec![1.0; q];
    for i in (0..d).rev() {
        let pre = &scratch.prefix[i * q..(i + 1) * q];
        for ((o, &a), &b) in scratch.tmp.iter_mut().zip(pre).zip(&suffix) {
            *o = a * b;
        }
        walsh_hadamard(&mut scratch.tmp);
        // tmp/q is the distribution of Σ_{k≠i} y_k; y_i = target + that sum.
        let out = &mut outgoing[i];
        for (a, o) in out.iter_mut().enumerate() {
            let y = perms[i][a] ^ target;
            *o = (scratch.tmp[y as usize] * inv_q).max(0.0);
        }
        normalize(out);
        let t = &scratch.transformed[i * q..(i + 1) * q];
        suffix.iter_mut().zip(t).for_each(|(s, &v)| *s *= v);
    }
}

/// Standalone check-node update on owned vectors.
///
/// `coeffs` are the check's nonzero coefficients and `target` its syndrome
/// value. Returns one normalised message per edge.
pub fn check_node_update(
    field: &GaloisField,
    incoming: &[Vec<f64>],
    coeffs: &[u8],
    target: u8,
) -> Vec<Vec<f64>> {
    let q = field.order();
    let perms: Vec<Vec<u8>> = coeffs.iter().map(|&h| field.mul_permutation(h)).collect();
    let perm_refs: Vec<&[u8]> = perms.iter().map(|p| p.as_slice()).collect();
    let in_refs: Vec<&[f64]> = incoming.iter().map(|m| m.as_slice()).collect();
    let mut out = vec![vec![0.0; q]; incoming.len()];
    let mut out_refs: Vec<&mut [f64]> = out.iter_mut().map(|m| m.as_mut_slice()).collect();
    let mut scratch = CheckScratch::new(q);
    check_update_into(&in_refs, &perm_refs, target, &mut out_refs, &mut scratch);
    out
}

/// Flooding-schedule sum-product decoding of `H·x = syndrome`.
///
/// Never fails on non-convergence; inspect [`DecodeResult::syndrome_matched`].
pub fn decode(
    h: &ParityCheckMatrix,
    syndrome: &[u8],
    priors: &SymbolPrior,
    max_iters: usize,
) -> Result<DecodeResult, LdpcError> {
    let n = h.n();
    let q = h.field().order();
    if syndrome.len() != h.n_checks() {
        return Err(LdpcError::LengthMismatch { expected: h.n_checks(), got: syndrome.len() });
    }
    if priors.len() != n || priors.alphabet() != q {
        return Err(LdpcError::InvalidPrior(format!(
            "prior covers {} positions over {} symbols, code needs {n} over {q}",
            priors.len(),
            priors.alphabet()
        )));
    }

    let mut estimate = priors.hard_decision();
    if h.syndrome_unchecked(&estimate) == syndrome {
        return Ok(DecodeResult { estimate, converged: true, iterations: 0, syndrome_matched: true });
    }

    let field = h.field();
    let perms: Vec<Vec<u8>> = (0..q).map(|c| field.mul_permutation(c as u8)).collect();
    let e_count = h.n_edges();
    // v2c and c2v messages, one q-vector per edge.
    let mut v2c = vec![0.0f64; e_count * q];
    let mut c2v = vec![1.0 / q as f64; e_count * q];
    let mut posterior = vec![0.0f64; q];
    let mut scratch = CheckScratch::new(q);
    let mut out_buf: Vec<f64> = Vec::new();

    for iter in 1..=max_iters {
        // Variable nodes.
        for v in 0..n {
            let prior = priors.position(v);
            let edges = h.col_edge_ids(v);
            for &e in edges {
                let e = e as usize;
                let msg = &mut v2c[e * q..(e + 1) * q];
                msg.copy_from_slice(prior);
                for &other in edges {
                    let other = other as usize;
                    if other != e {
                        let m = &c2v[other * q..(other + 1) * q];
                        msg.iter_mut().zip(m).for_each(|(a, &b)| *a *= b);
                    }
                }
                normalize(msg);
            }
        }
        // Check nodes.
        for j in 0..h.n_checks() {
            let range = h.row_edges(j);
            let d = range.len();
            let incoming: Vec<&[f64]> = range.clone().map(|e| &v2c[e * q..(e + 1) * q]).collect();
            let pr: Vec<&[u8]> =
                range.clone().map(|e| perms[h.edge_coeff(e) as usize].as_slice()).collect();
            out_buf.resize(d * q, 0.0);
            {
                let mut outs: Vec<&mut [f64]> = out_buf.chunks_mut(q).collect();
                check_update_into(&incoming, &pr, syndrome[j], &mut outs, &mut scratch);
            }
            c2v[range.start * q..range.end * q].copy_from_slice(&out_buf[..d * q]);
        }
        // Decisions.
        for (v, est) in estimate.iter_mut().enumerate() {
            posterior.copy_from_slice(priors.position(v));
            for &e in h.col_edge_ids(v) {
                let e = e as usize;
                let m = &c2v[e * q..(e + 1) * q];
                posterior.iter_mut().zip(m).for_each(|(a, &b)| *a *= b);
            }
            *est = argmax(&posterior);
        }
        if h.syndrome_unchecked(&estimate) == syndrome {
            return Ok(DecodeResult {
                estimate,
                converged: true,
                iterations: iter,
                syndrome_matched: true,
            });
        }
    }
    let matched = h.syndrome_unchecked(&estimate) == syndrome;
    Ok(DecodeResult { estimate, converged: false, iterations: max_iters, syndrome_matched: matched })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldpc::peg_construct;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dist(rng: &mut impl Rng, q: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..q).map(|_| rng.random::<f64>().powi(3)).collect();
        normalize(&mut v);
        v
    }

    /// Direct O(q^d) evaluation of the check-node rule.
    fn direct_update(f: &GaloisField, incoming: &[Vec<f64>], coeffs: &[u8], target: u8) -> Vec<Vec<f64>> {
        let q = f.order();
        let d = incoming.len();
        (0..d)
            .map(|i| {
                // Distribution of Σ_{k≠i} h_k x_k by successive direct convolution.
                let mut acc = vec![0.0; q];
                acc[0] = 1.0;
                for k in (0..d).filter(|&k| k != i) {
                    let mut next = vec![0.0; q];
                    for (s, &ps) in acc.iter().enumerate() {
                        for (x, &px) in incoming[k].iter().enumerate() {
                            next[s ^ f.mul(coeffs[k], x as u8) as usize] += ps * px;
                        }
                    }
                    acc = next;
                }
                let mut out: Vec<f64> = (0..q)
                    .map(|a| acc[(f.mul(coeffs[i], a as u8) ^ target) as usize])
                    .collect();
                normalize(&mut out);
                out
            })
            .collect()
    }

    #[test]
    fn hadamard_is_involution_up_to_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let orig: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        let mut a = orig.clone();
        walsh_hadamard(&mut a);
        walsh_hadamard(&mut a);
        for (x, y) in a.iter().zip(&orig) {
            assert!((x / 64.0 - y).abs() < 1e-12);
        }
    }

    #[test]
    fn check_update_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in 1..=6 {
            let f = GaloisField::new(m).unwrap();
            let q = f.order();
            for d in [2usize, 3, 5] {
                let incoming: Vec<Vec<f64>> = (0..d).map(|_| random_dist(&mut rng, q)).collect();
                let coeffs: Vec<u8> = (0..d).map(|_| rng.random_range(1..q) as u8).collect();
                let target = rng.random_range(0..q) as u8;
                let fast = check_node_update(&f, &incoming, &coeffs, target);
                let slow = direct_update(&f, &incoming, &coeffs, target);
                for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
                    assert!((a - b).abs() < 1e-9, "m={m} d={d}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn prior_validation() {
        assert!(SymbolPrior::new(4, vec![0.25; 8]).is_ok());
        assert!(SymbolPrior::new(4, vec![0.3; 8]).is_err());
        assert!(SymbolPrior::new(4, vec![0.25; 7]).is_err());
        assert!(SymbolPrior::new(2, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn noiseless_prior_decodes_immediately() {
        let f = GaloisField::new(6).unwrap();
        let h = peg_construct(600, 0.8, &f, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<u8> = (0..600).map(|_| rng.random_range(0..64)).collect();
        let s = h.syndrome(&x).unwrap();
        let r = decode(&h, &s, &SymbolPrior::point_mass(64, &x), 60).unwrap();
        assert_eq!(r.estimate, x);
        assert!(r.iterations <= 1 && r.syndrome_matched && r.converged);
    }

    #[test]
    fn corrects_symbol_errors() {
        let f = GaloisField::new(6).unwrap();
        let q = 64;
        let h = peg_construct(2000, 0.7, &f, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<u8> = (0..2000).map(|_| rng.random_range(0..64)).collect();
        let p_err = 0.08;
        let y: Vec<u8> = x
            .iter()
            .map(|&v| if rng.random::<f64>() < p_err { (v + rng.random_range(1..64)) % 64 } else { v })
            .collect();
        let mut probs = Vec::with_capacity(2000 * q);
        for &v in &y {
            probs.extend((0..q).map(|a| if a == v as usize { 1.0 - p_err } else { p_err / 63.0 }));
        }
        let prior = SymbolPrior::new(q, probs).unwrap();
        let s = h.syndrome(&x).unwrap();
        let r = decode(&h, &s, &prior, 60).unwrap();
        assert!(r.syndrome_matched);
        assert_eq!(r.estimate, x);
        assert!(r.iterations >= 1);
    }

    #[test]
    fn deterministic_and_reports_failure() {
        let f = GaloisField::new(4).unwrap();
        let h = peg_construct(200, 0.9, &f, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<u8> = (0..200).map(|_| rng.random_range(0..16)).collect();
        let s = h.syndrome(&x).unwrap();
        // Uniform priors: hopeless, must come back unmatched without panicking.
        let prior = SymbolPrior::new(16, vec![1.0 / 16.0; 200 * 16]).unwrap();
        let a = decode(&h, &s, &prior, 5).unwrap();
        let b = decode(&h, &s, &prior, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iterations, 5);
        assert!(!a.converged);
    }

    #[test]
    fn wrong_syndrome_length() {
        let f = GaloisField::new(2).unwrap();
        let h = peg_construct(8, 0.5, &f, 1).unwrap();
        let prior = SymbolPrior::point_mass(4, &[0; 8]);
        assert!(decode(&h, &[0; 3], &prior, 10).is_err());
    }
}
