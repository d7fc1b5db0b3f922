//! Hybrid direct reconciliation.
//!
//! Each symbol splits into `d1` low bits, which Alice reveals outright, and
//! `d2` high bits, which Bob recovers by syndrome decoding over GF(2^d2)
//! using priors conditioned on his own full symbol and Alice's revealed low
//! bits. Blocks that do not fill a whole code word are revealed directly.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::discretize::BinningSpec;
use crate::ldpc::{decode, Codebook, DecodeResult, LdpcError, ParityCheckMatrix, SymbolPrior};

#[derive(Debug, Error)]
pub enum ReconcileError {
    #[error("no estimation pairs")]
    NoEstimationData,
    #[error("estimation arrays differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("channel too noisy: no code in the codebook meets the rate bound")]
    ChannelTooNoisy,
    #[error("channel statistics inconsistent: {0}")]
    BadStats(String),
    #[error("missing code for field order {order} at rate {rate_percent}%")]
    MissingCode { order: usize, rate_percent: u16 },
    #[error(transparent)]
    Ldpc(#[from] LdpcError),
}

/// Bits disclosed on the public channel, by category.
///
/// Counters only grow. `pe_symbols_published` is a symbol count for the
/// estimation set, which is discarded from the key and so not charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LeakageLedger {
    lsb_bits: u64,
    syndrome_bits: u64,
    tail_bits: u64,
    confirmation_bits: u64,
    protocol_overhead_bits: u64,
    pe_symbols_published: u64,
}

impl LeakageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_lsb(&mut self, bits: u64) {
        self.lsb_bits += bits;
    }
    pub fn add_syndrome(&mut self, bits: u64) {
        self.syndrome_bits += bits;
    }
    pub fn add_tail(&mut self, bits: u64) {
        self.tail_bits += bits;
    }
    pub fn add_confirmation(&mut self, bits: u64) {
        self.confirmation_bits += bits;
    }
    pub fn add_overhead(&mut self, bits: u64) {
        self.protocol_overhead_bits += bits;
    }
    pub fn add_pe_symbols(&mut self, count: u64) {
        self.pe_symbols_published += count;
    }

    pub fn lsb_bits(&self) -> u64 {
        self.lsb_bits
    }
    pub fn syndrome_bits(&self) -> u64 {
        self.syndrome_bits
    }
    pub fn tail_bits(&self) -> u64 {
        self.tail_bits
    }
    pub fn confirmation_bits(&self) -> u64 {
        self.confirmation_bits
    }
    pub fn protocol_overhead_bits(&self) -> u64 {
        self.protocol_overhead_bits
    }
    pub fn pe_symbols_published(&self) -> u64 {
        self.pe_symbols_published
    }

    /// Disclosure attributable to error correction.
    pub fn reconciliation_bits(&self) -> u64 {
        self.lsb_bits + self.syndrome_bits + self.tail_bits
    }

    /// ℓ_LK: every charged category.
    pub fn total(&self) -> u64 {
        self.reconciliation_bits() + self.confirmation_bits + self.protocol_overhead_bits
    }
}

/// Discretised bivariate Gaussian fitted to the estimation pairs, in
/// bin-index units. Means and variances describe the continuous value
/// before flooring, so `mean = E[symbol] + 1/2` and `var = Var[symbol] − 1/12`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelStats {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov: f64,
}

const QUANT_VAR: f64 = 1.0 / 12.0;
const MIN_VAR: f64 = 1e-9;
/// Probability floor when scoring observed symbols, in bits.
const MAX_SURPRISE_BITS: f64 = 60.0;

impl ChannelStats {
    pub fn fit(pe_a: &[u16], pe_b: &[u16]) -> Result<Self, ReconcileError> {
        if pe_a.len() != pe_b.len() {
            return Err(ReconcileError::LengthMismatch(pe_a.len(), pe_b.len()));
        }
        if pe_a.is_empty() {
            return Err(ReconcileError::NoEstimationData);
        }
        let n = pe_a.len() as f64;
        let ma = pe_a.iter().map(|&x| x as f64).sum::<f64>() / n;
        let mb = pe_b.iter().map(|&x| x as f64).sum::<f64>() / n;
        let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
        for (&a, &b) in pe_a.iter().zip(pe_b) {
            let (da, db) = (a as f64 - ma, b as f64 - mb);
            saa += da * da;
            sbb += db * db;
            sab += da * db;
        }
        let stats = ChannelStats {
            mean_a: ma + 0.5,
            mean_b: mb + 0.5,
            var_a: (saa / n - QUANT_VAR).max(MIN_VAR),
            var_b: (sbb / n - QUANT_VAR).max(MIN_VAR),
            cov: sab / n,
        };
        Ok(stats.clamped())
    }

    /// Keeps the covariance matrix positive semidefinite.
    fn clamped(mut self) -> Self {
        let lim = (self.var_a * self.var_b).sqrt();
        self.cov = self.cov.clamp(-lim, lim);
        self
    }

    /// Replaces Alice's variance with one measured on her whole raw key
    /// (given as a symbol variance).
    pub fn with_alice_symbol_variance(self, var_symbols: f64) -> Self {
        ChannelStats { var_a: (var_symbols - QUANT_VAR).max(MIN_VAR), ..self }.clamped()
    }

    pub fn validate(&self) -> Result<(), ReconcileError> {
        let v = [self.mean_a, self.mean_b, self.var_a, self.var_b, self.cov];
        if v.iter().any(|x| !x.is_finite()) || self.var_a <= 0.0 || self.var_b <= 0.0 {
            return Err(ReconcileError::BadStats(format!("{self:?}")));
        }
        if self.cov * self.cov > self.var_a * self.var_b * (1.0 + 1e-12) {
            return Err(ReconcileError::BadStats("covariance exceeds Cauchy-Schwarz bound".into()));
        }
        Ok(())
    }

    /// Mean and standard deviation of Alice's continuous value given Bob's
    /// symbol, taking Bob's value at his bin centre.
    fn conditional(&self, xb: u16) -> (f64, f64) {
        let slope = self.cov / self.var_b;
        let m = self.mean_a + slope * (xb as f64 + 0.5 - self.mean_b);
        let var = self.var_a - self.cov * slope + slope * slope * QUANT_VAR;
        (m, var.max(0.0).sqrt())
    }

    /// Natural log of `P(X_A = s | X_B = xb)` on an alphabet of `size`.
    fn ln_symbol_prob(m: f64, sd: f64, s: u32, size: u32) -> f64 {
        let lo = if s == 0 { f64::NEG_INFINITY } else { s as f64 };
        let hi = if s + 1 == size { f64::INFINITY } else { s as f64 + 1.0 };
        if sd <= 1e-12 {
            return if m >= lo && m < hi { 0.0 } else { f64::NEG_INFINITY };
        }
        let a = (lo - m) / sd;
        let b = (hi - m) / sd;
        let r2 = std::f64::consts::SQRT_2;
        let p = if a > 0.0 {
            0.5 * (erfc(a / r2) - erfc(b / r2))
        } else if b < 0.0 {
            0.5 * (erfc(-b / r2) - erfc(-a / r2))
        } else {
            1.0 - 0.5 * erfc(-a / r2) - 0.5 * erfc(b / r2)
        };
        if p > 1e-300 {
            p.ln()
        } else {
            // Deep tail: density at the bin centre times unit width.
            let z = (s as f64 + 0.5 - m) / sd;
            -0.5 * z * z - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln()
        }
    }

    /// Posterior over Alice's high part given Bob's full symbol and Alice's
    /// low bits, written into `out` (length `2^d2`).
    pub fn msb_prior_into(&self, xb: u16, lsb_a: u16, spec: &BinningSpec, out: &mut [f64]) {
        let (m, sd) = self.conditional(xb);
        let size = 1u32 << spec.d;
        for (j, o) in out.iter_mut().enumerate() {
            let s = ((j as u32) << spec.d1) | lsb_a as u32;
            *o = Self::ln_symbol_prob(m, sd, s, size);
        }
        softmax(out);
    }

    /// `P(X_A = xa | X_B = xb)` under the fit.
    pub fn symbol_prob(&self, xa: u16, xb: u16, spec: &BinningSpec) -> f64 {
        let (m, sd) = self.conditional(xb);
        Self::ln_symbol_prob(m, sd, xa as u32, 1 << spec.d).exp()
    }
}

fn softmax(w: &mut [f64]) {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let u = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|x| *x = u);
        return;
    }
    let mut sum = 0.0;
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    w.iter_mut().for_each(|x| *x /= sum);
}

/// Decoder priors for one block.
pub fn build_priors(
    xb: &[u16],
    lsb_a: &[u16],
    stats: &ChannelStats,
    spec: &BinningSpec,
) -> Result<SymbolPrior, ReconcileError> {
    stats.validate()?;
    if spec.d1 > 0 && xb.len() != lsb_a.len() {
        return Err(ReconcileError::LengthMismatch(xb.len(), lsb_a.len()));
    }
    let q = 1usize << spec.d2();
    let mut probs = vec![0.0; q * xb.len()];
    for (i, t) in probs.chunks_mut(q).enumerate() {
        let l = if spec.d1 == 0 { 0 } else { lsb_a[i] };
        stats.msb_prior_into(xb[i], l, spec, t);
    }
    Ok(SymbolPrior::new(q, probs)?)
}

/// Cap on pairs scored when estimating entropies.
const ENTROPY_SAMPLE_CAP: usize = 50_000;

/// Cross-entropy estimate of `H(X̂_A | X_B, X̌_A)` in bits per symbol.
pub fn msb_conditional_entropy(pe_a: &[u16], pe_b: &[u16], stats: &ChannelStats, spec: &BinningSpec) -> f64 {
    let n = pe_a.len().min(ENTROPY_SAMPLE_CAP);
    let q = 1usize << spec.d2();
    let mask = ((1u32 << spec.d1) - 1) as u16;
    let total: f64 = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; q],
            |buf, i| {
                let (xa, xb) = (pe_a[i], pe_b[i]);
                stats.msb_prior_into(xb, xa & mask, spec, buf);
                let p = buf[(xa >> spec.d1) as usize];
                (-p.log2()).min(MAX_SURPRISE_BITS)
            },
        )
        .sum();
    total / n as f64
}

/// Cross-entropy estimate of `H(X_A | X_B)` in bits per symbol.
pub fn conditional_entropy(pe_a: &[u16], pe_b: &[u16], stats: &ChannelStats, spec: &BinningSpec) -> f64 {
    let n = pe_a.len().min(ENTROPY_SAMPLE_CAP);
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| (-stats.symbol_prob(pe_a[i], pe_b[i], spec).log2()).min(MAX_SURPRISE_BITS))
        .sum();
    total / n as f64
}

/// Reconciliation parameters agreed before the syndromes are sent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconParams {
    pub d1: u32,
    pub d2: u32,
    pub rate_percent: u16,
    pub n: usize,
    pub n_checks: usize,
    /// Estimated `H(X̂_A | X_B, X̌_A)` for the chosen split.
    pub h_msb: f64,
    /// `d1 + (n_checks/n)·d2`.
    pub leak_per_symbol: f64,
}

impl ReconParams {
    pub fn field_order(&self) -> usize {
        1 << self.d2
    }

    pub fn code<'a>(&self, codebook: &'a Codebook) -> Result<&'a ParityCheckMatrix, ReconcileError> {
        codebook
            .get(self.field_order(), self.rate_percent)
            .ok_or(ReconcileError::MissingCode { order: self.field_order(), rate_percent: self.rate_percent })
    }

    pub fn spec(&self, base: &BinningSpec) -> BinningSpec {
        BinningSpec { d1: self.d1, ..*base }
    }
}

/// Default fraction of the MSB capacity the syndrome may undercut.
pub const DEFAULT_MARGIN: f64 = 0.95;

/// Chooses the split and code rate with the smallest expected disclosure.
///
/// For each field order in the codebook, the largest rate with
/// `(1 − R)·d2·margin ≥ H(X̂_A | X_B, X̌_A)` is taken, so `margin` is the
/// highest efficiency the decoder is asked to reach on the high part.
pub fn select_params(
    alice_symbol_variance: Option<f64>,
    pe_a: &[u16],
    pe_b: &[u16],
    codebook: &Codebook,
    base: &BinningSpec,
    margin: f64,
) -> Result<(ReconParams, ChannelStats), ReconcileError> {
    let mut stats = ChannelStats::fit(pe_a, pe_b)?;
    if let Some(v) = alice_symbol_variance {
        stats = stats.with_alice_symbol_variance(v);
    }
    stats.validate()?;
    let mut best: Option<ReconParams> = None;
    for order in codebook.orders() {
        let d2 = order.trailing_zeros();
        if !order.is_power_of_two() || d2 == 0 || d2 > 8 || d2 > base.d {
            continue;
        }
        let spec = BinningSpec { d1: base.d - d2, ..*base };
        let h = msb_conditional_entropy(pe_a, pe_b, &stats, &spec);
        let pick = codebook
            .iter()
            .filter(|(k, _)| k.order == order)
            .filter(|(_, code)| code.n_checks() as f64 / code.n() as f64 * d2 as f64 * margin >= h)
            .max_by_key(|(k, _)| k.rate_percent);
        if let Some((key, code)) = pick {
            let cand = ReconParams {
                d1: spec.d1,
                d2,
                rate_percent: key.rate_percent,
                n: code.n(),
                n_checks: code.n_checks(),
                h_msb: h,
                leak_per_symbol: spec.d1 as f64 + code.n_checks() as f64 / code.n() as f64 * d2 as f64,
            };
            if best.is_none_or(|b| cand.leak_per_symbol < b.leak_per_symbol - 1e-12) {
                best = Some(cand);
            }
        }
    }
    best.map(|p| (p, stats)).ok_or(ReconcileError::ChannelTooNoisy)
}

/// Publishes Alice's low bits and charges them.
pub fn reveal_lsb(lsb_a: &[u16], d1: u32, ledger: &mut LeakageLedger) -> Vec<u16> {
    if d1 == 0 {
        return Vec::new();
    }
    ledger.add_lsb(lsb_a.len() as u64 * d1 as u64);
    lsb_a.to_vec()
}

/// Full blocks and leftover symbols for a raw key of `len` symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub n: usize,
    pub blocks: usize,
    pub tail: usize,
}

impl BlockLayout {
    pub fn new(len: usize, n: usize) -> Self {
        BlockLayout { n, blocks: len / n, tail: len % n }
    }

    pub fn block(&self, b: usize) -> std::ops::Range<usize> {
        b * self.n..(b + 1) * self.n
    }

    pub fn tail_range(&self) -> std::ops::Range<usize> {
        self.blocks * self.n..self.blocks * self.n + self.tail
    }
}

/// Alice's syndromes for every full block.
pub fn compute_syndromes(msb_a: &[u8], code: &ParityCheckMatrix) -> Result<Vec<Vec<u8>>, ReconcileError> {
    let layout = BlockLayout::new(msb_a.len(), code.n());
    (0..layout.blocks)
        .into_par_iter()
        .map(|b| Ok(code.syndrome(&msb_a[layout.block(b)])?))
        .collect()
}

/// Bob's decoding of every full block. Blocks run in parallel.
pub fn decode_blocks(
    xb: &[u16],
    lsb_a: &[u16],
    syndromes: &[Vec<u8>],
    code: &ParityCheckMatrix,
    stats: &ChannelStats,
    spec: &BinningSpec,
    max_iters: usize,
) -> Result<Vec<DecodeResult>, ReconcileError> {
    let layout = BlockLayout::new(xb.len(), code.n());
    if syndromes.len() != layout.blocks {
        return Err(ReconcileError::LengthMismatch(syndromes.len(), layout.blocks));
    }
    (0..layout.blocks)
        .into_par_iter()
        .map(|b| {
            let r = layout.block(b);
            let lsb = if spec.d1 == 0 { &[][..] } else { &lsb_a[r.clone()] };
            let priors = build_priors(&xb[r], lsb, stats, spec)?;
            Ok(decode(code, &syndromes[b], &priors, max_iters)?)
        })
        .collect()
}

/// Result of reconciling a whole raw key in one process.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconOutcome {
    /// Bob's estimate of Alice's high parts, tail included.
    pub msb: Vec<u8>,
    /// One flag per full block, then one for the tail if present.
    pub block_ok: Vec<bool>,
    pub iterations: Vec<usize>,
    pub layout: BlockLayout,
}

/// Runs both sides of the syndrome exchange and charges the ledger.
#[allow(clippy::too_many_arguments)]
pub fn reconcile_blocks(
    msb_a: &[u8],
    xb: &[u16],
    lsb_a: &[u16],
    code: &ParityCheckMatrix,
    stats: &ChannelStats,
    spec: &BinningSpec,
    ledger: &mut LeakageLedger,
    max_iters: usize,
) -> Result<ReconOutcome, ReconcileError> {
    if msb_a.len() != xb.len() {
        return Err(ReconcileError::LengthMismatch(msb_a.len(), xb.len()));
    }
    let layout = BlockLayout::new(xb.len(), code.n());
    let syndromes = compute_syndromes(msb_a, code)?;
    let results = decode_blocks(xb, lsb_a, &syndromes, code, stats, spec, max_iters)?;
    ledger.add_syndrome(layout.blocks as u64 * code.n_checks() as u64 * spec.d2() as u64);
    let mut msb = Vec::with_capacity(xb.len());
    let mut block_ok = Vec::with_capacity(layout.blocks + 1);
    let mut iterations = Vec::with_capacity(layout.blocks);
    for r in results {
        msb.extend_from_slice(&r.estimate);
        block_ok.push(r.syndrome_matched);
        iterations.push(r.iterations);
    }
    if layout.tail > 0 {
        msb.extend_from_slice(&msb_a[layout.tail_range()]);
        ledger.add_tail(layout.tail as u64 * spec.d2() as u64);
        block_ok.push(true);
    }
    Ok(ReconOutcome { msb, block_ok, iterations, layout })
}

/// Reconciliation efficiency `H(X_A|X_B)·(N−k) / leak`. `None` without leakage.
pub fn measured_efficiency(ledger: &LeakageLedger, h_cond: f64, n_minus_k: usize) -> Option<f64> {
    let leak = ledger.reconciliation_bits();
    (leak > 0).then(|| h_cond * n_minus_k as f64 / leak as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{bin_sifted, split};
    use crate::simulator::{draw_samples, sift, CovarianceModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(d1: u32) -> BinningSpec {
        BinningSpec::new(61.6, 12, d1).unwrap()
    }

    fn default_symbols(slots: usize, seed: u64) -> (Vec<u16>, Vec<u16>) {
        let (a, b) = draw_samples(&CovarianceModel::default_point(), slots, seed, seed + 1).unwrap();
        let s = sift(&a, &b).unwrap();
        let sp = spec(6);
        (
            bin_sifted(&s.alice, &s.bases, &sp, false).unwrap(),
            bin_sifted(&s.bob, &s.bases, &sp, true).unwrap(),
        )
    }

    fn standard_normal_cdf(x: f64) -> f64 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn ledger_accounting() {
        let mut l = LeakageLedger::new();
        assert!(reveal_lsb(&[1, 2, 3], 0, &mut l).is_empty());
        assert_eq!(l.total(), 0);
        let lsb = vec![5u16; 100_000];
        assert_eq!(reveal_lsb(&lsb, 8, &mut l), lsb);
        assert_eq!(l.lsb_bits(), 800_000);
        l.add_confirmation(40);
        l.add_overhead(64);
        l.add_pe_symbols(1000);
        assert_eq!(l.total(), 800_104);
    }

    #[test]
    fn efficiency_definition() {
        let mut l = LeakageLedger::new();
        assert_eq!(measured_efficiency(&l, 2.0, 100), None);
        l.add_lsb(1200);
        assert!((measured_efficiency(&l, 2.0, 100).unwrap() - 2.0 / 12.0).abs() < 1e-12);
        let mut l = LeakageLedger::new();
        l.add_syndrome(300);
        assert_eq!(measured_efficiency(&l, 3.0, 100), Some(1.0));
    }

    #[test]
    fn fit_recovers_simulated_moments() {
        let (xa, xb) = default_symbols(400_000, 3);
        let st = ChannelStats::fit(&xa, &xb).unwrap();
        let eff = CovarianceModel::default_point().effective().unwrap();
        let d2 = spec(6).delta().powi(2);
        assert!((st.var_a * d2 / eff.v_a - 1.0).abs() < 0.02);
        assert!((st.var_b * d2 / eff.v_b - 1.0).abs() < 0.02);
        assert!((st.cov * d2 / eff.c - 1.0).abs() < 0.02);
        assert!((st.mean_a - 2048.0).abs() < 2.0);
    }

    #[test]
    fn zero_noise_prior_is_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<u16> = (0..5000).map(|_| 2048u16.wrapping_add_signed(rng.random_range(-300..300))).collect();
        let st = ChannelStats::fit(&xs, &xs).unwrap();
        let sp = spec(6);
        let (msb, lsb) = split(&xs[..50], &sp).unwrap();
        let pr = build_priors(&xs[..50], &lsb, &st, &sp).unwrap();
        for i in 0..50 {
            assert!(pr.position(i)[msb[i] as usize] > 1.0 - 1e-9);
        }
    }

    #[test]
    fn prior_matches_numerical_integration() {
        // 3-bit alphabet (d1 = 1, d2 = 2) with a wide conditional spread so
        // every candidate has visible mass.
        let sp = BinningSpec::new(4.0, 3, 1).unwrap();
        let st = ChannelStats { mean_a: 4.0, mean_b: 4.0, var_a: 2.0, var_b: 2.0, cov: 1.2 };
        let xb = 5u16;
        let lsb = 1u16;
        let mut got = [0.0; 4];
        st.msb_prior_into(xb, lsb, &sp, &mut got);

        // Oracle: integrate Alice's conditional density over each bin with a
        // midpoint rule, averaging Bob's value uniformly over his bin.
        let slope = st.cov / st.var_b;
        let sd = (st.var_a - st.cov * slope).sqrt();
        let mut w = [0.0; 4];
        let sub = 400;
        for u in 0..sub {
            let yb = xb as f64 + (u as f64 + 0.5) / sub as f64;
            let m = st.mean_a + slope * (yb - st.mean_b);
            for (j, wj) in w.iter_mut().enumerate() {
                let s = (j << 1) | lsb as usize;
                let lo = if s == 0 { -1e9 } else { s as f64 };
                let hi = if s == 7 { 1e9 } else { s as f64 + 1.0 };
                *wj += standard_normal_cdf((hi - m) / sd) - standard_normal_cdf((lo - m) / sd);
            }
        }
        let tot: f64 = w.iter().sum();
        for j in 0..4 {
            assert!((got[j] - w[j] / tot).abs() < 2e-3, "j={j}: {} vs {}", got[j], w[j] / tot);
        }
        let mode = (0..4).max_by(|&a, &b| got[a].total_cmp(&got[b])).unwrap();
        // Conditional mean 4 + 0.6·1.5 = 4.9 lies in symbol 4 = (2 << 1) | 0,
        // so with lsb 1 the nearest candidate is symbol 5, i.e. j = 2.
        assert_eq!(mode, 2);
    }

    #[test]
    fn priors_normalised() {
        let (xa, xb) = default_symbols(20_000, 5);
        let st = ChannelStats::fit(&xa, &xb).unwrap();
        for d1 in [4, 5, 6, 7] {
            let sp = spec(d1);
            let (_, lsb) = split(&xa, &sp).unwrap();
            let pr = build_priors(&xb, &lsb, &st, &sp).unwrap();
            for i in 0..pr.len() {
                let s: f64 = pr.position(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    fn book(orders: &[usize], n: usize) -> Codebook {
        let rates: Vec<u16> = (50..=95).collect();
        Codebook::generate(orders, &rates, n, 11).0
    }

    #[test]
    fn noiseless_selects_top_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<u16> = (0..5000).map(|_| rng.random_range(1500..2500)).collect();
        let b = book(&[32, 64], 400);
        let (p, _) = select_params(None, &xs, &xs, &b, &spec(6), DEFAULT_MARGIN).unwrap();
        assert_eq!(p.rate_percent, 95);
        // With no noise the larger field needs fewer revealed bits.
        assert_eq!(p.d2, 6);
    }

    #[test]
    fn hopeless_channel_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xa: Vec<u16> = (0..5000).map(|_| rng.random_range(0..4096)).collect();
        let xb: Vec<u16> = (0..5000).map(|_| rng.random_range(0..4096)).collect();
        let b = book(&[32, 64], 400);
        assert!(matches!(
            select_params(None, &xa, &xb, &b, &spec(6), DEFAULT_MARGIN),
            Err(ReconcileError::ChannelTooNoisy)
        ));
    }

    #[test]
    fn identical_words_decode_immediately() {
        let (xa, _) = default_symbols(20_000, 8);
        let st = ChannelStats::fit(&xa, &xa).unwrap();
        let b = book(&[64], 1000);
        let code = b.get(64, 90).unwrap();
        let sp = spec(6);
        let (msb, lsb) = split(&xa, &sp).unwrap();
        let mut ledger = LeakageLedger::new();
        let out = reconcile_blocks(&msb, &xa, &lsb, code, &st, &sp, &mut ledger, 60).unwrap();
        assert_eq!(out.msb, msb);
        assert!(out.iterations.iter().all(|&i| i <= 1));
        assert!(out.block_ok.iter().all(|&f| f));
        let blocks = out.layout.blocks as u64;
        assert_eq!(ledger.syndrome_bits(), blocks * code.n_checks() as u64 * 6);
        assert_eq!(ledger.tail_bits(), out.layout.tail as u64 * 6);
    }

    #[test]
    fn desk_scale_gf32_blocks_all_decode() {
        let (xa, xb) = default_symbols(110_000, 21);
        let b = book(&[32], 1000);
        let k = 5000;
        let (p, st) = select_params(None, &xa[..k], &xb[..k], &b, &spec(7), DEFAULT_MARGIN).unwrap();
        assert_eq!(p.d2, 5);
        let sp = p.spec(&spec(7));
        let key_a = &xa[k..k + 50_000];
        let key_b = &xb[k..k + 50_000];
        let (msb_a, lsb_a) = split(key_a, &sp).unwrap();
        let mut ledger = LeakageLedger::new();
        let lsb = reveal_lsb(&lsb_a, sp.d1, &mut ledger);
        let code = p.code(&b).unwrap();
        let out = reconcile_blocks(&msb_a, key_b, &lsb, code, &st, &sp, &mut ledger, 60).unwrap();
        assert_eq!(out.layout.blocks, 50);
        assert!(out.block_ok.iter().all(|&f| f), "{:?}", out.block_ok);
        assert_eq!(out.msb, msb_a);
        let h = conditional_entropy(&xa[..k], &xb[..k], &st, &sp);
        let beta = measured_efficiency(&ledger, h, 50_000).unwrap();
        // Seven revealed low bits cap β near H/7 for this split.
        assert!(beta > 0.8 && beta < 1.0, "beta {beta}");
    }
}
