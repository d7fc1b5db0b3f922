//! Parameter estimation and the finite-size secret key length.
//!
//! The key length is
//!
//! ```text
//! ℓ = ⌊(N−k)·(log2 1/c(δ) − log2 γ(s·(d_pe0 + μ))) − ℓ_LK − log2 1/ε⌋
//! ```
//!
//! where `c(δ) = δ²/(2π)`, `s` is the model's `unit_scale`, and γ and μ are
//! pluggable. Two implementations of each are bundled:
//!
//! * reference: γ is the largest entropy (in bits, as `log2 γ`) of an integer
//!   random variable with `E|X| ≤ t`, attained by a two-sided geometric law,
//!   so `t` is in bin units and `unit_scale = 1`. μ is a Bernstein bound for
//!   sampling without replacement, with the variance bounded by
//!   `range·(d_pe0 + μ)` and solved as a fixed point.
//! * stub: `γ(t) = 2^t` with `unit_scale = δ`, and `μ = C/√k`. Used for
//!   deterministic pipeline tests.

use rand::seq::index;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::rng::labeled_rng;
use crate::discretize::BinningSpec;
use crate::simulator::EffectiveModel;

#[derive(Debug, Error, PartialEq)]
pub enum FiniteKeyError {
    #[error("estimation input is empty")]
    Empty,
    #[error("estimation arrays differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("estimation set size {k} must be below {n_total}")]
    SampleTooLarge { k: usize, n_total: usize },
    #[error("epsilon {0} outside (0, 1)")]
    BadEpsilon(f64),
    #[error("c(delta) = {0} outside (0, 1)")]
    BadCDelta(f64),
    #[error("gamma undefined at {0}")]
    GammaUndefined(f64),
    #[error("no candidate values for k")]
    NoCandidates,
}

/// Outcome of comparing the published estimation symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationResult {
    pub k: usize,
    /// Σ|x_a − x_b| over the estimation set.
    pub total_distance: u64,
    pub d_pe: f64,
    pub d_pe0: f64,
    pub passed: bool,
}

/// Average absolute symbol distance and the threshold check.
pub fn estimate_distance(xa: &[u16], xb: &[u16], d_pe0: f64) -> Result<EstimationResult, FiniteKeyError> {
    if xa.len() != xb.len() {
        return Err(FiniteKeyError::LengthMismatch(xa.len(), xb.len()));
    }
    if xa.is_empty() {
        return Err(FiniteKeyError::Empty);
    }
    let total: u64 = xa.iter().zip(xb).map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs()).sum();
    let d_pe = total as f64 / xa.len() as f64;
    Ok(EstimationResult { k: xa.len(), total_distance: total, d_pe, d_pe0, passed: d_pe <= d_pe0 })
}

/// Uniform `k`-subset of `0..n_total`, sorted ascending.
pub fn choose_estimation_set(n_total: usize, k: usize, seed: u64) -> Result<Vec<usize>, FiniteKeyError> {
    if k >= n_total {
        return Err(FiniteKeyError::SampleTooLarge { k, n_total });
    }
    let mut rng = labeled_rng(seed, "pe/estimation-set");
    let mut idx = index::sample(&mut rng, n_total, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Theoretical mean of `|x_a − x_b|` in bins for a source characterised by
/// `model`, ignoring saturation.
pub fn expected_distance(model: &EffectiveModel, spec: &BinningSpec) -> f64 {
    let sigma = model.difference_variance().max(0.0).sqrt() / spec.delta();
    // Uniform quantisation of both values adds 1/6 bin² to the variance.
    (2.0 / std::f64::consts::PI).sqrt() * (sigma * sigma + 1.0 / 6.0).sqrt()
}

/// Abort threshold: the theoretical distance inflated by `margin`.
pub fn theoretical_threshold(model: &EffectiveModel, spec: &BinningSpec, margin: f64) -> f64 {
    expected_distance(model, spec) * (1.0 + margin)
}

/// Correlation bound γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Gamma {
    Reference,
    /// `γ(t) = 2^t`.
    Stub,
}

impl Gamma {
    /// `log2 γ(t)`.
    pub fn log2(&self, t: f64) -> Result<f64, FiniteKeyError> {
        if !t.is_finite() || t < 0.0 {
            return Err(FiniteKeyError::GammaUndefined(t));
        }
        let v = match self {
            Gamma::Stub => t,
            Gamma::Reference => reference_log2_gamma(t),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FiniteKeyError::GammaUndefined(t))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gamma::Reference => "reference",
            Gamma::Stub => "stub",
        }
    }
}

/// Entropy in bits of the two-sided geometric law on ℤ with mean absolute
/// value `t`: `log2((t + s)·((s + 1)/t)^t)` with `s = √(1 + t²)`.
fn reference_log2_gamma(t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let s = (1.0 + t * t).sqrt();
    (t + s).log2() + t * ((s + 1.0) / t).log2()
}

/// Inputs to the statistical fluctuation term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuContext {
    pub k: usize,
    pub n_total: usize,
    pub epsilon: f64,
    pub d_pe0: f64,
    /// Largest possible `|x_a − x_b|`.
    pub range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mu {
    Reference,
    /// `μ = c/√k`.
    Stub { c: f64 },
}

impl Mu {
    pub fn eval(&self, ctx: &MuContext) -> f64 {
        match *self {
            Mu::Stub { c } => c / (ctx.k.max(1) as f64).sqrt(),
            Mu::Reference => reference_mu(ctx),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mu::Reference => "reference",
            Mu::Stub { .. } => "stub",
        }
    }
}

fn reference_mu(ctx: &MuContext) -> f64 {
    let k = ctx.k as f64;
    let n = ctx.n_total as f64;
    if ctx.k == 0 || ctx.k >= ctx.n_total {
        return f64::INFINITY;
    }
    let l = (1.0 / ctx.epsilon).ln();
    let rho = 1.0 - (k - 1.0) / n;
    let b = ctx.range;
    let dev = |var: f64| {
        let lin = 2.0 / 3.0 * b * l;
        (lin + (lin * lin + 8.0 * k * var * rho * l).sqrt()) / (2.0 * k)
    };
    let scale = n / (n - k);
    let mut mu = 0.0;
    for _ in 0..500 {
        let next = scale * dev(b * (ctx.d_pe0 + mu));
        if (next - mu).abs() <= 1e-12 * next.max(1.0) {
            return next;
        }
        mu = next;
    }
    mu
}

/// Security parameter together with the bundled γ, μ and unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyLengthModel {
    pub epsilon: f64,
    pub gamma: Gamma,
    pub mu: Mu,
    /// Converts bin-index distance into the units γ expects.
    pub unit_scale: f64,
}

impl KeyLengthModel {
    pub const DEFAULT_EPSILON: f64 = 2e-10;

    pub fn reference(epsilon: f64) -> Self {
        KeyLengthModel { epsilon, gamma: Gamma::Reference, mu: Mu::Reference, unit_scale: 1.0 }
    }

    pub fn stub(epsilon: f64, spec: &BinningSpec, mu_c: f64) -> Self {
        KeyLengthModel { epsilon, gamma: Gamma::Stub, mu: Mu::Stub { c: mu_c }, unit_scale: spec.delta() }
    }

    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(FiniteKeyError::BadEpsilon(self.epsilon));
        }
        Ok(())
    }
}

/// `c(δ) = δ²/(2π)`.
pub fn c_delta(delta: f64) -> f64 {
    delta * delta / (2.0 * std::f64::consts::PI)
}

/// Every term of one key-length evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyLengthReport {
    pub n_minus_k: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub log2_inv_c: f64,
    pub gamma: &'static str,
    pub mu_kind: &'static str,
    pub d_pe0: f64,
    pub mu: f64,
    pub unit_scale: f64,
    /// `unit_scale·(d_pe0 + μ)`.
    pub gamma_arg: f64,
    pub log2_gamma: f64,
    pub leak_bits: u64,
    pub log2_inv_eps: f64,
    /// Unrounded ℓ.
    pub length_real: f64,
    pub length: i64,
}

impl KeyLengthReport {
    pub fn positive(&self) -> bool {
        self.length > 0
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let v = serde_json::to_value(self).expect("report serialises");
        let mut s = String::from("[key_length]\n");
        if let serde_json::Value::Object(map) = v {
            for (k, v) in map {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}

/// Evaluates the key length. Returns a report whose `length` may be ≤ 0;
/// the caller aborts in that case.
pub fn secret_key_length(
    n_minus_k: usize,
    k: usize,
    spec: &BinningSpec,
    model: &KeyLengthModel,
    d_pe0: f64,
    leak_bits: u64,
) -> Result<KeyLengthReport, FiniteKeyError> {
    model.validate()?;
    let delta = spec.delta();
    let c = c_delta(delta);
    if !(c > 0.0 && c < 1.0) {
        return Err(FiniteKeyError::BadCDelta(c));
    }
    let mu = model.mu.eval(&MuContext {
        k,
        n_total: n_minus_k + k,
        epsilon: model.epsilon,
        d_pe0,
        range: (spec.alphabet() - 1) as f64,
    });
    let gamma_arg = model.unit_scale * (d_pe0 + mu);
    let log2_gamma = model.gamma.log2(gamma_arg)?;
    let log2_inv_c = -c.log2();
    let log2_inv_eps = -model.epsilon.log2();
    let length_real = n_minus_k as f64 * (log2_inv_c - log2_gamma) - leak_bits as f64 - log2_inv_eps;
    Ok(KeyLengthReport {
        n_minus_k,
        k,
        epsilon: model.epsilon,
        delta,
        log2_inv_c,
        gamma: model.gamma.name(),
        mu_kind: model.mu.name(),
        d_pe0,
        mu,
        unit_scale: model.unit_scale,
        gamma_arg,
        log2_gamma,
        leak_bits,
        log2_inv_eps,
        length_real,
        length: length_real.floor() as i64,
    })
}

/// What is known about the channel before choosing `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyPrediction {
    pub d_pe0: f64,
    /// Expected disclosure per raw-key symbol.
    pub leak_per_symbol: f64,
    /// Disclosure independent of the raw-key length.
    pub fixed_leak_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KChoice {
    pub k: usize,
    pub length: i64,
    /// False when no candidate gives a positive key.
    pub positive: bool,
    pub evaluations: Vec<(usize, i64)>,
}

/// Picks the candidate `k` with the largest predicted key, ties toward the
/// smaller `k`. Candidates outside `1..n_total` are skipped.
pub fn optimize_k(
    n_total: usize,
    candidates: &[usize],
    spec: &BinningSpec,
    model: &KeyLengthModel,
    prediction: &KeyPrediction,
) -> Result<KChoice, FiniteKeyError> {
    let mut evaluations = Vec::new();
    let mut best: Option<(usize, i64)> = None;
    let mut sorted: Vec<usize> = candidates.iter().copied().filter(|&k| k >= 1 && k < n_total).collect();
    sorted.sort_unstable();
    sorted.dedup();
    for k in sorted {
        let n_key = n_total - k;
        let leak = (prediction.leak_per_symbol * n_key as f64).ceil() as u64 + prediction.fixed_leak_bits;
        let r = secret_key_length(n_key, k, spec, model, prediction.d_pe0, leak)?;
        evaluations.push((k, r.length));
        if best.is_none_or(|(_, l)| r.length > l) {
            best = Some((k, r.length));
        }
    }
    let (k, length) = best.ok_or(FiniteKeyError::NoCandidates)?;
    Ok(KChoice { k, length, positive: length > 0, evaluations })
}

/// Logarithmic grid of candidate `k` values between 1% and 50% of `n_total`.
pub fn default_k_grid(n_total: usize) -> Vec<usize> {
    let lo = (n_total as f64 * 0.01).max(1.0);
    let hi = n_total as f64 * 0.5;
    let steps = 40;
    let mut v: Vec<usize> = (0..=steps)
        .map(|i| (lo * (hi / lo).powf(i as f64 / steps as f64)).round() as usize)
        .filter(|&k| k >= 1 && k < n_total)
        .collect();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_spec() -> BinningSpec {
        BinningSpec::new(61.6, 12, 6).unwrap()
    }

    /// Max entropy of an integer variable with E|X| = t by solving for the
    /// geometric ratio numerically and summing the series.
    fn max_entropy_oracle(t: f64) -> f64 {
        let mean_abs = |lam: f64| 2.0 * lam / ((1.0 - lam) * (1.0 + lam));
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_abs(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lam = 0.5 * (lo + hi);
        let z = (1.0 + lam) / (1.0 - lam);
        let mut h = 0.0;
        for x in -20_000i64..=20_000 {
            let p = lam.powi(x.unsigned_abs() as i32) / z;
            if p > 0.0 {
                h -= p * p.log2();
            }
        }
        h
    }

    #[test]
    fn distance_examples() {
        let r = estimate_distance(&[0, 5, 9], &[1, 5, 6], 2.0).unwrap();
        assert_eq!(r.total_distance, 4);
        assert!((r.d_pe - 4.0 / 3.0).abs() < 1e-15);
        assert!(r.passed);
        let r = estimate_distance(&[3, 3], &[3, 3], 0.0).unwrap();
        assert_eq!(r.d_pe, 0.0);
        assert!(r.passed);
        assert!(!estimate_distance(&[0, 10], &[10, 0], 9.99).unwrap().passed);
        assert_eq!(estimate_distance(&[], &[], 1.0), Err(FiniteKeyError::Empty));
        assert!(estimate_distance(&[1], &[1, 2], 1.0).is_err());
    }

    #[test]
    fn estimation_set() {
        assert_eq!(choose_estimation_set(10, 9, 1).unwrap().len(), 9);
        assert!(choose_estimation_set(10, 10, 1).is_err());
        assert_eq!(choose_estimation_set(1000, 50, 4).unwrap(), choose_estimation_set(1000, 50, 4).unwrap());
        let mut counts = [0usize; 10];
        for s in 0..10_000u64 {
            let set = choose_estimation_set(10, 2, s).unwrap();
            assert_eq!(set.len(), 2);
            assert_ne!(set[0], set[1]);
            for i in set {
                counts[i] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((f - 0.2).abs() < 0.02, "frequency {f}");
        }
    }

    #[test]
    fn log2_inv_c_at_default_binning() {
        let s = default_spec();
        let v = -c_delta(s.delta()).log2();
        assert!((v - 12.762).abs() < 1e-3, "{v}");
        assert!((-(2e-10f64).log2() - 32.2193).abs() < 1e-3);
    }

    #[test]
    fn stub_gamma_one_gives_plain_difference() {
        // unit_scale 0 makes the gamma argument 0, i.e. γ = 1.
        let s = default_spec();
        let m = KeyLengthModel { epsilon: 2e-10, gamma: Gamma::Stub, mu: Mu::Stub { c: 0.0 }, unit_scale: 0.0 };
        let nk = 1_000_000;
        let r = secret_key_length(nk, 1000, &s, &m, 5.0, nk as u64 * 12).unwrap();
        let expected = nk as f64 * r.log2_inv_c - nk as f64 * 12.0 - r.log2_inv_eps;
        assert!((r.length_real - expected).abs() < 1e-6);
        assert!((r.length_real - (nk as f64 * 0.762 - 32.22)).abs() < nk as f64 * 1e-3);
    }

    #[test]
    fn constructed_cancellation() {
        let s = default_spec();
        let m = KeyLengthModel::stub(2e-10, &s, 0.0);
        let log2_inv_c = -c_delta(s.delta()).log2();
        // γ(δ·d0) = 2^(δ·d0) and δ·d0 = log2(1/c) cancels the entropy term.
        let d0 = log2_inv_c / s.delta();
        let r = secret_key_length(12345, 10, &s, &m, d0, 777).unwrap();
        assert!((r.length_real - (-777.0 - r.log2_inv_eps)).abs() < 1e-6);
        assert!(!r.positive());
    }

    #[test]
    fn reference_gamma_matches_max_entropy() {
        for t in [0.1, 0.5, 1.0, 3.0, 13.5, 40.0] {
            let got = Gamma::Reference.log2(t).unwrap();
            let want = max_entropy_oracle(t);
            assert!((got - want).abs() < 1e-6, "t={t}: {got} vs {want}");
        }
        assert_eq!(Gamma::Reference.log2(0.0).unwrap(), 0.0);
        assert!(Gamma::Reference.log2(-1.0).is_err());
        assert!(Gamma::Reference.log2(f64::NAN).is_err());
    }

    #[test]
    fn reference_mu_limits() {
        let ctx = |k, n| MuContext { k, n_total: n, epsilon: 2e-10, d_pe0: 13.5, range: 4095.0 };
        let m1 = Mu::Reference.eval(&ctx(10_000, 100_000));
        let m2 = Mu::Reference.eval(&ctx(100_000, 1_000_000));
        let m3 = Mu::Reference.eval(&ctx(1_000_000, 10_000_000));
        assert!(m1 > m2 && m2 > m3 && m3 > 0.0);
        // Between 1/√k (variance term) and 1/k (range term) scaling.
        assert!(m2 / m3 > 10f64.sqrt() * 0.95 && m2 / m3 < 10.0, "{m2} {m3}");
        // Fixed point: plugging μ back gives μ.
        let c = ctx(100_000, 1_000_000);
        let k = c.k as f64;
        let n = c.n_total as f64;
        let l = (1.0 / c.epsilon).ln();
        let rho = 1.0 - (k - 1.0) / n;
        let lin = 2.0 / 3.0 * c.range * l;
        let var = c.range * (c.d_pe0 + m2);
        let dev = (lin + (lin * lin + 8.0 * k * var * rho * l).sqrt()) / (2.0 * k);
        assert!((n / (n - k) * dev - m2).abs() < 1e-9);
        assert!(Mu::Reference.eval(&ctx(10, 10)).is_infinite());
    }

    #[test]
    fn report_contains_terms() {
        let s = default_spec();
        let r = secret_key_length(1000, 100, &s, &KeyLengthModel::reference(2e-10), 13.0, 10).unwrap();
        let text = r.to_text();
        for key in ["log2_inv_c", "log2_gamma", "mu", "leak_bits", "length"] {
            assert!(text.contains(&format!("\n{key} = ")), "{text}");
        }
    }

    #[test]
    fn bad_epsilon() {
        let s = default_spec();
        for e in [0.0, 1.0, -1.0] {
            let m = KeyLengthModel::reference(e);
            assert_eq!(secret_key_length(10, 1, &s, &m, 1.0, 0), Err(FiniteKeyError::BadEpsilon(e)));
        }
    }

    #[test]
    fn overhead_vanishes_as_epsilon_tends_to_one() {
        let s = default_spec();
        let m = KeyLengthModel::stub(1.0 - 1e-15, &s, 0.0);
        let r = secret_key_length(5000, 10, &s, &m, 10.0, 0).unwrap();
        let want = 5000.0 * (r.log2_inv_c - s.delta() * 10.0);
        assert!((r.length_real - want).abs() < 1e-6);
    }

    #[test]
    fn optimize_k_contracts() {
        let s = default_spec();
        let m = KeyLengthModel::stub(2e-10, &s, 40.0);
        let p = KeyPrediction { d_pe0: 13.5, leak_per_symbol: 6.3, fixed_leak_bits: 1000 };
        let one = optimize_k(100_000, &[5000], &s, &m, &p).unwrap();
        assert_eq!(one.k, 5000);

        // Exhaustive oracle over every k on a grid.
        let n_total = 200_000;
        let grid: Vec<usize> = (1..200).map(|i| i * 500).collect();
        let got = optimize_k(n_total, &grid, &s, &m, &p).unwrap();
        let mut best = (0, i64::MIN);
        for &k in &grid {
            let leak = (p.leak_per_symbol * (n_total - k) as f64).ceil() as u64 + p.fixed_leak_bits;
            let l = secret_key_length(n_total - k, k, &s, &m, p.d_pe0, leak).unwrap().length;
            if l > best.1 {
                best = (k, l);
            }
        }
        assert_eq!((got.k, got.length), best);
        assert!(got.positive);
        // Unimodal in k.
        let ls: Vec<i64> = got.evaluations.iter().map(|e| e.1).collect();
        let peak = ls.iter().position(|&l| l == got.length).unwrap();
        assert!(ls[..=peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(ls[peak..].windows(2).all(|w| w[0] >= w[1]));

        let hopeless = KeyPrediction { leak_per_symbol: 12.6, ..p };
        let r = optimize_k(n_total, &grid, &s, &m, &hopeless).unwrap();
        assert!(!r.positive);
        assert_eq!(r.length, r.evaluations.iter().map(|e| e.1).max().unwrap());
        assert_eq!(optimize_k(10, &[20], &s, &m, &p), Err(FiniteKeyError::NoCandidates));
    }

    #[test]
    fn theoretical_distance_tracks_simulation_scale() {
        let eff = crate::simulator::CovarianceModel::default_point().effective().unwrap();
        let d = expected_distance(&eff, &default_spec());
        assert!((d - 13.15).abs() < 0.1, "{d}");
    }

    proptest! {
        #[test]
        fn decreasing_in_leak(nk in 1000usize..10_000_000, leak in 0u64..1_000_000, extra in 1u64..1000) {
            let s = default_spec();
            let m = KeyLengthModel::reference(2e-10);
            let a = secret_key_length(nk, 1000, &s, &m, 13.0, leak).unwrap();
            let b = secret_key_length(nk, 1000, &s, &m, 13.0, leak + extra).unwrap();
            prop_assert!(b.length_real < a.length_real);
            prop_assert_eq!(a.length - b.length, extra as i64);
        }

        #[test]
        fn decreasing_in_threshold(d0 in 0.0f64..40.0, step in 0.01f64..5.0, stub in any::<bool>()) {
            let s = default_spec();
            let m = if stub { KeyLengthModel::stub(2e-10, &s, 3.0) } else { KeyLengthModel::reference(2e-10) };
            let a = secret_key_length(100_000, 5000, &s, &m, d0, 1000).unwrap();
            let b = secret_key_length(100_000, 5000, &s, &m, d0 + step, 1000).unwrap();
            prop_assert!(b.length_real < a.length_real);
            prop_assert!(b.length <= a.length);
        }

        #[test]
        fn increasing_in_raw_key(nk in 1000usize..10_000_000, more in 1usize..100_000) {
            // Stub μ does not depend on N, so the per-sample term is fixed.
            let s = default_spec();
            let m = KeyLengthModel::stub(2e-10, &s, 3.0);
            let a = secret_key_length(nk, 1000, &s, &m, 13.0, 5000).unwrap();
            let b = secret_key_length(nk + more, 1000, &s, &m, 13.0, 5000).unwrap();
            prop_assert!(a.log2_inv_c > a.log2_gamma);
            prop_assert!(b.length_real > a.length_real);
        }

        #[test]
        fn distance_symmetric_and_translation_invariant(
            pairs in proptest::collection::vec((0u16..4000, 0u16..4000), 1..200),
            shift in 0u16..90,
        ) {
            let (a, b): (Vec<u16>, Vec<u16>) = pairs.into_iter().unzip();
            let ab = estimate_distance(&a, &b, 1.0).unwrap();
            let ba = estimate_distance(&b, &a, 1.0).unwrap();
            prop_assert_eq!(ab.total_distance, ba.total_distance);
            let a2: Vec<u16> = a.iter().map(|x| x + shift).collect();
            let b2: Vec<u16> = b.iter().map(|x| x + shift).collect();
            prop_assert_eq!(estimate_distance(&a2, &b2, 1.0).unwrap().total_distance, ab.total_distance);
        }

        #[test]
        fn reference_gamma_nondecreasing(t in 0.0f64..100.0, dt in 0.0f64..10.0) {
            let g = Gamma::Reference;
            prop_assert!(g.log2(t + dt).unwrap() >= g.log2(t).unwrap());
            prop_assert!(g.log2(t).unwrap() >= 0.0);
        }
    }
}
