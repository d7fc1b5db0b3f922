//! Gaussian entanglement source standing in for the optical hardware.
//!
//! A two-mode state is described by per-quadrature variances of Alice's and
//! Bob's modes and their covariance `c` (X quadratures correlated with `+c`,
//! P quadratures anti-correlated with `-c`). The channel to Bob applies
//! loss, excess noise, and detector inefficiency; Alice's detector
//! inefficiency applies to her arm. All variances are in shot-noise units
//! (vacuum = 1).

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::rng::labeled_rng;

/// Slots generated per independent random stream.
const CHUNK: usize = 1 << 16;

/// Measurement rate of the experiment, carried for reporting only.
pub const SLOT_RATE_HZ: f64 = 100_000.0;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("invalid covariance model: {0}")]
    InvalidModel(String),
    #[error("record lengths differ: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("calibration needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("calibration input has zero variance")]
    ZeroVariance,
    #[error("malformed sample dump: {0}")]
    MalformedDump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Measured quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    P,
}

impl Basis {
    pub fn bit(self) -> bool {
        matches!(self, Basis::P)
    }

    pub fn from_bit(b: bool) -> Basis {
        if b {
            Basis::P
        } else {
            Basis::X
        }
    }
}

/// Two-mode Gaussian state plus channel and detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub v_a: f64,
    pub v_b: f64,
    pub c: f64,
    pub eta: f64,
    pub excess: f64,
    pub detector_eff_a: f64,
    pub detector_eff_b: f64,
}

/// Covariance seen at the detectors after loss and inefficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveModel {
    pub v_a: f64,
    pub v_b: f64,
    pub c: f64,
}

impl EffectiveModel {
    /// Variance of `x_a - x_b` for same-basis pairs after Bob's P sign flip.
    pub fn difference_variance(&self) -> f64 {
        self.v_a + self.v_b - 2.0 * self.c
    }

    /// Variance of Alice's value given Bob's.
    pub fn conditional_variance_a(&self) -> f64 {
        self.v_a - self.c * self.c / self.v_b
    }
}

impl Default for CovarianceModel {
    fn default() -> Self {
        Self::default_point()
    }
}

impl CovarianceModel {
    /// Symmetric two-mode squeezed state whose squeezed quadrature sits
    /// `squeezing_db` below vacuum, with an ideal channel.
    pub fn two_mode_squeezed(squeezing_db: f64) -> Self {
        // 10·log10(e^{-2r}) = -squeezing_db
        let two_r = squeezing_db / 10.0 * std::f64::consts::LN_10;
        CovarianceModel {
            v_a: two_r.cosh(),
            v_b: two_r.cosh(),
            c: two_r.sinh(),
            eta: 1.0,
            excess: 0.0,
            detector_eff_a: 1.0,
            detector_eff_b: 1.0,
        }
    }

    /// Default operating point: 10 dB two-mode squeezing, 98% homodyne
    /// efficiency at both detectors, 0.01 SNU excess noise, no channel loss.
    pub fn default_point() -> Self {
        CovarianceModel {
            excess: 0.01,
            detector_eff_a: 0.98,
            detector_eff_b: 0.98,
            ..Self::two_mode_squeezed(10.0)
        }
    }

    /// Same state with the channel transmissivity set from a loss in dB.
    pub fn with_loss_db(self, loss_db: f64) -> Self {
        CovarianceModel { eta: 10f64.powf(-loss_db / 10.0), ..self }
    }

    pub fn with_excess(self, excess: f64) -> Self {
        CovarianceModel { excess, ..self }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |m: &str| Err(SimulatorError::InvalidModel(m.to_owned()));
        let fields = [self.v_a, self.v_b, self.c, self.eta, self.excess, self.detector_eff_a, self.detector_eff_b];
        if fields.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        for (name, v) in [("eta", self.eta), ("detector_eff_a", self.detector_eff_a), ("detector_eff_b", self.detector_eff_b)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.v_a <= 0.0 || self.v_b <= 0.0 {
            return bad("variances must be positive");
        }
        if self.excess < 0.0 {
            return bad("excess noise must be non-negative");
        }
        if self.c * self.c > self.v_a * self.v_b {
            return bad("covariance violates Cauchy-Schwarz");
        }
        let eff = self.effective_unchecked();
        if eff.v_a <= 0.0 || eff.v_b <= 0.0 || eff.c * eff.c >= eff.v_a * eff.v_b {
            return bad("effective covariance is not positive definite");
        }
        Ok(())
    }

    fn effective_unchecked(&self) -> EffectiveModel {
        let tb = self.eta * self.detector_eff_b;
        EffectiveModel {
            v_a: self.detector_eff_a * self.v_a + (1.0 - self.detector_eff_a),
            v_b: tb * (self.v_b + self.excess) + (1.0 - tb),
            c: (tb * self.detector_eff_a).sqrt() * self.c,
        }
    }

    /// Beam-splitter loss algebra applied to both arms.
    pub fn effective(&self) -> Result<EffectiveModel, SimulatorError> {
        self.validate()?;
        Ok(self.effective_unchecked())
    }
}

/// One party's measurement stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadratureRecord {
    pub bases: Vec<Basis>,
    pub values: Vec<f64>,
}

impl QuadratureRecord {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multiplies every value by `factor`.
    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

fn random_bases(seed: u64, label: &str, slots: usize) -> Vec<Basis> {
    (0..slots.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|ci| {
            let mut rng = labeled_rng(seed, &format!("{label}/{ci}"));
            let len = CHUNK.min(slots - ci * CHUNK);
            (0..len).map(move |_| Basis::from_bit(rng.random::<bool>())).collect::<Vec<_>>()
        })
        .collect()
}

/// Draws `slots` joint measurements.
///
/// Alice's bases come from `seed_a`, Bob's from `seed_b`; the state's
/// quantum noise comes from the source stream of `seed_a` (Alice owns the
/// source). Chunks are generated in parallel from independent streams, so
/// output depends only on the seeds.
pub fn draw_samples(
    model: &CovarianceModel,
    slots: usize,
    seed_a: u64,
    seed_b: u64,
) -> Result<(QuadratureRecord, QuadratureRecord), SimulatorError> {
    let eff = model.effective()?;
    let bases_a = random_bases(seed_a, "sim/basis-a", slots);
    let bases_b = random_bases(seed_b, "sim/basis-b", slots);

    let sa = eff.v_a.sqrt();
    let sb = eff.v_b.sqrt();
    let rho = eff.c / (sa * sb);
    let rho_perp = (1.0 - rho * rho).sqrt();

    let pairs: Vec<(f64, f64)> = (0..slots.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|ci| {
            let mut rng = labeled_rng(seed_a, &format!("sim/source/{ci}"));
            let start = ci * CHUNK;
            let end = (start + CHUNK).min(slots);
            let (ba, bb) = (&bases_a[start..end], &bases_b[start..end]);
            ba.iter()
                .zip(bb)
                .map(|(&a, &b)| {
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    let xa = sa * z1;
                    let xb = match (a, b) {
                        (Basis::X, Basis::X) => sb * (rho * z1 + rho_perp * z2),
                        (Basis::P, Basis::P) => sb * (-rho * z1 + rho_perp * z2),
                        _ => sb * z2,
                    };
                    (xa, xb)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (va, vb): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((
        QuadratureRecord { bases: bases_a, values: va },
        QuadratureRecord { bases: bases_b, values: vb },
    ))
}

/// Vacuum quadrature samples as seen by a detector with gain `raw_gain`
/// (raw units per shot-noise standard deviation).
pub fn draw_vacuum(count: usize, raw_gain: f64, seed: u64) -> Vec<f64> {
    let mut rng = labeled_rng(seed, "sim/vacuum");
    (0..count).map(|_| raw_gain * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Sifted same-basis pairs in slot order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sifted {
    pub alice: Vec<f64>,
    pub bob: Vec<f64>,
    pub bases: Vec<Basis>,
    /// Original slot index of each retained pair.
    pub slots: Vec<usize>,
    pub tally: BasisTally,
}

/// Counts of each basis combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BasisTally {
    pub xx: usize,
    pub pp: usize,
    pub xp: usize,
    pub px: usize,
}

impl BasisTally {
    pub fn retained(&self) -> usize {
        self.xx + self.pp
    }
}

/// Indices of slots where both bases agree.
pub fn matching_slots(a: &[Basis], b: &[Basis]) -> Result<Vec<usize>, SimulatorError> {
    if a.len() != b.len() {
        return Err(SimulatorError::CountMismatch(a.len(), b.len()));
    }
    Ok((0..a.len()).filter(|&i| a[i] == b[i]).collect())
}

/// Keeps same-basis slots. Values are passed through unchanged; Bob's P sign
/// flip happens during discretization.
pub fn sift(a: &QuadratureRecord, b: &QuadratureRecord) -> Result<Sifted, SimulatorError> {
    if a.len() != b.len() || a.bases.len() != b.bases.len() {
        return Err(SimulatorError::CountMismatch(a.len(), b.len()));
    }
    let mut out = Sifted::default();
    for i in 0..a.len() {
        match (a.bases[i], b.bases[i]) {
            (Basis::X, Basis::P) => out.tally.xp += 1,
            (Basis::P, Basis::X) => out.tally.px += 1,
            (basis, _) => {
                if basis == Basis::X {
                    out.tally.xx += 1;
                } else {
                    out.tally.pp += 1;
                }
                out.alice.push(a.values[i]);
                out.bob.push(b.values[i]);
                out.bases.push(basis);
                out.slots.push(i);
            }
        }
    }
    Ok(out)
}

/// Minimum vacuum samples accepted by [`calibrate_shot_noise`].
pub const MIN_CALIBRATION_SAMPLES: usize = 10_000;

/// Factor mapping raw detector units to shot-noise units: `1 / std(vacuum)`.
pub fn calibrate_shot_noise(vacuum: &[f64]) -> Result<f64, SimulatorError> {
    if vacuum.len() < MIN_CALIBRATION_SAMPLES {
        return Err(SimulatorError::TooFewSamples { min: MIN_CALIBRATION_SAMPLES, got: vacuum.len() });
    }
    let n = vacuum.len() as f64;
    let mean = vacuum.iter().sum::<f64>() / n;
    let var = vacuum.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) || !var.is_finite() {
        return Err(SimulatorError::ZeroVariance);
    }
    Ok(1.0 / var.sqrt())
}

/// Sidecar metadata for a sample dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format: String,
    pub role: String,
    pub slots: usize,
    pub model: CovarianceModel,
    pub seed_a: u64,
    pub seed_b: u64,
    pub raw_gain: f64,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Writes `basis:u8 | value:f64 LE` records plus a `<path>.json` header.
pub fn write_dump(path: &Path, record: &QuadratureRecord, header: &DumpHeader) -> Result<(), SimulatorError> {
    let mut buf = Vec::with_capacity(record.len() * 9);
    for (b, v) in record.bases.iter().zip(&record.values) {
        buf.push(b.bit() as u8);
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    std::fs::write(sidecar(path), serde_json::to_string_pretty(header)?)?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<(QuadratureRecord, DumpHeader), SimulatorError> {
    let header: DumpHeader = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() % 9 != 0 || buf.len() / 9 != header.slots {
        return Err(SimulatorError::MalformedDump(format!(
            "{} bytes for {} slots",
            buf.len(),
            header.slots
        )));
    }
    let mut rec = QuadratureRecord::default();
    for r in buf.chunks_exact(9) {
        let basis = match r[0] {
            0 => Basis::X,
            1 => Basis::P,
            b => return Err(SimulatorError::MalformedDump(format!("basis byte {b}"))),
        };
        let v = f64::from_le_bytes(r[1..9].try_into().unwrap());
        if !v.is_finite() {
            return Err(SimulatorError::MalformedDump("non-finite value".into()));
        }
        rec.bases.push(basis);
        rec.values.push(v);
    }
    Ok((rec, header))
}
