//! Uniform binning of quadrature values into the key-generation alphabet and
//! the MSB/LSB split used by hybrid reconciliation.

use thiserror::Error;

use crate::simulator::Basis;

/// Largest supported total symbol width; symbols are serialised as u16.
pub const MAX_BITS: u32 = 16;

#[derive(Debug, Error, PartialEq)]
pub enum DiscretizeError {
    #[error("invalid binning: {0}")]
    InvalidSpec(String),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("symbol {symbol} exceeds {bits}-bit alphabet")]
    SymbolOutOfRange { symbol: u16, bits: u32 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("odd byte count {0} for 16-bit symbols")]
    OddBytes(usize),
}

/// `2^d` equal bins over `[-alpha, alpha]`, outermost bins absorbing the tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinningSpec {
    pub alpha: f64,
    pub d: u32,
    pub d1: u32,
}

impl BinningSpec {
    /// Range and width used for the default operating point.
    pub const DEFAULT_ALPHA: f64 = 61.6;
    pub const DEFAULT_D: u32 = 12;

    pub fn new(alpha: f64, d: u32, d1: u32) -> Result<Self, DiscretizeError> {
        let s = BinningSpec { alpha, d, d1 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DiscretizeError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(DiscretizeError::InvalidSpec(format!("alpha = {}", self.alpha)));
        }
        if self.d == 0 || self.d > MAX_BITS {
            return Err(DiscretizeError::InvalidSpec(format!("d = {} outside 1..={MAX_BITS}", self.d)));
        }
        if self.d1 > self.d || !(1..=8).contains(&self.d2()) {
            return Err(DiscretizeError::InvalidSpec(format!(
                "d1 = {} leaves d2 = {} outside 1..=8",
                self.d1,
                self.d.saturating_sub(self.d1)
            )));
        }
        Ok(())
    }

    pub fn d2(&self) -> u32 {
        self.d.wrapping_sub(self.d1)
    }

    /// Bin width `2·alpha / 2^d`.
    pub fn delta(&self) -> f64 {
        2.0 * self.alpha / (1u64 << self.d) as f64
    }

    pub fn alphabet(&self) -> usize {
        1 << self.d
    }

    /// The same range and width with a different split.
    pub fn with_split(&self, d1: u32) -> Result<Self, DiscretizeError> {
        BinningSpec::new(self.alpha, self.d, d1)
    }

    fn bin_one(&self, v: f64) -> u16 {
        let max = (self.alphabet() - 1) as f64;
        ((v + self.alpha) / self.delta()).floor().clamp(0.0, max) as u16
    }
}

impl Default for BinningSpec {
    fn default() -> Self {
        BinningSpec { alpha: Self::DEFAULT_ALPHA, d: Self::DEFAULT_D, d1: 6 }
    }
}

/// Bins `values`, negating first where `negate` is set.
pub fn bin(values: &[f64], spec: &BinningSpec, negate: bool) -> Result<Vec<u16>, DiscretizeError> {
    spec.validate()?;
    let sign = if negate { -1.0 } else { 1.0 };
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| if v.is_finite() { Ok(spec.bin_one(sign * v)) } else { Err(DiscretizeError::NonFinite(i)) })
        .collect()
}

/// Bins sifted values, negating Bob's P-quadrature samples so both bases are
/// positively correlated with Alice.
pub fn bin_sifted(
    values: &[f64],
    bases: &[Basis],
    spec: &BinningSpec,
    is_bob: bool,
) -> Result<Vec<u16>, DiscretizeError> {
    spec.validate()?;
    if values.len() != bases.len() {
        return Err(DiscretizeError::LengthMismatch(values.len(), bases.len()));
    }
    values
        .iter()
        .zip(bases)
        .enumerate()
        .map(|(i, (&v, &b))| {
            if !v.is_finite() {
                return Err(DiscretizeError::NonFinite(i));
            }
            let v = if is_bob && b == Basis::P { -v } else { v };
            Ok(spec.bin_one(v))
        })
        .collect()
}

/// Splits symbols into `d2` high bits (field elements) and `d1` low bits.
/// The LSB word is empty when `d1 = 0`.
pub fn split(block: &[u16], spec: &BinningSpec) -> Result<(Vec<u8>, Vec<u16>), DiscretizeError> {
    spec.validate()?;
    let d1 = spec.d1;
    let mask = ((1u32 << d1) - 1) as u16;
    let mut msb = Vec::with_capacity(block.len());
    let mut lsb = Vec::with_capacity(if d1 == 0 { 0 } else { block.len() });
    for &s in block {
        if (s as u32) >> spec.d != 0 {
            return Err(DiscretizeError::SymbolOutOfRange { symbol: s, bits: spec.d });
        }
        msb.push(((s as u32) >> d1) as u8);
        if d1 > 0 {
            lsb.push(s & mask);
        }
    }
    Ok((msb, lsb))
}

/// Inverse of [`split`].
pub fn join(msb: &[u8], lsb: &[u16], spec: &BinningSpec) -> Result<Vec<u16>, DiscretizeError> {
    spec.validate()?;
    if spec.d1 == 0 {
        if !lsb.is_empty() {
            return Err(DiscretizeError::LengthMismatch(msb.len(), lsb.len()));
        }
        return Ok(msb.iter().map(|&m| m as u16).collect());
    }
    if msb.len() != lsb.len() {
        return Err(DiscretizeError::LengthMismatch(msb.len(), lsb.len()));
    }
    msb.iter()
        .zip(lsb)
        .map(|(&m, &l)| {
            let s = ((m as u32) << spec.d1) | l as u32;
            if s >> spec.d != 0 || (l as u32) >> spec.d1 != 0 {
                return Err(DiscretizeError::SymbolOutOfRange { symbol: s as u16, bits: spec.d });
            }
            Ok(s as u16)
        })
        .collect()
}

/// Little-endian u16 serialisation.
pub fn symbols_to_bytes(symbols: &[u16]) -> Vec<u8> {
    symbols.iter().flat_map(|s| s.to_le_bytes()).collect()
}

pub fn symbols_from_bytes(bytes: &[u8]) -> Result<Vec<u16>, DiscretizeError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(DiscretizeError::OddBytes(bytes.len()));
    }
    Ok(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
}
