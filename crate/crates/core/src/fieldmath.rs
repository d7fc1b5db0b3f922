//! Arithmetic in binary extension fields GF(2^m) for 1 ≤ m ≤ 8.
//!
//! Elements are stored as `u8` in polynomial basis: bit `i` is the
//! coefficient of `x^i`. Addition is XOR. Multiplication goes through
//! discrete log/exp tables built from a fixed primitive polynomial, so
//! syndromes and code files are reproducible across builds.
//!
//! | m | primitive polynomial      | mask  |
//! |---|---------------------------|-------|
//! | 1 | x + 1                     | 0x3   |
//! | 2 | x^2 + x + 1               | 0x7   |
//! | 3 | x^3 + x + 1               | 0xb   |
//! | 4 | x^4 + x + 1               | 0x13  |
//! | 5 | x^5 + x^2 + 1             | 0x25  |
//! | 6 | x^6 + x + 1               | 0x43  |
//! | 7 | x^7 + x + 1               | 0x83  |
//! | 8 | x^8 + x^4 + x^3 + x^2 + 1 | 0x11d |
//!
//! Each entry is the lexicographically smallest primitive polynomial of its
//! degree.

use thiserror::Error;

/// Largest supported extension degree.
pub const MAX_DEGREE: u32 = 8;

const PRIMITIVE_POLYS: [u16; 9] = [0, 0x3, 0x7, 0xb, 0x13, 0x25, 0x43, 0x83, 0x11d];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("extension degree {0} outside 1..=8")]
    DegreeOutOfRange(u32),
    #[error("polynomial {poly:#x} is not primitive of degree {m}")]
    NotPrimitive { m: u32, poly: u16 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// The fixed primitive polynomial used for degree `m`.
pub fn primitive_poly(m: u32) -> Result<u16, FieldError> {
    if !(1..=MAX_DEGREE).contains(&m) {
        return Err(FieldError::DegreeOutOfRange(m));
    }
    Ok(PRIMITIVE_POLYS[m as usize])
}

/// Schoolbook carry-less multiply followed by reduction modulo `poly`.
///
/// Slow, table-free reference arithmetic. Used to build and check tables.
pub fn poly_mul_mod(a: u16, b: u16, poly: u16, m: u32) -> u16 {
    let mut acc: u32 = 0;
    for i in 0..16 {
        if (b >> i) & 1 == 1 {
            acc ^= (a as u32) << i;
        }
    }
    let poly = poly as u32;
    for bit in (m..32).rev() {
        if (acc >> bit) & 1 == 1 {
            acc ^= poly << (bit - m);
        }
    }
    acc as u16
}

/// True when `poly` (degree `m`) has no factor of degree 1..=m/2.
fn is_irreducible(poly: u16, m: u32) -> bool {
    if poly >> m != 1 {
        return false;
    }
    // Trial division by every polynomial of degree 1..=m/2.
    for deg in 1..=m / 2 {
        for divisor in (1u16 << deg)..(1u16 << (deg + 1)) {
            if poly_rem(poly, divisor) == 0 {
                return false;
            }
        }
    }
    true
}

fn poly_rem(mut a: u16, b: u16) -> u16 {
    let db = 15 - b.leading_zeros();
    while a != 0 && 15 - a.leading_zeros() >= db {
        let shift = (15 - a.leading_zeros()) - db;
        a ^= b << shift;
    }
    a
}

/// A binary extension field with log/exp tables.
///
/// Immutable after construction; share freely across threads.
#[derive(Clone, PartialEq, Eq)]
pub struct GaloisField {
    m: u32,
    poly: u16,
    /// `exp[i] = x^i`, doubled so `exp[log a + log b]` needs no reduction.
    exp: Vec<u8>,
    /// `log[a]` for `a != 0`; `log[0]` is unused.
    log: Vec<u16>,
}

impl std::fmt::Debug for GaloisField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GF(2^{}) mod {:#x}", self.m, self.poly)
    }
}

impl GaloisField {
    /// Field of order `2^m` with the fixed primitive polynomial for `m`.
    pub fn new(m: u32) -> Result<Self, FieldError> {
        Self::with_poly(m, primitive_poly(m)?)
    }

    /// Field of order `2^m` reduced by `poly`, which must be primitive.
    pub fn with_poly(m: u32, poly: u16) -> Result<Self, FieldError> {
        if !(1..=MAX_DEGREE).contains(&m) {
            return Err(FieldError::DegreeOutOfRange(m));
        }
        if !is_irreducible(poly, m) {
            return Err(FieldError::NotPrimitive { m, poly });
        }
        let q = 1usize << m;
        let period = q - 1;
        let mut exp = vec![0u8; 2 * period.max(1)];
        let mut log = vec![0u16; q];
        // x is the generator, except in GF(2) where the group is {1}.
        let generator: u16 = if m == 1 { 1 } else { 2 };
        let mut value: u16 = 1;
        for i in 0..period {
            if i > 0 && value == 1 {
                // Order of x divides 2^m - 1 properly: not primitive.
                return Err(FieldError::NotPrimitive { m, poly });
            }
            exp[i] = value as u8;
            log[value as usize] = i as u16;
            value = poly_mul_mod(value, generator, poly, m);
        }
        if value != 1 {
            return Err(FieldError::NotPrimitive { m, poly });
        }
        for i in period..2 * period {
            exp[i] = exp[i - period];
        }
        Ok(GaloisField { m, poly, exp, log })
    }

    /// Extension degree (bits per symbol).
    pub fn degree(&self) -> u32 {
        self.m
    }

    /// Number of elements, `2^m`.
    pub fn order(&self) -> usize {
        1 << self.m
    }

    /// Reduction polynomial as an (m+1)-bit mask.
    pub fn poly(&self) -> u16 {
        self.poly
    }

    #[inline]
    pub fn add(&self, a: u8, b: u8) -> u8 {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
    }

    pub fn inv(&self, a: u8) -> Result<u8, FieldError> {
        if a == 0 {
            return Err(FieldError::ZeroInverse);
        }
        let period = self.order() - 1;
        let l = self.log[a as usize] as usize;
        Ok(self.exp[(period - l) % period])
    }

    pub fn div(&self, a: u8, b: u8) -> Result<u8, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// `x^i` for the field generator.
    pub fn exp(&self, i: usize) -> u8 {
        self.exp[i % (self.order() - 1)]
    }

    /// Discrete logarithm of a nonzero element.
    pub fn log(&self, a: u8) -> Option<usize> {
        (a != 0).then(|| self.log[a as usize] as usize)
    }

    /// The permutation `p -> c·p` over all field elements, for nonzero `c`.
    pub fn mul_permutation(&self, c: u8) -> Vec<u8> {
        (0..self.order()).map(|p| self.mul(c, p as u8)).collect()
    }

    /// True when `a` is a valid element of this field.
    pub fn contains(&self, a: u16) -> bool {
        (a as usize) < self.order()
    }
}
