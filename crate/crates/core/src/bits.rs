//! Packed bit strings (LSB-first within each 64-bit word).

#[derive(Clone, PartialEq, Eq, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl std::fmt::Debug for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitString({} bits)", self.len)
    }
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString { words: vec![0; len.div_ceil(64)], len }
    }

    /// Takes ownership of `words`; bits past `len` must be zero.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(len.div_ceil(64), 0);
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        BitString { words, len }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = BitString::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.set(i, true);
            }
        }
        out
    }

    /// Concatenates the low `width` bits of each symbol, least significant bit first.
    pub fn from_symbols(symbols: &[u16], width: u32) -> Self {
        let mut out = BitString::zeros(symbols.len() * width as usize);
        let mut pos = 0;
        for &s in symbols {
            for b in 0..width {
                if (s >> b) & 1 == 1 {
                    out.set(pos, true);
                }
                pos += 1;
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        let mut out = BitString::zeros(end - start);
        for i in start..end {
            if self.get(i) {
                out.set(i - start, true);
            }
        }
        out
    }

    /// 64 bits starting at bit `offset`; positions past the end read as zero.
    #[inline]
    pub fn word_at(&self, offset: usize) -> u64 {
        let w = offset / 64;
        let sh = offset % 64;
        let lo = self.words.get(w).copied().unwrap_or(0);
        if sh == 0 {
            return lo;
        }
        let hi = self.words.get(w + 1).copied().unwrap_or(0);
        (lo >> sh) | (hi << (64 - sh))
    }

    pub fn hamming_distance(&self, other: &BitString) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }

    /// Bytes with bit `i` at byte `i / 8`, position `i % 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8));
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, chunk) in bytes.chunks(8).enumerate().take(words.len()) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_le_bytes(buf);
        }
        BitString::from_words(words, len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_and_masking() {
        let mut b = BitString::zeros(77);
        for i in (0..77).step_by(3) {
            b.set(i, true);
        }
        let bytes = b.to_bytes();
        assert_eq!(bytes.len(), 10);
        assert_eq!(BitString::from_bytes(&bytes, 77), b);
        let full = BitString::from_words(vec![u64::MAX, u64::MAX], 70);
        assert_eq!(full.count_ones(), 70);
    }

    #[test]
    fn symbols_pack_lsb_first() {
        let b = BitString::from_symbols(&[0b101, 0b010], 3);
        let got: Vec<bool> = (0..6).map(|i| b.get(i)).collect();
        assert_eq!(got, [true, false, true, false, true, false]);
    }
}
