//! Frame layout and payload encoding.
//!
//! ```text
//! length: u32 BE (payload bytes) | type: u8 | payload | tag: [u8; 16]
//! ```
//!
//! The tag authenticates `type || payload`. Integers inside payloads are
//! little-endian; symbol arrays are u16.

use thiserror::Error;

use crate::crypto::mac::TAG_BYTES;

/// Largest payload accepted from the wire.
pub const MAX_PAYLOAD: usize = 64 << 20;
pub const HEADER_BYTES: usize = 5;
/// Bytes of framing around each payload.
pub const FRAME_OVERHEAD: usize = HEADER_BYTES + TAG_BYTES;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("payload truncated reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing payload bytes")]
    Trailing(usize),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame of {0} payload bytes exceeds the limit")]
    Oversized(usize),
    #[error("bad field: {0}")]
    BadField(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[repr(u8)]
pub enum MsgType {
    Negotiate = 0x01,
    Bases = 0x02,
    PeIndices = 0x03,
    PeSymbols = 0x04,
    ReconParams = 0x05,
    LsbReveal = 0x06,
    Syndrome = 0x07,
    ConfirmSeed = 0x08,
    ConfirmTag = 0x09,
    PaSeed = 0x0A,
    KeylenReport = 0x0B,
    Abort = 0x0F,
}

impl TryFrom<u8> for MsgType {
    type Error = WireError;

    fn try_from(b: u8) -> Result<Self, WireError> {
        use MsgType::*;
        Ok(match b {
            0x01 => Negotiate,
            0x02 => Bases,
            0x03 => PeIndices,
            0x04 => PeSymbols,
            0x05 => ReconParams,
            0x06 => LsbReveal,
            0x07 => Syndrome,
            0x08 => ConfirmSeed,
            0x09 => ConfirmTag,
            0x0A => PaSeed,
            0x0B => KeylenReport,
            0x0F => Abort,
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

/// Bytes covered by the tag.
pub fn mac_input(ty: u8, payload: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(payload.len() + 1);
    m.push(ty);
    m.extend_from_slice(payload);
    m
}

/// Assembles a full frame.
pub fn encode_frame(ty: MsgType, payload: &[u8], tag: &[u8; TAG_BYTES]) -> Result<Vec<u8>, WireError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::Oversized(payload.len()));
    }
    let mut f = Vec::with_capacity(payload.len() + FRAME_OVERHEAD);
    f.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    f.push(ty as u8);
    f.extend_from_slice(payload);
    f.extend_from_slice(tag);
    Ok(f)
}

/// A frame split into its parts; the type byte is left raw so that unknown
/// types can still be authenticated and reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub ty: u8,
    pub payload: Vec<u8>,
    pub tag: [u8; TAG_BYTES],
}

impl RawFrame {
    pub fn parse(frame: &[u8]) -> Result<Self, WireError> {
        if frame.len() < FRAME_OVERHEAD {
            return Err(WireError::Truncated("frame header"));
        }
        let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(WireError::Oversized(len));
        }
        if frame.len() != len + FRAME_OVERHEAD {
            return Err(WireError::Truncated("frame body"));
        }
        Ok(RawFrame {
            ty: frame[4],
            payload: frame[HEADER_BYTES..HEADER_BYTES + len].to_vec(),
            tag: frame[HEADER_BYTES + len..].try_into().unwrap(),
        })
    }
}

/// Little-endian payload builder.
#[derive(Debug, Default)]
pub struct Writer(pub Vec<u8>);

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }
    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(b);
        self
    }
    pub fn u16s(&mut self, v: &[u16]) -> &mut Self {
        self.0.reserve(v.len() * 2);
        v.iter().for_each(|s| self.0.extend_from_slice(&s.to_le_bytes()));
        self
    }
    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.0)
    }
}

/// Little-endian payload reader.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }
    pub fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    pub fn u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    pub fn u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    pub fn i64(&mut self, what: &'static str) -> Result<i64, WireError> {
        Ok(i64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    pub fn f64(&mut self, what: &'static str) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    pub fn u16s(&mut self, count: usize, what: &'static str) -> Result<Vec<u16>, WireError> {
        let raw = self.take(count.checked_mul(2).ok_or(WireError::Truncated(what))?, what)?;
        Ok(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
    }
    pub fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
    pub fn done(&self) -> Result<(), WireError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

/// Packs one bit per slot, LSB first within each byte.
pub fn pack_bits(bits: impl ExactSizeIterator<Item = bool>) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, b) in bits.enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], count: usize) -> Result<Vec<bool>, WireError> {
    if bytes.len() != count.div_ceil(8) {
        return Err(WireError::BadField(format!("{} bytes for {count} bits", bytes.len())));
    }
    Ok((0..count).map(|i| (bytes[i / 8] >> (i % 8)) & 1 == 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = encode_frame(MsgType::Syndrome, &[1, 2, 3], &[9; 16]).unwrap();
        assert_eq!(&f[..5], &[0, 0, 0, 3, 0x07]);
        assert_eq!(f.len(), 3 + FRAME_OVERHEAD);
        let r = RawFrame::parse(&f).unwrap();
        assert_eq!(r.ty, 0x07);
        assert_eq!(r.payload, vec![1, 2, 3]);
        assert!(RawFrame::parse(&f[..f.len() - 1]).is_err());
    }

    #[test]
    fn oversized_rejected() {
        let mut f = vec![0u8; FRAME_OVERHEAD];
        f[..4].copy_from_slice(&((MAX_PAYLOAD + 1) as u32).to_be_bytes());
        assert_eq!(RawFrame::parse(&f), Err(WireError::Oversized(MAX_PAYLOAD + 1)));
    }

    #[test]
    fn type_codes() {
        for b in 0u8..=255 {
            if let Ok(t) = MsgType::try_from(b) {
                assert_eq!(t as u8, b);
            }
        }
        assert_eq!(MsgType::try_from(0x0C), Err(WireError::UnknownType(0x0C)));
    }

    #[test]
    fn payload_codec() {
        let p = Writer::new().u8(1).u16(0xABCD).u32(7).u64(8).f64(1.5).u16s(&[1, 2]).finish();
        let mut r = Reader::new(&p);
        assert_eq!(r.u8("a").unwrap(), 1);
        assert_eq!(r.u16("b").unwrap(), 0xABCD);
        assert_eq!(r.u32("c").unwrap(), 7);
        assert_eq!(r.u64("d").unwrap(), 8);
        assert_eq!(r.f64("e").unwrap(), 1.5);
        assert_eq!(r.u16s(2, "f").unwrap(), vec![1, 2]);
        r.done().unwrap();
        assert!(Reader::new(&p).u16s(100, "g").is_err());
    }

    #[test]
    fn bit_packing() {
        let bits = vec![true, false, true, true, false, false, false, false, true];
        let p = pack_bits(bits.iter().copied());
        assert_eq!(p, vec![0b1101, 1]);
        assert_eq!(unpack_bits(&p, 9).unwrap(), bits);
        assert!(unpack_bits(&p, 17).is_err());
    }
}
