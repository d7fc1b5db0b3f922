//! Authenticated message channel, transcript, and abort signalling.

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::transport::{Transport, TransportError};
use super::wire::{encode_frame, mac_input, MsgType, RawFrame, Reader, Writer, FRAME_OVERHEAD};
use crate::crypto::mac::{mac_tag, mac_verify, AuthenticatedChannelKey};

/// Why a session stopped. The numeric code travels in ABORT messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum AbortCode {
    Negotiation = 1,
    EmptySift = 2,
    ParameterEstimation = 3,
    ChannelTooNoisy = 4,
    NoConfirmedBlocks = 5,
    KeyLength = 6,
    KeyReportMismatch = 7,
    Authentication = 8,
    Protocol = 9,
    Transport = 10,
    AuthKeyExhausted = 11,
    Internal = 12,
}

impl AbortCode {
    pub fn from_u8(b: u8) -> AbortCode {
        use AbortCode::*;
        match b {
            1 => Negotiation,
            2 => EmptySift,
            3 => ParameterEstimation,
            4 => ChannelTooNoisy,
            5 => NoConfirmedBlocks,
            6 => KeyLength,
            7 => KeyReportMismatch,
            8 => Authentication,
            9 => Protocol,
            10 => Transport,
            11 => AuthKeyExhausted,
            _ => Internal,
        }
    }

    /// Machine-readable name used by the CLI.
    pub fn name(self) -> &'static str {
        use AbortCode::*;
        match self {
            Negotiation => "ABORT_NEGOTIATION",
            EmptySift => "ABORT_SIFT",
            ParameterEstimation => "ABORT_PE",
            ChannelTooNoisy => "ABORT_RECON",
            NoConfirmedBlocks => "ABORT_CONFIRM",
            KeyLength => "ABORT_KEYLEN",
            KeyReportMismatch => "ABORT_KEYLEN_MISMATCH",
            Authentication => "ABORT_AUTH",
            Protocol => "ABORT_PROTOCOL",
            Transport => "ABORT_TRANSPORT",
            AuthKeyExhausted => "ABORT_AUTH_KEY",
            Internal => "ABORT_INTERNAL",
        }
    }

    /// Process exit status for this abort.
    pub fn exit_code(self) -> i32 {
        10 + self as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Abort {
    pub code: AbortCode,
    pub message: String,
    /// Reported by the other party rather than detected locally.
    pub by_peer: bool,
}

impl std::fmt::Display for Abort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let who = if self.by_peer { "peer" } else { "local" };
        write!(f, "{} ({who}): {}", self.code.name(), self.message)
    }
}

impl std::error::Error for Abort {}

impl Abort {
    pub fn local(code: AbortCode, message: impl Into<String>) -> Self {
        Abort { code, message: message.into(), by_peer: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub direction: Direction,
    pub msg_type: u8,
    pub payload_len: usize,
    pub frame_len: usize,
    pub mac_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FinalState {
    Running,
    Completed,
    Aborted(Abort),
}

/// Every frame this party sent or received, in order, with a running
/// SHA-256 over the frames.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    pub state: FinalState,
    hasher: Sha256,
}

impl Default for Transcript {
    fn default() -> Self {
        Transcript { entries: Vec::new(), state: FinalState::Running, hasher: Sha256::new() }
    }
}

impl Transcript {
    fn record(&mut self, direction: Direction, frame: &[u8], payload_len: usize, mac_valid: bool) {
        self.hasher.update([direction as u8]);
        self.hasher.update(frame);
        self.entries.push(TranscriptEntry {
            seq: self.entries.len(),
            direction,
            msg_type: frame.get(4).copied().unwrap_or(0),
            payload_len,
            frame_len: frame.len(),
            mac_valid,
        });
    }

    pub fn digest(&self) -> [u8; 32] {
        self.hasher.clone().finalize().into()
    }

    pub fn all_macs_valid(&self) -> bool {
        self.entries.iter().all(|e| e.mac_valid)
    }

    /// Payload bytes of all frames of `ty` in `direction`.
    pub fn payload_bytes(&self, ty: MsgType, direction: Direction) -> usize {
        self.entries
            .iter()
            .filter(|e| e.msg_type == ty as u8 && e.direction == direction)
            .map(|e| e.payload_len)
            .sum()
    }

    /// Bytes spent on length, type and tag fields.
    pub fn framing_bytes(&self) -> usize {
        self.entries.len() * FRAME_OVERHEAD
    }

    /// One line per frame followed by the final state and digest.
    pub fn to_text(&self) -> String {
        let mut s = String::from("seq\tdir\ttype\tpayload\tframe\tmac\n");
        for e in &self.entries {
            let name = MsgType::try_from(e.msg_type).map(|t| format!("{t:?}")).unwrap_or_else(|_| format!("0x{:02x}", e.msg_type));
            let dir = match e.direction {
                Direction::Sent => "send",
                Direction::Received => "recv",
            };
            s.push_str(&format!("{}\t{dir}\t{name}\t{}\t{}\t{}\n", e.seq, e.payload_len, e.frame_len, e.mac_valid));
        }
        let state = match &self.state {
            FinalState::Running => "running".to_string(),
            FinalState::Completed => "completed".to_string(),
            FinalState::Aborted(a) => format!("aborted {a}"),
        };
        s.push_str(&format!("# state: {state}\n# sha256: {}\n", hex::encode(self.digest())));
        s
    }
}

/// Authenticated, ordered message channel on top of a transport.
pub struct SecureChannel<T: Transport> {
    transport: T,
    send_key: AuthenticatedChannelKey,
    recv_key: AuthenticatedChannelKey,
    pub transcript: Transcript,
}

impl<T: Transport> SecureChannel<T> {
    pub fn new(transport: T, send_key: AuthenticatedChannelKey, recv_key: AuthenticatedChannelKey) -> Self {
        SecureChannel { transport, send_key, recv_key, transcript: Transcript::default() }
    }

    pub fn send(&mut self, ty: MsgType, payload: &[u8]) -> Result<(), Abort> {
        let key = self
            .send_key
            .next_key()
            .map_err(|e| Abort::local(AbortCode::AuthKeyExhausted, e.to_string()))?;
        let tag = mac_tag(&key, &mac_input(ty as u8, payload));
        let frame = encode_frame(ty, payload, &tag).map_err(|e| Abort::local(AbortCode::Internal, e.to_string()))?;
        self.transcript.record(Direction::Sent, &frame, payload.len(), true);
        match self.transport.send_frame(frame) {
            Ok(()) => Ok(()),
            Err(e) => Err(self.peer_abort_or(e)),
        }
    }

    /// After a failed send the peer may already have aborted; look for its
    /// ABORT among frames still queued.
    fn peer_abort_or(&mut self, e: TransportError) -> Abort {
        while let Ok(frame) = self.transport.recv_frame() {
            if let Ok(Some(a)) = self.accept_frame(frame).map(|(ty, p)| (ty == MsgType::Abort as u8).then(|| parse_abort(&p))) {
                return a;
            }
        }
        Abort::local(AbortCode::Transport, e.to_string())
    }

    /// Verifies and records a frame, returning its type and payload.
    fn accept_frame(&mut self, frame: Vec<u8>) -> Result<(u8, Vec<u8>), Abort> {
        let raw = RawFrame::parse(&frame).map_err(|e| Abort::local(AbortCode::Protocol, e.to_string()))?;
        let key = self
            .recv_key
            .next_key()
            .map_err(|e| Abort::local(AbortCode::AuthKeyExhausted, e.to_string()))?;
        let ok = mac_verify(&key, &mac_input(raw.ty, &raw.payload), &raw.tag);
        self.transcript.record(Direction::Received, &frame, raw.payload.len(), ok);
        if !ok {
            return Err(Abort::local(AbortCode::Authentication, "authentication failure"));
        }
        Ok((raw.ty, raw.payload))
    }

    /// Receives the next message, which must be of type `expected`. An ABORT
    /// from the peer, a bad tag, or an unexpected type ends the session; the
    /// caller reports local failures with [`SecureChannel::abort`].
    pub fn recv(&mut self, expected: MsgType) -> Result<Vec<u8>, Abort> {
        let frame = match self.transport.recv_frame() {
            Ok(f) => f,
            Err(e) => return Err(Abort::local(AbortCode::Transport, e.to_string())),
        };
        let (ty, payload) = self.accept_frame(frame)?;
        if ty == MsgType::Abort as u8 {
            return Err(parse_abort(&payload));
        }
        if ty != expected as u8 {
            return Err(Abort::local(AbortCode::Protocol, format!("expected {expected:?}, got type 0x{ty:02x}")));
        }
        Ok(payload)
    }

    /// Tells the peer about a local abort (best effort) and returns it. A
    /// non-positive key length is reached by both sides independently and is
    /// not announced.
    pub fn abort(&mut self, a: Abort) -> Abort {
        let silent = matches!(a.code, AbortCode::Transport | AbortCode::AuthKeyExhausted | AbortCode::KeyLength);
        if !a.by_peer && !silent {
            let p = Writer::new().u8(a.code as u8).bytes(a.message.as_bytes()).finish();
            let _ = self.send(MsgType::Abort, &p);
        }
        a
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}

fn parse_abort(payload: &[u8]) -> Abort {
    let mut r = Reader::new(payload);
    let code = r.u8("abort code").map(AbortCode::from_u8).unwrap_or(AbortCode::Internal);
    let message = String::from_utf8_lossy(r.rest()).into_owned();
    Abort { code, message, by_peer: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::transport::{loopback_pair, Tamper};

    fn keys() -> (AuthenticatedChannelKey, AuthenticatedChannelKey) {
        AuthenticatedChannelKey::split_directions(&(0..=255u8).cycle().take(4096).collect::<Vec<_>>())
    }

    fn pair() -> (SecureChannel<Box<dyn Transport>>, SecureChannel<Box<dyn Transport>>) {
        let (a, b) = loopback_pair();
        let (ab, ba) = keys();
        (
            SecureChannel::new(Box::new(a), ab.clone(), ba.clone()),
            SecureChannel::new(Box::new(b), ba, ab),
        )
    }

    #[test]
    fn messages_authenticate() {
        let (mut a, mut b) = pair();
        a.send(MsgType::Bases, b"hello").unwrap();
        assert_eq!(b.recv(MsgType::Bases).unwrap(), b"hello");
        assert!(a.transcript.all_macs_valid() && b.transcript.all_macs_valid());
        assert_eq!(a.transcript.payload_bytes(MsgType::Bases, Direction::Sent), 5);
        assert_eq!(b.transcript.framing_bytes(), FRAME_OVERHEAD);
    }

    #[test]
    fn tampering_aborts_both_sides() {
        let (ta, tb) = loopback_pair();
        let (ab, ba) = keys();
        let mut a = SecureChannel::new(Tamper::new(ta, MsgType::Syndrome as u8, 0, 3), ab.clone(), ba.clone());
        let mut b = SecureChannel::new(tb, ba, ab);
        a.send(MsgType::Syndrome, b"0123456789").unwrap();
        let err = b.recv(MsgType::Syndrome).unwrap_err();
        assert_eq!(err.code, AbortCode::Authentication);
        b.abort(err);
        assert!(!b.transcript.all_macs_valid());
        let seen = a.recv(MsgType::ConfirmTag).unwrap_err();
        assert_eq!(seen.code, AbortCode::Authentication);
        assert!(seen.by_peer);
    }

    #[test]
    fn unexpected_type_is_protocol_abort() {
        let (mut a, mut b) = pair();
        a.send(MsgType::Bases, b"x").unwrap();
        let err = b.recv(MsgType::PaSeed).unwrap_err();
        assert_eq!(err.code, AbortCode::Protocol);
        b.abort(err);
        assert_eq!(a.recv(MsgType::Bases).unwrap_err().code, AbortCode::Protocol);
    }

    #[test]
    fn send_after_peer_left_reports_peer_abort() {
        let (mut a, mut b) = pair();
        b.abort(Abort::local(AbortCode::ParameterEstimation, "d_pe exceeds threshold"));
        drop(b);
        let e = a.send(MsgType::Bases, b"x").unwrap_err();
        assert_eq!(e.code, AbortCode::ParameterEstimation);
        assert!(e.by_peer);
    }

    #[test]
    fn abort_codes_round_trip() {
        for c in 1..=12u8 {
            assert_eq!(AbortCode::from_u8(c) as u8, c);
        }
        assert_eq!(AbortCode::ParameterEstimation.name(), "ABORT_PE");
        assert_eq!(AbortCode::ParameterEstimation.exit_code(), 13);
    }
}
