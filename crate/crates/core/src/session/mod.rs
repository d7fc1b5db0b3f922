//! Two-party protocol run: negotiation, sifting, estimation, reconciliation,
//! confirmation, key length and privacy amplification over an authenticated
//! message channel.

pub mod channel;
mod protocol;
pub mod transport;
pub mod wire;

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::Serialize;
use thiserror::Error;

pub use channel::{Abort, AbortCode, Direction, FinalState, SecureChannel, Transcript, TranscriptEntry};
pub use transport::{loopback_pair, Loopback, Tamper, TcpTransport, Transport, TransportError};

use crate::bits::BitString;
use crate::crypto::mac::AuthenticatedChannelKey;
use crate::crypto::rng::RandomnessService;
use crate::discretize::BinningSpec;
use crate::finitekey::{EstimationResult, Gamma, KeyLengthModel, KeyLengthReport, Mu};
use crate::ldpc::Codebook;
use crate::reconcile::{ChannelStats, LeakageLedger, ReconParams};
use crate::simulator::{draw_samples, draw_vacuum, read_dump, CovarianceModel, QuadratureRecord};
use wire::{Reader, WireError, Writer};

/// Format version carried in NEGOTIATE.
pub const PROTOCOL_VERSION: u8 = 1;
/// Default pre-shared authentication key size.
pub const DEFAULT_PSK_BYTES: usize = 256 << 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Alice,
    Bob,
}

/// Binning before the reconciliation split is chosen; the split here only
/// serves validation.
pub fn base_spec(alpha: f64, d: u32) -> BinningSpec {
    BinningSpec { alpha, d, d1: d.saturating_sub(6) }
}

/// Everything both parties must agree on before measuring.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    /// Slots measured before sifting.
    pub slots: usize,
    /// Binning; `d1` is overwritten by the reconciliation split.
    pub spec: BinningSpec,
    /// Estimation sample size.
    pub k: usize,
    pub d_pe0: f64,
    pub key_model: KeyLengthModel,
    pub epsilon_c: f64,
    pub recon_margin: f64,
    pub max_iters: usize,
    pub codebook_digest: [u8; 32],
}

impl ProtocolParams {
    pub fn encode(&self) -> Vec<u8> {
        let (gamma, mu, mu_c) = match (self.key_model.gamma, self.key_model.mu) {
            (g, Mu::Stub { c }) => (g as u8, 1u8, c),
            (g, Mu::Reference) => (g as u8, 0u8, 0.0),
        };
        Writer::new()
            .u8(PROTOCOL_VERSION)
            .u64(self.slots as u64)
            .f64(self.spec.alpha)
            .u8(self.spec.d as u8)
            .u64(self.k as u64)
            .f64(self.d_pe0)
            .f64(self.key_model.epsilon)
            .u8(gamma)
            .u8(mu)
            .f64(mu_c)
            .f64(self.key_model.unit_scale)
            .f64(self.epsilon_c)
            .f64(self.recon_margin)
            .u32(self.max_iters as u32)
            .bytes(&self.codebook_digest)
            .finish()
    }

    pub fn decode(r: &mut Reader) -> Result<Self, WireError> {
        let version = r.u8("version")?;
        if version != PROTOCOL_VERSION {
            return Err(WireError::BadField(format!("protocol version {version}")));
        }
        let slots = r.u64("slots")? as usize;
        let alpha = r.f64("alpha")?;
        let d = r.u8("d")? as u32;
        let k = r.u64("k")? as usize;
        let d_pe0 = r.f64("d_pe0")?;
        let epsilon = r.f64("epsilon")?;
        let gamma = match r.u8("gamma")? {
            0 => Gamma::Reference,
            1 => Gamma::Stub,
            g => return Err(WireError::BadField(format!("gamma kind {g}"))),
        };
        let mu_kind = r.u8("mu")?;
        let mu_c = r.f64("mu_c")?;
        let mu = match mu_kind {
            0 => Mu::Reference,
            1 => Mu::Stub { c: mu_c },
            m => return Err(WireError::BadField(format!("mu kind {m}"))),
        };
        let unit_scale = r.f64("unit_scale")?;
        let epsilon_c = r.f64("epsilon_c")?;
        let recon_margin = r.f64("margin")?;
        let max_iters = r.u32("max_iters")? as usize;
        let codebook_digest = r.take(32, "codebook digest")?.try_into().unwrap();
        Ok(ProtocolParams {
            slots,
            spec: base_spec(alpha, d),
            k,
            d_pe0,
            key_model: KeyLengthModel { epsilon, gamma, mu, unit_scale },
            epsilon_c,
            recon_margin,
            max_iters,
            codebook_digest,
        })
    }
}

/// One party's local configuration.
#[derive(Debug, Clone)]
pub struct PartyConfig {
    pub role: Role,
    pub params: ProtocolParams,
    pub codebook: Arc<Codebook>,
    /// Seed for this party's local randomness.
    pub seed: u64,
    /// Pre-shared authentication key, identical at both ends.
    pub psk: Vec<u8>,
    /// Vacuum samples for shot-noise calibration (Alice only).
    pub calibration_samples: usize,
}

impl PartyConfig {
    /// Channel keys for this role: (send, receive).
    pub fn channel_keys(&self) -> (AuthenticatedChannelKey, AuthenticatedChannelKey) {
        let (a_to_b, b_to_a) = AuthenticatedChannelKey::split_directions(&self.psk);
        match self.role {
            Role::Alice => (a_to_b, b_to_a),
            Role::Bob => (b_to_a, a_to_b),
        }
    }
}

/// Pre-shared key derived from a seed.
pub fn psk_from_seed(seed: u64, bytes: usize) -> Vec<u8> {
    let mut psk = vec![0u8; bytes];
    RandomnessService::new(seed).fill_bytes("auth/psk", &mut psk);
    psk
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error(transparent)]
    Simulator(#[from] crate::simulator::SimulatorError),
    #[error("{0}")]
    Other(String),
}

/// Where measurement results come from.
pub trait SampleSource: Send + Sync {
    /// Raw detector outputs for `slots` slots.
    fn measure(&self, role: Role, slots: usize) -> Result<QuadratureRecord, SourceError>;
    /// Vacuum samples at the same detector gain as [`SampleSource::measure`].
    fn vacuum(&self, role: Role, count: usize) -> Result<Vec<f64>, SourceError>;
}

/// Simulated entangled source shared by both parties. Alice's detector has
/// gain `raw_gain` and must be calibrated; Bob's reports shot-noise units.
#[derive(Debug)]
pub struct SimulatedSource {
    pub model: CovarianceModel,
    pub seed_a: u64,
    pub seed_b: u64,
    pub raw_gain: f64,
    cache: OnceLock<Result<(QuadratureRecord, QuadratureRecord), String>>,
}

impl SimulatedSource {
    pub fn new(model: CovarianceModel, seed_a: u64, seed_b: u64, raw_gain: f64) -> Self {
        SimulatedSource { model, seed_a, seed_b, raw_gain, cache: OnceLock::new() }
    }
}

impl SampleSource for SimulatedSource {
    fn measure(&self, role: Role, slots: usize) -> Result<QuadratureRecord, SourceError> {
        let drawn = self
            .cache
            .get_or_init(|| draw_samples(&self.model, slots, self.seed_a, self.seed_b).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| SourceError::Other(e.clone()))?;
        if drawn.0.len() != slots {
            return Err(SourceError::Other(format!("source holds {} slots, {slots} requested", drawn.0.len())));
        }
        Ok(match role {
            Role::Alice => {
                let mut a = drawn.0.clone();
                a.scale(self.raw_gain);
                a
            }
            Role::Bob => drawn.1.clone(),
        })
    }

    fn vacuum(&self, role: Role, count: usize) -> Result<Vec<f64>, SourceError> {
        Ok(match role {
            Role::Alice => draw_vacuum(count, self.raw_gain, self.seed_a),
            Role::Bob => draw_vacuum(count, 1.0, self.seed_b),
        })
    }
}

/// Recorded measurement dumps. Calibration uses simulated vacuum at the gain
/// stored in the dump header.
#[derive(Debug, Clone)]
pub struct DumpSource {
    pub alice: PathBuf,
    pub bob: PathBuf,
}

impl DumpSource {
    fn path(&self, role: Role) -> &Path {
        match role {
            Role::Alice => &self.alice,
            Role::Bob => &self.bob,
        }
    }
}

impl SampleSource for DumpSource {
    fn measure(&self, role: Role, slots: usize) -> Result<QuadratureRecord, SourceError> {
        let (rec, _) = read_dump(self.path(role))?;
        if rec.len() != slots {
            return Err(SourceError::Other(format!("dump holds {} slots, {slots} requested", rec.len())));
        }
        Ok(rec)
    }

    fn vacuum(&self, role: Role, count: usize) -> Result<Vec<f64>, SourceError> {
        let (_, h) = read_dump(self.path(role))?;
        Ok(draw_vacuum(count, h.raw_gain, h.seed_a))
    }
}

/// The final shared key.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretKey {
    pub bits: BitString,
    pub epsilon: f64,
    pub session_id: [u8; 16],
    /// Transcript digest when the key was produced.
    pub transcript_sha256: [u8; 32],
}

/// Measurements taken along the way, for reports and sweeps.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub slots: usize,
    pub sifted: usize,
    pub k: usize,
    pub calibration_factor: Option<f64>,
    pub estimation: Option<EstimationResult>,
    pub recon: Option<ReconParams>,
    pub stats: Option<ChannelStats>,
    pub blocks: usize,
    pub tail: usize,
    /// Blocks whose decoded syndrome did not match (known to Bob only).
    pub decode_failures: Option<usize>,
    pub mean_iterations: Option<f64>,
    pub confirm_failures: usize,
    pub confirmed_symbols: usize,
    pub h_cond: Option<f64>,
    pub beta: Option<f64>,
}

/// Result of one party's run.
#[derive(Debug, Clone)]
pub struct PartyOutcome {
    pub role: Role,
    pub result: Result<SecretKey, Abort>,
    pub transcript: Transcript,
    pub ledger: LeakageLedger,
    pub key_report: Option<KeyLengthReport>,
    pub diagnostics: Diagnostics,
}

impl PartyOutcome {
    pub fn key(&self) -> Option<&SecretKey> {
        self.result.as_ref().ok()
    }

    pub fn abort(&self) -> Option<&Abort> {
        self.result.as_ref().err()
    }
}

/// Runs one party to completion over `transport`.
pub fn run_party<T: Transport>(cfg: &PartyConfig, source: &dyn SampleSource, transport: T) -> PartyOutcome {
    protocol::run(cfg, source, transport)
}

/// Runs both parties over the given transports, Bob on a second thread.
pub fn run_pair(
    alice: &PartyConfig,
    bob: &PartyConfig,
    source: Arc<dyn SampleSource>,
    alice_transport: Box<dyn Transport>,
    bob_transport: Box<dyn Transport>,
) -> (PartyOutcome, PartyOutcome) {
    let bob = bob.clone();
    let src = source.clone();
    let handle = std::thread::spawn(move || run_party(&bob, src.as_ref(), bob_transport));
    let a = run_party(alice, source.as_ref(), alice_transport);
    let b = handle.join().expect("bob thread panicked");
    (a, b)
}

/// Both parties in process over a loopback channel.
pub fn run_loopback(alice: &PartyConfig, bob: &PartyConfig, source: Arc<dyn SampleSource>) -> (PartyOutcome, PartyOutcome) {
    let (ta, tb) = loopback_pair();
    run_pair(alice, bob, source, Box::new(ta), Box::new(tb))
}

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed key file: {0}")]
    Malformed(String),
}

const KEY_MAGIC: &str = "CVQKD-KEY v1";

/// Writes a text header, a blank line, then the key bytes.
pub fn write_key_file(path: &Path, key: &SecretKey) -> Result<(), KeyFileError> {
    let mut out = format!(
        "{KEY_MAGIC}\nlength_bits: {}\nepsilon: {:e}\nsession_id: {}\ntranscript_sha256: {}\n\n",
        key.bits.len(),
        key.epsilon,
        hex::encode(key.session_id),
        hex::encode(key.transcript_sha256)
    )
    .into_bytes();
    out.extend_from_slice(&key.bits.to_bytes());
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_key_file(path: &Path) -> Result<SecretKey, KeyFileError> {
    let data = std::fs::read(path)?;
    let split = data
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| KeyFileError::Malformed("no header terminator".into()))?;
    let header = std::str::from_utf8(&data[..split]).map_err(|e| KeyFileError::Malformed(e.to_string()))?;
    let mut lines = header.lines();
    if lines.next() != Some(KEY_MAGIC) {
        return Err(KeyFileError::Malformed("bad magic".into()));
    }
    let mut field = |name: &str| -> Result<String, KeyFileError> {
        let line = lines.next().ok_or_else(|| KeyFileError::Malformed(format!("missing {name}")))?;
        line.strip_prefix(&format!("{name}: "))
            .map(str::to_owned)
            .ok_or_else(|| KeyFileError::Malformed(format!("expected {name}")))
    };
    let bad = |e: &dyn std::fmt::Display| KeyFileError::Malformed(e.to_string());
    let len: usize = field("length_bits")?.parse().map_err(|e| bad(&e))?;
    let epsilon: f64 = field("epsilon")?.parse().map_err(|e| bad(&e))?;
    let sid = hex::decode(field("session_id")?).map_err(|e| bad(&e))?;
    let digest = hex::decode(field("transcript_sha256")?).map_err(|e| bad(&e))?;
    let body = &data[split + 2..];
    if body.len() != len.div_ceil(8) {
        return Err(KeyFileError::Malformed(format!("{} key bytes for {len} bits", body.len())));
    }
    Ok(SecretKey {
        bits: BitString::from_bytes(body, len),
        epsilon,
        session_id: sid.try_into().map_err(|_| KeyFileError::Malformed("session id length".into()))?,
        transcript_sha256: digest.try_into().map_err(|_| KeyFileError::Malformed("digest length".into()))?,
    })
}
