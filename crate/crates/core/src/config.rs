//! Run configuration (TOML) and its translation into party configurations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::confirm::tag_bits;
use crate::discretize::BinningSpec;
use crate::finitekey::{
    default_k_grid, optimize_k, theoretical_threshold, KeyLengthModel, KeyPrediction,
};
use crate::ldpc::Codebook;
use crate::session::{
    base_spec, psk_from_seed, DumpSource, PartyConfig, ProtocolParams, Role, SampleSource, SimulatedSource, DEFAULT_PSK_BYTES,
};
use crate::simulator::{CovarianceModel, EffectiveModel, MIN_CALIBRATION_SAMPLES};

/// Environment variable overriding the codebook directory.
pub const CODEBOOK_ENV: &str = "CVQKD_CODEBOOK_DIR";

/// Fraction by which the default abort threshold exceeds the expected distance.
pub const DEFAULT_THRESHOLD_MARGIN: f64 = 0.03;
/// Efficiency assumed when predicting disclosure before estimation.
pub const PREDICTED_EFFICIENCY: f64 = 0.95;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("codebook: {0}")]
    Codebook(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyModelKind {
    Stub,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSection {
    /// Sifted-sample target; `2n` slots are measured.
    pub n: usize,
    /// Estimation sample size; 0 picks the best predicted value.
    pub k: usize,
    pub alpha: f64,
    pub d: u32,
    pub epsilon: f64,
    pub epsilon_c: f64,
    pub key_model: KeyModelKind,
    /// μ constant for the stub model.
    pub mu_c: f64,
    /// Fixed abort threshold in bins; derived from the source model if absent.
    pub d_pe0: Option<f64>,
    pub threshold_margin: f64,
    pub recon_margin: f64,
    pub max_iters: usize,
    pub seed_alice: u64,
    pub seed_bob: u64,
    pub psk_seed: u64,
    pub psk_bytes: usize,
    pub calibration_samples: usize,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection {
            n: 500_000,
            k: 0,
            alpha: BinningSpec::DEFAULT_ALPHA,
            d: BinningSpec::DEFAULT_D,
            epsilon: KeyLengthModel::DEFAULT_EPSILON,
            epsilon_c: 2f64.powi(-32),
            key_model: KeyModelKind::Stub,
            mu_c: 3.0,
            d_pe0: None,
            threshold_margin: DEFAULT_THRESHOLD_MARGIN,
            recon_margin: crate::reconcile::DEFAULT_MARGIN,
            max_iters: crate::ldpc::DEFAULT_MAX_ITERS,
            seed_alice: 1,
            seed_bob: 2,
            psk_seed: 3,
            psk_bytes: DEFAULT_PSK_BYTES,
            calibration_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Simulator,
    Dump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub kind: SourceKind,
    pub squeezing_db: f64,
    pub detector_efficiency: f64,
    pub excess: f64,
    /// Multiplies `excess`.
    pub excess_scale: f64,
    pub loss_db: f64,
    /// Alice's detector gain in raw units per shot-noise standard deviation.
    pub raw_gain: f64,
    pub seed_a: u64,
    pub seed_b: u64,
    pub alice_dump: Option<PathBuf>,
    pub bob_dump: Option<PathBuf>,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            kind: SourceKind::Simulator,
            squeezing_db: 10.0,
            detector_efficiency: 0.98,
            excess: 0.01,
            excess_scale: 1.0,
            loss_db: 0.0,
            raw_gain: 1.7,
            seed_a: 11,
            seed_b: 12,
            alice_dump: None,
            bob_dump: None,
        }
    }
}

impl SourceSection {
    pub fn model(&self) -> CovarianceModel {
        CovarianceModel {
            excess: self.excess * self.excess_scale,
            detector_eff_a: self.detector_efficiency,
            detector_eff_b: self.detector_efficiency,
            ..CovarianceModel::two_mode_squeezed(self.squeezing_db)
        }
        .with_loss_db(self.loss_db)
    }

    /// The channel the link was provisioned for: `excess_scale` is left out so
    /// that extra noise shows up against thresholds planned without it.
    pub fn design_model(&self) -> CovarianceModel {
        CovarianceModel { excess: self.excess, ..self.model() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookSection {
    pub dir: PathBuf,
}

impl Default for CodebookSection {
    fn default() -> Self {
        CodebookSection { dir: PathBuf::from("codes") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Loopback,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSection {
    pub kind: TransportKind,
    pub addr: String,
}

impl Default for TransportSection {
    fn default() -> Self {
        TransportSection { kind: TransportKind::Loopback, addr: "127.0.0.1:7878".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub session: SessionSection,
    pub source: SourceSection,
    pub codebook: CodebookSection,
    pub transport: TransportSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: RunConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.session;
        if s.n == 0 {
            return Err(invalid("session.n must be positive"));
        }
        if s.k != 0 && s.k >= s.n {
            return Err(invalid("session.k must be below session.n"));
        }
        self.spec().validate().map_err(|e| invalid(e.to_string()))?;
        self.key_model().validate().map_err(|e| invalid(e.to_string()))?;
        tag_bits(s.epsilon_c, 1).map_err(|e| invalid(format!("epsilon_c: {e}")))?;
        if !(s.recon_margin > 0.0 && s.recon_margin <= 1.0) {
            return Err(invalid("session.recon_margin must be in (0, 1]"));
        }
        if s.calibration_samples < MIN_CALIBRATION_SAMPLES {
            return Err(invalid(format!("session.calibration_samples must be at least {MIN_CALIBRATION_SAMPLES}")));
        }
        if s.psk_bytes < 2 * 64 * crate::crypto::mac::KEY_BYTES_PER_TAG {
            return Err(invalid("session.psk_bytes too small"));
        }
        if s.max_iters == 0 {
            return Err(invalid("session.max_iters must be positive"));
        }
        let src = &self.source;
        if src.loss_db < 0.0 {
            return Err(invalid("source.loss_db must be non-negative"));
        }
        if !(src.raw_gain > 0.0 && src.raw_gain.is_finite()) {
            return Err(invalid("source.raw_gain must be positive"));
        }
        src.model().validate().map_err(|e| invalid(e.to_string()))?;
        if src.kind == SourceKind::Dump && (src.alice_dump.is_none() || src.bob_dump.is_none()) {
            return Err(invalid("dump source needs source.alice_dump and source.bob_dump"));
        }
        Ok(())
    }

    pub fn spec(&self) -> BinningSpec {
        base_spec(self.session.alpha, self.session.d)
    }

    pub fn slots(&self) -> usize {
        2 * self.session.n
    }

    pub fn key_model(&self) -> KeyLengthModel {
        match self.session.key_model {
            KeyModelKind::Stub => KeyLengthModel::stub(self.session.epsilon, &self.spec(), self.session.mu_c),
            KeyModelKind::Reference => KeyLengthModel::reference(self.session.epsilon),
        }
    }

    /// Codebook directory after the environment override.
    pub fn codebook_dir(&self) -> PathBuf {
        std::env::var_os(CODEBOOK_ENV).map(PathBuf::from).unwrap_or_else(|| self.codebook.dir.clone())
    }

    pub fn load_codebook(&self) -> Result<Codebook, ConfigError> {
        let dir = self.codebook_dir();
        if !dir.is_dir() {
            return Err(ConfigError::Codebook(format!("directory {} not found", dir.display())));
        }
        let book = Codebook::load(&dir).map_err(|e| ConfigError::Codebook(e.to_string()))?;
        if book.is_empty() {
            return Err(ConfigError::Codebook(format!("no codes in {}", dir.display())));
        }
        Ok(book)
    }

    /// Source characterisation assumed before measuring.
    /// Effective model of the design channel, used for planning.
    pub fn effective_model(&self) -> Result<EffectiveModel, ConfigError> {
        self.source.design_model().effective().map_err(|e| invalid(e.to_string()))
    }

    pub fn d_pe0(&self) -> Result<f64, ConfigError> {
        match self.session.d_pe0 {
            Some(t) => Ok(t),
            None => Ok(theoretical_threshold(&self.effective_model()?, &self.spec(), self.session.threshold_margin)),
        }
    }

    /// The configured `k`, or the grid value with the best predicted key.
    pub fn resolve_k(&self, codebook: &Codebook) -> Result<usize, ConfigError> {
        if self.session.k != 0 {
            return Ok(self.session.k);
        }
        let n = self.session.n;
        let eff = self.effective_model()?;
        let code_n = codebook.iter().map(|(_, h)| h.n()).max().unwrap_or(1);
        let blocks = n.div_ceil(code_n);
        let t = tag_bits(self.session.epsilon_c, blocks).map_err(|e| invalid(e.to_string()))?;
        let prediction = KeyPrediction {
            d_pe0: self.d_pe0()?,
            leak_per_symbol: predicted_leak_per_symbol(&eff, &self.spec()),
            fixed_leak_bits: 64 + blocks as u64 * t as u64,
        };
        let choice = optimize_k(n, &default_k_grid(n), &self.spec(), &self.key_model(), &prediction)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(choice.k)
    }

    /// Negotiated parameters for this run.
    pub fn protocol_params(&self, codebook: &Codebook) -> Result<ProtocolParams, ConfigError> {
        Ok(ProtocolParams {
            slots: self.slots(),
            spec: self.spec(),
            k: self.resolve_k(codebook)?,
            d_pe0: self.d_pe0()?,
            key_model: self.key_model(),
            epsilon_c: self.session.epsilon_c,
            recon_margin: self.session.recon_margin,
            max_iters: self.session.max_iters,
            codebook_digest: codebook.digest(),
        })
    }

    /// Both parties' configurations sharing one codebook.
    pub fn parties(&self, codebook: Arc<Codebook>) -> Result<(PartyConfig, PartyConfig), ConfigError> {
        let params = self.protocol_params(&codebook)?;
        let psk = psk_from_seed(self.session.psk_seed, self.session.psk_bytes);
        let mk = |role, seed| PartyConfig {
            role,
            params: params.clone(),
            codebook: codebook.clone(),
            seed,
            psk: psk.clone(),
            calibration_samples: self.session.calibration_samples,
        };
        Ok((mk(Role::Alice, self.session.seed_alice), mk(Role::Bob, self.session.seed_bob)))
    }

    pub fn sample_source(&self) -> Arc<dyn SampleSource> {
        match self.source.kind {
            SourceKind::Simulator => Arc::new(SimulatedSource::new(
                self.source.model(),
                self.source.seed_a,
                self.source.seed_b,
                self.source.raw_gain,
            )),
            SourceKind::Dump => Arc::new(DumpSource {
                alice: self.source.alice_dump.clone().unwrap_or_default(),
                bob: self.source.bob_dump.clone().unwrap_or_default(),
            }),
        }
    }
}

/// Expected disclosure per raw-key symbol: the conditional entropy of the
/// discretised Gaussian divided by an assumed efficiency, capped at `d`.
pub fn predicted_leak_per_symbol(eff: &EffectiveModel, spec: &BinningSpec) -> f64 {
    let var = eff.conditional_variance_a().max(1e-12);
    let h = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).log2() - spec.delta().log2();
    (h.max(0.0) / PREDICTED_EFFICIENCY).min(spec.d as f64)
}
