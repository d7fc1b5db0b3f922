//! Key-rate sweeps over the sample count or the channel loss.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{predicted_leak_per_symbol, ConfigError, RunConfig};
use crate::crypto::confirm::tag_bits;
use crate::finitekey::{default_k_grid, optimize_k, KeyPrediction};
use crate::ldpc::Codebook;
use crate::session::run_loopback;

/// Bumped whenever the row layout changes.
pub const SCHEMA_VERSION: u32 = 1;
/// Fibre attenuation in dB/km.
pub const FIBRE_DB_PER_KM: f64 = 0.2;
/// Coupling efficiency counted against the loss budget before fibre.
pub const COUPLING_EFFICIENCY: f64 = 0.95;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("existing file {0} has a different header")]
    HeaderMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Sifted-sample target `N`.
    Samples,
    LossDb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Full two-party sessions.
    Session,
    /// Key length from the source model alone, no samples drawn.
    Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub repetitions: usize,
    pub mode: SweepMode,
    pub base: RunConfig,
    /// Points run concurrently.
    pub jobs: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.values.is_empty() {
            return Err(SweepError::Invalid("empty grid".into()));
        }
        if self.repetitions == 0 || self.jobs == 0 {
            return Err(SweepError::Invalid("repetitions and jobs must be positive".into()));
        }
        match self.variable {
            SweepVariable::LossDb if self.values.iter().any(|&v| !(v >= 0.0 && v.is_finite())) => {
                Err(SweepError::Invalid("loss values must be finite and non-negative".into()))
            }
            SweepVariable::Samples if self.values.iter().any(|&v| !(v >= 2.0 && v.fract() == 0.0)) => {
                Err(SweepError::Invalid("sample counts must be integers of at least 2".into()))
            }
            _ => Ok(()),
        }
    }

    fn point_config(&self, x: f64, rep: usize) -> RunConfig {
        let mut c = self.base.clone();
        match self.variable {
            SweepVariable::Samples => c.session.n = x as usize,
            SweepVariable::LossDb => c.source.loss_db = x,
        }
        let r = rep as u64;
        c.session.seed_alice = c.session.seed_alice.wrapping_add(r * 1_000_003);
        c.session.seed_bob = c.session.seed_bob.wrapping_add(r * 1_000_003);
        c.source.seed_a = c.source.seed_a.wrapping_add(r * 1_000_003);
        c.source.seed_b = c.source.seed_b.wrapping_add(r * 1_000_003);
        c
    }
}

/// Fibre length equivalent to a loss, after the coupling loss is deducted.
pub fn loss_to_km(loss_db: f64) -> f64 {
    let coupling_db = -10.0 * COUPLING_EFFICIENCY.log10();
    ((loss_db - coupling_db) / FIBRE_DB_PER_KM).max(0.0)
}

/// Transmissivity of a loss in dB.
pub fn transmissivity(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub schema: u32,
    pub mode: SweepMode,
    pub variable: SweepVariable,
    pub x: f64,
    pub n: usize,
    pub loss_db: f64,
    pub distance_km: f64,
    pub repetition: usize,
    pub k: usize,
    /// Secret bits per sifted sample, zero on abort.
    pub key_rate: f64,
    pub key_length: i64,
    pub beta: Option<f64>,
    pub d_pe: Option<f64>,
    pub d_pe0: f64,
    pub leak_bits: Option<u64>,
    /// Empty on success.
    pub abort: String,
}

fn estimate_point(cfg: &RunConfig, codebook: Option<&Codebook>) -> Result<SweepRow, SweepError> {
    let n = cfg.session.n;
    let eff = cfg.effective_model()?;
    let spec = cfg.spec();
    let d_pe0 = cfg.d_pe0()?;
    let code_n = codebook.and_then(|b| b.iter().map(|(_, h)| h.n()).max()).unwrap_or(10_000);
    let blocks = n.div_ceil(code_n);
    let t = tag_bits(cfg.session.epsilon_c, blocks).map_err(|e| SweepError::Invalid(e.to_string()))?;
    let pred = KeyPrediction {
        d_pe0,
        leak_per_symbol: predicted_leak_per_symbol(&eff, &spec),
        fixed_leak_bits: 64 + blocks as u64 * t as u64,
    };
    let grid = if cfg.session.k != 0 { vec![cfg.session.k] } else { default_k_grid(n) };
    let choice = optimize_k(n, &grid, &spec, &cfg.key_model(), &pred).map_err(|e| SweepError::Invalid(e.to_string()))?;
    let leak = (pred.leak_per_symbol * (n - choice.k) as f64).ceil() as u64 + pred.fixed_leak_bits;
    Ok(SweepRow {
        schema: SCHEMA_VERSION,
        mode: SweepMode::Estimate,
        variable: SweepVariable::Samples,
        x: 0.0,
        n,
        loss_db: cfg.source.loss_db,
        distance_km: loss_to_km(cfg.source.loss_db),
        repetition: 0,
        k: choice.k,
        key_rate: choice.length.max(0) as f64 / n as f64,
        key_length: choice.length,
        beta: Some(crate::config::PREDICTED_EFFICIENCY),
        d_pe: None,
        d_pe0,
        leak_bits: Some(leak),
        abort: if choice.length > 0 { String::new() } else { "ABORT_KEYLEN".into() },
    })
}

fn session_point(cfg: &RunConfig, codebook: &Arc<Codebook>) -> Result<SweepRow, SweepError> {
    let (a, b) = cfg.parties(codebook.clone())?;
    let (alice, _) = run_loopback(&a, &b, cfg.sample_source());
    let n = cfg.session.n;
    let length = alice.key().map(|k| k.bits.len() as i64).unwrap_or_else(|| alice.key_report.as_ref().map_or(0, |r| r.length.min(0)));
    Ok(SweepRow {
        schema: SCHEMA_VERSION,
        mode: SweepMode::Session,
        variable: SweepVariable::Samples,
        x: 0.0,
        n,
        loss_db: cfg.source.loss_db,
        distance_km: loss_to_km(cfg.source.loss_db),
        repetition: 0,
        k: a.params.k,
        key_rate: length.max(0) as f64 / n as f64,
        key_length: length,
        beta: alice.diagnostics.beta,
        d_pe: alice.diagnostics.estimation.map(|e| e.d_pe),
        d_pe0: a.params.d_pe0,
        leak_bits: alice.key_report.as_ref().map(|r| r.leak_bits),
        abort: alice.abort().map(|e| e.code.name().to_string()).unwrap_or_default(),
    })
}

/// Runs every grid point and repetition. Failures become rows with the
/// `abort` column set.
pub fn run_sweep(spec: &SweepSpec, codebook: Option<Arc<Codebook>>) -> Result<Vec<SweepRow>, SweepError> {
    spec.validate()?;
    if spec.mode == SweepMode::Session && codebook.is_none() {
        return Err(SweepError::Invalid("session sweeps need a codebook".into()));
    }
    let jobs: Vec<(f64, usize)> =
        spec.values.iter().flat_map(|&x| (0..spec.repetitions).map(move |r| (x, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| SweepError::Invalid(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(x, rep)| {
                let cfg = spec.point_config(x, rep);
                let res = match spec.mode {
                    SweepMode::Estimate => estimate_point(&cfg, codebook.as_deref()),
                    SweepMode::Session => session_point(&cfg, codebook.as_ref().unwrap()),
                };
                let mut row = res.unwrap_or_else(|e| SweepRow {
                    schema: SCHEMA_VERSION,
                    mode: spec.mode,
                    variable: spec.variable,
                    x,
                    n: cfg.session.n,
                    loss_db: cfg.source.loss_db,
                    distance_km: loss_to_km(cfg.source.loss_db),
                    repetition: rep,
                    k: cfg.session.k,
                    key_rate: 0.0,
                    key_length: 0,
                    beta: None,
                    d_pe: None,
                    d_pe0: cfg.d_pe0().unwrap_or(f64::NAN),
                    leak_bits: None,
                    abort: format!("ERROR: {e}"),
                });
                row.variable = spec.variable;
                row.x = x;
                row.repetition = rep;
                row
            })
            .collect()
    });
    Ok(rows)
}

/// Appends rows to a CSV file, writing the header only when the file is new.
pub fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<(), SweepError> {
    let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
    if exists {
        let mut r = csv::Reader::from_path(path)?;
        let have: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if have != csv_header() {
            return Err(SweepError::HeaderMismatch(path.display().to_string()));
        }
    }
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_header() -> Vec<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(SweepRow {
        schema: 0,
        mode: SweepMode::Estimate,
        variable: SweepVariable::Samples,
        x: 0.0,
        n: 0,
        loss_db: 0.0,
        distance_km: 0.0,
        repetition: 0,
        k: 0,
        key_rate: 0.0,
        key_length: 0,
        beta: None,
        d_pe: None,
        d_pe0: 0.0,
        leak_bits: None,
        abort: String::new(),
    })
    .expect("header row serialises");
    let bytes = w.into_inner().expect("in-memory writer");
    let text = String::from_utf8(bytes).expect("utf-8 header");
    text.lines().next().unwrap_or_default().split(',').map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KeyModelKind;

    fn estimate_spec(variable: SweepVariable, values: Vec<f64>) -> SweepSpec {
        let mut base = RunConfig::default();
        base.session.key_model = KeyModelKind::Reference;
        SweepSpec { variable, values, repetitions: 1, mode: SweepMode::Estimate, base, jobs: 2 }
    }

    #[test]
    fn loss_conversion() {
        // 0.2228 dB of coupling loss, then 0.2 dB per km.
        assert!((loss_to_km(0.2228 + 1.0) - 5.0).abs() < 1e-3);
        assert_eq!(loss_to_km(0.1), 0.0);
        assert!((transmissivity(3.0) - 0.501187).abs() < 1e-6);
    }

    #[test]
    fn estimated_n_sweep_rises_and_saturates() {
        let values: Vec<f64> = [1e6, 3e6, 1e7, 3e7, 1e8, 3e8, 1e9, 1e10, 1e11].to_vec();
        let rows = run_sweep(&estimate_spec(SweepVariable::Samples, values), None).unwrap();
        let rates: Vec<f64> = rows.iter().map(|r| r.key_rate).collect();
        assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
        // Saturation: the rate approaches, and never exceeds, the value with
        // no estimation cost and no fluctuation term.
        let cfg = RunConfig::default();
        let eff = cfg.effective_model().unwrap();
        let limit = -crate::finitekey::c_delta(cfg.spec().delta()).log2()
            - crate::finitekey::Gamma::Reference.log2(cfg.d_pe0().unwrap()).unwrap()
            - predicted_leak_per_symbol(&eff, &cfg.spec());
        assert!(rates.iter().all(|&r| r < limit), "{rates:?} vs {limit}");
        assert!(*rates.last().unwrap() > 0.85 * limit, "{rates:?} vs {limit}");
    }

    #[test]
    fn estimated_loss_sweep_falls_through_zero() {
        let values: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
        let mut spec = estimate_spec(SweepVariable::LossDb, values);
        spec.base.session.n = 100_000_000;
        let rows = run_sweep(&spec, None).unwrap();
        let rates: Vec<f64> = rows.iter().map(|r| r.key_rate).collect();
        assert!(rates[0] > 0.0);
        assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
        assert_eq!(*rates.last().unwrap(), 0.0, "{rates:?}");
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(run_sweep(&estimate_spec(SweepVariable::LossDb, vec![]), None).is_err());
        assert!(run_sweep(&estimate_spec(SweepVariable::LossDb, vec![-1.0]), None).is_err());
        let mut s = estimate_spec(SweepVariable::Samples, vec![1e5]);
        s.mode = SweepMode::Session;
        assert!(run_sweep(&s, None).is_err());
    }

    #[test]
    fn csv_appends_under_one_header() {
        let rows = run_sweep(&estimate_spec(SweepVariable::LossDb, vec![0.0, 0.5]), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sweep.csv");
        write_csv(&p, &rows).unwrap();
        write_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("schema,mode,variable,x,"));
        let again = run_sweep(&estimate_spec(SweepVariable::LossDb, vec![0.0, 0.5]), None).unwrap();
        assert_eq!(again, rows);
        std::fs::write(&p, "other,header\n").unwrap();
        assert!(matches!(write_csv(&p, &rows), Err(SweepError::HeaderMismatch(_))));
    }
}
