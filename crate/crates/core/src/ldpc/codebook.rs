//! Text code files and the codebook indexed by (field order, rate).
//!
//! File layout:
//!
//! ```text
//! NBLDPC v1
//! <m> <n> <n_checks> <rate:.4> <primitive_poly_hex> <seed_hex>
//! <deg> <col>:<coeff_hex> ...        (one line per check)
//! SHA256 <hex digest of every preceding byte>
//! ```
//!
//! Hex fields are lowercase without prefix; coefficients are two digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{peg_construct, LdpcError, ParityCheckMatrix};
use crate::fieldmath::GaloisField;

const MAGIC: &str = "NBLDPC v1";
const EXTENSION: &str = "nbldpc";

/// Serialises a code in the text format.
pub fn write_code(h: &ParityCheckMatrix) -> String {
    let mut s = String::new();
    s.push_str(MAGIC);
    s.push('\n');
    let _ = writeln!(
        s,
        "{} {} {} {:.4} {:x} {:x}",
        h.field().degree(),
        h.n(),
        h.n_checks(),
        h.rate(),
        h.field().poly(),
        h.seed()
    );
    for j in 0..h.n_checks() {
        let _ = write!(s, "{}", h.row_degree(j));
        for (c, coeff) in h.row(j) {
            let _ = write!(s, " {c}:{coeff:02x}");
        }
        s.push('\n');
    }
    let digest = Sha256::digest(s.as_bytes());
    let _ = writeln!(s, "SHA256 {}", hex::encode(digest));
    s
}

fn malformed(msg: impl Into<String>) -> LdpcError {
    LdpcError::Malformed(msg.into())
}

/// Parses and validates a code file.
pub fn parse_code(text: &str) -> Result<ParityCheckMatrix, LdpcError> {
    let sha_at = text.rfind("SHA256 ").ok_or_else(|| malformed("missing checksum line"))?;
    if sha_at > 0 && !text[..sha_at].ends_with('\n') {
        return Err(malformed("checksum line not at line start"));
    }
    let (body, trailer) = text.split_at(sha_at);
    let stated = trailer
        .strip_prefix("SHA256 ")
        .and_then(|t| t.strip_suffix('\n'))
        .ok_or_else(|| malformed("checksum line must end the file"))?;
    if stated != hex::encode(Sha256::digest(body.as_bytes())) {
        return Err(LdpcError::Checksum);
    }

    let mut lines = body.lines();
    if lines.next() != Some(MAGIC) {
        return Err(malformed("bad magic"));
    }
    let header: Vec<&str> =
        lines.next().ok_or_else(|| malformed("missing header"))?.split_whitespace().collect();
    if header.len() != 6 {
        return Err(malformed("header needs 6 fields"));
    }
    let m: u32 = header[0].parse().map_err(|_| malformed("bad m"))?;
    let n: usize = header[1].parse().map_err(|_| malformed("bad n"))?;
    let n_checks: usize = header[2].parse().map_err(|_| malformed("bad n_checks"))?;
    let _rate: f64 = header[3].parse().map_err(|_| malformed("bad rate"))?;
    let poly = u16::from_str_radix(header[4], 16).map_err(|_| malformed("bad polynomial"))?;
    let seed = u64::from_str_radix(header[5], 16).map_err(|_| malformed("bad seed"))?;
    let field = GaloisField::with_poly(m, poly)?;

    let mut rows = Vec::with_capacity(n_checks);
    for (j, line) in lines.enumerate() {
        let mut parts = line.split_whitespace();
        let deg: usize = parts
            .next()
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| malformed(format!("check {j}: bad degree")))?;
        let mut row = Vec::with_capacity(deg);
        for p in parts {
            let (c, h) = p.split_once(':').ok_or_else(|| malformed(format!("check {j}: bad edge")))?;
            let c: u32 = c.parse().map_err(|_| malformed(format!("check {j}: bad column")))?;
            let h = u8::from_str_radix(h, 16).map_err(|_| malformed(format!("check {j}: bad coefficient")))?;
            row.push((c, h));
        }
        if row.len() != deg {
            return Err(malformed(format!("check {j}: degree {deg} but {} edges", row.len())));
        }
        rows.push(row);
    }
    if rows.len() != n_checks {
        return Err(malformed(format!("expected {n_checks} checks, found {}", rows.len())));
    }
    let h = ParityCheckMatrix::from_rows(field, n, rows, seed)?;
    h.check_invariants()?;
    Ok(h)
}

/// Codebook index: field order and design rate in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeKey {
    pub order: usize,
    pub rate_percent: u16,
}

/// A collection of parity-check matrices shared by both parties.
#[derive(Debug, Clone, Default)]
pub struct Codebook {
    codes: BTreeMap<CodeKey, ParityCheckMatrix>,
}

impl Codebook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, h: ParityCheckMatrix) -> Result<(), LdpcError> {
        let key = CodeKey { order: h.field().order(), rate_percent: h.rate_percent() };
        if self.codes.contains_key(&key) {
            return Err(LdpcError::Duplicate { order: key.order, rate_percent: key.rate_percent });
        }
        self.codes.insert(key, h);
        Ok(())
    }

    pub fn get(&self, order: usize, rate_percent: u16) -> Option<&ParityCheckMatrix> {
        self.codes.get(&CodeKey { order, rate_percent })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CodeKey, &ParityCheckMatrix)> {
        self.codes.iter()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Distinct field orders present.
    pub fn orders(&self) -> Vec<usize> {
        let mut o: Vec<usize> = self.codes.keys().map(|k| k.order).collect();
        o.dedup();
        o
    }

    /// Builds every `(order, rate)` combination. Combinations that cannot be
    /// built are returned alongside the codebook rather than aborting the rest.
    pub fn generate(
        orders: &[usize],
        rate_percents: &[u16],
        n: usize,
        seed: u64,
    ) -> (Codebook, Vec<(CodeKey, LdpcError)>) {
        let jobs: Vec<CodeKey> = orders
            .iter()
            .flat_map(|&order| rate_percents.iter().map(move |&rate_percent| CodeKey { order, rate_percent }))
            .collect();
        let built: Vec<(CodeKey, Result<ParityCheckMatrix, LdpcError>)> = jobs
            .into_par_iter()
            .map(|key| {
                let res = (|| {
                    if !key.order.is_power_of_two() {
                        return Err(LdpcError::Infeasible(format!("order {} not a power of two", key.order)));
                    }
                    let field = GaloisField::new(key.order.trailing_zeros())?;
                    let code_seed = seed ^ ((key.order as u64) << 32) ^ key.rate_percent as u64;
                    peg_construct(n, key.rate_percent as f64 / 100.0, &field, code_seed)
                })();
                (key, res)
            })
            .collect();
        let mut book = Codebook::new();
        let mut failed = Vec::new();
        for (key, res) in built {
            match res.and_then(|h| book.insert(h)) {
                Ok(()) => {}
                Err(e) => failed.push((key, e)),
            }
        }
        (book, failed)
    }

    /// File name used for a code in a codebook directory.
    pub fn file_name(h: &ParityCheckMatrix) -> String {
        format!("gf{}_r{:03}_n{}.{EXTENSION}", h.field().order(), h.rate_percent(), h.n())
    }

    /// Writes one file per code into `dir`.
    pub fn store(&self, dir: &Path) -> Result<(), LdpcError> {
        std::fs::create_dir_all(dir)?;
        for h in self.codes.values() {
            std::fs::write(dir.join(Self::file_name(h)), write_code(h))?;
        }
        Ok(())
    }

    /// Loads every code file in `dir`. Any bad file fails the whole load.
    pub fn load(dir: &Path) -> Result<Codebook, LdpcError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
            .collect();
        paths.sort();
        let parsed: Vec<Result<ParityCheckMatrix, LdpcError>> = paths
            .par_iter()
            .map(|p| {
                let text = std::fs::read_to_string(p)?;
                parse_code(&text).map_err(|e| match e {
                    LdpcError::Malformed(m) => LdpcError::Malformed(format!("{}: {m}", p.display())),
                    other => other,
                })
            })
            .collect();
        let mut book = Codebook::new();
        for h in parsed {
            book.insert(h?)?;
        }
        Ok(book)
    }

    /// SHA-256 over every code's serialised form, in key order.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for h in self.codes.values() {
            hasher.update(write_code(h).as_bytes());
        }
        hasher.finalize().into()
    }
}
