//! Non-binary LDPC codes over GF(2^m): construction, syndromes, and
//! belief-propagation syndrome decoding.

mod bp;
mod codebook;
mod peg;

pub use bp::{
    check_node_update, decode, walsh_hadamard, DecodeResult, SymbolPrior, DEFAULT_MAX_ITERS,
};
pub use codebook::{parse_code, write_code, CodeKey, Codebook};
pub use peg::peg_construct;

use thiserror::Error;

use crate::fieldmath::{FieldError, GaloisField};

#[derive(Debug, Error)]
pub enum LdpcError {
    #[error("infeasible code parameters: {0}")]
    Infeasible(String),
    #[error("word length {got} does not match block length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("symbol {0} outside the field")]
    SymbolOutOfField(u16),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("malformed code file: {0}")]
    Malformed(String),
    #[error("checksum mismatch in code file")]
    Checksum,
    #[error("duplicate code for field order {order} and rate {rate_percent}%")]
    Duplicate { order: usize, rate_percent: u16 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse parity-check matrix over GF(2^m).
///
/// Rows are stored as `(column, coefficient)` lists sorted by column. A
/// column-major edge index is derived at construction for the decoder.
#[derive(Clone, PartialEq)]
pub struct ParityCheckMatrix {
    field: GaloisField,
    n: usize,
    seed: u64,
    /// Start of each row in the edge arrays; `row_start[n_checks]` is the edge count.
    row_start: Vec<usize>,
    edge_col: Vec<u32>,
    edge_coeff: Vec<u8>,
    /// Edges of each column, in row order.
    col_start: Vec<usize>,
    col_edges: Vec<u32>,
}

impl std::fmt::Debug for ParityCheckMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParityCheckMatrix")
            .field("field", &self.field)
            .field("n", &self.n)
            .field("n_checks", &self.n_checks())
            .field("rate", &self.rate())
            .finish()
    }
}

impl ParityCheckMatrix {
    /// Builds a matrix from explicit rows. Coefficients must be nonzero field
    /// elements and no column may repeat within a row.
    ///
    /// Column-weight and check-concentration invariants are not enforced here
    /// (small hand-written test codes need not satisfy them); see
    /// [`ParityCheckMatrix::check_invariants`].
    pub fn from_rows(
        field: GaloisField,
        n: usize,
        rows: Vec<Vec<(u32, u8)>>,
        seed: u64,
    ) -> Result<Self, LdpcError> {
        if rows.is_empty() || n == 0 {
            return Err(LdpcError::InvalidMatrix("empty matrix".into()));
        }
        let mut row_start = Vec::with_capacity(rows.len() + 1);
        let mut edge_col = Vec::new();
        let mut edge_coeff = Vec::new();
        let mut col_count = vec![0usize; n];
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            row_start.push(edge_col.len());
            for (i, &(c, h)) in row.iter().enumerate() {
                if c as usize >= n {
                    return Err(LdpcError::InvalidMatrix(format!("column {c} out of range")));
                }
                if i > 0 && row[i - 1].0 == c {
                    return Err(LdpcError::InvalidMatrix(format!("column {c} repeated in a row")));
                }
                if h == 0 || !field.contains(h as u16) {
                    return Err(LdpcError::InvalidMatrix(format!("bad coefficient {h}")));
                }
                edge_col.push(c);
                edge_coeff.push(h);
                col_count[c as usize] += 1;
            }
        }
        row_start.push(edge_col.len());

        let mut col_start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for &c in &col_count {
            col_start.push(acc);
            acc += c;
        }
        col_start.push(acc);
        let mut fill = col_start.clone();
        let mut col_edges = vec![0u32; acc];
        for e in 0..edge_col.len() {
            let c = edge_col[e] as usize;
            col_edges[fill[c]] = e as u32;
            fill[c] += 1;
        }
        Ok(ParityCheckMatrix { field, n, seed, row_start, edge_col, edge_coeff, col_start, col_edges })
    }

    pub fn field(&self) -> &GaloisField {
        &self.field
    }

    /// Block length in symbols.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_checks(&self) -> usize {
        self.row_start.len() - 1
    }

    /// Design rate `(n - n_checks) / n`.
    pub fn rate(&self) -> f64 {
        (self.n - self.n_checks()) as f64 / self.n as f64
    }

    /// Design rate in hundredths, the codebook index.
    pub fn rate_percent(&self) -> u16 {
        (self.rate() * 100.0).round() as u16
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_edges(&self) -> usize {
        self.edge_col.len()
    }

    /// `(column, coefficient)` pairs of check `j`.
    pub fn row(&self, j: usize) -> impl Iterator<Item = (usize, u8)> + '_ {
        let r = self.row_start[j]..self.row_start[j + 1];
        self.edge_col[r.clone()].iter().zip(&self.edge_coeff[r]).map(|(&c, &h)| (c as usize, h))
    }

    pub fn row_degree(&self, j: usize) -> usize {
        self.row_start[j + 1] - self.row_start[j]
    }

    pub fn col_degree(&self, i: usize) -> usize {
        self.col_start[i + 1] - self.col_start[i]
    }

    pub(crate) fn row_edges(&self, j: usize) -> std::ops::Range<usize> {
        self.row_start[j]..self.row_start[j + 1]
    }

    pub(crate) fn col_edge_ids(&self, i: usize) -> &[u32] {
        &self.col_edges[self.col_start[i]..self.col_start[i + 1]]
    }

    pub(crate) fn edge_coeff(&self, e: usize) -> u8 {
        self.edge_coeff[e]
    }

    /// Verifies column weight two, check concentration, and nonzero coefficients.
    pub fn check_invariants(&self) -> Result<(), LdpcError> {
        if let Some(i) = (0..self.n).find(|&i| self.col_degree(i) != 2) {
            return Err(LdpcError::InvalidMatrix(format!(
                "column {i} has weight {}",
                self.col_degree(i)
            )));
        }
        let degs = (0..self.n_checks()).map(|j| self.row_degree(j));
        let (lo, hi) = degs.fold((usize::MAX, 0), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if hi - lo > 1 {
            return Err(LdpcError::InvalidMatrix(format!("check degrees span {lo}..={hi}")));
        }
        if self.edge_coeff.contains(&0) {
            return Err(LdpcError::InvalidMatrix("zero coefficient".into()));
        }
        Ok(())
    }

    /// `s = H·x` over the field.
    pub fn syndrome(&self, x: &[u8]) -> Result<Vec<u8>, LdpcError> {
        if x.len() != self.n {
            return Err(LdpcError::LengthMismatch { expected: self.n, got: x.len() });
        }
        if let Some(&bad) = x.iter().find(|&&v| !self.field.contains(v as u16)) {
            return Err(LdpcError::SymbolOutOfField(bad as u16));
        }
        Ok(self.syndrome_unchecked(x))
    }

    pub(crate) fn syndrome_unchecked(&self, x: &[u8]) -> Vec<u8> {
        (0..self.n_checks())
            .map(|j| {
                self.row(j).fold(0u8, |acc, (c, h)| acc ^ self.field.mul(h, x[c]))
            })
            .collect()
    }
}
