//! Data-oblivious primitives over shared sequences.
//!
//! Every primitive's message trace is a function of public lengths only.

pub mod compact;
pub mod dup;
pub mod network;
pub mod psi;
pub mod sort;

pub use compact::compact;
pub use dup::{duplicate, half_copy};
pub use network::{oep_apply, random_shuffle, ExtendedPermutation, OepKind};
pub use psi::{psi_payload, PayloadForm, PsiOutput};
pub use sort::{bitonic_sort, SortKey, SortOrder};

/// A fixed-width sequence of shared ring tuples; `data` holds this party's
/// additive shares row-major. Lengths and widths are public.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedSeq {
    pub width: usize,
    pub data: Vec<u64>,
}

impl SharedSeq {
    pub fn new(width: usize, rows: usize) -> Self {
        SharedSeq {
            width,
            data: vec![0; width * rows],
        }
    }

    pub fn from_rows(width: usize, data: Vec<u64>) -> Self {
        assert!(width > 0 && data.len() % width == 0);
        SharedSeq { width, data }
    }

    pub fn from_cols(cols: &[Vec<u64>]) -> Self {
        let width = cols.len();
        assert!(width > 0);
        let rows = cols[0].len();
        assert!(cols.iter().all(|c| c.len() == rows));
        let mut data = Vec::with_capacity(width * rows);
        for r in 0..rows {
            for c in cols {
                data.push(c[r]);
            }
        }
        SharedSeq { width, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.data.len() / self.width
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn col(&self, c: usize) -> Vec<u64> {
        (0..self.rows())
            .map(|r| self.data[r * self.width + c])
            .collect()
    }

    pub fn set_col(&mut self, c: usize, vals: &[u64]) {
        assert_eq!(vals.len(), self.rows());
        for (r, &v) in vals.iter().enumerate() {
            self.data[r * self.width + c] = v;
        }
    }

    pub fn truncate_rows(&mut self, rows: usize) {
        self.data.truncate(rows * self.width);
    }

    /// Append one row of shares.
    pub fn push_row(&mut self, row: &[u64]) {
        assert_eq!(row.len(), self.width);
        self.data.extend_from_slice(row);
    }
}
