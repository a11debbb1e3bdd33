//! Schema model and the secure join engine.

pub mod acyclic;
pub mod join;
pub mod ops;
pub mod schema;
pub mod two_server;

pub use acyclic::{acyclic_join, line_join3, tree_join3};
pub use join::{binary_join, PayloadSel};
pub use ops::{apply_predicate, group_by, AggOp, PredValue, Predicate};
pub use schema::{FkEdge, SchemaGraph, TableDef};
pub use two_server::two_server_join;

use crate::oblivious::SharedSeq;
use crate::sharing::PartyCtx;
use crate::{Error, Result};

/// Column payload as seen by one party. Metadata (variant, owner) is
/// identical on both sides; only the vectors differ.
#[derive(Clone, Debug)]
pub enum ColData {
    /// Plaintext at `owner`; the other party holds no values.
    Plain { owner: u8, vals: Vec<u64> },
    /// Secret-shared; this party's share vector.
    Shared(Vec<u64>),
}

impl ColData {
    pub fn is_plain(&self) -> bool {
        matches!(self, ColData::Plain { .. })
    }

    pub fn plain_owner(&self) -> Option<u8> {
        match self {
            ColData::Plain { owner, .. } => Some(*owner),
            ColData::Shared(_) => None,
        }
    }

    /// View as additive shares: a plaintext column is the trivial sharing
    /// where the owner holds the values.
    pub fn shares(&self, me: u8, rows: usize) -> Vec<u64> {
        match self {
            ColData::Plain { owner, vals } => {
                if *owner == me {
                    assert_eq!(vals.len(), rows);
                    vals.clone()
                } else {
                    vec![0; rows]
                }
            }
            ColData::Shared(s) => {
                assert_eq!(s.len(), rows);
                s.clone()
            }
        }
    }

    /// Plaintext values; only valid at the owner.
    pub fn plain_at(&self, me: u8) -> Option<&[u64]> {
        match self {
            ColData::Plain { owner, vals } if *owner == me => Some(vals),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Column {
    pub name: String,
    pub data: ColData,
}

/// A fixed-size table whose columns are each plaintext-at-one-party or
/// secret-shared, plus an optional validity indicator column.
#[derive(Clone, Debug)]
pub struct SharedTable {
    pub name: String,
    pub rows: usize,
    /// Primary-key column name, when this table still acts as a join parent.
    pub pk: Option<String>,
    pub cols: Vec<Column>,
    /// Validity indicator; `None` means every row is real.
    pub indicator: Option<ColData>,
}

impl SharedTable {
    pub fn col(&self, name: &str) -> Result<&Column> {
        self.cols
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("no column {name} in table {}", self.name)))
    }

    pub fn col_mut(&mut self, name: &str) -> Result<&mut Column> {
        let table = self.name.clone();
        self.cols
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("no column {name} in table {table}")))
    }

    pub fn has_col(&self, name: &str) -> bool {
        self.cols.iter().any(|c| c.name == name)
    }

    pub fn col_names(&self) -> Vec<String> {
        self.cols.iter().map(|c| c.name.clone()).collect()
    }

    /// Indicator as shares; all-ones when absent.
    pub fn indicator_shares(&self, ctx: &PartyCtx) -> Vec<u64> {
        match &self.indicator {
            Some(d) => d.shares(ctx.party(), self.rows),
            None => vec![ctx.constant(1); self.rows],
        }
    }

    /// Every column as shares, in `cols` order; returns the matrix and the
    /// column names.
    pub fn to_seq(&self, ctx: &PartyCtx) -> (SharedSeq, Vec<String>) {
        let cols: Vec<Vec<u64>> = self
            .cols
            .iter()
            .map(|c| c.data.shares(ctx.party(), self.rows))
            .collect();
        (SharedSeq::from_cols(&cols), self.col_names())
    }

    /// Rebuild from a share matrix, all columns shared.
    pub fn from_seq(
        name: &str,
        seq: &SharedSeq,
        names: &[String],
        indicator: Option<Vec<u64>>,
    ) -> Self {
        assert_eq!(seq.width, names.len());
        let cols = names
            .iter()
            .enumerate()
            .map(|(i, n)| Column {
                name: n.clone(),
                data: ColData::Shared(seq.col(i)),
            })
            .collect();
        SharedTable {
            name: name.to_string(),
            rows: seq.rows(),
            pk: None,
            cols,
            indicator: indicator.map(ColData::Shared),
        }
    }
}
