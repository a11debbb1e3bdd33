//! CSV ingestion: typed parsing, owner-local type-1 filtering, dummy
//! padding to the configured public sizes, and string dictionaries.
//!
//! Strings in key columns hash through a public function so both owners
//! code equal keys equally; non-key strings use an owner-private
//! dictionary, so only code values ever enter the protocol.

use crate::pipeline::config::{CmpOp, ColType, PipelineConfig, PredicateConfig, TableConfig};
use crate::relational::{ColData, Column, PredValue, Predicate, SharedTable};
use crate::ring::FixedPoint;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Plaintext table at its owner before entering the protocol.
#[derive(Clone, Debug)]
pub struct PlainTable {
    pub name: String,
    pub owner: u8,
    pub pk: String,
    pub col_names: Vec<String>,
    /// Row-major plaintext values, already ring-encoded.
    pub rows_data: Vec<Vec<u64>>,
    /// Real-row flags (dummy padding rows are 0).
    pub t: Vec<u64>,
}

impl PlainTable {
    pub fn col_idx(&self, name: &str) -> Result<usize> {
        self.col_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Ingest(format!("no column {name} in {}", self.name)))
    }

    pub fn col(&self, name: &str) -> Result<Vec<u64>> {
        let i = self.col_idx(name)?;
        Ok(self.rows_data.iter().map(|r| r[i]).collect())
    }
}

/// Sentinel key for dummy rows: high bit set, a table tag, a counter.
/// Bits 60..62 stay clear so the PSI-internal namespaces cannot collide.
pub fn dummy_key(table_tag: u64, ctr: u64) -> u64 {
    (1 << 63) | ((table_tag & 0x0fff_ffff) << 32) | (ctr & 0xffff_ffff)
}

pub fn table_tag(name: &str) -> u64 {
    crate::sharing::public_digest(name.as_bytes()) & 0x0fff_ffff
}

/// Hash a string key to the shared 32-bit code space.
pub fn key_code(s: &str) -> u64 {
    crate::sharing::public_digest(s.as_bytes()) & 0xffff_ffff
}

fn parse_value(
    raw: &str,
    ty: ColType,
    fp: &FixedPoint,
    dict: &mut BTreeMap<String, u64>,
) -> Result<u64> {
    let raw = raw.trim();
    match ty {
        ColType::Id => {
            if let Ok(v) = raw.parse::<u64>() {
                if v >= 1 << 62 {
                    return Err(Error::Ingest(format!("key {v} outside the data domain")));
                }
                Ok(v)
            } else {
                Ok(key_code(raw))
            }
        }
        ColType::Int => raw
            .parse::<i64>()
            .map(|v| v as u64)
            .map_err(|_| Error::Ingest(format!("bad integer {raw:?}"))),
        ColType::Float => raw
            .parse::<f64>()
            .map(|v| fp.encode(v))
            .map_err(|_| Error::Ingest(format!("bad float {raw:?}"))),
        ColType::Str => {
            let next = dict.len() as u64;
            Ok(*dict.entry(raw.to_string()).or_insert(next))
        }
    }
}

/// Build the type-1 predicate (conjunction) for one table, if any.
fn type1_predicate(cfg: &PipelineConfig, table: &str, fp: &FixedPoint) -> Option<Predicate> {
    let mut pred: Option<Predicate> = None;
    for p in cfg
        .predicates
        .iter()
        .filter(|p| p.table.as_deref() == Some(table))
    {
        let leaf = predicate_leaf(cfg, table, p, fp);
        pred = Some(match pred {
            None => leaf,
            Some(acc) => Predicate::And(Box::new(acc), Box::new(leaf)),
        });
    }
    pred
}

pub fn predicate_leaf(
    cfg: &PipelineConfig,
    table: &str,
    p: &PredicateConfig,
    fp: &FixedPoint,
) -> Predicate {
    let lhs = PredValue::Attr(p.attr.clone());
    let rhs = match (&p.value, &p.other) {
        (Some(v), _) => {
            let enc = match cfg.col_type(table, &p.attr) {
                ColType::Float => fp.encode(*v),
                _ => *v as i64 as u64,
            };
            PredValue::Const(enc)
        }
        (None, Some(o)) => PredValue::Attr(o.clone()),
        _ => unreachable!("validated"),
    };
    let cmp = match p.op {
        CmpOp::Eq => Predicate::Eq(lhs, rhs),
        CmpOp::Lt => Predicate::Lt(lhs, rhs),
        CmpOp::Gt => Predicate::gt(lhs, rhs),
    };
    if p.negate {
        Predicate::Not(Box::new(cmp))
    } else {
        cmp
    }
}

/// Load one table from CSV at its owner.
pub fn load_table(
    cfg: &PipelineConfig,
    tc: &TableConfig,
    base: &Path,
    fp: &FixedPoint,
) -> Result<PlainTable> {
    let path = tc
        .csv
        .as_ref()
        .ok_or_else(|| Error::Ingest(format!("table {} has no csv path", tc.name)))?;
    let full = base.join(path);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&full)
        .map_err(|e| Error::Ingest(format!("open {}: {e}", full.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Ingest(e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();

    let col_names: Vec<String> = {
        let mut names = vec![tc.pk.clone()];
        names.extend(
            tc.fk
                .iter()
                .filter(|(a, _)| *a != tc.pk)
                .map(|(a, _)| a.clone()),
        );
        names.extend(tc.attrs.iter().cloned());
        names
    };
    let mut header_idx = Vec::with_capacity(col_names.len());
    for name in &col_names {
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingest(format!("{}: missing CSV column {name}", tc.name)))?;
        header_idx.push(idx);
    }

    let mut dicts: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); col_names.len()];
    let mut rows_data: Vec<Vec<u64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Ingest(e.to_string()))?;
        let mut row = Vec::with_capacity(col_names.len());
        for (k, name) in col_names.iter().enumerate() {
            let raw = record
                .get(header_idx[k])
                .ok_or_else(|| Error::Ingest(format!("{}: short row", tc.name)))?;
            let ty = cfg.col_type(&tc.name, name);
            row.push(parse_value(raw, ty, fp, &mut dicts[k])?);
        }
        rows_data.push(row);
    }
    build_plain_table(cfg, tc, col_names, rows_data, fp)
}

/// Assemble the padded plaintext table from parsed rows (also used by
/// tests that synthesize data without CSV files).
pub fn build_plain_table(
    cfg: &PipelineConfig,
    tc: &TableConfig,
    col_names: Vec<String>,
    mut rows_data: Vec<Vec<u64>>,
    fp: &FixedPoint,
) -> Result<PlainTable> {
    // PK uniqueness among real rows.
    {
        let mut seen = std::collections::HashSet::new();
        for r in &rows_data {
            if !seen.insert(r[0]) {
                return Err(Error::DuplicateKey {
                    table: tc.name.clone(),
                    key: r[0],
                });
            }
        }
    }
    if rows_data.len() > tc.rows {
        return Err(Error::Ingest(format!(
            "table {} has {} rows, exceeding the padded size {}",
            tc.name,
            rows_data.len(),
            tc.rows
        )));
    }
    let mut t: Vec<u64> = vec![1; rows_data.len()];

    // Type-1 predicates: failing rows become dummies in place.
    if let Some(pred) = type1_predicate(cfg, &tc.name, fp) {
        for (i, row) in rows_data.iter().enumerate() {
            let lookup = |attr: &str| -> u64 {
                let k = col_names.iter().position(|c| c == attr).unwrap_or(0);
                row[k]
            };
            if !pred.eval_plain(&lookup) {
                t[i] = 0;
            }
        }
    }
    // Replace filtered rows with dummies and pad to the public size; every
    // dummy gets fresh sentinel keys so no dummy ever matches anything.
    let tag = table_tag(&tc.name);
    let mut ctr = 0u64;
    let key_cols = 1 + tc.fk.len();
    for (i, row) in rows_data.iter_mut().enumerate() {
        if t[i] == 0 {
            for item in row.iter_mut().take(key_cols) {
                *item = dummy_key(tag, ctr);
                ctr += 1;
            }
            for item in row.iter_mut().skip(key_cols) {
                *item = 0;
            }
        }
    }
    while rows_data.len() < tc.rows {
        let mut row = Vec::with_capacity(col_names.len());
        for k in 0..col_names.len() {
            if k < key_cols {
                row.push(dummy_key(tag, ctr));
                ctr += 1;
            } else {
                row.push(0);
            }
        }
        rows_data.push(row);
        t.push(0);
    }
    Ok(PlainTable {
        name: tc.name.clone(),
        owner: tc.owner,
        pk: tc.pk.clone(),
        col_names,
        rows_data,
        t,
    })
}

/// Wrap an owner's plaintext table as the engine's column form. The
/// non-owner passes `None` and receives metadata-only columns.
pub fn to_shared_table(def_like: &PlainTableMeta, plain: Option<&PlainTable>) -> SharedTable {
    let rows = def_like.rows;
    let owner = def_like.owner;
    let cols = def_like
        .col_names
        .iter()
        .enumerate()
        .map(|(k, name)| Column {
            name: name.clone(),
            data: ColData::Plain {
                owner,
                vals: plain
                    .map(|p| p.rows_data.iter().map(|r| r[k]).collect())
                    .unwrap_or_default(),
            },
        })
        .collect();
    SharedTable {
        name: def_like.name.clone(),
        rows,
        pk: Some(def_like.pk.clone()),
        cols,
        indicator: Some(ColData::Plain {
            owner,
            vals: plain.map(|p| p.t.clone()).unwrap_or_default(),
        }),
    }
}

/// Public metadata of a plaintext table, identical on both parties.
#[derive(Clone, Debug)]
pub struct PlainTableMeta {
    pub name: String,
    pub owner: u8,
    pub pk: String,
    pub col_names: Vec<String>,
    pub rows: usize,
}

impl PlainTableMeta {
    pub fn of(tc: &TableConfig) -> Self {
        let mut col_names = vec![tc.pk.clone()];
        col_names.extend(
            tc.fk
                .iter()
                .filter(|(a, _)| *a != tc.pk)
                .map(|(a, _)| a.clone()),
        );
        col_names.extend(tc.attrs.iter().cloned());
        PlainTableMeta {
            name: tc.name.clone(),
            owner: tc.owner,
            pk: tc.pk.clone(),
            col_names,
            rows: tc.rows,
        }
    }
}

/// Ingest every table this party owns; the other party's tables come back
/// as metadata only.
pub fn ingest(
    cfg: &PipelineConfig,
    me: u8,
    base: &Path,
) -> Result<(Vec<PlainTableMeta>, Vec<Option<PlainTable>>)> {
    let fp = FixedPoint::new(cfg.ring.frac_bits);
    let mut metas = Vec::new();
    let mut plains = Vec::new();
    for tc in &cfg.tables {
        metas.push(PlainTableMeta::of(tc));
        if tc.owner == me {
            plains.push(Some(load_table(cfg, tc, base, &fp)?));
        } else {
            plains.push(None);
        }
    }
    Ok((metas, plains))
}
