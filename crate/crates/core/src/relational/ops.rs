//! Selection and group-by over join results.

use crate::oblivious::network::{oep_apply, ExtendedPermutation, OepKind};
use crate::oblivious::{bitonic_sort, compact, SharedSeq, SortKey, SortOrder};
use crate::relational::{ColData, SharedTable};
use crate::sharing::PartyCtx;
use crate::{Error, Result};

/// Row predicates over attributes and constants: {EQ, LT, AND, OR, NOT}.
/// Comparisons use two's-complement order so fixed-point attributes work.
#[derive(Clone, Debug)]
pub enum Predicate {
    Eq(PredValue, PredValue),
    Lt(PredValue, PredValue),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

#[derive(Clone, Debug)]
pub enum PredValue {
    Attr(String),
    Const(u64),
}

impl Predicate {
    pub fn gt(a: PredValue, b: PredValue) -> Predicate {
        Predicate::Lt(b, a)
    }

    fn resolve(v: &PredValue, ctx: &PartyCtx, t: &SharedTable) -> Result<Vec<u64>> {
        match v {
            PredValue::Attr(name) => Ok(t.col(name)?.data.shares(ctx.party(), t.rows)),
            PredValue::Const(k) => Ok(vec![ctx.constant(*k); t.rows]),
        }
    }

    /// Shared 0/1 bit per row.
    pub fn eval(&self, ctx: &mut PartyCtx, t: &SharedTable) -> Result<Vec<u64>> {
        match self {
            Predicate::Eq(a, b) => {
                let va = Self::resolve(a, ctx, t)?;
                let vb = Self::resolve(b, ctx, t)?;
                ctx.eq_many(&va, &vb)
            }
            Predicate::Lt(a, b) => {
                let va = Self::resolve(a, ctx, t)?;
                let vb = Self::resolve(b, ctx, t)?;
                ctx.lt_many(&va, &vb, true)
            }
            Predicate::And(a, b) => {
                let va = a.eval(ctx, t)?;
                let vb = b.eval(ctx, t)?;
                ctx.mul_many(&va, &vb)
            }
            Predicate::Or(a, b) => {
                let va = a.eval(ctx, t)?;
                let vb = b.eval(ctx, t)?;
                ctx.or_many(&va, &vb)
            }
            Predicate::Not(a) => {
                let va = a.eval(ctx, t)?;
                let one = ctx.constant(1);
                Ok(va.iter().map(|&v| one.wrapping_sub(v)).collect())
            }
        }
    }

    /// Evaluate on plaintext rows (owner-local type-1 filtering).
    pub fn eval_plain(&self, row: &dyn Fn(&str) -> u64) -> bool {
        fn val(v: &PredValue, row: &dyn Fn(&str) -> u64) -> i64 {
            match v {
                PredValue::Attr(a) => row(a) as i64,
                PredValue::Const(k) => *k as i64,
            }
        }
        match self {
            Predicate::Eq(a, b) => val(a, row) == val(b, row),
            Predicate::Lt(a, b) => val(a, row) < val(b, row),
            Predicate::And(a, b) => a.eval_plain(row) && b.eval_plain(row),
            Predicate::Or(a, b) => a.eval_plain(row) || b.eval_plain(row),
            Predicate::Not(a) => !a.eval_plain(row),
        }
    }
}

/// Multiply a predicate into the indicator; row count unchanged.
pub fn apply_predicate(
    ctx: &mut PartyCtx,
    j: &SharedTable,
    pred: &Predicate,
) -> Result<SharedTable> {
    let mut out = j.clone();
    let t = ctx.scoped("select", |ctx| {
        let bit = pred.eval(ctx, j)?;
        let t = j.indicator_shares(ctx);
        ctx.mul_many(&t, &bit)
    })?;
    out.indicator = Some(ColData::Shared(t));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggOp {
    Sum,
    Max,
    Min,
    Count,
    /// Duplicate-removing projection: merge gates only touch indicators.
    DistinctProject,
}

/// Group by `group_attrs`, aggregating `agg_attr` with `op`. After an
/// order that puts real rows first and groups together, each group's
/// aggregate ends in its last real row and all other group rows go dummy.
pub fn group_by(
    ctx: &mut PartyCtx,
    j: &SharedTable,
    group_attrs: &[String],
    agg_attr: Option<&str>,
    op: AggOp,
) -> Result<SharedTable> {
    if matches!(op, AggOp::Sum | AggOp::Max | AggOp::Min) && agg_attr.is_none() {
        return Err(Error::InvalidParam(
            "aggregate needs a value attribute".into(),
        ));
    }
    let n = j.rows;
    let me = ctx.party();
    ctx.scoped("groupby", |ctx| {
        let (mat, names) = j.to_seq(ctx);
        let t = j.indicator_shares(ctx);

        // Order rows: reals first, groups contiguous.
        let plain_owner = all_plain_owner(j, group_attrs);
        let (sorted, t_sorted) = match plain_owner {
            Some(owner) => {
                // Sort by the plaintext attrs via one extended permutation,
                // then stable-compact the shared indicator to the front.
                let xi = if me == owner {
                    let mut idx: Vec<usize> = (0..n).collect();
                    let keys: Vec<Vec<u64>> = group_attrs
                        .iter()
                        .map(|a| j.col(a).unwrap().data.plain_at(me).unwrap().to_vec())
                        .collect();
                    idx.sort_by_key(|&i| {
                        let mut k: Vec<u64> = keys.iter().map(|c| c[i]).collect();
                        k.push(i as u64);
                        k
                    });
                    Some(ExtendedPermutation::new(idx))
                } else {
                    None
                };
                let mut with_t = mat.clone();
                push_col(&mut with_t, &t);
                let permuted = ctx.scoped("oep", |ctx| {
                    oep_apply(ctx, owner, xi.as_ref(), n, n, OepKind::Permutation, &with_t)
                })?;
                let tcol = permuted.col(permuted.width - 1);
                let mut vals = permuted;
                drop_last_col(&mut vals);
                let (c, tc) = ctx.scoped("compact", |ctx| compact(ctx, &vals, &tcol))?;
                (c, tc)
            }
            None => {
                // Oblivious sort by (T desc, attrs asc).
                let mut with_t = mat.clone();
                push_col(&mut with_t, &t);
                let mut keys = vec![SortKey {
                    col: with_t.width - 1,
                    order: SortOrder::Desc,
                }];
                for a in group_attrs {
                    let idx = names
                        .iter()
                        .position(|nm| nm == a)
                        .ok_or_else(|| Error::Schema(format!("group attribute {a} missing")))?;
                    keys.push(SortKey {
                        col: idx,
                        order: SortOrder::Asc,
                    });
                }
                let sorted = ctx.scoped("sort", |ctx| bitonic_sort(ctx, &with_t, &keys))?;
                let tcol = sorted.col(sorted.width - 1);
                let mut vals = sorted;
                drop_last_col(&mut vals);
                (vals, tcol)
            }
        };

        // Merge gates: z_i = t_{i+1} * Ind(a_i = a_{i+1}) over the ordered
        // rows; indicators update in one batch, aggregates scan forward.
        let attr_idx: Vec<usize> = group_attrs
            .iter()
            .map(|a| names.iter().position(|nm| nm == a).unwrap())
            .collect();
        let mut z = if n >= 2 {
            let mut eq_acc: Option<Vec<u64>> = None;
            for &c in &attr_idx {
                let col = sorted.col(c);
                let eq = ctx.eq_many(&col[..n - 1], &col[1..])?;
                eq_acc = Some(match eq_acc {
                    None => eq,
                    Some(acc) => ctx.mul_many(&acc, &eq)?,
                });
            }
            let eq = eq_acc.expect("at least one group attribute");
            ctx.mul_many(&t_sorted[1..], &eq)?
        } else {
            Vec::new()
        };
        if n < 2 {
            z = Vec::new();
        }

        let one = ctx.constant(1);
        let mut t_new = t_sorted.clone();
        if n >= 2 {
            let nz: Vec<u64> = z.iter().map(|&v| one.wrapping_sub(v)).collect();
            let updated = ctx.mul_many(&t_sorted[..n - 1], &nz)?;
            t_new[..n - 1].copy_from_slice(&updated);
        }

        let mut out_seq = sorted.clone();
        if op != AggOp::DistinctProject {
            let agg_idx = match op {
                AggOp::Count => None,
                _ => Some(
                    names
                        .iter()
                        .position(|nm| nm == agg_attr.unwrap())
                        .ok_or_else(|| {
                            Error::Schema(format!(
                                "aggregate attribute {} missing",
                                agg_attr.unwrap()
                            ))
                        })?,
                ),
            };
            // COUNT sums the (original) indicator itself.
            let mut b: Vec<u64> = match agg_idx {
                Some(c) => sorted.col(c),
                None => t_sorted.clone(),
            };
            for i in 0..n.saturating_sub(1) {
                let merged = match op {
                    AggOp::Sum | AggOp::Count => {
                        vec![b[i].wrapping_add(b[i + 1])]
                    }
                    AggOp::Max => {
                        let lt = ctx.lt_many(&[b[i]], &[b[i + 1]], true)?;
                        ctx.mux_many(&lt, &[b[i + 1]], &[b[i]])?
                    }
                    AggOp::Min => {
                        let lt = ctx.lt_many(&[b[i]], &[b[i + 1]], true)?;
                        ctx.mux_many(&lt, &[b[i]], &[b[i + 1]])?
                    }
                    AggOp::DistinctProject => unreachable!(),
                };
                let next = ctx.mux_many(&[z[i]], &[merged[0]], &[b[i + 1]])?;
                b[i + 1] = next[0];
            }
            if let Some(c) = agg_idx {
                out_seq.set_col(c, &b);
            } else {
                // COUNT materializes as a fresh column named "count".
                push_col(&mut out_seq, &b);
            }
        }

        let mut out_names = names.clone();
        if op == AggOp::Count {
            out_names.push("count".to_string());
        }
        Ok(SharedTable::from_seq(
            &j.name,
            &out_seq,
            &out_names,
            Some(t_new),
        ))
    })
}

fn all_plain_owner(j: &SharedTable, attrs: &[String]) -> Option<u8> {
    let mut owner: Option<u8> = None;
    for a in attrs {
        match j.col(a).ok()?.data.plain_owner() {
            Some(o) => {
                if owner.get_or_insert(o) != &o {
                    return None;
                }
            }
            None => return None,
        }
    }
    owner
}

fn push_col(seq: &mut SharedSeq, col: &[u64]) {
    let rows = seq.rows();
    assert_eq!(col.len(), rows);
    let width = seq.width;
    let mut data = Vec::with_capacity(rows * (width + 1));
    for r in 0..rows {
        data.extend_from_slice(seq.row(r));
        data.push(col[r]);
    }
    seq.width = width + 1;
    seq.data = data;
}

fn drop_last_col(seq: &mut SharedSeq) {
    let rows = seq.rows();
    let width = seq.width;
    let mut data = Vec::with_capacity(rows * (width - 1));
    for r in 0..rows {
        data.extend_from_slice(&seq.row(r)[..width - 1]);
    }
    seq.width = width - 1;
    seq.data = data;
}
