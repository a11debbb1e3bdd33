//! Sorting-based PK-FK join for the two-server model, where every column
//! (join attributes included) is secret-shared.
//!
//! Extend R and S into one `M+N`-row table, sort so each key group leads
//! with its real PK row, propagate the payload and membership down the
//! group with log-depth doubling, then re-sort by origin and keep the
//! first `M` rows, which land in R's original row order thanks to a hidden
//! index tiebreak.

use crate::oblivious::{bitonic_sort, SharedSeq, SortKey, SortOrder};
use crate::relational::{ColData, Column, SharedTable};
use crate::sharing::PartyCtx;
use crate::{Error, Result};

pub fn two_server_join(
    ctx: &mut PartyCtx,
    r: &SharedTable,
    r_fk: &str,
    s: &SharedTable,
) -> Result<SharedTable> {
    let me = ctx.party();
    let m = r.rows;
    let n = s.rows;
    let s_pk =
        s.pk.clone()
            .ok_or_else(|| Error::Schema(format!("join parent {} has no PK", s.name)))?;

    ctx.scoped("two_server", |ctx| {
        // Extended table columns: [B, UT, rho, r cols..., s payload cols...]
        // where UT packs (U << 1 | T_S) for the first sort.
        let r_b = r.col(r_fk)?.data.shares(me, m);
        let s_b = s.col(&s_pk)?.data.shares(me, n);
        let ts = s.indicator_shares(ctx);
        let one = ctx.constant(1);

        let r_names: Vec<String> = r.col_names();
        let s_payload_names: Vec<String> = s
            .cols
            .iter()
            .filter(|c| c.name != s_pk)
            .map(|c| c.name.clone())
            .collect();

        let width = 3 + r_names.len() + s_payload_names.len();
        let mut data = Vec::with_capacity((m + n) * width);
        for i in 0..m {
            data.push(r_b[i]);
            data.push(0); // U = 0, T_S slot 0
            data.push(ctx.constant(i as u64));
            for c in &r.cols {
                data.push(c.data.shares(me, m)[i]);
            }
            for _ in &s_payload_names {
                data.push(0);
            }
        }
        for j in 0..n {
            data.push(s_b[j]);
            // UT = 2*U + T_S with U = 1.
            data.push(one.wrapping_mul(2).wrapping_add(ts[j]));
            data.push(ctx.constant((m + j) as u64));
            for _ in &r_names {
                data.push(0);
            }
            for c in s.cols.iter().filter(|c| c.name != s_pk) {
                data.push(c.data.shares(me, n)[j]);
            }
        }
        let ext = SharedSeq::from_rows(width, data);

        // Sort 1: (B desc, UT desc) groups equal keys with the real PK row
        // first.
        let sorted = ctx.scoped("sort1", |ctx| {
            bitonic_sort(
                ctx,
                &ext,
                &[
                    SortKey {
                        col: 0,
                        order: SortOrder::Desc,
                    },
                    SortKey {
                        col: 1,
                        order: SortOrder::Desc,
                    },
                ],
            )
        })?;

        // Propagate the group head's S payload, T_S and membership down
        // equal-B runs with doubling passes.
        let total = m + n;
        let b_col = sorted.col(0);
        let ut_col = sorted.col(1);
        // u = high bit of UT; ts = low bit. u and ts are 0/1 shares, so
        // u = (UT - ts) / 2 needs ts first; extract via one multiplication:
        // ts = UT - 2u where u = Ind(UT >= 2). Cheaper: recompute both from
        // shares we already hold is impossible locally, so compare once.
        let u_bit = ctx.gt_const_many(&ut_col, 1, false)?; // Ind(UT > 1) = U
        let ts_bit: Vec<u64> = (0..total)
            .map(|i| ut_col[i].wrapping_sub(u_bit[i].wrapping_mul(2)))
            .collect();

        // Values to propagate: u, ts, and S payload columns.
        let mut prop_cols: Vec<Vec<u64>> = vec![u_bit.clone(), ts_bit];
        let s_payload_start = 3 + r_names.len();
        for k in 0..s_payload_names.len() {
            prop_cols.push(sorted.col(s_payload_start + k));
        }

        let same = if total >= 2 {
            ctx.scoped("propagate_eq", |ctx| {
                ctx.eq_many(&b_col[..total - 1], &b_col[1..])
            })?
        } else {
            Vec::new()
        };
        // a[i] = Ind(row i continues the run of i-1); a[0] = 0.
        let mut a: Vec<u64> = std::iter::once(0).chain(same.iter().copied()).collect();
        let passes = if total <= 1 {
            0
        } else {
            (usize::BITS - (total - 1).leading_zeros()) as usize
        };
        ctx.scoped("propagate", |ctx| {
            for k in 0..passes {
                let stride = 1usize << k;
                if stride >= total {
                    break;
                }
                let idxs: Vec<usize> = (stride..total).collect();
                // v_i <- a_i ? v_{i - stride} : v_i for every propagated col
                let lanes = prop_cols.len();
                let mut c_flat = Vec::with_capacity(idxs.len() * lanes);
                let mut d_flat = Vec::with_capacity(idxs.len() * lanes);
                for &i in &idxs {
                    for col in &prop_cols {
                        c_flat.push(a[i]);
                        d_flat.push(col[i - stride].wrapping_sub(col[i]));
                    }
                }
                let z = ctx.mul_many(&c_flat, &d_flat)?;
                for (ix, &i) in idxs.iter().enumerate() {
                    for (l, col) in prop_cols.iter_mut().enumerate() {
                        col[i] = col[i].wrapping_add(z[ix * lanes + l]);
                    }
                }
                // a_i <- a_i * a_{i - stride}
                let lhs: Vec<u64> = idxs.iter().map(|&i| a[i]).collect();
                let rhs: Vec<u64> = idxs.iter().map(|&i| a[i - stride]).collect();
                let aa = ctx.mul_many(&lhs, &rhs)?;
                for (ix, &i) in idxs.iter().enumerate() {
                    a[i] = aa[ix];
                }
            }
            Ok::<_, Error>(())
        })?;

        // Row indicator: head is a real S row AND this row's own R
        // indicator (which traveled in the R columns when present).
        let t_prop = ctx.scoped("indicators", |ctx| {
            ctx.mul_many(&prop_cols[0], &prop_cols[1])
        })?;

        // Rebuild the matrix with propagated payloads and the membership
        // bit, then sort by (U asc, rho asc) to restore R's order. The sort
        // key uses the row's own origin bit, not the propagated head bit.
        let mut out = sorted.clone();
        for (k, col) in prop_cols.iter().enumerate().skip(2) {
            out.set_col(s_payload_start + (k - 2), col);
        }
        let rho = sorted.col(2);
        let key2: Vec<u64> = (0..total)
            .map(|i| u_bit[i].wrapping_mul(1 << 40).wrapping_add(rho[i]))
            .collect();
        out.set_col(1, &key2);
        push_col(&mut out, &t_prop);

        let restored = ctx.scoped("sort2", |ctx| {
            bitonic_sort(
                ctx,
                &out,
                &[SortKey {
                    col: 1,
                    order: SortOrder::Asc,
                }],
            )
        })?;
        let mut restored = restored;
        restored.truncate_rows(m);

        // Final indicator: t_prop * T_R.
        let t_col = restored.col(restored.width - 1);
        let t_final = match &r.indicator {
            Some(_) => {
                // The second sort restored R's original row order, so R's
                // indicator aligns without traveling through the matrix.
                let tr = r.indicator_shares(ctx);
                ctx.scoped("indicators", |ctx| ctx.mul_many(&t_col, &tr))?
            }
            None => t_col,
        };

        let mut cols: Vec<Column> = Vec::new();
        for (k, name) in r_names.iter().enumerate() {
            cols.push(Column {
                name: name.clone(),
                data: ColData::Shared(restored.col(3 + k)),
            });
        }
        for (k, name) in s_payload_names.iter().enumerate() {
            cols.push(Column {
                name: name.clone(),
                data: ColData::Shared(restored.col(s_payload_start + k)),
            });
        }
        Ok(SharedTable {
            name: r.name.clone(),
            rows: m,
            pk: r.pk.clone(),
            cols,
            indicator: Some(ColData::Shared(t_final)),
        })
    })
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
