//! Bitonic sorting network on shared sequences.
//!
//! `O(N log^2 N)` compare-exchange gates; non-power-of-two lengths are
//! padded with public sentinel rows that sort to the end and are trimmed
//! afterwards, so the access pattern is a function of `N` alone. Not stable.

use crate::oblivious::SharedSeq;
use crate::sharing::boolean::{a2b, is_zero_words, lt_words};
use crate::sharing::PartyCtx;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SortOrder {
    Asc,
    Desc,
}

/// One lexicographic key component: a column index plus direction.
#[derive(Clone, Copy, Debug)]
pub struct SortKey {
    pub col: usize,
    pub order: SortOrder,
}

/// Sort rows by the lexicographic key. Sentinel padding keys are the
/// maximum ring value, so caller keys must stay below it on descending
/// components (guaranteed for complemented values).
pub fn bitonic_sort(ctx: &mut PartyCtx, xs: &SharedSeq, keys: &[SortKey]) -> Result<SharedSeq> {
    let rows = xs.rows();
    if rows <= 1 {
        return Ok(xs.clone());
    }
    let width = xs.width;
    let n = rows.next_power_of_two();

    // Key matrix with directions folded in: descending components are
    // complemented locally so every comparator is ascending. Padding rows
    // carry the maximum key plus a trailing pad flag, so they sink to the
    // end even when real keys reach the maximum value.
    let mut key_cols: Vec<Vec<u64>> = Vec::with_capacity(keys.len() + 1);
    for k in keys {
        let mut col = xs.col(k.col);
        if k.order == SortOrder::Desc {
            for v in col.iter_mut() {
                *v = if ctx.is_p0() {
                    u64::MAX.wrapping_sub(*v)
                } else {
                    v.wrapping_neg()
                };
            }
        }
        col.resize(n, ctx.constant(u64::MAX));
        key_cols.push(col);
    }
    let mut pad_flag = vec![ctx.constant(0); rows];
    pad_flag.resize(n, ctx.constant(1));
    key_cols.push(pad_flag);
    let mut payload = xs.clone();
    payload.data.resize(n * width, 0);

    let mut stage = 2usize;
    while stage <= n {
        let mut step = stage / 2;
        while step >= 1 {
            // Collect the comparator pairs of this layer; all independent.
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            for i in 0..n {
                let l = i ^ step;
                if l > i {
                    // Ascending block iff bit `stage` of i is clear.
                    if i & stage == 0 {
                        pairs.push((i, l));
                    } else {
                        pairs.push((l, i));
                    }
                }
            }
            compare_exchange_layer(ctx, &mut key_cols, &mut payload, &pairs)?;
            step /= 2;
        }
        stage *= 2;
    }
    payload.truncate_rows(rows);
    Ok(payload)
}

/// Batched compare-exchange: for each pair `(lo, hi)` swap so that the key
/// at `lo` is the smaller one.
fn compare_exchange_layer(
    ctx: &mut PartyCtx,
    key_cols: &mut [Vec<u64>],
    payload: &mut SharedSeq,
    pairs: &[(usize, usize)],
) -> Result<()> {
    let np = pairs.len();
    if np == 0 {
        return Ok(());
    }
    {
        let stage = ctx.wire.stage().to_string();
        let stats = ctx.wire.ledger.stats_mut(&stage);
        stats.sort_gates += np as u64;
        stats.comparisons += np as u64;
    }
    let kc = key_cols.len();

    // swap = key(hi) < key(lo), lexicographic.
    // Convert all key words of both sides once, then combine.
    let mut lo_words = Vec::with_capacity(np * kc);
    let mut hi_words = Vec::with_capacity(np * kc);
    for c in 0..kc {
        for &(lo, hi) in pairs {
            lo_words.push(key_cols[c][lo]);
            hi_words.push(key_cols[c][hi]);
        }
    }
    let lo_bits = a2b(ctx, &lo_words)?;
    let hi_bits = a2b(ctx, &hi_words)?;
    let lt = lt_words(ctx, &hi_bits, &lo_bits)?;
    let swap = if kc == 1 {
        ctx.b2a_bits(&lt[..np])?
    } else {
        // eq of leading components for the lexicographic combine.
        let diff: Vec<u64> = lo_bits
            .iter()
            .zip(&hi_bits)
            .map(|(&a, &b)| a ^ b)
            .take(np * (kc - 1))
            .collect();
        let eq = is_zero_words(ctx, &diff)?;
        let lt_a = ctx.b2a_bits(&lt)?;
        let eq_a = ctx.b2a_bits(&eq)?;
        // Fold from the least significant component upward:
        // swap_k = lt_k + eq_k * swap_{k+1}
        let mut acc = lt_a[(kc - 1) * np..].to_vec();
        for c in (0..kc - 1).rev() {
            let scaled = ctx.mul_many(&eq_a[c * np..(c + 1) * np], &acc)?;
            acc = (0..np)
                .map(|i| lt_a[c * np + i].wrapping_add(scaled[i]))
                .collect();
        }
        acc
    };

    // One batched multiplication swaps keys and payload together.
    let width = payload.width;
    let lanes = kc + width;
    let mut c_flat = Vec::with_capacity(np * lanes);
    let mut d_flat = Vec::with_capacity(np * lanes);
    for (i, &(lo, hi)) in pairs.iter().enumerate() {
        for key_col in key_cols.iter() {
            c_flat.push(swap[i]);
            d_flat.push(key_col[hi].wrapping_sub(key_col[lo]));
        }
        for col in 0..width {
            c_flat.push(swap[i]);
            d_flat
                .push(payload.data[hi * width + col].wrapping_sub(payload.data[lo * width + col]));
        }
    }
    let z = ctx.mul_many(&c_flat, &d_flat)?;
    for (i, &(lo, hi)) in pairs.iter().enumerate() {
        for (c, key_col) in key_cols.iter_mut().enumerate() {
            let zi = z[i * lanes + c];
            key_col[lo] = key_col[lo].wrapping_add(zi);
            key_col[hi] = key_col[hi].wrapping_sub(zi);
        }
        for col in 0..width {
            let zi = z[i * lanes + kc + col];
            payload.data[lo * width + col] = payload.data[lo * width + col].wrapping_add(zi);
            payload.data[hi * width + col] = payload.data[hi * width + col].wrapping_sub(zi);
        }
    }
    Ok(())
}
