//! The duplication circuit and the half-copy network.
//!
//! Starting from a compacted sequence (real rows in front), the duplication
//! circuit copies the real prefix forward in strides `2^(l-1), ..., 2, 1`
//! where `l = ceil(log2 N)`. Level `i` is gated by a shared control bit, so
//! running only the first `floor(log2(N/J))` levels never touches the
//! access pattern: disabled levels still execute with a zero control.

use crate::oblivious::SharedSeq;
use crate::sharing::PartyCtx;
use crate::Result;

pub fn levels_for(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Apply the duplication circuit.
///
/// `real` is the shared 0/1 realness column; `active` holds one shared
/// control bit per level (level `i`, 1-based, uses stride `2^(l-i)`).
/// A disabled level passes every row through unchanged.
pub fn duplicate(
    ctx: &mut PartyCtx,
    xs: &SharedSeq,
    real: &[u64],
    active: &[u64],
) -> Result<(SharedSeq, Vec<u64>)> {
    let n = xs.rows();
    assert_eq!(real.len(), n);
    let levels = levels_for(n);
    assert_eq!(active.len(), levels, "one control bit per level");
    if n == 0 {
        return Err(crate::Error::InvalidParam("empty sequence".into()));
    }
    let width = xs.width;
    let mut rows = xs.clone();
    let mut rcol = real.to_vec();
    let one = ctx.constant(1);

    for (lvl, &enable) in active.iter().enumerate() {
        let stride = 1usize << (levels - 1 - lvl);
        if stride >= n {
            continue;
        }
        let idxs: Vec<usize> = (stride..n).collect();
        // c_j = enable * (1 - real_j): copy into dummies only.
        let not_real: Vec<u64> = idxs.iter().map(|&j| one.wrapping_sub(rcol[j])).collect();
        let enables = vec![enable; idxs.len()];
        let c = ctx.mul_many(&enables, &not_real)?;

        // Copy payload and realness from j - stride, reading level-input
        // state only.
        let lanes = width + 1;
        let mut c_flat = Vec::with_capacity(idxs.len() * lanes);
        let mut d_flat = Vec::with_capacity(idxs.len() * lanes);
        for (k, &j) in idxs.iter().enumerate() {
            let s = j - stride;
            for col in 0..width {
                c_flat.push(c[k]);
                d_flat.push(rows.data[s * width + col].wrapping_sub(rows.data[j * width + col]));
            }
            c_flat.push(c[k]);
            d_flat.push(rcol[s].wrapping_sub(rcol[j]));
        }
        let z = ctx.mul_many(&c_flat, &d_flat)?;
        let mut next_rows = rows.data.clone();
        let mut next_r = rcol.clone();
        for (k, &j) in idxs.iter().enumerate() {
            for col in 0..width {
                next_rows[j * width + col] =
                    rows.data[j * width + col].wrapping_add(z[k * lanes + col]);
            }
            next_r[j] = rcol[j].wrapping_add(z[k * lanes + width]);
        }
        rows.data = next_rows;
        rcol = next_r;
    }
    Ok((rows, rcol))
}

/// Half-copy network: position `j >= ceil(n/2)` takes the row at
/// `j - ceil(n/2)` if it is dummy. With at least `ceil(n/2)` compacted real
/// rows, every output row is real.
pub fn half_copy(
    ctx: &mut PartyCtx,
    xs: &SharedSeq,
    real: &[u64],
) -> Result<(SharedSeq, Vec<u64>)> {
    let n = xs.rows();
    assert_eq!(real.len(), n);
    if n <= 1 {
        return Ok((xs.clone(), real.to_vec()));
    }
    let width = xs.width;
    let half = n.div_ceil(2);
    let one = ctx.constant(1);
    let idxs: Vec<usize> = (half..n).collect();
    let not_real: Vec<u64> = idxs.iter().map(|&j| one.wrapping_sub(real[j])).collect();

    let lanes = width + 1;
    let mut c_flat = Vec::with_capacity(idxs.len() * lanes);
    let mut d_flat = Vec::with_capacity(idxs.len() * lanes);
    for (k, &j) in idxs.iter().enumerate() {
        let s = j - half;
        for col in 0..width {
            c_flat.push(not_real[k]);
            d_flat.push(xs.data[s * width + col].wrapping_sub(xs.data[j * width + col]));
        }
        c_flat.push(not_real[k]);
        d_flat.push(real[s].wrapping_sub(real[j]));
    }
    let z = ctx.mul_many(&c_flat, &d_flat)?;
    let mut rows = xs.clone();
    let mut rcol = real.to_vec();
    for (k, &j) in idxs.iter().enumerate() {
        for col in 0..width {
            rows.data[j * width + col] =
                rows.data[j * width + col].wrapping_add(z[k * lanes + col]);
        }
        rcol[j] = rcol[j].wrapping_add(z[k * lanes + width]);
    }
    Ok((rows, rcol))
}
