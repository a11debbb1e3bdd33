//! Stable oblivious compaction: real rows (indicator 1) move to the front,
//! preserving their relative order, in `O(N log N)` gates.
//!
//! Each real row must move left by the number of dummies before it; the
//! passes shift rows by successive powers of two according to the bits of
//! that distance, carried alongside in shared form. Within a pass, blocks
//! of `offset` consecutive pairs are independent and batched.

use crate::oblivious::SharedSeq;
use crate::sharing::boolean::a2b;
use crate::sharing::PartyCtx;
use crate::Result;

/// Compact `xs` by the shared 0/1 indicator `t`; returns the reordered
/// sequence and the reordered indicator.
pub fn compact(ctx: &mut PartyCtx, xs: &SharedSeq, t: &[u64]) -> Result<(SharedSeq, Vec<u64>)> {
    let n = xs.rows();
    assert_eq!(t.len(), n);
    if n <= 1 {
        return Ok((xs.clone(), t.to_vec()));
    }
    let width = xs.width;

    // dummies_before[i] = sum of (1 - t_j) for j < i  (local prefix).
    let one = ctx.constant(1);
    let mut dummies_before = vec![0u64; n];
    let mut acc = 0u64;
    for i in 0..n {
        dummies_before[i] = acc;
        acc = acc.wrapping_add(one.wrapping_sub(t[i]));
    }
    // Move distance: csum_i = t_i * dummies_before_i.
    let mut csum = ctx.mul_many(t, &dummies_before)?;

    let mut rows = xs.clone();
    let mut tcol = t.to_vec();

    let passes = (usize::BITS - (n - 1).leading_zeros()) as usize;
    for pass in 0..passes {
        let offset = 1usize << pass;
        if offset >= n {
            break;
        }
        // Blocks of `offset` consecutive start positions are disjoint.
        let mut block_start = 0usize;
        while block_start < n - offset {
            let block_end = (block_start + offset).min(n - offset);
            let js: Vec<usize> = (block_start..block_end).collect();
            step_block(
                ctx, &mut rows, &mut tcol, &mut csum, &js, offset, pass, width,
            )?;
            block_start = block_end;
        }
    }
    Ok((rows, tcol))
}

#[allow(clippy::too_many_arguments)]
fn step_block(
    ctx: &mut PartyCtx,
    rows: &mut SharedSeq,
    tcol: &mut [u64],
    csum: &mut [u64],
    js: &[usize],
    offset: usize,
    pass: usize,
    width: usize,
) -> Result<()> {
    // pred_j = bit `pass` of csum[j + offset].
    let src: Vec<u64> = js.iter().map(|&j| csum[j + offset]).collect();
    let bits = a2b(ctx, &src)?;
    let extracted: Vec<u64> = bits.iter().map(|&w| (w >> pass) & 1).collect();
    let pred = ctx.b2a_bits(&extracted)?;

    // Batched muxes: swap rows/t, pull csum left minus offset, clear right.
    let lanes = width + 3;
    let mut c_flat = Vec::with_capacity(js.len() * lanes);
    let mut d_flat = Vec::with_capacity(js.len() * lanes);
    for (k, &j) in js.iter().enumerate() {
        let b = j + offset;
        for col in 0..width {
            c_flat.push(pred[k]);
            d_flat.push(rows.data[b * width + col].wrapping_sub(rows.data[j * width + col]));
        }
        c_flat.push(pred[k]);
        d_flat.push(tcol[b].wrapping_sub(tcol[j]));
        // csum[a] <- pred ? csum[b] - offset : csum[a]
        c_flat.push(pred[k]);
        d_flat.push(
            csum[b]
                .wrapping_sub(ctx.constant(offset as u64))
                .wrapping_sub(csum[j]),
        );
        // csum[b] <- pred ? 0 : csum[b]
        c_flat.push(pred[k]);
        d_flat.push(csum[b]);
    }
    let z = ctx.mul_many(&c_flat, &d_flat)?;
    for (k, &j) in js.iter().enumerate() {
        let b = j + offset;
        let zrow = &z[k * lanes..(k + 1) * lanes];
        for col in 0..width {
            rows.data[j * width + col] = rows.data[j * width + col].wrapping_add(zrow[col]);
            rows.data[b * width + col] = rows.data[b * width + col].wrapping_sub(zrow[col]);
        }
        tcol[j] = tcol[j].wrapping_add(zrow[width]);
        tcol[b] = tcol[b].wrapping_sub(zrow[width]);
        csum[j] = csum[j].wrapping_add(zrow[width + 1]);
        csum[b] = csum[b].wrapping_sub(zrow[width + 2]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::FixedPoint;
    use crate::sharing::share;
    use crate::transport::{run_protocol, Mode, Wire};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn spmd<T: Send>(f: impl Fn(&mut PartyCtx) -> Result<T> + Send + Sync) -> (T, T) {
        let g = |w: &mut Wire| {
            let mut ctx = PartyCtx::new(w, 321, FixedPoint::default());
            f(&mut ctx)
        };
        let (a, b, _) = run_protocol(Mode::InProcess, g, g).unwrap();
        (a, b)
    }

    fn share_vals(vals: &[u64], party: u8, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        vals.iter()
            .map(|&v| {
                let (s0, s1) = share(v, &mut rng);
                if party == 0 {
                    s0.value
                } else {
                    s1.value
                }
            })
            .collect()
    }

    fn oracle(vals: &[u64], t: &[u64]) -> (Vec<u64>, Vec<u64>) {
        let mut rv = Vec::new();
        let mut rt = Vec::new();
        for i in 0..vals.len() {
            if t[i] == 1 {
                rv.push(vals[i]);
                rt.push(1);
            }
        }
        let reals = rv.len();
        // Dummy contents are unspecified; only count and position matter.
        rv.resize(vals.len(), u64::MAX);
        rt.resize(vals.len(), 0);
        let _ = reals;
        (rv, rt)
    }

    fn run_case(vals: Vec<u64>, t: Vec<u64>) {
        let (vals2, t2) = (vals.clone(), t.clone());
        let ((s0, t0), (s1, t1)) = spmd(move |ctx| {
            let xs = SharedSeq::from_rows(1, share_vals(&vals2, ctx.party(), 3));
            let tv = share_vals(&t2, ctx.party(), 4);
            compact(ctx, &xs, &tv)
        });
        let got_vals: Vec<u64> = s0
            .data
            .iter()
            .zip(&s1.data)
            .map(|(&a, &b)| a.wrapping_add(b))
            .collect();
        let got_t: Vec<u64> = t0
            .iter()
            .zip(&t1)
            .map(|(&a, &b)| a.wrapping_add(b))
            .collect();
        let (want_vals, want_t) = oracle(&vals, &t);
        assert_eq!(got_t, want_t, "indicator mismatch for t={t:?}");
        let reals = t.iter().filter(|&&x| x == 1).count();
        assert_eq!(&got_vals[..reals], &want_vals[..reals], "t={t:?}");
    }

    #[test]
    fn stability_example() {
        // (D, X, D, Y) -> (X, Y, D, D) with X before Y.
        run_case(vec![9, 100, 9, 200], vec![0, 1, 0, 1]);
    }

    #[test]
    fn all_real_is_identity() {
        run_case(vec![5, 6, 7, 8, 9], vec![1, 1, 1, 1, 1]);
    }

    #[test]
    fn exhaustive_small_patterns() {
        for n in 1..=10usize {
            for mask in 0..(1u32 << n) {
                let vals: Vec<u64> = (0..n as u64).map(|i| 1000 + i).collect();
                let t: Vec<u64> = (0..n).map(|i| ((mask >> i) & 1) as u64).collect();
                run_case(vals, t);
            }
        }
    }

    #[test]
    fn random_large_patterns() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.random_range(1..=512usize);
            let vals: Vec<u64> = (0..n).map(|_| rng.random()).collect();
            let t: Vec<u64> = (0..n).map(|_| rng.random_range(0..2u64)).collect();
            run_case(vals, t);
        }
    }
}
