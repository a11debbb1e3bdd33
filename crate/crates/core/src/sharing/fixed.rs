//! Shared fixed-point arithmetic.
//!
//! Products of `f`-bit encodings are rescaled by local share truncation:
//! each party shifts its own share. The result is off by at most one ulp
//! except with probability `|x| / 2^64`, so every operation here keeps its
//! pre-truncation magnitude far below the ring modulus (under `2^46`).
//! Division and reciprocal square root run Newton-Raphson with a public
//! iteration count; the initial guess normalizes the operand into `[1, 2)`
//! by multiplexing over public power-of-two thresholds computed with shared
//! comparisons, so the access pattern is operand-independent.

use crate::sharing::PartyCtx;
use crate::Result;

/// Scale of reciprocal outputs (`2^-40` resolution).
pub const RECIP_SCALE: u32 = 40;
/// Internal Newton-Raphson working scale.
pub const NR_SCALE: u32 = 20;
/// Newton-Raphson iteration count (public).
pub const NR_ITERS: usize = 5;

/// Local share truncation by `shift` bits: each party shifts its own
/// share, so no communication.
pub fn trunc_shares(ctx: &PartyCtx, xs: &[u64], shift: u32) -> Vec<u64> {
    if shift == 0 {
        return xs.to_vec();
    }
    if ctx.is_p0() {
        xs.iter().map(|&s| s >> shift).collect()
    } else {
        xs.iter()
            .map(|&s| (s.wrapping_neg() >> shift).wrapping_neg())
            .collect()
    }
}

impl PartyCtx<'_> {
    /// Fixed-point product: multiply then truncate by `shift`.
    pub fn mul_trunc(&mut self, xs: &[u64], ys: &[u64], shift: u32) -> Result<Vec<u64>> {
        let raw = self.mul_many(xs, ys)?;
        Ok(trunc_shares(self, &raw, shift))
    }

    /// Multiply shares by a public integer scalar; local.
    pub fn scalar_mul(&self, xs: &[u64], k: u64) -> Vec<u64> {
        xs.iter().map(|&x| x.wrapping_mul(k)).collect()
    }

    /// Multiply by a public fixed-point scalar encoded at `scale` bits and
    /// truncate back; local.
    pub fn scalar_mul_trunc(&self, xs: &[u64], k_enc: u64, scale: u32) -> Vec<u64> {
        trunc_shares(self, &self.scalar_mul(xs, k_enc), scale)
    }
}

pub fn encode_at(x: f64, scale: u32) -> u64 {
    (x * (1u64 << scale) as f64).round() as i64 as u64
}

/// Shared reciprocal of positive integers.
///
/// Input: shares of integers `v` with `1 <= v < 2^max_bits`, plain scale.
/// Output: shares of `1/v` at [`RECIP_SCALE`].
pub fn recip_positive_int(ctx: &mut PartyCtx, vs: &[u64], max_bits: u32) -> Result<Vec<u64>> {
    assert!(max_bits <= 20, "reciprocal domain capped at 2^20");
    let n = vs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let e_max = max_bits as usize;

    // Threshold bits t_i = Ind(v >= 2^i), batched in one comparison layer.
    let mut rep_v = Vec::with_capacity(n * (e_max + 1));
    let mut rep_k = Vec::with_capacity(n * (e_max + 1));
    for i in 0..=e_max {
        rep_v.extend_from_slice(vs);
        rep_k.extend(std::iter::repeat(ctx.constant((1u64 << i) - 1)).take(n));
    }
    // t = Ind(k < v) with k = 2^i - 1.
    let t = ctx.lt_many(&rep_k, &rep_v, false)?;

    // Segment indicators seg_i = t_i - t_{i+1}: exactly one is 1.
    let seg = |i: usize, j: usize, t: &[u64]| -> u64 {
        let hi = t[i * n + j];
        if i == e_max {
            hi
        } else {
            hi.wrapping_sub(t[(i + 1) * n + j])
        }
    };

    // Normalized mantissa m = v * 2^(NR_SCALE - e) in [2^NR, 2^(NR+1)).
    let mut seg_flat = Vec::with_capacity(n * (e_max + 1));
    let mut scaled_flat = Vec::with_capacity(n * (e_max + 1));
    for i in 0..=e_max {
        for j in 0..n {
            seg_flat.push(seg(i, j, &t));
            scaled_flat.push(vs[j] << (NR_SCALE as usize - i.min(NR_SCALE as usize)));
        }
    }
    let prods = ctx.mul_many(&seg_flat, &scaled_flat)?;
    let mut m = vec![0u64; n];
    for i in 0..=e_max {
        for j in 0..n {
            m[j] = m[j].wrapping_add(prods[i * n + j]);
        }
    }

    // y0 = 1.4571 - m/2 has relative error below 0.086 on [1, 2).
    let c0 = ctx.constant(encode_at(1.4571, NR_SCALE));
    let half_m = trunc_shares(ctx, &m, 1);
    let mut y: Vec<u64> = (0..n).map(|j| c0.wrapping_sub(half_m[j])).collect();

    let two = ctx.constant(encode_at(2.0, NR_SCALE));
    for _ in 0..NR_ITERS {
        let t = ctx.mul_trunc(&m, &y, NR_SCALE)?;
        let r: Vec<u64> = t.iter().map(|&v| two.wrapping_sub(v)).collect();
        y = ctx.mul_trunc(&y, &r, NR_SCALE)?;
    }

    // pow = 2^(24 - e) as a local linear combination of segment bits.
    let mut pow = vec![0u64; n];
    for i in 0..=e_max {
        for j in 0..n {
            pow[j] = pow[j].wrapping_add(seg(i, j, &t) << (24 - i.min(24)));
        }
    }

    // 1/v = y * 2^-e: scale 20 + 24 = 44, truncate to RECIP_SCALE.
    let raw = ctx.mul_many(&y, &pow)?;
    Ok(trunc_shares(ctx, &raw, NR_SCALE + 24 - RECIP_SCALE))
}

/// Clip factors `min(1, c / sqrt(s))` for shared squared norms.
///
/// Input: shares of `s = ||g||^2` encoded at `2f` fractional bits.
/// Output: shares of the factor at [`NR_SCALE`].
pub fn clip_factors(ctx: &mut PartyCtx, norms_sq: &[u64], two_f: u32, c: f64) -> Result<Vec<u64>> {
    assert!(c >= 0.25, "clip threshold below 1/4 not supported");
    let n = norms_sq.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Norms below 2^(i_min - 2f) can never be clipped for sane c; they fall
    // into a catch-all segment that yields factor 1 through the final min.
    let i_min = (two_f as i64 - 8).max(0) as usize;
    let i_max = (two_f as usize + 26).min(62);
    let segs: Vec<usize> = (i_min..=i_max).collect();

    let mut rep_v = Vec::with_capacity(n * segs.len());
    let mut rep_k = Vec::with_capacity(n * segs.len());
    for &i in &segs {
        rep_v.extend_from_slice(norms_sq);
        rep_k.extend(std::iter::repeat(ctx.constant((1u64 << i) - 1)).take(n));
    }
    let t = ctx.lt_many(&rep_k, &rep_v, false)?;
    let seg_bit = |si: usize, j: usize| -> u64 {
        let hi = t[si * n + j];
        if si + 1 == segs.len() {
            hi
        } else {
            hi.wrapping_sub(t[(si + 1) * n + j])
        }
    };
    // below = 1 - t_first (norm too small to clip).
    let below: Vec<u64> = (0..n).map(|j| ctx.constant(1).wrapping_sub(t[j])).collect();

    // Normalized mantissa m in [1, 2) at NR_SCALE, catch-all m = 1.
    let mut seg_flat = Vec::new();
    let mut val_flat = Vec::new();
    for (si, &i) in segs.iter().enumerate() {
        for j in 0..n {
            seg_flat.push(seg_bit(si, j));
            let shift = NR_SCALE as i64 - i as i64;
            let v = if shift >= 0 {
                norms_sq[j] << shift
            } else {
                trunc_shares(ctx, &[norms_sq[j]], (-shift) as u32)[0]
            };
            val_flat.push(v);
        }
    }
    let prods = ctx.mul_many(&seg_flat, &val_flat)?;
    let mut m = vec![0u64; n];
    for si in 0..segs.len() {
        for j in 0..n {
            m[j] = m[j].wrapping_add(prods[si * n + j]);
        }
    }
    for j in 0..n {
        // catch-all: m += below * 1.0 (below is a 0/1 share; local scalar)
        m[j] = m[j].wrapping_add(below[j].wrapping_mul(1u64 << NR_SCALE));
    }

    // rsqrt(m) via Newton-Raphson: y <- y(3 - m y^2)/2, y0 = 1/sqrt(1.5).
    let mut y: Vec<u64> = vec![ctx.constant(encode_at(1.0 / 1.5f64.sqrt(), NR_SCALE)); n];
    let three = ctx.constant(encode_at(3.0, NR_SCALE));
    for _ in 0..4 {
        let y2 = ctx.mul_trunc(&y, &y, NR_SCALE)?;
        let my2 = ctx.mul_trunc(&m, &y2, NR_SCALE)?;
        let r: Vec<u64> = my2.iter().map(|&v| three.wrapping_sub(v)).collect();
        let half_r = trunc_shares(ctx, &r, 1);
        y = ctx.mul_trunc(&y, &half_r, NR_SCALE)?;
    }

    // Fold the exponent half-power and c, clamped so c*r <= 2. The factor
    // y is narrowed to 16 fractional bits first to keep the product far
    // from the modulus.
    let clamp = 2.0 / c;
    let y16 = trunc_shares(ctx, &y, NR_SCALE - 16);
    let mut pow_half = vec![0u64; n];
    for (si, &i) in segs.iter().enumerate() {
        let exp = i as f64 - two_f as f64;
        let p = (2f64).powf(-exp / 2.0).min(clamp);
        let enc = encode_at(p, NR_SCALE);
        for j in 0..n {
            pow_half[j] = pow_half[j].wrapping_add(seg_bit(si, j).wrapping_mul(enc));
        }
    }
    let enc_clamp = encode_at(clamp, NR_SCALE);
    for j in 0..n {
        pow_half[j] = pow_half[j].wrapping_add(below[j].wrapping_mul(enc_clamp));
    }

    let r = ctx.mul_trunc(&y16, &pow_half, 16)?; // ~ min(clamp, 1/sqrt(s))
    let cr = ctx.scalar_mul_trunc(&r, encode_at(c, 16), 16);
    let one = 1u64 << NR_SCALE;
    let is_lt = ctx.lt_const_many(&cr, one, false)?;
    let ones = vec![ctx.constant(one); n];
    ctx.mux_many(&is_lt, &cr, &ones)
}
