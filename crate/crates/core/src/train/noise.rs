//! Shared standard-Gaussian sampling.
//!
//! A dealer-shared uniform value converts to N(0,1) inside the protocol by
//! evaluating a piecewise-cubic fit of the inverse normal CDF: 16 segments
//! with dyadic tails, each polynomial evaluated in a centered local
//! variable for conditioning, selected obliviously through threshold
//! comparisons. Values beyond the outermost boundaries clamp to the
//! boundary quantile. Neither party's local view determines the sample.

use crate::sharing::fixed::{encode_at, trunc_shares};
use crate::sharing::PartyCtx;
use crate::Result;
use std::sync::OnceLock;

/// Fixed-point scale of the uniform input and Gaussian output.
pub const NOISE_SCALE: u32 = 16;

/// Innermost dyadic exponent: segments start at `2^-TAIL_EXP`.
const TAIL_EXP: i32 = 9;

#[derive(Clone, Debug)]
struct Segment {
    lo: f64,
    hi: f64,
    /// Coefficients of `z(v)` with `v = (u - mid) / half_width` in [-1, 1].
    coef: [f64; 4],
}

#[derive(Debug)]
pub struct NoiseTable {
    segments: Vec<Segment>,
    z_min: f64,
    z_max: f64,
}

/// Acklam's rational approximation of the inverse normal CDF; relative
/// error below 1.2e-9, plenty under the fixed-point resolution.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}

/// Least-squares cubic fit of `f` on `[lo, hi]` in the centered variable.
fn fit_cubic(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> [f64; 4] {
    let mid = 0.5 * (lo + hi);
    let hw = 0.5 * (hi - lo);
    let samples = 64;
    // Normal equations for the monomial basis in v.
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for s in 0..samples {
        // Chebyshev-like nodes avoid endpoint blowup.
        let v = (std::f64::consts::PI * (s as f64 + 0.5) / samples as f64).cos();
        let u = mid + hw * v;
        let y = f(u);
        let basis = [1.0, v, v * v, v * v * v];
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += basis[i] * basis[j];
            }
            atb[i] += basis[i] * y;
        }
    }
    // Gaussian elimination with partial pivoting.
    let mut m = ata;
    let mut b = atb;
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let k = m[row][col] / m[col][col];
            for c2 in col..4 {
                m[row][c2] -= k * m[col][c2];
            }
            b[row] -= k * b[col];
        }
    }
    let mut x = [0.0f64; 4];
    for col in (0..4).rev() {
        let mut acc = b[col];
        for c2 in col + 1..4 {
            acc -= m[col][c2] * x[c2];
        }
        x[col] = acc / m[col][col];
    }
    x
}

impl NoiseTable {
    /// 16 segments: dyadic tails `[2^-9 .. 2^-2]` on each side plus
    /// `[1/4, 1/2]` and its mirror. The upper half mirrors the lower half
    /// exactly, keeping the construction symmetric around zero.
    pub fn standard() -> &'static NoiseTable {
        static TABLE: OnceLock<NoiseTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let mut bounds_lo: Vec<f64> = Vec::new();
            for e in (2..=TAIL_EXP).rev() {
                bounds_lo.push((2f64).powi(-e));
            }
            bounds_lo.push(0.5);
            let mut segments = Vec::new();
            for w in bounds_lo.windows(2) {
                segments.push(Segment {
                    lo: w[0],
                    hi: w[1],
                    coef: fit_cubic(w[0], w[1], inverse_normal_cdf),
                });
            }
            // Mirror: z(u) = -z(1 - u).
            let mirrored: Vec<Segment> = segments
                .iter()
                .rev()
                .map(|s| {
                    let (lo, hi) = (1.0 - s.hi, 1.0 - s.lo);
                    let mut coef = s.coef;
                    // v' = (u - mid') / hw with mid' = 1 - mid flips v sign;
                    // z'(v') = -z(-v'): negate even coefficients' effect by
                    // negating all then flipping odd terms.
                    coef[0] = -coef[0];
                    coef[2] = -coef[2];
                    // odd terms: -( c1 * (-v) ) = c1 * v, so keep c1, c3.
                    Segment { lo, hi, coef }
                })
                .collect();
            segments.extend(mirrored);
            assert_eq!(segments.len(), 16);
            let z_min = inverse_normal_cdf(segments[0].lo);
            NoiseTable {
                segments,
                z_min,
                z_max: -z_min,
            }
        })
    }

    pub fn clamp_z(&self) -> (f64, f64) {
        (self.z_min, self.z_max)
    }

    /// Plaintext evaluation (reference for tests and calibration).
    pub fn eval_plain(&self, u: f64) -> f64 {
        if u <= self.segments[0].lo {
            return self.z_min;
        }
        if u >= self.segments.last().unwrap().hi {
            return self.z_max;
        }
        for s in &self.segments {
            if u <= s.hi {
                let mid = 0.5 * (s.lo + s.hi);
                let hw = 0.5 * (s.hi - s.lo);
                let v = (u - mid) / hw;
                let c = s.coef;
                return ((c[3] * v + c[2]) * v + c[1]) * v + c[0];
            }
        }
        unreachable!()
    }
}

/// `count` shared draws from N(0, 1) at [`NOISE_SCALE`] fractional bits.
pub fn gaussian_vector(ctx: &mut PartyCtx, count: usize) -> Result<Vec<u64>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let table = NoiseTable::standard();
    let segs = &table.segments;
    let n_seg = segs.len();
    let u = ctx.draw_uniform(count, NOISE_SCALE);

    // Threshold bits m_k = Ind(u > b_k) for every segment boundary.
    let mut rep_u = Vec::with_capacity(count * (n_seg + 1));
    let mut rep_b = Vec::with_capacity(count * (n_seg + 1));
    for k in 0..=n_seg {
        let b = if k < n_seg {
            segs[k].lo
        } else {
            segs[n_seg - 1].hi
        };
        rep_b.extend(std::iter::repeat(ctx.constant(encode_at(b, NOISE_SCALE))).take(count));
        rep_u.extend_from_slice(&u);
    }
    let m = ctx.lt_many(&rep_b, &rep_u, false)?;
    let bit = |k: usize, j: usize| m[k * count + j];

    // Per-segment cubic in the centered variable v = (u - mid) / hw.
    // v = (u - mid) * (1 / hw): both operations local.
    let mut seg_flat = Vec::with_capacity(count * n_seg);
    let mut val_flat = Vec::with_capacity(count * n_seg);
    let one = ctx.constant(1);
    let mut v_all: Vec<Vec<u64>> = Vec::with_capacity(n_seg);
    for s in segs {
        let mid = ctx.constant(encode_at(0.5 * (s.lo + s.hi), NOISE_SCALE));
        let inv_hw = encode_at(2.0 / (s.hi - s.lo), 8);
        let centered: Vec<u64> = u.iter().map(|&x| x.wrapping_sub(mid)).collect();
        // scale 16+8 -> trunc 8 keeps v at NOISE_SCALE.
        v_all.push(ctx.scalar_mul_trunc(&centered, inv_hw, 8));
    }
    // Horner: t = ((c3 v + c2) v + c1) v + c0 needs two shared products.
    let mut t_flat = Vec::with_capacity(count * n_seg);
    {
        let mut lhs = Vec::with_capacity(count * n_seg);
        let mut rhs = Vec::with_capacity(count * n_seg);
        for (si, s) in segs.iter().enumerate() {
            let c3 = encode_at(s.coef[3], NOISE_SCALE);
            let c2 = ctx.constant(encode_at(s.coef[2], NOISE_SCALE));
            for j in 0..count {
                let t1 = ctx.scalar_mul_trunc(&[v_all[si][j]], c3, NOISE_SCALE)[0].wrapping_add(c2);
                lhs.push(t1);
                rhs.push(v_all[si][j]);
            }
        }
        let t2 = ctx.mul_trunc(&lhs, &rhs, NOISE_SCALE)?;
        let mut lhs2 = Vec::with_capacity(count * n_seg);
        let mut rhs2 = Vec::with_capacity(count * n_seg);
        for (si, s) in segs.iter().enumerate() {
            let c1 = ctx.constant(encode_at(s.coef[1], NOISE_SCALE));
            for j in 0..count {
                lhs2.push(t2[si * count + j].wrapping_add(c1));
                rhs2.push(v_all[si][j]);
            }
        }
        let t3 = ctx.mul_trunc(&lhs2, &rhs2, NOISE_SCALE)?;
        for (si, s) in segs.iter().enumerate() {
            let c0 = ctx.constant(encode_at(s.coef[0], NOISE_SCALE));
            for j in 0..count {
                t_flat.push(t3[si * count + j].wrapping_add(c0));
            }
        }
    }

    // Select the segment: s_k = m_k - m_{k+1}; clamp outside the range.
    for k in 0..n_seg {
        for j in 0..count {
            seg_flat.push(bit(k, j).wrapping_sub(bit(k + 1, j)));
            val_flat.push(t_flat[k * count + j]);
        }
    }
    let picked = ctx.mul_many(&seg_flat, &val_flat)?;
    let zmin = encode_at(table.z_min, NOISE_SCALE);
    let zmax = encode_at(table.z_max, NOISE_SCALE);
    let mut out = vec![0u64; count];
    for k in 0..n_seg {
        for j in 0..count {
            out[j] = out[j].wrapping_add(picked[k * count + j]);
        }
    }
    for j in 0..count {
        let below = one.wrapping_sub(bit(0, j));
        let above = bit(n_seg, j);
        out[j] = out[j]
            .wrapping_add(below.wrapping_mul(zmin))
            .wrapping_add(above.wrapping_mul(zmax));
    }
    Ok(out)
}

/// `d` shared standard-normal draws under a dedicated stage label;
/// callers scale them at the call site.
pub fn dp_noise_vector(ctx: &mut PartyCtx, d: usize) -> Result<Vec<u64>> {
    ctx.scoped("noise", |ctx| gaussian_vector(ctx, d))
}

/// Local trunc helper re-exported for callers aligning scales.
pub fn to_scale(ctx: &PartyCtx, xs: &[u64], from: u32, to: u32) -> Vec<u64> {
    assert!(from >= to);
    trunc_shares(ctx, xs, from - to)
}
