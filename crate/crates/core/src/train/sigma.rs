//! Shared computation of the DP noise multiplier
//! `sigma = (|B| / J) * sqrt(T log(1/delta) log(T/delta)) / epsilon`.
//!
//! Everything except `J` is public, so one shared reciprocal (the MPC
//! division) suffices; the public factor folds in via its binary mantissa
//! and exponent so intermediate magnitudes stay far below the modulus.

use crate::sharing::fixed::{recip_positive_int, trunc_shares, RECIP_SCALE};
use crate::sharing::PartyCtx;
use crate::train::{DpParams, Hyperparams};
use crate::{Error, Result};

/// Fractional bits of the shared sigma output.
pub const SIGMA_SCALE: u32 = 24;

/// Public scalar part of the sigma formula.
pub fn public_factor(dp: &DpParams, hp: &Hyperparams) -> f64 {
    let t = hp.iters as f64;
    let k = (t * dp.log_base.log(1.0 / dp.delta) * dp.log_base.log(t / dp.delta)).sqrt();
    hp.batch as f64 * k / dp.epsilon
}

/// Shares of sigma at [`SIGMA_SCALE`] fractional bits. `shared_j` holds
/// shares of the secret real count, known to lie in `[1, max_j]`.
pub fn compute_sigma(
    ctx: &mut PartyCtx,
    dp: &DpParams,
    hp: &Hyperparams,
    shared_j: u64,
    max_j: usize,
) -> Result<u64> {
    ctx.scoped("sigma", |ctx| {
        let bits = usize::BITS - max_j.next_power_of_two().leading_zeros();
        let recip = recip_positive_int(ctx, &[shared_j], bits.min(20))?;
        // Narrow 1/J to 28 fractional bits before folding the public part.
        let recip28 = trunc_shares(ctx, &recip, RECIP_SCALE - 28);

        let p = public_factor(dp, hp);
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidParam(format!("degenerate sigma factor {p}")));
        }
        let p_e = p.log2().floor() as i64;
        let p_m = p / (2f64).powi(p_e as i32); // in [1, 2)
        let m_enc = (p_m * (1u64 << 11) as f64).round() as u64;
        // value (p_m / J) at scale 39; net shift folds in 2^p_e.
        let raw = ctx.scalar_mul(&recip28, m_enc);
        let shift = 39 - SIGMA_SCALE as i64 - p_e;
        let out = if shift >= 0 {
            trunc_shares(ctx, &raw, shift as u32)
        } else {
            ctx.scalar_mul(&raw, 1u64 << (-shift) as u32)
        };
        Ok(out[0])
    })
}
