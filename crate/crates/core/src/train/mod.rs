//! Minibatch SGD on secret-shared purified data for linear and logistic
//! regression, with optional differentially private gradient perturbation.
//!
//! Every batch executes an identical operation sequence, so the transcript
//! depends only on `(N, d, |B|, T)`. Logistic regression uses the
//! piecewise-linear activation `clamp(x + 1/2, 0, 1)`, keeping everything
//! inside {add, mul, compare}.

pub mod noise;
pub mod sigma;

use crate::purify::PurifiedTable;
use crate::sharing::fixed::{clip_factors, trunc_shares, NR_SCALE};
use crate::sharing::PartyCtx;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batch: usize,
    /// Fixed, public iteration count.
    pub iters: usize,
    pub lr: f64,
    pub model: ModelKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    Natural,
    Base2,
}

impl LogBase {
    pub fn log(&self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Base2 => x.log2(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DpParams {
    pub epsilon: f64,
    pub delta: f64,
    /// l2 clipping threshold.
    pub clip: f64,
    /// Maximum join results per primary-private-table tuple; declared, not
    /// verified (verifying it would leak).
    pub tau: u64,
    #[serde(default = "default_log_base")]
    pub log_base: LogBase,
}

fn default_log_base() -> LogBase {
    LogBase::Natural
}

impl DpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParam("epsilon must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParam("delta must be in (0, 1)".into()));
        }
        if !(self.clip >= 0.25) {
            return Err(Error::InvalidParam(
                "clip threshold must be at least 1/4".into(),
            ));
        }
        if self.tau < 1 {
            return Err(Error::InvalidParam("tau must be a positive integer".into()));
        }
        Ok(())
    }
}

/// Coefficient vector in shared fixed-point form.
#[derive(Clone, Debug)]
pub struct SharedModel {
    pub weights: Vec<u64>,
    pub dim: usize,
}

/// Who learns the coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RevealTo {
    Party0,
    Party1,
    Both,
    None,
}

/// Deterministic public initial weights shared by both parties (and by the
/// plaintext reference run).
pub fn initial_weights(seed: u64, d: usize) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng =
        rand_chacha::ChaCha12Rng::seed_from_u64(crate::sharing::derive_seed(seed, 0x77_77));
    (0..d).map(|_| rng.random_range(-0.1..0.1)).collect()
}

/// Train with minibatch SGD over the shuffled purified table, batches taken
/// as sequential blocks wrapping cyclically.
///
/// `dp` carries the DP parameters plus shares of the secret real count.
pub fn sgd_train(
    ctx: &mut PartyCtx,
    data: &PurifiedTable,
    features: &[String],
    label: &str,
    hp: &Hyperparams,
    dp: Option<(&DpParams, u64)>,
    init_seed: u64,
) -> Result<SharedModel> {
    let n = data.rows();
    let d = features.len();
    if hp.batch == 0 || hp.batch > n {
        return Err(Error::InvalidParam(format!(
            "batch size {} out of range for {n} rows",
            hp.batch
        )));
    }
    if !hp.lr.is_finite() || hp.lr < 0.0 {
        return Err(Error::InvalidParam("learning rate must be finite".into()));
    }
    if let Some((p, _)) = dp {
        p.validate()?;
    }
    let f = ctx.fp.frac_bits;
    let x_cols: Vec<Vec<u64>> = features
        .iter()
        .map(|name| data.col(name))
        .collect::<Result<_>>()?;
    let y_col = data.col(label)?;

    ctx.scoped("train", |ctx| {
        // sigma in shared form, folded with tau * clip at fraction `f`.
        // Narrow sigma to `f` bits first so products stay far from the
        // ring modulus.
        let noise_scale: Option<Vec<u64>> = match dp {
            Some((p, shared_j)) => {
                let sigma = sigma::compute_sigma(ctx, p, hp, shared_j, n)?;
                let sigma_f = trunc_shares(ctx, &[sigma], sigma::SIGMA_SCALE - f);
                let tc = crate::sharing::fixed::encode_at(p.tau as f64 * p.clip, f);
                Some(ctx.scalar_mul_trunc(&sigma_f, tc, f))
            }
            None => None,
        };

        let w0 = initial_weights(init_seed, d);
        let mut w: Vec<u64> = w0.iter().map(|&x| ctx.constant(ctx.fp.encode(x))).collect();
        let b = hp.batch;
        // eta / |B| applied at 24 fractional bits for precision.
        let step = crate::sharing::fixed::encode_at(hp.lr / b as f64, 24);

        for it in 0..hp.iters {
            let start = (it * b) % n;
            let rows: Vec<usize> = (0..b).map(|k| (start + k) % n).collect();

            // Forward: preds = X w.
            let mut xs_flat = Vec::with_capacity(b * d);
            let mut ws_flat = Vec::with_capacity(b * d);
            for &r in &rows {
                for (jf, col) in x_cols.iter().enumerate() {
                    xs_flat.push(col[r]);
                    ws_flat.push(w[jf]);
                }
            }
            let prods = ctx.mul_trunc(&xs_flat, &ws_flat, f)?;
            let preds: Vec<u64> = (0..b)
                .map(|i| {
                    prods[i * d..(i + 1) * d]
                        .iter()
                        .fold(0u64, |acc, &p| acc.wrapping_add(p))
                })
                .collect();

            // err = activation(pred) - y.
            let act = match hp.model {
                ModelKind::Linear => preds,
                ModelKind::Logistic => piecewise_sigmoid(ctx, &preds, f)?,
            };
            let err: Vec<u64> = rows
                .iter()
                .enumerate()
                .map(|(i, &r)| act[i].wrapping_sub(y_col[r]))
                .collect();

            // Per-example gradients g_ij = err_i * x_ij.
            let mut err_flat = Vec::with_capacity(b * d);
            for e in &err {
                err_flat.extend(std::iter::repeat(*e).take(d));
            }
            let x_batch: Vec<u64> = rows
                .iter()
                .flat_map(|&r| x_cols.iter().map(move |c| c[r]))
                .collect();
            let mut grads = ctx.mul_trunc(&err_flat, &x_batch, f)?;

            if let Some((p, _)) = dp {
                // l2-clip each example's gradient to `clip` before summing.
                let sq = ctx.mul_many(&grads, &grads)?; // scale 2f
                let norms: Vec<u64> = (0..b)
                    .map(|i| {
                        sq[i * d..(i + 1) * d]
                            .iter()
                            .fold(0u64, |acc, &v| acc.wrapping_add(v))
                    })
                    .collect();
                let factors = clip_factors(ctx, &norms, 2 * f, p.clip)?;
                let mut fac_flat = Vec::with_capacity(b * d);
                for fa in &factors {
                    fac_flat.extend(std::iter::repeat(*fa).take(d));
                }
                grads = ctx.mul_trunc(&grads, &fac_flat, NR_SCALE)?;
            }

            // Batch gradient sum.
            let mut gsum = vec![0u64; d];
            for i in 0..b {
                for jf in 0..d {
                    gsum[jf] = gsum[jf].wrapping_add(grads[i * d + jf]);
                }
            }

            // DP noise: g += tau*sigma*C * N(0, I), one vector per batch.
            if let Some(scale) = &noise_scale {
                let z16 = noise::gaussian_vector(ctx, d)?;
                let z = trunc_shares(ctx, &z16, 16 - f.min(16));
                let scale_rep = vec![scale[0]; d];
                let noisy = ctx.mul_trunc(&z, &scale_rep, f)?;
                for jf in 0..d {
                    gsum[jf] = gsum[jf].wrapping_add(noisy[jf]);
                }
            }

            // w -= (eta/|B|) * gsum.
            let delta = ctx.scalar_mul_trunc(&gsum, step, 24);
            for jf in 0..d {
                w[jf] = w[jf].wrapping_sub(delta[jf]);
            }
        }
        Ok(SharedModel { weights: w, dim: d })
    })
}

/// clamp(x + 1/2, 0, 1) on shared fixed-point values.
fn piecewise_sigmoid(ctx: &mut PartyCtx, xs: &[u64], f: u32) -> Result<Vec<u64>> {
    let half = crate::sharing::fixed::encode_at(0.5, f);
    let one = crate::sharing::fixed::encode_at(1.0, f);
    let lo = ctx.lt_const_many(xs, half.wrapping_neg(), true)?; // x < -1/2
    let hi = ctx.gt_const_many(xs, half, true)?; // x > 1/2
                                                 // act = hi + (1 - lo - hi) * (x + 1/2)
    let one_bit = ctx.constant(1);
    let mid: Vec<u64> = (0..xs.len())
        .map(|i| one_bit.wrapping_sub(lo[i]).wrapping_sub(hi[i]))
        .collect();
    let shifted: Vec<u64> = xs
        .iter()
        .map(|&x| x.wrapping_add(ctx.constant(half)))
        .collect();
    let ramp = ctx.mul_many(&mid, &shifted)?;
    Ok((0..xs.len())
        .map(|i| hi[i].wrapping_mul(one).wrapping_add(ramp[i]))
        .collect())
}

/// Shared-form dot product of a model with one feature row (used when the
/// model stays shared forever).
pub fn predict_shared(ctx: &mut PartyCtx, model: &SharedModel, x: &[u64]) -> Result<u64> {
    assert_eq!(x.len(), model.dim);
    let prods = ctx.mul_trunc(x, &model.weights, ctx.fp.frac_bits)?;
    Ok(prods.iter().fold(0u64, |acc, &p| acc.wrapping_add(p)))
}

/// Reveal the trained coefficients per policy. Returns decoded weights if
/// this party is a recipient.
pub fn reveal_model(
    ctx: &mut PartyCtx,
    model: &SharedModel,
    to: RevealTo,
) -> Result<Option<Vec<f64>>> {
    ctx.scoped("reveal", |ctx| {
        let fp = ctx.fp;
        let decode = |vals: &[u64]| vals.iter().map(|&v| fp.decode(v)).collect::<Vec<f64>>();
        match to {
            RevealTo::None => Ok(None),
            RevealTo::Both => {
                let opened = ctx.open_many(&model.weights)?;
                Ok(Some(decode(&opened)))
            }
            RevealTo::Party0 | RevealTo::Party1 => {
                let receiver = if to == RevealTo::Party0 { 0 } else { 1 };
                if ctx.party() == receiver {
                    let theirs = ctx.wire.recv_exact(model.weights.len() * 8)?;
                    let theirs = crate::ring::bytes_to_words(&theirs).unwrap();
                    let full: Vec<u64> = model
                        .weights
                        .iter()
                        .zip(&theirs)
                        .map(|(&a, &b)| a.wrapping_add(b))
                        .collect();
                    Ok(Some(decode(&full)))
                } else {
                    ctx.wire
                        .send(&crate::ring::words_to_bytes(&model.weights))?;
                    Ok(None)
                }
            }
        }
    })
}
