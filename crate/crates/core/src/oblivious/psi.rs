//! Private set intersection with payload sharing over a dealer abstraction.
//!
//! Alice holds M keys (including padding), Bob holds N distinct keys with
//! payloads. Alice places her keys in a cuckoo table (3 public salted
//! hashes, fixed stash); Bob files each of his keys under all three hashes
//! into bins of a fixed public capacity. Every (slot, bin item) pair runs a
//! shared equality test; indicators and payloads come back in X order via a
//! gather permutation private to Alice. Bin capacities are a deterministic
//! function of (M, N) at a 2^-40 overflow bound, so the transcript shape
//! depends only on the public sizes.

use crate::oblivious::network::{oep_apply, ExtendedPermutation, OepKind};
use crate::oblivious::SharedSeq;
use crate::sharing::PartyCtx;
use crate::{Error, Result};

/// Number of cuckoo hash functions.
const HASHES: usize = 3;
/// Fixed public stash size.
const STASH: usize = 4;
/// Cuckoo table expansion factor (slots = ceil(1.35 M)).
const EXPANSION_NUM: usize = 27;
const EXPANSION_DEN: usize = 20;
/// Statistical bin-overflow bound: 2^-40.
const LOG2_OVERFLOW: f64 = -40.0;

/// Reserved fill values; the data domain is below `1 << 63`.
fn x_fill(slot: usize) -> u64 {
    (1 << 63) | (1 << 61) | slot as u64
}
fn y_fill(idx: usize) -> u64 {
    (1 << 63) | (1 << 62) | idx as u64
}

fn hash_slot(key: u64, which: usize, salt: u64, slots: usize) -> usize {
    let mut x = key
        ^ salt
            .wrapping_add(which as u64)
            .wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    (x % slots as u64) as usize
}

pub fn cuckoo_slots(m: usize) -> usize {
    ((m * EXPANSION_NUM).div_ceil(EXPANSION_DEN)).max(8)
}

/// Smallest capacity with `slots * P(Poisson(lambda) >= cap) < 2^-40`.
pub fn bin_capacity(slots: usize, balls: usize) -> usize {
    let lambda = balls as f64 / slots as f64;
    let budget = LOG2_OVERFLOW - (slots as f64).log2();
    // log2 of the Poisson point mass at k; the tail is bounded by the point
    // mass over a geometric correction once k > lambda.
    let mut log_p = -lambda * std::f64::consts::LOG2_E; // P(X = 0)
    let mut k = 0usize;
    loop {
        if k as f64 > lambda {
            let corr = 1.0 - lambda / (k as f64 + 1.0);
            if log_p - corr.log2() < budget {
                return k;
            }
        }
        k += 1;
        log_p += lambda.log2() - (k as f64).log2();
        if k > 200 {
            return k;
        }
    }
}

/// Payload column, as seen by this party.
#[derive(Clone, Debug)]
pub enum PayloadForm {
    /// Plaintext at the Y holder; `None` at the other party.
    PlainAtHolder(Option<Vec<u64>>),
    /// Secret-shared; both parties hold share vectors in Y order.
    Shared(Vec<u64>),
}

#[derive(Clone, Debug)]
pub struct PsiOutput {
    /// Shared 0/1 membership indicators, X order.
    pub indicators: Vec<u64>,
    /// Shared payload columns, X order; uniformly random where unmatched.
    pub payloads: Vec<Vec<u64>>,
}

struct CuckooTable {
    slot_key: Vec<u64>,
    stash_key: Vec<u64>,
    /// position of x_i: slot index, or slots + stash index.
    position: Vec<usize>,
}

fn build_cuckoo(xs: &[u64], slots: usize, salt: u64) -> Result<CuckooTable> {
    let mut slot_of: Vec<Option<usize>> = vec![None; slots]; // x index per slot
    let mut stash: Vec<usize> = Vec::new();
    let max_walk = 64 + 8 * (usize::BITS - slots.leading_zeros()) as usize;
    for (i, _) in xs.iter().enumerate() {
        let mut cur = i;
        let mut h = 0usize;
        let mut placed = false;
        for _ in 0..max_walk {
            let s = hash_slot(xs[cur], h, salt, slots);
            match slot_of[s] {
                None => {
                    slot_of[s] = Some(cur);
                    placed = true;
                    break;
                }
                Some(other) => {
                    slot_of[s] = Some(cur);
                    cur = other;
                    // Continue the walk from the evicted key's next hash.
                    let cur_home = (0..HASHES).find(|&hh| hash_slot(xs[cur], hh, salt, slots) == s);
                    h = (cur_home.unwrap_or(HASHES - 1) + 1) % HASHES;
                }
            }
        }
        if !placed {
            if stash.len() >= STASH {
                return Err(Error::CuckooOverflow);
            }
            stash.push(cur);
        }
    }
    let mut slot_key = vec![0u64; slots];
    let mut position = vec![usize::MAX; xs.len()];
    for (s, slot) in slot_of.iter().enumerate() {
        match slot {
            Some(i) => {
                slot_key[s] = xs[*i];
                position[*i] = s;
            }
            None => slot_key[s] = x_fill(s),
        }
    }
    let mut stash_key = vec![0u64; STASH];
    for (k, key) in stash_key.iter_mut().enumerate() {
        *key = match stash.get(k) {
            Some(&i) => {
                position[i] = slots + k;
                xs[i]
            }
            None => x_fill(slots + k),
        };
    }
    Ok(CuckooTable {
        slot_key,
        stash_key,
        position,
    })
}

/// PSI with payload sharing.
///
/// `holder_x` supplies `xs` (M keys incl. padding), `holder_y` supplies
/// `ys` (N distinct keys) and the plaintext halves of payload columns.
/// `salt` must be public and data-independent (derived from the run seed).
#[allow(clippy::too_many_arguments)]
pub fn psi_payload(
    ctx: &mut PartyCtx,
    holder_x: u8,
    xs: Option<&[u64]>,
    m: usize,
    holder_y: u8,
    ys: Option<&[u64]>,
    n: usize,
    payloads: &[PayloadForm],
    salt: u64,
) -> Result<PsiOutput> {
    assert_ne!(holder_x, holder_y);
    {
        let stage = ctx.wire.stage().to_string();
        ctx.wire.ledger.stats_mut(&stage).psi_calls += 1;
    }
    let slots = cuckoo_slots(m);
    let cap = bin_capacity(slots, HASHES * n);
    let am_x = ctx.party() == holder_x;
    let am_y = ctx.party() == holder_y;

    if am_y {
        let ys = ys.expect("y holder must supply keys");
        assert_eq!(ys.len(), n);
        let mut seen = std::collections::HashSet::new();
        for &y in ys {
            if !seen.insert(y) {
                return Err(Error::DuplicateKey {
                    table: "psi-y".into(),
                    key: y,
                });
            }
        }
    }

    // Bob's binning: y index per (slot, t), deduplicated per slot.
    let bins: Option<Vec<Vec<usize>>> = if am_y {
        let ys = ys.unwrap();
        let mut bins = vec![Vec::new(); slots];
        for (j, &y) in ys.iter().enumerate() {
            for h in 0..HASHES {
                let s = hash_slot(y, h, salt, slots);
                if !bins[s].contains(&j) {
                    if bins[s].len() >= cap {
                        return Err(Error::CuckooOverflow);
                    }
                    bins[s].push(j);
                }
            }
        }
        Some(bins)
    } else {
        None
    };

    let cuckoo: Option<CuckooTable> = if am_x {
        Some(build_cuckoo(
            xs.expect("x holder must supply keys"),
            slots,
            salt,
        )?)
    } else {
        None
    };

    // Shared payload columns must first be routed into bin layout by the
    // Y holder (positions are its private hash arrangement). Plaintext
    // columns are arranged locally. Layout: slots*cap items, then for the
    // stash scan the full Y order (n items), flattened per column.
    let mut bin_payload: Vec<Vec<u64>> = Vec::with_capacity(payloads.len());
    for p in payloads {
        match p {
            PayloadForm::PlainAtHolder(vals) => {
                let mut col = vec![0u64; slots * cap];
                if am_y {
                    let vals = vals.as_ref().expect("y holder supplies plaintext payload");
                    assert_eq!(vals.len(), n);
                    for (s, bin) in bins.as_ref().unwrap().iter().enumerate() {
                        for (t, &j) in bin.iter().enumerate() {
                            col[s * cap + t] = vals[j];
                        }
                    }
                    for _ in 0..STASH {
                        col.extend_from_slice(vals);
                    }
                } else {
                    col.extend(std::iter::repeat(0).take(STASH * n));
                }
                bin_payload.push(col);
            }
            PayloadForm::Shared(shares) => {
                assert_eq!(shares.len(), n);
                // Append a public zero row as the dummy target.
                let mut src = SharedSeq::from_rows(1, shares.clone());
                src.push_row(&[0]);
                let xi = if am_y {
                    let bins = bins.as_ref().unwrap();
                    let mut targets = Vec::with_capacity(slots * cap);
                    for bin in bins {
                        for t in 0..cap {
                            targets.push(bin.get(t).copied().unwrap_or(n));
                        }
                    }
                    Some(ExtendedPermutation::new(targets))
                } else {
                    None
                };
                let routed = ctx.scoped("payload_route", |ctx| {
                    oep_apply(
                        ctx,
                        holder_y,
                        xi.as_ref(),
                        n + 1,
                        slots * cap,
                        OepKind::General,
                        &src,
                    )
                })?;
                let mut col = routed.data;
                for _ in 0..STASH {
                    col.extend_from_slice(shares);
                }
                bin_payload.push(col);
            }
        }
    }

    // Equality tests: (slot, t) pairs plus stash * all-of-Y. The X side
    // holds the x key as its share; the Y side holds -y.
    let total_tests = slots * cap + STASH * n;
    let mut diff = vec![0u64; total_tests];
    if am_x {
        let ck = cuckoo.as_ref().unwrap();
        for s in 0..slots {
            for t in 0..cap {
                diff[s * cap + t] = ck.slot_key[s];
            }
        }
        for k in 0..STASH {
            for j in 0..n {
                diff[slots * cap + k * n + j] = ck.stash_key[k];
            }
        }
    }
    if am_y {
        let ys = ys.unwrap();
        let bins = bins.as_ref().unwrap();
        for (s, bin) in bins.iter().enumerate() {
            for t in 0..cap {
                let key = bin
                    .get(t)
                    .map(|&j| ys[j])
                    .unwrap_or_else(|| y_fill(s * cap + t));
                diff[s * cap + t] = diff[s * cap + t].wrapping_sub(key);
            }
        }
        for k in 0..STASH {
            for (j, &y) in ys.iter().enumerate() {
                let idx = slots * cap + k * n + j;
                diff[idx] = diff[idx].wrapping_sub(y);
            }
        }
    }
    let zeros = vec![0u64; total_tests];
    let e = ctx.eq_many(&diff, &zeros)?;

    // Per-position indicator and payload: at most one equality fires per
    // slot (Y keys distinct), so plain sums aggregate the bin.
    let positions = slots + STASH;
    let mut ind = vec![0u64; positions];
    for s in 0..slots {
        for t in 0..cap {
            ind[s] = ind[s].wrapping_add(e[s * cap + t]);
        }
    }
    for k in 0..STASH {
        for j in 0..n {
            ind[slots + k] = ind[slots + k].wrapping_add(e[slots * cap + k * n + j]);
        }
    }

    let mut pos_payload: Vec<Vec<u64>> = Vec::with_capacity(payloads.len());
    for col in &bin_payload {
        // One multiplication layer: e * w over every test position.
        let prods = ctx.mul_many(&e, col)?;
        let mut out = vec![0u64; positions];
        for s in 0..slots {
            for t in 0..cap {
                out[s] = out[s].wrapping_add(prods[s * cap + t]);
            }
        }
        for k in 0..STASH {
            for j in 0..n {
                out[slots + k] = out[slots + k].wrapping_add(prods[slots * cap + k * n + j]);
            }
        }
        pos_payload.push(out);
    }

    // Mask unmatched payloads with shared uniforms: w + (1 - e) * u.
    if !pos_payload.is_empty() {
        let mut not_e = Vec::with_capacity(positions);
        let one = ctx.constant(1);
        for &b in &ind {
            not_e.push(one.wrapping_sub(b));
        }
        for col in pos_payload.iter_mut() {
            let u = ctx.draw_uniform(positions, 64);
            let masked = ctx.mul_many(&not_e, &u)?;
            for (w, &mk) in col.iter_mut().zip(&masked) {
                *w = w.wrapping_add(mk);
            }
        }
    }

    // Gather back to X order with Alice's private placement map.
    let mut cols: Vec<Vec<u64>> = vec![ind];
    cols.extend(pos_payload);
    let table = SharedSeq::from_cols(&cols);
    let xi = cuckoo.map(|ck| ExtendedPermutation::new(ck.position));
    let gathered = ctx.scoped("gather", |ctx| {
        oep_apply(
            ctx,
            holder_x,
            xi.as_ref(),
            positions,
            m,
            OepKind::Permutation,
            &table,
        )
    })?;

    let indicators = gathered.col(0);
    let payload_out: Vec<Vec<u64>> = (0..payloads.len()).map(|c| gathered.col(c + 1)).collect();
    Ok(PsiOutput {
        indicators,
        payloads: payload_out,
    })
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
            let mut ctx = PartyCtx::new(w, 7070, FixedPoint::default());
            f(&mut ctx)
        };
        let (a, b, _) = run_protocol(Mode::InProcess, g, g).unwrap();
        (a, b)
    }

    #[test]
    fn cuckoo_placement_is_total() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for &m in &[1usize, 4, 32, 256, 2048] {
            let keys: Vec<u64> = (0..m).map(|_| rng.random::<u64>() >> 2).collect();
            let ck = build_cuckoo(&keys, cuckoo_slots(m), 99).unwrap();
            for (i, &k) in keys.iter().enumerate() {
                let p = ck.position[i];
                let got = if p < ck.slot_key.len() {
                    ck.slot_key[p]
                } else {
                    ck.stash_key[p - ck.slot_key.len()]
                };
                assert_eq!(got, k);
            }
        }
    }

    #[test]
    fn capacity_is_monotone_and_reasonable() {
        let c1 = bin_capacity(cuckoo_slots(256), 3 * 256);
        let c2 = bin_capacity(cuckoo_slots(2048), 3 * 2048);
        assert!(c1 >= 8 && c1 <= 64, "c1 = {c1}");
        assert!(c2 >= c1, "caps should not shrink with size");
    }

    fn run_psi(
        xs: Vec<u64>,
        ys: Vec<u64>,
        w: Vec<u64>,
        shared_payload: bool,
    ) -> (Vec<u64>, Vec<u64>) {
        let m = xs.len();
        let n = ys.len();
        let ((i0, p0), (i1, p1)) = spmd(move |ctx| {
            let payload = if shared_payload {
                // Share the payload: party 0 holds w - r, party 1 holds r.
                let mut rng = ChaCha12Rng::seed_from_u64(4242);
                let shares: Vec<u64> = w
                    .iter()
                    .map(|&v| {
                        let (s0, s1) = share(v, &mut rng);
                        if ctx.party() == 0 {
                            s0.value
                        } else {
                            s1.value
                        }
                    })
                    .collect();
                PayloadForm::Shared(shares)
            } else {
                PayloadForm::PlainAtHolder(if ctx.party() == 1 {
                    Some(w.clone())
                } else {
                    None
                })
            };
            let out = psi_payload(
                ctx,
                0,
                if ctx.party() == 0 { Some(&xs) } else { None },
                m,
                1,
                if ctx.party() == 1 { Some(&ys) } else { None },
                n,
                &[payload],
                318,
            )?;
            Ok((out.indicators, out.payloads[0].clone()))
        });
        let ind: Vec<u64> = i0
            .iter()
            .zip(&i1)
            .map(|(&a, &b)| a.wrapping_add(b))
            .collect();
        let pay: Vec<u64> = p0
            .iter()
            .zip(&p1)
            .map(|(&a, &b)| a.wrapping_add(b))
            .collect();
        (ind, pay)
    }

    #[test]
    fn spec_example_with_dummy() {
        // X = (3, 7, d1), Y = (7, 2), W(7) = 5, W(2) = 9.
        let (ind, pay) = run_psi(vec![3, 7, (1 << 63) | 12], vec![7, 2], vec![5, 9], false);
        assert_eq!(ind, vec![0, 1, 0]);
        assert_eq!(pay[1], 5);
    }

    #[test]
    fn disjoint_sets_all_zero() {
        let (ind, _) = run_psi(vec![1, 2, 3, 4], vec![10, 11, 12], vec![7, 7, 7], false);
        assert_eq!(ind, vec![0, 0, 0, 0]);
    }

    #[test]
    fn equal_sets_all_one_in_x_order() {
        let (ind, pay) = run_psi(
            vec![31, 17, 99],
            vec![99, 31, 17],
            vec![990, 310, 170],
            false,
        );
        assert_eq!(ind, vec![1, 1, 1]);
        assert_eq!(pay, vec![310, 170, 990]);
    }

    #[test]
    fn random_membership_oracle_plain_and_shared() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        for case in 0..30 {
            let m = rng.random_range(1..=64usize);
            let n = rng.random_range(1..=64usize);
            let mut ys: Vec<u64> = Vec::new();
            while ys.len() < n {
                let y = rng.random_range(0..200u64);
                if !ys.contains(&y) {
                    ys.push(y);
                }
            }
            let w: Vec<u64> = (0..n).map(|_| rng.random_range(0..10_000)).collect();
            let xs: Vec<u64> = (0..m).map(|_| rng.random_range(0..200u64)).collect();
            let shared = case % 2 == 1;
            let (ind, pay) = run_psi(xs.clone(), ys.clone(), w.clone(), shared);
            for i in 0..m {
                let hit = ys.iter().position(|&y| y == xs[i]);
                assert_eq!(ind[i], hit.is_some() as u64, "case {case} i={i}");
                if let Some(j) = hit {
                    assert_eq!(pay[i], w[j], "case {case} i={i}");
                }
            }
        }
    }

    #[test]
    fn duplicate_y_keys_rejected() {
        let res = std::panic::catch_unwind(|| {
            run_psi(vec![1], vec![5, 5], vec![1, 2], false);
        });
        assert!(res.is_err());
    }

    #[test]
    fn transcript_depends_only_on_sizes() {
        let run = |xs: Vec<u64>, ys: Vec<u64>, w: Vec<u64>| {
            let m = xs.len();
            let n = ys.len();
            let g = move |wire: &mut Wire| {
                let mut ctx = PartyCtx::new(wire, 3, FixedPoint::default());
                ctx.scoped("psi", |ctx| {
                    psi_payload(
                        ctx,
                        0,
                        if ctx.party() == 0 { Some(&xs) } else { None },
                        m,
                        1,
                        if ctx.party() == 1 { Some(&ys) } else { None },
                        n,
                        &[PayloadForm::PlainAtHolder(if ctx.party() == 1 {
                            Some(w.clone())
                        } else {
                            None
                        })],
                        55,
                    )
                })
                .map(|_| ())
            };
            let (_, _, _, shapes) =
                crate::transport::run_protocol_traced(Mode::InProcess, g.clone(), g).unwrap();
            shapes
        };
        let s1 = run(vec![1, 2, 3], vec![4, 5], vec![1, 1]);
        let s2 = run(vec![7, 7, 9], vec![9, 9999], vec![2, 3]);
        assert_eq!(s1, s2);
    }
}
