//! Oblivious extended permutations.
//!
//! One party (the controller) holds a private map `xi: [N] -> [M]` and both
//! parties hold a shared length-M sequence; the output is a freshly shared
//! length-N sequence with `y[i] = x[xi(i)]`. The construction is a Benes
//! permutation network whose switch controls are private to the controller
//! (each switch costs one Beaver multiplication per column), plus a
//! doubling copy stage for the duplicating part of `xi`. Total cost
//! `O(M log M + N log N)` gates; the message trace depends only on
//! `(M, N, kind)`.

use crate::oblivious::SharedSeq;
use crate::sharing::PartyCtx;
use crate::Result;

/// A private extended-permutation table held by one party.
#[derive(Clone, Debug)]
pub struct ExtendedPermutation {
    /// `targets[i] = xi(i)`: index into the source sequence for output `i`.
    pub targets: Vec<usize>,
}

impl ExtendedPermutation {
    pub fn new(targets: Vec<usize>) -> Self {
        ExtendedPermutation { targets }
    }

    pub fn identity(n: usize) -> Self {
        ExtendedPermutation {
            targets: (0..n).collect(),
        }
    }

    pub fn validate(&self, m: usize) -> crate::Result<()> {
        if self.targets.iter().any(|&t| t >= m) {
            return Err(crate::Error::InvalidParam(format!(
                "extended permutation target out of range (source length {m})"
            )));
        }
        Ok(())
    }
}

/// Publicly known shape of the map, chosen by the call site; never derived
/// from data, so the transcript cannot leak whether `xi` duplicates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OepKind {
    /// `xi` is injective (a permutation after padding); copy stage skipped.
    Permutation,
    /// Arbitrary map; full spread-copy-permute pipeline.
    General,
}

/// One switch: positions `(a, b)`, swapped iff the controller's bit is set.
/// Positions are re-derived publicly by [`layer_shapes`] during evaluation;
/// they are kept here so the router can be checked against them.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(not(test), allow(dead_code))]
struct Switch {
    a: usize,
    b: usize,
    bit: bool,
}

/// Benes network as layers of independent switches.
#[derive(Clone, Debug, Default)]
struct BenesNet {
    layers: Vec<Vec<Switch>>,
}

/// Compute switch bits realizing `perm` (gather convention:
/// `out[i] = in[perm[i]]`) on `n = 2^k` wires, pairing `(i, i + n/2)`.
fn route_benes(perm: &[usize]) -> BenesNet {
    let n = perm.len();
    assert!(n.is_power_of_two());
    let depth = if n <= 1 {
        0
    } else {
        2 * n.trailing_zeros() as usize - 1
    };
    let mut net = BenesNet {
        layers: vec![Vec::new(); depth],
    };
    if n > 1 {
        route_rec(perm, 0, 0, &mut net);
    }
    net
}

/// Recursive router. `base` is the offset of this subnetwork's wires in the
/// global index space; `layer` is the index of its first switch layer.
fn route_rec(perm: &[usize], base: usize, layer: usize, net: &mut BenesNet) {
    let n = perm.len();
    if n == 1 {
        return;
    }
    if n == 2 {
        net.layers[layer].push(Switch {
            a: base,
            b: base + 1,
            bit: perm[0] == 1,
        });
        return;
    }
    let half = n / 2;
    // inv[input] = output position.
    let mut inv = vec![0usize; n];
    for (o, &i) in perm.iter().enumerate() {
        inv[i] = o;
    }
    // Subnet assignment per output index: true = top subnet. Walking a
    // constraint cycle keeps the assignment: the partner output's input
    // forces its own pair partner back into the starting subnet.
    let mut out_top = vec![None::<bool>; n];
    for start in 0..n {
        if out_top[start].is_some() {
            continue;
        }
        let mut o = start;
        while out_top[o].is_none() {
            out_top[o] = Some(true);
            let partner_o = (o + half) % n;
            out_top[partner_o] = Some(false);
            let partner_in = (perm[partner_o] + half) % n;
            o = inv[partner_in];
        }
    }
    // First-layer bits: input pair (i, i+half). bit = 0 routes input i to
    // the top subnet at slot i.
    let mut top_perm = vec![0usize; half];
    let mut bot_perm = vec![0usize; half];
    for o in 0..n {
        let top = out_top[o].unwrap();
        let i = perm[o];
        let out_slot = o % half;
        let in_slot = i % half;
        if top {
            top_perm[out_slot] = in_slot;
        } else {
            bot_perm[out_slot] = in_slot;
        }
    }
    for p in 0..half {
        // Input pair p: the input at index p goes top iff out_top[inv[p]].
        let left_in_top = out_top[inv[p]].unwrap();
        net.layers[layer].push(Switch {
            a: base + p,
            b: base + p + half,
            bit: !left_in_top,
        });
    }
    let last_layer = layer + 2 * (n.trailing_zeros() as usize) - 2;
    for p in 0..half {
        // Output pair p: output at index p is served by top iff out_top[p].
        let left_out_top = out_top[p].unwrap();
        net.layers[last_layer].push(Switch {
            a: base + p,
            b: base + p + half,
            bit: !left_out_top,
        });
    }
    route_rec(&top_perm, base, layer + 1, net);
    route_rec(&bot_perm, base + half, layer + 1, net);
}

/// Plaintext application of a Benes net (router self-check).
#[cfg(test)]
fn apply_benes_plain<T: Copy>(net: &BenesNet, xs: &mut [T]) {
    for layer in &net.layers {
        for sw in layer {
            if sw.bit {
                xs.swap(sw.a, sw.b);
            }
        }
    }
}

/// Evaluate the network on a shared sequence. Non-controller parties know
/// only the public layer shapes; control bits enter as the controller's
/// private share of a 0/1 value.
fn eval_benes(
    ctx: &mut PartyCtx,
    controller: u8,
    net: Option<&BenesNet>,
    seq: &mut SharedSeq,
    n: usize,
) -> Result<()> {
    let width = seq.width;
    let depth = if n <= 1 {
        0
    } else {
        2 * n.trailing_zeros() as usize - 1
    };
    // Public layer shapes for a full Benes on n wires: every layer ell
    // touches pairs (a, a + stride) per the recursive construction; both
    // parties enumerate them identically.
    let shapes = layer_shapes(n, depth);
    let is_ctl = ctx.party() == controller;
    for (ell, pairs) in shapes.iter().enumerate() {
        let bits: Vec<bool> = if is_ctl {
            let layer = &net.unwrap().layers[ell];
            // Switches are generated in the same order as layer_shapes.
            debug_assert_eq!(layer.len(), pairs.len());
            layer.iter().map(|s| s.bit).collect()
        } else {
            vec![false; pairs.len()]
        };
        // One batched multiplication: z = c * (v - u) per column.
        let mut c_flat = Vec::with_capacity(pairs.len() * width);
        let mut d_flat = Vec::with_capacity(pairs.len() * width);
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let c = if is_ctl { bits[k] as u64 } else { 0 };
            for col in 0..width {
                let u = seq.data[a * width + col];
                let v = seq.data[b * width + col];
                c_flat.push(c);
                d_flat.push(v.wrapping_sub(u));
            }
        }
        let z = ctx.mul_many(&c_flat, &d_flat)?;
        for (k, &(a, b)) in pairs.iter().enumerate() {
            for col in 0..width {
                let zi = z[k * width + col];
                seq.data[a * width + col] = seq.data[a * width + col].wrapping_add(zi);
                seq.data[b * width + col] = seq.data[b * width + col].wrapping_sub(zi);
            }
        }
    }
    Ok(())
}

/// Public pair layout per layer of a Benes network on `n = 2^k` wires,
/// matching the emission order of [`route_rec`].
fn layer_shapes(n: usize, depth: usize) -> Vec<Vec<(usize, usize)>> {
    let mut shapes = vec![Vec::new(); depth];
    if n > 1 {
        shapes_rec(n, 0, 0, &mut shapes);
    }
    shapes
}

fn shapes_rec(n: usize, base: usize, layer: usize, shapes: &mut Vec<Vec<(usize, usize)>>) {
    if n == 1 {
        return;
    }
    if n == 2 {
        shapes[layer].push((base, base + 1));
        return;
    }
    let half = n / 2;
    for p in 0..half {
        shapes[layer].push((base + p, base + p + half));
    }
    let last_layer = layer + 2 * (n.trailing_zeros() as usize) - 2;
    for p in 0..half {
        shapes[last_layer].push((base + p, base + p + half));
    }
    shapes_rec(half, base, layer + 1, shapes);
    shapes_rec(half, base + half, layer + 1, shapes);
}

/// Apply a controller-held extended permutation to a shared sequence.
///
/// `m` is the public source length; the output has `xi.targets.len()` rows
/// (known to both parties as `out_len`).
pub fn oep_apply(
    ctx: &mut PartyCtx,
    controller: u8,
    xi: Option<&ExtendedPermutation>,
    m: usize,
    out_len: usize,
    kind: OepKind,
    xs: &SharedSeq,
) -> Result<SharedSeq> {
    assert_eq!(xs.rows(), m);
    let is_ctl = ctx.party() == controller;
    if is_ctl {
        let xi = xi.expect("controller must supply xi");
        assert_eq!(xi.targets.len(), out_len);
        xi.validate(m)?;
        if kind == OepKind::Permutation {
            // Must be injective for the single-network path.
            let mut seen = vec![false; m];
            for &t in &xi.targets {
                assert!(!seen[t], "OepKind::Permutation requires injective xi");
                seen[t] = true;
            }
        }
    }
    {
        let stage = ctx.wire.stage().to_string();
        ctx.wire.ledger.stats_mut(&stage).oep_calls += 1;
    }
    let n = m.max(out_len).max(2).next_power_of_two();
    let mut seq = SharedSeq::new(xs.width, n);
    seq.data[..xs.data.len()].copy_from_slice(&xs.data);

    match kind {
        OepKind::Permutation => {
            // Pad xi to a bijection on n and route one network.
            let net = if is_ctl {
                let xi = xi.unwrap();
                let mut perm = vec![usize::MAX; n];
                let mut used = vec![false; n];
                for (o, &t) in xi.targets.iter().enumerate() {
                    perm[o] = t;
                    used[t] = true;
                }
                let mut free = (0..n).filter(|&i| !used[i]);
                for slot in perm.iter_mut() {
                    if *slot == usize::MAX {
                        *slot = free.next().unwrap();
                    }
                }
                Some(route_benes(&perm))
            } else {
                None
            };
            eval_benes(ctx, controller, net.as_ref(), &mut seq, n)?;
            seq.truncate_rows(out_len);
            Ok(seq)
        }
        OepKind::General => {
            // Spread: place each used source at the start of its block of
            // copies; blocks tile [0, out_len).
            let (spread_net, dist_bits, gather_net) = if is_ctl {
                let xi = xi.unwrap();
                let mut counts = vec![0usize; m];
                for &t in &xi.targets {
                    counts[t] += 1;
                }
                let mut starts = vec![0usize; m];
                let mut acc = 0usize;
                for j in 0..m {
                    starts[j] = acc;
                    acc += counts[j];
                }
                debug_assert_eq!(acc, out_len);
                // perm1: output slot -> source index.
                let mut perm1 = vec![usize::MAX; n];
                let mut placed = vec![false; m];
                for j in 0..m {
                    if counts[j] > 0 {
                        perm1[starts[j]] = j;
                        placed[j] = true;
                    }
                }
                let mut free_src = (0..n).filter(|&j| j >= m || !placed[j]);
                for slot in perm1.iter_mut() {
                    if *slot == usize::MAX {
                        *slot = free_src.next().unwrap();
                    }
                }
                // Copy distance of position i inside its source block.
                let mut dist = vec![0usize; n];
                {
                    let mut j = 0usize;
                    for (i, d) in dist.iter_mut().enumerate().take(out_len) {
                        while counts[j] == 0 || i >= starts[j] + counts[j] {
                            j += 1;
                        }
                        *d = i - starts[j];
                    }
                }
                let passes = copy_passes(out_len);
                let mut bits = vec![Vec::new(); passes];
                for (k, pass_bits) in bits.iter_mut().enumerate() {
                    let stride = 1usize << k;
                    for i in stride..out_len {
                        pass_bits.push((dist[i] >> k) & 1 == 1);
                    }
                }
                // perm2: final position -> block slot.
                let mut next_slot = starts;
                let mut perm2 = vec![usize::MAX; n];
                for (o, &t) in xi.targets.iter().enumerate() {
                    perm2[o] = next_slot[t];
                    next_slot[t] += 1;
                }
                let mut used = vec![false; n];
                for &s in &perm2 {
                    if s != usize::MAX {
                        used[s] = true;
                    }
                }
                let mut free = (0..n).filter(|&i| !used[i]);
                for slot in perm2.iter_mut() {
                    if *slot == usize::MAX {
                        *slot = free.next().unwrap();
                    }
                }
                (
                    Some(route_benes(&perm1)),
                    Some(bits),
                    Some(route_benes(&perm2)),
                )
            } else {
                (None, None, None)
            };

            eval_benes(ctx, controller, spread_net.as_ref(), &mut seq, n)?;
            copy_stage(ctx, controller, dist_bits.as_ref(), &mut seq, out_len)?;
            eval_benes(ctx, controller, gather_net.as_ref(), &mut seq, n)?;
            seq.truncate_rows(out_len);
            Ok(seq)
        }
    }
}

fn copy_passes(out_len: usize) -> usize {
    if out_len <= 1 {
        0
    } else {
        usize::BITS as usize - (out_len - 1).leading_zeros() as usize
    }
}

/// Doubling copy stage: after pass k, each position holds the value from
/// `dist mod 2^(k+1)` slots back; controls are the controller's bits of the
/// block-offset distances.
fn copy_stage(
    ctx: &mut PartyCtx,
    controller: u8,
    bits: Option<&Vec<Vec<bool>>>,
    seq: &mut SharedSeq,
    out_len: usize,
) -> Result<()> {
    let width = seq.width;
    let passes = copy_passes(out_len);
    let is_ctl = ctx.party() == controller;
    for k in 0..passes {
        let stride = 1usize << k;
        let count = out_len - stride;
        let mut c_flat = Vec::with_capacity(count * width);
        let mut d_flat = Vec::with_capacity(count * width);
        for idx in 0..count {
            let i = stride + idx;
            let c = if is_ctl {
                bits.unwrap()[k][idx] as u64
            } else {
                0
            };
            for col in 0..width {
                let cur = seq.data[i * width + col];
                let src = seq.data[(i - stride) * width + col];
                c_flat.push(c);
                d_flat.push(src.wrapping_sub(cur));
            }
        }
        let z = ctx.mul_many(&c_flat, &d_flat)?;
        // Writes go to a fresh buffer: all reads are from pass k-1 state.
        let mut next = seq.data.clone();
        for idx in 0..count {
            let i = stride + idx;
            for col in 0..width {
                next[i * width + col] =
                    seq.data[i * width + col].wrapping_add(z[idx * width + col]);
            }
        }
        seq.data = next;
    }
    Ok(())
}

/// Random shuffle: two extended permutations, one private to each party.
/// Neither party knows the composition.
pub fn random_shuffle(ctx: &mut PartyCtx, xs: &SharedSeq) -> Result<SharedSeq> {
    use rand::seq::SliceRandom;
    let n = xs.rows();
    if n <= 1 {
        return Ok(xs.clone());
    }
    let mut out = xs.clone();
    for controller in [0u8, 1u8] {
        let xi = if ctx.party() == controller {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ctx.rng);
            Some(ExtendedPermutation::new(perm))
        } else {
            None
        };
        out = oep_apply(
            ctx,
            controller,
            xi.as_ref(),
            n,
            n,
            OepKind::Permutation,
            &out,
        )?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::FixedPoint;
    use crate::sharing::share;
    use crate::transport::{run_protocol, Mode, Wire};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn benes_router_realizes_permutations() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for &n in &[2usize, 4, 8, 16, 64, 256] {
            for _ in 0..20 {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let net = route_benes(&perm);
                let mut xs: Vec<usize> = (0..n).collect();
                apply_benes_plain(&net, &mut xs);
                let want: Vec<usize> = (0..n).map(|i| perm[i]).collect();
                assert_eq!(xs, want, "n={n} perm={perm:?}");
            }
        }
    }

    #[test]
    fn benes_layer_order_matches_shapes() {
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        for &n in &[4usize, 16, 128] {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let net = route_benes(&perm);
            let shapes = layer_shapes(n, net.layers.len());
            for (ell, layer) in net.layers.iter().enumerate() {
                let got: Vec<(usize, usize)> = layer.iter().map(|s| (s.a, s.b)).collect();
                assert_eq!(got, shapes[ell], "layer {ell} of n={n}");
            }
        }
    }

    fn spmd<T: Send>(f: impl Fn(&mut PartyCtx) -> Result<T> + Send + Sync) -> (T, T) {
        let g = |w: &mut Wire| {
            let mut ctx = PartyCtx::new(w, 2024, FixedPoint::default());
            f(&mut ctx)
        };
        let (a, b, _) = run_protocol(Mode::InProcess, g, g).unwrap();
        (a, b)
    }

    fn share_seq(vals: &[u64], party: u8, seed: u64) -> SharedSeq {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data: Vec<u64> = vals
            .iter()
            .map(|&v| {
                let (s0, s1) = share(v, &mut rng);
                if party == 0 {
                    s0.value
                } else {
                    s1.value
                }
            })
            .collect();
        SharedSeq::from_rows(1, data)
    }

    fn reconstruct_seq(a: &SharedSeq, b: &SharedSeq) -> Vec<u64> {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| x.wrapping_add(y))
            .collect()
    }

    #[test]
    fn oep_identity_is_identity() {
        let vals: Vec<u64> = (100..108).collect();
        let vals2 = vals.clone();
        let (r0, r1) = spmd(move |ctx| {
            let xs = share_seq(&vals2, ctx.party(), 7);
            let xi = if ctx.party() == 0 {
                Some(ExtendedPermutation::identity(vals2.len()))
            } else {
                None
            };
            oep_apply(
                ctx,
                0,
                xi.as_ref(),
                vals2.len(),
                vals2.len(),
                OepKind::General,
                &xs,
            )
        });
        assert_eq!(reconstruct_seq(&r0, &r1), vals);
    }

    #[test]
    fn oep_matches_spec_example() {
        // M=3, xs=(10,20,30), xi=(2,2,1,3) one-based -> (20,20,10,30).
        let vals = vec![10u64, 20, 30];
        let (r0, r1) = spmd(move |ctx| {
            let xs = share_seq(&[10, 20, 30], ctx.party(), 8);
            let xi = if ctx.party() == 0 {
                Some(ExtendedPermutation::new(vec![1, 1, 0, 2]))
            } else {
                None
            };
            oep_apply(ctx, 0, xi.as_ref(), 3, 4, OepKind::General, &xs)
        });
        let _ = vals;
        assert_eq!(reconstruct_seq(&r0, &r1), vec![20, 20, 10, 30]);
    }

    #[test]
    fn oep_matches_gather_oracle_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        for case in 0..100 {
            let m = rng.random_range(1..=256usize);
            let n = rng.random_range(1..=256usize);
            let vals: Vec<u64> = (0..m).map(|_| rng.random::<u64>()).collect();
            let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
            let want: Vec<u64> = targets.iter().map(|&t| vals[t]).collect();
            let (vals2, targets2) = (vals.clone(), targets.clone());
            let controller = (case % 2) as u8;
            let (r0, r1) = spmd(move |ctx| {
                let xs = share_seq(&vals2, ctx.party(), 100 + case);
                let xi = if ctx.party() == controller {
                    Some(ExtendedPermutation::new(targets2.clone()))
                } else {
                    None
                };
                oep_apply(
                    ctx,
                    controller,
                    xi.as_ref(),
                    vals2.len(),
                    targets2.len(),
                    OepKind::General,
                    &xs,
                )
            });
            assert_eq!(reconstruct_seq(&r0, &r1), want, "case {case}");
        }
    }

    #[test]
    fn shuffle_preserves_multiset_and_length_one_is_fixed() {
        let mut rng = ChaCha12Rng::seed_from_u64(66);
        for case in 0..100 {
            let n = rng.random_range(1..=64usize);
            let vals: Vec<u64> = (0..n).map(|_| rng.random_range(0..1000)).collect();
            let vals2 = vals.clone();
            let (r0, r1) = spmd(move |ctx| {
                let xs = share_seq(&vals2, ctx.party(), 200 + case);
                random_shuffle(ctx, &xs)
            });
            let mut got = reconstruct_seq(&r0, &r1);
            let mut want = vals.clone();
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want, "case {case}");
            if n == 1 {
                assert_eq!(got, vals);
            }
        }
    }

    #[test]
    fn shuffle_with_identity_second_leg_equals_first_leg() {
        // With party 1's permutation fixed to identity, the composition is
        // party 0's permutation alone.
        let vals: Vec<u64> = (0..16).map(|i| 1000 + i).collect();
        let vals2 = vals.clone();
        let (r0, r1) = spmd(move |ctx| {
            let n = vals2.len();
            let xs = share_seq(&vals2, ctx.party(), 303);
            // Leg 1: party 0 applies a known permutation (reverse).
            let xi0 = if ctx.party() == 0 {
                Some(ExtendedPermutation::new((0..n).rev().collect()))
            } else {
                None
            };
            let mid = oep_apply(ctx, 0, xi0.as_ref(), n, n, OepKind::Permutation, &xs)?;
            // Leg 2: party 1 applies identity.
            let xi1 = if ctx.party() == 1 {
                Some(ExtendedPermutation::identity(n))
            } else {
                None
            };
            oep_apply(ctx, 1, xi1.as_ref(), n, n, OepKind::Permutation, &mid)
        });
        let got = reconstruct_seq(&r0, &r1);
        let want: Vec<u64> = vals.iter().rev().copied().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn oep_transcript_depends_only_on_shape() {
        let run = |vals: Vec<u64>, targets: Vec<usize>| {
            let g = move |w: &mut Wire| {
                let mut ctx = PartyCtx::new(w, 5, FixedPoint::default());
                ctx.scoped("oep", |ctx| {
                    let xs = share_seq(&vals, ctx.party(), 17);
                    let xi = if ctx.party() == 0 {
                        Some(ExtendedPermutation::new(targets.clone()))
                    } else {
                        None
                    };
                    oep_apply(
                        ctx,
                        0,
                        xi.as_ref(),
                        vals.len(),
                        targets.len(),
                        OepKind::General,
                        &xs,
                    )
                })
                .map(|_| ())
            };
            let (_, _, _, shapes) =
                crate::transport::run_protocol_traced(Mode::InProcess, g.clone(), g).unwrap();
            shapes
        };
        let s1 = run((0..20).collect(), vec![3; 31]);
        let s2 = run((50..70).collect(), (0..31).map(|i| i % 20).collect());
        assert_eq!(s1, s2);
    }
}
