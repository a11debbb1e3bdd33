//! XOR-shared Boolean circuits over packed 64-bit words.
//!
//! Each element of a batch occupies one word lane; a single AND layer over
//! the whole batch costs one communication round. The adder is a
//! Kogge-Stone carry prefix (6 levels), so share conversion and comparison
//! run in a round count logarithmic in the word width.

use crate::sharing::PartyCtx;
use crate::Result;

/// XOR-shared bitwise sum of `x + y mod 2^64`, elementwise over the batch.
///
/// Used to convert arithmetic shares to Boolean shares: each party feeds
/// its own additive share as a private bit vector.
pub fn add_words(ctx: &mut PartyCtx, xs: &[u64], ys: &[u64]) -> Result<Vec<u64>> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let p0: Vec<u64> = (0..n).map(|i| xs[i] ^ ys[i]).collect();
    let mut g = ctx.and_words(xs, ys)?;
    let mut p = p0.clone();
    let mut k = 1u32;
    while k < 64 {
        // One batched AND layer computes both prefix updates:
        //   g' = g ^ (p & (g << k));  p' = p & (p << k)
        let mut lhs = Vec::with_capacity(2 * n);
        let mut rhs = Vec::with_capacity(2 * n);
        for i in 0..n {
            lhs.push(p[i]);
            rhs.push(g[i] << k);
        }
        for i in 0..n {
            lhs.push(p[i]);
            rhs.push(p[i] << k);
        }
        let t = ctx.and_words(&lhs, &rhs)?;
        for i in 0..n {
            g[i] ^= t[i];
            p[i] = t[n + i];
        }
        k <<= 1;
    }
    // Carry into bit i is the prefix generate of bits [0, i).
    Ok((0..n).map(|i| p0[i] ^ (g[i] << 1)).collect())
}

/// Convert arithmetic shares to XOR-shared bit vectors.
pub fn a2b(ctx: &mut PartyCtx, xs: &[u64]) -> Result<Vec<u64>> {
    let zeros = vec![0u64; xs.len()];
    let (a, b) = if ctx.is_p0() {
        (xs.to_vec(), zeros)
    } else {
        (zeros, xs.to_vec())
    };
    add_words(ctx, &a, &b)
}

/// Unsigned `x < y` on XOR-shared bit vectors; returns XOR-shared bits in
/// lane bit 0. Exact over the full 64-bit domain.
///
/// `x < y` iff `x + !y + 1` does not carry out; with generate/propagate of
/// `(x, !y)` and carry-in 1 the carry-out is `G ^ P`, exclusive by
/// construction.
pub fn lt_words(ctx: &mut PartyCtx, xs: &[u64], ys: &[u64]) -> Result<Vec<u64>> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let ny = ctx.not_words(ys);
    let p0: Vec<u64> = (0..n).map(|i| xs[i] ^ ny[i]).collect();
    let mut g = ctx.and_words(xs, &ny)?;
    let mut p = p0;
    let mut k = 1u32;
    while k < 64 {
        let mut lhs = Vec::with_capacity(2 * n);
        let mut rhs = Vec::with_capacity(2 * n);
        for i in 0..n {
            lhs.push(p[i]);
            rhs.push(g[i] << k);
        }
        for i in 0..n {
            lhs.push(p[i]);
            rhs.push(p[i] << k);
        }
        let t = ctx.and_words(&lhs, &rhs)?;
        for i in 0..n {
            g[i] ^= t[i];
            p[i] = t[n + i];
        }
        k <<= 1;
    }
    let mut out: Vec<u64> = (0..n).map(|i| ((g[i] ^ p[i]) >> 63) & 1).collect();
    if ctx.is_p0() {
        for o in out.iter_mut() {
            *o ^= 1;
        }
    }
    Ok(out)
}

/// XOR-shared `x == 0` test: OR-fold all bits, negate. Bit 0 of each lane.
pub fn is_zero_words(ctx: &mut PartyCtx, xs: &[u64]) -> Result<Vec<u64>> {
    let n = xs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut v = xs.to_vec();
    let mut k = 32u32;
    while k >= 1 {
        // OR via a ^ b ^ (a & b) on the folded halves.
        let shifted: Vec<u64> = v.iter().map(|&w| w >> k).collect();
        let ands = ctx.and_words(&v, &shifted)?;
        for i in 0..n {
            v[i] = v[i] ^ shifted[i] ^ ands[i];
        }
        if k == 1 {
            break;
        }
        k >>= 1;
    }
    let mut out: Vec<u64> = v.iter().map(|&w| w & 1).collect();
    if ctx.is_p0() {
        for o in out.iter_mut() {
            *o ^= 1;
        }
    }
    Ok(out)
}

/// Flip the sign bit of Boolean-shared words (maps signed order to
/// unsigned order); local.
pub fn bias_signed(ctx: &PartyCtx, xs: &mut [u64]) {
    if ctx.is_p0() {
        for x in xs.iter_mut() {
            *x ^= 1 << 63;
        }
    }
}

impl PartyCtx<'_> {
    /// Batched unsigned/signed strict comparison on arithmetic shares;
    /// returns arithmetic 0/1 shares.
    pub fn lt_many(&mut self, xs: &[u64], ys: &[u64], signed: bool) -> Result<Vec<u64>> {
        let stage = self.wire.stage().to_string();
        self.wire.ledger.stats_mut(&stage).comparisons += xs.len() as u64;
        let mut xb = a2b(self, xs)?;
        let mut yb = a2b(self, ys)?;
        if signed {
            bias_signed(self, &mut xb);
            bias_signed(self, &mut yb);
        }
        let bits = lt_words(self, &xb, &yb)?;
        self.b2a_bits(&bits)
    }

    /// Batched comparison against one public constant.
    pub fn lt_const_many(&mut self, xs: &[u64], k: u64, signed: bool) -> Result<Vec<u64>> {
        let stage = self.wire.stage().to_string();
        self.wire.ledger.stats_mut(&stage).comparisons += xs.len() as u64;
        let mut xb = a2b(self, xs)?;
        let mut kb = vec![self.constant(k); xs.len()];
        if signed {
            bias_signed(self, &mut xb);
            bias_signed(self, &mut kb);
        }
        let bits = lt_words(self, &xb, &kb)?;
        self.b2a_bits(&bits)
    }

    /// Batched `const < x`.
    pub fn gt_const_many(&mut self, xs: &[u64], k: u64, signed: bool) -> Result<Vec<u64>> {
        let stage = self.wire.stage().to_string();
        self.wire.ledger.stats_mut(&stage).comparisons += xs.len() as u64;
        let mut xb = a2b(self, xs)?;
        let mut kb = vec![self.constant(k); xs.len()];
        if signed {
            bias_signed(self, &mut xb);
            bias_signed(self, &mut kb);
        }
        let bits = lt_words(self, &kb, &xb)?;
        self.b2a_bits(&bits)
    }

    /// Batched equality on arithmetic shares via the zero test of `x - y`;
    /// one adder circuit per element. Returns arithmetic 0/1 shares.
    pub fn eq_many(&mut self, xs: &[u64], ys: &[u64]) -> Result<Vec<u64>> {
        let stage = self.wire.stage().to_string();
        self.wire.ledger.stats_mut(&stage).comparisons += xs.len() as u64;
        let diff: Vec<u64> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| x.wrapping_sub(y))
            .collect();
        let db = a2b(self, &diff)?;
        let bits = is_zero_words(self, &db)?;
        self.b2a_bits(&bits)
    }

    /// Spec-level single comparison returning an arithmetic 0/1 share.
    pub fn compare_shared(&mut self, x: u64, y: u64, rel: crate::sharing::Rel) -> Result<u64> {
        let out = match rel {
            crate::sharing::Rel::Eq => self.eq_many(&[x], &[y])?,
            crate::sharing::Rel::Lt => self.lt_many(&[x], &[y], false)?,
        };
        Ok(out[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::FixedPoint;
    use crate::sharing::share;
    use crate::transport::{run_protocol, Mode, Wire};
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn spmd<T: Send>(f: impl Fn(&mut PartyCtx) -> Result<T> + Send + Sync) -> (T, T) {
        let g = |w: &mut Wire| {
            let mut ctx = PartyCtx::new(w, 1234, FixedPoint::default());
            f(&mut ctx)
        };
        let (a, b, _) = run_protocol(Mode::InProcess, g, g).unwrap();
        (a, b)
    }

    fn shared_vec(vals: &[u64], party: u8, seed: u64) -> Vec<u64> {
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

    #[test]
    fn adder_matches_wrapping_add() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let xs: Vec<u64> = (0..200).map(|_| rng.next_u64()).collect();
        let ys: Vec<u64> = (0..200).map(|_| rng.next_u64()).collect();
        let (r0, r1) = spmd(|ctx| {
            let a = if ctx.is_p0() {
                xs.clone()
            } else {
                vec![0; xs.len()]
            };
            let b = if ctx.is_p0() {
                vec![0; ys.len()]
            } else {
                ys.clone()
            };
            add_words(ctx, &a, &b)
        });
        for i in 0..xs.len() {
            assert_eq!(r0[i] ^ r1[i], xs[i].wrapping_add(ys[i]));
        }
    }

    #[test]
    fn a2b_recovers_bits() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let vals: Vec<u64> = (0..100).map(|_| rng.next_u64()).collect();
        let vals2 = vals.clone();
        let (r0, r1) = spmd(move |ctx| {
            let mine = shared_vec(&vals2, ctx.party(), 77);
            a2b(ctx, &mine)
        });
        for i in 0..vals.len() {
            assert_eq!(r0[i] ^ r1[i], vals[i]);
        }
    }

    #[test]
    fn comparisons_match_plaintext() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mut xs: Vec<u64> = (0..500).map(|_| rng.next_u64()).collect();
        let mut ys: Vec<u64> = (0..500).map(|_| rng.next_u64()).collect();
        // Include edge values and equal pairs.
        xs.extend_from_slice(&[0, u64::MAX, 5, 9, 1 << 63]);
        ys.extend_from_slice(&[0, u64::MAX, 5, 9, (1 << 63) - 1]);
        let (xs2, ys2) = (xs.clone(), ys.clone());
        let ((lt0, eq0), (lt1, eq1)) = spmd(move |ctx| {
            let a = shared_vec(&xs2, ctx.party(), 31);
            let b = shared_vec(&ys2, ctx.party(), 32);
            let lt = ctx.lt_many(&a, &b, false)?;
            let eq = ctx.eq_many(&a, &b)?;
            Ok((lt, eq))
        });
        for i in 0..xs.len() {
            let lt = lt0[i].wrapping_add(lt1[i]);
            let eq = eq0[i].wrapping_add(eq1[i]);
            assert_eq!(lt, (xs[i] < ys[i]) as u64, "lt at {i}");
            assert_eq!(eq, (xs[i] == ys[i]) as u64, "eq at {i}");
        }
    }

    #[test]
    fn signed_comparison_uses_two_complement_order() {
        let fp = FixedPoint::default();
        let xs: Vec<u64> = vec![fp.encode(-3.5), fp.encode(2.0), fp.encode(-1.0)];
        let ys: Vec<u64> = vec![fp.encode(2.25), fp.encode(-7.0), fp.encode(-1.0)];
        let expected = [1u64, 0, 0];
        let (xs2, ys2) = (xs.clone(), ys.clone());
        let (r0, r1) = spmd(move |ctx| {
            let a = shared_vec(&xs2, ctx.party(), 41);
            let b = shared_vec(&ys2, ctx.party(), 42);
            ctx.lt_many(&a, &b, true)
        });
        for i in 0..xs.len() {
            assert_eq!(r0[i].wrapping_add(r1[i]), expected[i]);
        }
    }

    #[test]
    fn trivial_comparison_examples() {
        // x = y = 9 EQ -> 1; 3 < 5 -> 1; 5 < 3 -> 0.
        let (r0, r1) = spmd(|ctx| {
            let nine = ctx.constant(9);
            let three = ctx.constant(3);
            let five = ctx.constant(5);
            let eq = ctx.compare_shared(nine, nine, crate::sharing::Rel::Eq)?;
            let lt1 = ctx.compare_shared(three, five, crate::sharing::Rel::Lt)?;
            let lt2 = ctx.compare_shared(five, three, crate::sharing::Rel::Lt)?;
            Ok(vec![eq, lt1, lt2])
        });
        let vals: Vec<u64> = r0
            .iter()
            .zip(&r1)
            .map(|(&a, &b)| a.wrapping_add(b))
            .collect();
        assert_eq!(vals, vec![1, 1, 0]);
    }

    #[test]
    fn comparison_transcript_is_value_independent() {
        // Same operand count, different values: identical per-stage shapes.
        let run = |vals: Vec<u64>| {
            let g = move |w: &mut Wire| {
                let mut ctx = PartyCtx::new(w, 5, FixedPoint::default());
                ctx.scoped("cmp", |ctx| {
                    let a = shared_vec(&vals, ctx.party(), 51);
                    let b = shared_vec(&vals, ctx.party(), 52);
                    let _ = ctx.lt_many(&a, &b, false)?;
                    let _ = ctx.mul_many(&a, &b)?;
                    Ok(())
                })
            };
            let (_, _, _, shapes) =
                crate::transport::run_protocol_traced(Mode::InProcess, g.clone(), g).unwrap();
            shapes
        };
        let s1 = run((0..64).collect());
        let s2 = run((1000..1064).map(|x| x * 977).collect());
        assert_eq!(s1, s2);
    }
}
