//! Additive and XOR secret sharing over `Z_{2^64}`, the correlated
//! randomness dealer, and the per-party execution context.
//!
//! A value `v` is arithmetically shared as `v = (s0 + s1) mod 2^64`; bit
//! vectors are XOR-shared as packed `u64` words. Multiplication consumes one
//! Beaver triple and one simultaneous masked-value exchange. Comparisons are
//! evaluated as XOR-shared adder/borrow circuits (see [`boolean`]); the
//! resulting round counts are reported honestly in the ledger rather than
//! hidden behind a constant-round garbling assumption.

pub mod boolean;
pub mod fixed;

use crate::ledger::fnv1a;
use crate::ring::{bytes_to_words, words_to_bytes, FixedPoint};
use crate::transport::Wire;
use crate::{par, Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Arithmetic share of one ring element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArithShare {
    pub party: u8,
    pub value: u64,
}

/// XOR share of a bit vector packed into one 64-bit word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoolShare {
    pub party: u8,
    pub bits: u64,
}

/// Split `v` into two uniformly distributed additive shares.
pub fn share(v: u64, rng: &mut impl RngCore) -> (ArithShare, ArithShare) {
    let s0 = rng.next_u64();
    (
        ArithShare {
            party: 0,
            value: s0,
        },
        ArithShare {
            party: 1,
            value: v.wrapping_sub(s0),
        },
    )
}

/// Recombine two arithmetic shares.
pub fn reconstruct(s0: &ArithShare, s1: &ArithShare) -> Result<u64> {
    if s0.party == s1.party {
        return Err(Error::PartyCollision(s0.party));
    }
    Ok(s0.value.wrapping_add(s1.value))
}

/// Recombine two XOR shares.
pub fn reconstruct_bits(s0: &BoolShare, s1: &BoolShare) -> Result<u64> {
    if s0.party == s1.party {
        return Err(Error::PartyCollision(s0.party));
    }
    Ok(s0.bits ^ s1.bits)
}

/// Share-local addition; no communication.
pub fn add_local(x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
    if x.party != y.party {
        return Err(Error::ShareMismatch(format!(
            "add_local across parties {} and {}",
            x.party, y.party
        )));
    }
    Ok(ArithShare {
        party: x.party,
        value: x.value.wrapping_add(y.value),
    })
}

/// One party's half of a multiplication triple `c = a * b`.
#[derive(Clone, Debug)]
pub struct BeaverTriple {
    pub id: u64,
    pub a: u64,
    pub b: u64,
    pub c: u64,
    consumed: bool,
}

impl BeaverTriple {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

/// Kinds of correlated randomness the dealer can issue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DealKind {
    /// Arithmetic multiplication triples.
    Triple,
    /// Shares of values uniform in `[0, 2^bits)`.
    SharedUniform { bits: u32 },
    /// XOR-shared AND triples over packed words.
    BoolTriple,
}

/// Trusted-dealer simulation.
///
/// Both parties construct the dealer from the same seed and draw in
/// lockstep; each keeps only its own halves. Issue counts are compared at
/// protocol end. Security parameters of a real offline phase are recorded
/// as configuration metadata only.
pub struct Dealer {
    rng: ChaCha12Rng,
    party: u8,
    pub arith_issued: u64,
    pub bool_issued: u64,
    pub uniform_issued: u64,
}

/// Bytes a real dealer would ship per item, recorded under "offline".
const TRIPLE_BYTES: u64 = 24;
const UNIFORM_BYTES: u64 = 8;

impl Dealer {
    pub fn new(seed: u64, party: u8) -> Self {
        Dealer {
            rng: ChaCha12Rng::seed_from_u64(seed),
            party,
            arith_issued: 0,
            bool_issued: 0,
            uniform_issued: 0,
        }
    }

    fn split(&mut self, v: u64) -> u64 {
        let s0 = self.rng.next_u64();
        if self.party == 0 {
            s0
        } else {
            v.wrapping_sub(s0)
        }
    }

    fn split_xor(&mut self, v: u64) -> u64 {
        let s0 = self.rng.next_u64();
        if self.party == 0 {
            s0
        } else {
            v ^ s0
        }
    }

    pub fn triple(&mut self) -> BeaverTriple {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let c = a.wrapping_mul(b);
        let id = self.arith_issued;
        self.arith_issued += 1;
        BeaverTriple {
            id,
            a: self.split(a),
            b: self.split(b),
            c: self.split(c),
            consumed: false,
        }
    }

    pub fn triples(&mut self, n: usize) -> Vec<BeaverTriple> {
        (0..n).map(|_| self.triple()).collect()
    }

    /// XOR-shared AND triple over a packed word: `(a, b, a & b)`.
    pub fn bool_triple(&mut self) -> (u64, u64, u64) {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let c = a & b;
        self.bool_issued += 1;
        (self.split_xor(a), self.split_xor(b), self.split_xor(c))
    }

    /// Shares of a value uniform in `[0, 2^bits)`.
    pub fn shared_uniform(&mut self, bits: u32) -> u64 {
        assert!(bits >= 1 && bits <= 64);
        let mask = if bits == 64 {
            u64::MAX
        } else {
            (1 << bits) - 1
        };
        let v = self.rng.next_u64() & mask;
        self.uniform_issued += 1;
        self.split(v)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive an independent sub-seed from a run seed and a role tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

const DEALER_TAG: u64 = 0x6465_616c_6572; // "dealer"

/// Per-party execution context: channel, dealer, private randomness.
///
/// All state is single-threaded and deterministic given (inputs, seed); the
/// wire is the only synchronization point between parties.
pub struct PartyCtx<'w> {
    pub wire: &'w mut Wire,
    pub dealer: Dealer,
    pub rng: ChaCha12Rng,
    pub fp: FixedPoint,
}

impl<'w> PartyCtx<'w> {
    pub fn new(wire: &'w mut Wire, seed: u64, fp: FixedPoint) -> Self {
        let party = wire.party;
        PartyCtx {
            wire,
            dealer: Dealer::new(derive_seed(seed, DEALER_TAG), party),
            rng: ChaCha12Rng::seed_from_u64(derive_seed(seed, party as u64 + 1)),
            fp,
        }
    }

    #[inline]
    pub fn party(&self) -> u8 {
        self.wire.party
    }

    #[inline]
    pub fn is_p0(&self) -> bool {
        self.wire.party == 0
    }

    pub fn scoped<T>(&mut self, label: &str, f: impl FnOnce(&mut PartyCtx) -> T) -> T {
        self.wire.push_stage(label);
        let out = f(self);
        self.wire.pop_stage();
        out
    }

    fn record_offline(&mut self, kind: DealKind, n: u64) {
        let stats = self.wire.ledger.stats_mut("offline");
        match kind {
            DealKind::Triple => stats.bytes += TRIPLE_BYTES * n,
            DealKind::BoolTriple => stats.bytes += TRIPLE_BYTES * n,
            DealKind::SharedUniform { .. } => stats.bytes += UNIFORM_BYTES * n,
        }
    }

    /// Draw correlated randomness, attributing consumption to the current
    /// stage and its generation to the offline stage.
    pub fn draw_triples(&mut self, n: usize) -> Vec<BeaverTriple> {
        let stage = self.wire.stage().to_string();
        self.wire.ledger.stats_mut(&stage).arith_triples += n as u64;
        self.record_offline(DealKind::Triple, n as u64);
        self.dealer.triples(n)
    }

    pub fn draw_bool_triples(&mut self, n: usize) -> Vec<(u64, u64, u64)> {
        let stage = self.wire.stage().to_string();
        self.wire.ledger.stats_mut(&stage).bool_triples += n as u64;
        self.record_offline(DealKind::BoolTriple, n as u64);
        (0..n).map(|_| self.dealer.bool_triple()).collect()
    }

    pub fn draw_uniform(&mut self, n: usize, bits: u32) -> Vec<u64> {
        self.record_offline(DealKind::SharedUniform { bits }, n as u64);
        (0..n).map(|_| self.dealer.shared_uniform(bits)).collect()
    }

    /// Encode a public constant as a trivial share (party 0 holds it).
    #[inline]
    pub fn constant(&self, v: u64) -> u64 {
        if self.is_p0() {
            v
        } else {
            0
        }
    }

    pub fn constants(&self, vs: &[u64]) -> Vec<u64> {
        if self.is_p0() {
            vs.to_vec()
        } else {
            vec![0; vs.len()]
        }
    }

    /// Fresh shares of my private plaintext values; costs one send.
    pub fn input_many(&mut self, owner: u8, vals: Option<&[u64]>, n: usize) -> Result<Vec<u64>> {
        if self.party() == owner {
            let vals = vals.expect("owner must supply values");
            assert_eq!(vals.len(), n);
            let masks: Vec<u64> = (0..n).map(|_| self.rng.next_u64()).collect();
            let peer: Vec<u64> = vals
                .iter()
                .zip(&masks)
                .map(|(&v, &m)| v.wrapping_sub(m))
                .collect();
            self.wire.send(&words_to_bytes(&peer))?;
            Ok(masks)
        } else {
            let bytes = self.wire.recv_exact(n * 8)?;
            Ok(bytes_to_words(&bytes).unwrap())
        }
    }

    /// Open shared values to both parties. One exchange round.
    pub fn open_many(&mut self, xs: &[u64]) -> Result<Vec<u64>> {
        let theirs = self.wire.exchange(&words_to_bytes(xs))?;
        let theirs = bytes_to_words(&theirs).ok_or_else(|| Error::MessageShape {
            stage: self.wire.stage().to_string(),
            expected: xs.len() * 8,
            got: theirs.len(),
        })?;
        Ok(par::map2(xs, &theirs, |a, b| a.wrapping_add(b)))
    }

    /// Batched Beaver multiplication; one exchange round for the batch.
    pub fn mul_many(&mut self, xs: &[u64], ys: &[u64]) -> Result<Vec<u64>> {
        assert_eq!(xs.len(), ys.len());
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let n = xs.len();
        let triples = self.draw_triples(n);
        let mut masked = Vec::with_capacity(2 * n);
        for (i, t) in triples.iter().enumerate() {
            masked.push(xs[i].wrapping_sub(t.a));
            masked.push(ys[i].wrapping_sub(t.b));
        }
        let theirs = self.wire.exchange(&words_to_bytes(&masked))?;
        let theirs = bytes_to_words(&theirs).unwrap();
        let p0 = self.is_p0();
        let out: Vec<u64> = (0..n)
            .map(|i| {
                let d = masked[2 * i].wrapping_add(theirs[2 * i]);
                let e = masked[2 * i + 1].wrapping_add(theirs[2 * i + 1]);
                let t = &triples[i];
                let mut z =
                    t.c.wrapping_add(d.wrapping_mul(t.b))
                        .wrapping_add(e.wrapping_mul(t.a));
                if p0 {
                    z = z.wrapping_add(d.wrapping_mul(e));
                }
                z
            })
            .collect();
        Ok(out)
    }

    /// Single multiplication consuming an explicitly provided triple.
    /// Reusing a triple is a hard failure.
    pub fn mul_beaver(&mut self, x: u64, y: u64, t: &mut BeaverTriple) -> Result<u64> {
        if t.consumed {
            return Err(Error::TripleReuse { id: t.id });
        }
        t.consumed = true;
        let masked = [x.wrapping_sub(t.a), y.wrapping_sub(t.b)];
        let theirs = self.wire.exchange(&words_to_bytes(&masked))?;
        let theirs = bytes_to_words(&theirs).unwrap();
        let d = masked[0].wrapping_add(theirs[0]);
        let e = masked[1].wrapping_add(theirs[1]);
        let mut z =
            t.c.wrapping_add(d.wrapping_mul(t.b))
                .wrapping_add(e.wrapping_mul(t.a));
        if self.is_p0() {
            z = z.wrapping_add(d.wrapping_mul(e));
        }
        Ok(z)
    }

    /// Batched XOR-shared AND over packed words.
    pub fn and_words(&mut self, xs: &[u64], ys: &[u64]) -> Result<Vec<u64>> {
        assert_eq!(xs.len(), ys.len());
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let n = xs.len();
        let triples = self.draw_bool_triples(n);
        let mut masked = Vec::with_capacity(2 * n);
        for (i, t) in triples.iter().enumerate() {
            masked.push(xs[i] ^ t.0);
            masked.push(ys[i] ^ t.1);
        }
        let theirs = self.wire.exchange(&words_to_bytes(&masked))?;
        let theirs = bytes_to_words(&theirs).unwrap();
        let p0 = self.is_p0();
        let out: Vec<u64> = (0..n)
            .map(|i| {
                let d = masked[2 * i] ^ theirs[2 * i];
                let e = masked[2 * i + 1] ^ theirs[2 * i + 1];
                let (a, b, c) = triples[i];
                let mut z = c ^ (d & b) ^ (e & a);
                if p0 {
                    z ^= d & e;
                }
                z
            })
            .collect();
        Ok(out)
    }

    /// Bitwise NOT on XOR shares: party 0 flips.
    #[inline]
    pub fn not_words(&self, xs: &[u64]) -> Vec<u64> {
        if self.is_p0() {
            xs.iter().map(|&x| !x).collect()
        } else {
            xs.to_vec()
        }
    }

    /// Arithmetic share of an XOR-shared bit (bit 0 of each word).
    pub fn b2a_bits(&mut self, bits: &[u64]) -> Result<Vec<u64>> {
        let mine: Vec<u64> = bits.iter().map(|&w| w & 1).collect();
        let zero = vec![0u64; bits.len()];
        let (xs, ys) = if self.is_p0() {
            (mine.clone(), zero)
        } else {
            (zero, mine.clone())
        };
        let prod = self.mul_many(&xs, &ys)?;
        Ok((0..bits.len())
            .map(|i| mine[i].wrapping_sub(prod[i].wrapping_mul(2)))
            .collect())
    }

    /// `c ? a : b` elementwise, with `c` an arithmetic 0/1 share.
    pub fn mux_many(&mut self, c: &[u64], a: &[u64], b: &[u64]) -> Result<Vec<u64>> {
        let diff = par::map2(a, b, |x, y| x.wrapping_sub(y));
        let cd = self.mul_many(c, &diff)?;
        Ok(par::map2(b, &cd, |x, y| x.wrapping_add(y)))
    }

    /// Logical OR of arithmetic 0/1 shares: `x + y - xy`.
    pub fn or_many(&mut self, xs: &[u64], ys: &[u64]) -> Result<Vec<u64>> {
        let prod = self.mul_many(xs, ys)?;
        Ok((0..xs.len())
            .map(|i| xs[i].wrapping_add(ys[i]).wrapping_sub(prod[i]))
            .collect())
    }

    /// Compare both dealers' issue counters; desync means protocol bug.
    pub fn check_dealer_sync(&mut self) -> Result<()> {
        let mine = [
            self.dealer.arith_issued,
            self.dealer.bool_issued,
            self.dealer.uniform_issued,
        ];
        let theirs = self.wire.exchange_meta(&words_to_bytes(&mine))?;
        let theirs = bytes_to_words(&theirs).unwrap_or_default();
        if theirs != mine {
            return Err(Error::Protocol {
                stage: self.wire.stage().to_string(),
                msg: format!("dealer desync: {mine:?} vs {theirs:?}"),
            });
        }
        Ok(())
    }
}

/// Relation for shared comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rel {
    Eq,
    Lt,
}

/// Hash of public key material used for PSI bin salts and config digests.
pub fn public_digest(bytes: &[u8]) -> u64 {
    fnv1a(0, bytes)
}
