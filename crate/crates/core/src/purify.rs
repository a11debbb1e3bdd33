//! Join-result purification.
//!
//! Turns the shared join result (real rows plus dummies) into a
//! dummy-free training table of the same public size: compact, run the
//! duplication circuit for a number of levels gated by the secret real
//! count, compact again, half-copy, then shuffle. Every real tuple ends up
//! with multiplicity `floor(N/J)` or `floor(N/J) + 1`, and the transcript
//! depends only on `N`.

use crate::oblivious::dup::levels_for;
use crate::oblivious::{compact, duplicate, half_copy, random_shuffle, SharedSeq};
use crate::relational::SharedTable;
use crate::sharing::PartyCtx;
use crate::{Error, Result};

/// A table with no indicator column: every row is real by construction.
#[derive(Clone, Debug)]
pub struct PurifiedTable {
    pub names: Vec<String>,
    pub seq: SharedSeq,
}

impl PurifiedTable {
    pub fn rows(&self) -> usize {
        self.seq.rows()
    }

    pub fn col(&self, name: &str) -> Result<Vec<u64>> {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("no column {name} in purified table")))?;
        Ok(self.seq.col(idx))
    }
}

/// Level-4 pipeline. Also returns shares of the real count `J` for the
/// DP noise scale. Aborts (revealing only that single bit) when the join
/// is empty, since duplicating nothing is impossible.
pub fn purify(ctx: &mut PartyCtx, j: &SharedTable) -> Result<(PurifiedTable, u64)> {
    ctx.scoped("purify", |ctx| {
        let (mut mat, names) = j.to_seq(ctx);
        let mut t = j.indicator_shares(ctx);
        let n = j.rows;
        let shared_j: u64 = t.iter().fold(0u64, |acc, &x| acc.wrapping_add(x));

        let nonzero = ctx.gt_const_many(&[shared_j], 0, false)?;
        let opened = ctx.open_many(&nonzero)?;
        if opened[0] == 0 {
            return Err(Error::EmptyJoin);
        }

        // The duplication circuit tiles copies at power-of-two strides, so
        // it runs on the next power of two with dummy padding; the level
        // count stays gated by the true N, which keeps the real count at
        // J * 2^floor(log2(N/J)) in (N/2, N] and lets the trim after the
        // second compaction drop dummies only.
        let n_pad = n.next_power_of_two();
        for _ in n..n_pad {
            mat.push_row(&vec![0u64; mat.width]);
            t.push(0);
        }

        let (c1, t1) = ctx.scoped("compact1", |ctx| compact(ctx, &mat, &t))?;

        // Level i is active iff i <= floor(log2(N / J)), i.e. J <= N >> i.
        let levels = levels_for(n_pad);
        let active = ctx.scoped("levels", |ctx| {
            let ks: Vec<u64> = (1..=levels)
                .map(|i| ctx.constant((n >> i) as u64))
                .collect();
            let js = vec![shared_j; levels];
            // Ind(N>>i < J), then negate.
            let gt = ctx.lt_many(&ks, &js, false)?;
            let one = ctx.constant(1);
            Ok::<_, Error>(
                gt.iter()
                    .map(|&g| one.wrapping_sub(g))
                    .collect::<Vec<u64>>(),
            )
        })?;

        let (d, t2) = ctx.scoped("duplicate", |ctx| duplicate(ctx, &c1, &t1, &active))?;
        let (c2, t3) = ctx.scoped("compact2", |ctx| compact(ctx, &d, &t2))?;
        let mut c2 = c2;
        let mut t3 = t3;
        c2.truncate_rows(n);
        t3.truncate(n);
        let (h, _t4) = ctx.scoped("half_copy", |ctx| half_copy(ctx, &c2, &t3))?;
        let shuffled = ctx.scoped("shuffle", |ctx| random_shuffle(ctx, &h))?;

        Ok((
            PurifiedTable {
                names,
                seq: shuffled,
            },
            shared_j,
        ))
    })
}

/// Level-3 pipeline: compaction only, revealing the real count `J` and
/// returning the first `J` rows. The privacy downgrade is the caller's
/// explicit choice.
pub fn level3_compact(ctx: &mut PartyCtx, j: &SharedTable) -> Result<PurifiedTable> {
    ctx.scoped("compact_reveal", |ctx| {
        let (mat, names) = j.to_seq(ctx);
        let t = j.indicator_shares(ctx);
        let shared_j: u64 = t.iter().fold(0u64, |acc, &x| acc.wrapping_add(x));
        let opened = ctx.open_many(&[shared_j])?;
        let real = opened[0] as usize;
        if real > j.rows {
            return Err(Error::Protocol {
                stage: ctx.wire.stage().to_string(),
                msg: format!("indicator sum {real} exceeds row count {}", j.rows),
            });
        }
        let (mut c, _tc) = compact(ctx, &mat, &t)?;
        c.truncate_rows(real);
        Ok(PurifiedTable { names, seq: c })
    })
}
