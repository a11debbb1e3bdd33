//! The binary PK-FK join and its generalizations.
//!
//! `R` (child, FK side) joins `S` (parent, PK side). The output has exactly
//! `|R|` rows in R's row order: R's columns are untouched, S's selected
//! columns arrive freshly shared, and the indicator is the product of the
//! membership bit with both existing indicators. The join attribute must be
//! plaintext at each holder; fully shared join attributes go through the
//! two-server protocol instead.

use crate::oblivious::network::{oep_apply, ExtendedPermutation, OepKind};
use crate::oblivious::psi::{psi_payload, PayloadForm};
use crate::oblivious::SharedSeq;
use crate::relational::{ColData, Column, SharedTable};
use crate::sharing::PartyCtx;
use crate::{Error, Result};
use std::collections::HashMap;

/// Which of S's columns ride along as payloads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayloadSel {
    /// All non-PK columns (plus the indicator, when present).
    Full,
    /// Key membership only (plus the indicator, when present); used by the
    /// renamed key-only joins of the multi-parent elimination step.
    KeysOnly,
}

/// Padding keys for the distinct-key PSI input; they live in the reserved
/// high half and never collide with real attribute values.
fn pad_key(i: usize) -> u64 {
    (1 << 63) | (3 << 60) | i as u64
}

pub fn binary_join(
    ctx: &mut PartyCtx,
    r: &SharedTable,
    r_fk: &str,
    s: &SharedTable,
    payload: PayloadSel,
    salt: u64,
) -> Result<SharedTable> {
    let fk_col = r.col(r_fk)?;
    let s_pk =
        s.pk.clone()
            .ok_or_else(|| Error::Schema(format!("join parent {} has no PK", s.name)))?;
    let pk_col = s.col(&s_pk)?;
    let alice = fk_col.data.plain_owner().ok_or_else(|| {
        Error::Schema(format!(
            "join attribute {}.{} is shared; use the two-server join",
            r.name, r_fk
        ))
    })?;
    let bob = pk_col.data.plain_owner().ok_or_else(|| {
        Error::Schema(format!(
            "join attribute {}.{} is shared; use the two-server join",
            s.name, s_pk
        ))
    })?;
    if alice == bob {
        return local_join(ctx, r, r_fk, s, &s_pk, payload, alice);
    }
    let pk_pk = r.pk.as_deref() == Some(r_fk);
    let m = r.rows;
    let me = ctx.party();

    // Alice's PSI input: the distinct FK values padded to exactly m slots,
    // with the row -> slot map kept private.
    let (x_keys, xi_targets) = if me == alice {
        let keys = fk_col.data.plain_at(me).expect("fk plaintext at alice");
        let mut slots: Vec<u64> = Vec::with_capacity(m);
        let mut index_of: HashMap<u64, usize> = HashMap::new();
        let mut xi = Vec::with_capacity(m);
        for &k in keys {
            let slot = *index_of.entry(k).or_insert_with(|| {
                slots.push(k);
                slots.len() - 1
            });
            xi.push(slot);
        }
        let mut pad = 0usize;
        while slots.len() < m {
            slots.push(pad_key(pad));
            pad += 1;
        }
        (Some(slots), Some(xi))
    } else {
        (None, None)
    };

    // S's payload columns: everything but the PK (or nothing for key-only
    // joins), then the indicator last.
    let mut payload_forms: Vec<PayloadForm> = Vec::new();
    let mut payload_names: Vec<String> = Vec::new();
    if payload == PayloadSel::Full {
        for c in &s.cols {
            if c.name == s_pk {
                continue;
            }
            payload_forms.push(column_payload(ctx, &c.data, bob, s.rows));
            payload_names.push(c.name.clone());
        }
    }
    let has_ts = s.indicator.is_some();
    if has_ts {
        payload_forms.push(column_payload(
            ctx,
            s.indicator.as_ref().unwrap(),
            bob,
            s.rows,
        ));
    }

    let ys = if me == bob {
        Some(
            pk_col
                .data
                .plain_at(me)
                .expect("pk plaintext at bob")
                .to_vec(),
        )
    } else {
        None
    };
    let psi = ctx.scoped("psi", |ctx| {
        psi_payload(
            ctx,
            alice,
            x_keys.as_deref(),
            m,
            bob,
            ys.as_deref(),
            s.rows,
            &payload_forms,
            salt,
        )
    })?;

    // Reorder from X order to R's row order; a PK-PK join skips this step
    // because the map is the identity.
    let mut cols: Vec<Vec<u64>> = vec![psi.indicators];
    cols.extend(psi.payloads);
    let table = SharedSeq::from_cols(&cols);
    let row_ordered = if pk_pk {
        if let Some(t) = &xi_targets {
            debug_assert!(t.iter().enumerate().all(|(i, &x)| i == x));
        }
        table
    } else {
        let xi = xi_targets.map(ExtendedPermutation::new);
        ctx.scoped("oep", |ctx| {
            oep_apply(ctx, alice, xi.as_ref(), m, m, OepKind::General, &table)
        })?
    };

    // T = T_R * T_S * t' row by row.
    let t = ctx.scoped("and", |ctx| {
        let mut t = row_ordered.col(0);
        if has_ts {
            let ts = row_ordered.col(row_ordered.width - 1);
            t = ctx.mul_many(&t, &ts)?;
        }
        if let Some(tr) = &r.indicator {
            let tr = tr.shares(me, m);
            t = ctx.mul_many(&t, &tr)?;
        }
        Ok::<_, Error>(t)
    })?;

    let mut out_cols = r.cols.clone();
    for (k, name) in payload_names.iter().enumerate() {
        out_cols.push(Column {
            name: name.clone(),
            data: ColData::Shared(row_ordered.col(k + 1)),
        });
    }
    Ok(SharedTable {
        name: r.name.clone(),
        rows: m,
        pk: r.pk.clone(),
        cols: out_cols,
        indicator: Some(ColData::Shared(t)),
    })
}

fn column_payload(ctx: &PartyCtx, data: &ColData, holder: u8, rows: usize) -> PayloadForm {
    match data {
        ColData::Plain { owner, vals } if *owner == holder => {
            PayloadForm::PlainAtHolder(if ctx.party() == holder {
                Some(vals.clone())
            } else {
                None
            })
        }
        other => PayloadForm::Shared(other.shares(ctx.party(), rows)),
    }
}

/// Same-owner join: computed locally in plaintext by the owner; shared
/// columns of S are re-routed through one extended permutation. Plaintext
/// stays plaintext, and when every input indicator is plaintext the output
/// indicator is too.
fn local_join(
    ctx: &mut PartyCtx,
    r: &SharedTable,
    r_fk: &str,
    s: &SharedTable,
    s_pk: &str,
    payload: PayloadSel,
    owner: u8,
) -> Result<SharedTable> {
    let me = ctx.party();
    let m = r.rows;

    // Owner-side match map: R row -> S row.
    let matches: Option<Vec<Option<usize>>> = if me == owner {
        let keys = r.col(r_fk)?.data.plain_at(me).unwrap();
        let pks = s.col(s_pk)?.data.plain_at(me).unwrap();
        let mut by_key: HashMap<u64, usize> = HashMap::new();
        for (j, &k) in pks.iter().enumerate() {
            if by_key.insert(k, j).is_some() {
                return Err(Error::DuplicateKey {
                    table: s.name.clone(),
                    key: k,
                });
            }
        }
        Some(keys.iter().map(|k| by_key.get(k).copied()).collect())
    } else {
        None
    };

    // Split S's payload columns into plaintext-at-owner and shared groups.
    let mut plain_cols: Vec<(String, Option<Vec<u64>>)> = Vec::new();
    let mut shared_cols: Vec<(String, Vec<u64>)> = Vec::new();
    if payload == PayloadSel::Full {
        for c in &s.cols {
            if c.name == *s_pk {
                continue;
            }
            match &c.data {
                ColData::Plain { owner: o, vals } if *o == owner => {
                    plain_cols.push((
                        c.name.clone(),
                        if me == owner {
                            Some(vals.clone())
                        } else {
                            None
                        },
                    ));
                }
                other => shared_cols.push((c.name.clone(), other.shares(me, s.rows))),
            }
        }
    }
    // The S indicator joins whichever group matches its form.
    let ts_plain: Option<Option<Vec<u64>>> = match &s.indicator {
        Some(ColData::Plain { owner: o, vals }) if *o == owner => Some(if me == owner {
            Some(vals.clone())
        } else {
            None
        }),
        _ => None,
    };
    let ts_shared: Option<Vec<u64>> = match &s.indicator {
        Some(ColData::Shared(sh)) => Some(sh.clone()),
        Some(ColData::Plain { owner: o, .. }) if *o != owner => {
            Some(s.indicator.as_ref().unwrap().shares(me, s.rows))
        }
        _ => None,
    };

    // Local gather of plaintext payloads; unmatched rows read as zero.
    let gather_plain = |vals: &[u64], matches: &[Option<usize>]| -> Vec<u64> {
        matches
            .iter()
            .map(|mj| mj.map(|j| vals[j]).unwrap_or(0))
            .collect()
    };

    let mut out_cols = r.cols.clone();
    if me == owner {
        let matches = matches.as_ref().unwrap();
        for (name, vals) in &plain_cols {
            out_cols.push(Column {
                name: name.clone(),
                data: ColData::Plain {
                    owner,
                    vals: gather_plain(vals.as_ref().unwrap(), matches),
                },
            });
        }
    } else {
        for (name, _) in &plain_cols {
            out_cols.push(Column {
                name: name.clone(),
                data: ColData::Plain {
                    owner,
                    vals: Vec::new(),
                },
            });
        }
    }

    // Shared payloads (and a shared S indicator) ride one permutation.
    let mut routed_shared: Vec<(String, Vec<u64>)> = Vec::new();
    let mut routed_ts: Option<Vec<u64>> = None;
    if !shared_cols.is_empty() || ts_shared.is_some() {
        let mut mat: Vec<Vec<u64>> = shared_cols.iter().map(|(_, v)| v.clone()).collect();
        if let Some(ts) = &ts_shared {
            mat.push(ts.clone());
        }
        let seq = SharedSeq::from_cols(&mat);
        let xi = matches
            .as_ref()
            .map(|ms| ExtendedPermutation::new(ms.iter().map(|mj| mj.unwrap_or(0)).collect()));
        let routed = ctx.scoped("oep", |ctx| {
            oep_apply(ctx, owner, xi.as_ref(), s.rows, m, OepKind::General, &seq)
        })?;
        for (k, (name, _)) in shared_cols.iter().enumerate() {
            routed_shared.push((name.clone(), routed.col(k)));
        }
        if ts_shared.is_some() {
            routed_ts = Some(routed.col(routed.width - 1));
        }
    }
    for (name, vals) in routed_shared {
        out_cols.push(Column {
            name,
            data: ColData::Shared(vals),
        });
    }

    // Indicator: t' (match bit, plaintext at owner) * T_R * T_S.
    let t_match: Option<Vec<u64>> = matches
        .as_ref()
        .map(|ms| ms.iter().map(|mj| mj.is_some() as u64).collect());
    let all_plain = routed_ts.is_none()
        && r.indicator
            .as_ref()
            .map(|d| d.plain_owner() == Some(owner))
            .unwrap_or(true)
        && s.indicator
            .as_ref()
            .map(|d| d.plain_owner() == Some(owner))
            .unwrap_or(true);

    let indicator = if all_plain {
        if me == owner {
            let mut t = t_match.unwrap();
            if let Some(tr) = &r.indicator {
                let tr = tr.plain_at(me).unwrap();
                for (ti, &tri) in t.iter_mut().zip(tr) {
                    *ti *= tri;
                }
            }
            if let Some(ts) = &ts_plain {
                let ts = gather_plain(ts.as_ref().unwrap(), matches.as_ref().unwrap());
                for (ti, &tsi) in t.iter_mut().zip(&ts) {
                    *ti *= tsi;
                }
            }
            ColData::Plain { owner, vals: t }
        } else {
            ColData::Plain {
                owner,
                vals: Vec::new(),
            }
        }
    } else {
        // Mixed forms: fold everything into shares.
        let mut t: Vec<u64> = if me == owner {
            let base = t_match.as_ref().unwrap();
            let mut t = base.clone();
            if let Some(ts) = &ts_plain {
                let ts = gather_plain(ts.as_ref().unwrap(), matches.as_ref().unwrap());
                for (ti, &tsi) in t.iter_mut().zip(&ts) {
                    *ti *= tsi;
                }
            }
            t
        } else {
            vec![0; m]
        };
        if let Some(ts) = routed_ts {
            t = ctx.mul_many(&t, &ts)?;
        }
        if let Some(tr) = &r.indicator {
            let tr = tr.shares(me, m);
            t = ctx.mul_many(&t, &tr)?;
        }
        ColData::Shared(t)
    };

    Ok(SharedTable {
        name: r.name.clone(),
        rows: m,
        pk: r.pk.clone(),
        cols: out_cols,
        indicator: Some(indicator),
    })
}
