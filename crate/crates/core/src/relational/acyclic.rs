//! Iterative foreign-key-acyclic join.
//!
//! Repeatedly eliminates a vertex with out-degree 0: its first parent runs
//! a payload join, every further parent runs a key-only join whose FK
//! attribute is renamed, and the implied equality lands in the deferred
//! constraint set. After the last elimination the constraints are checked
//! row by row and multiplied into the indicator.

use crate::relational::{binary_join, two_server_join, PayloadSel, SchemaGraph, SharedTable};
use crate::sharing::{derive_seed, PartyCtx};
use crate::{Error, Result};
use std::collections::HashMap;

/// Which join protocol the elimination loop runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineMode {
    /// PSI + reorder on plaintext join attributes.
    TwoParty,
    /// Sorting-based join on fully shared tables.
    TwoServer,
}

/// The surviving fact-side table plus the constraint set that was enforced.
#[derive(Clone, Debug)]
pub struct JoinOutcome {
    pub table: SharedTable,
    /// Attribute-equality pairs accumulated by multi-parent eliminations.
    pub theta: Vec<(String, String)>,
}

pub fn acyclic_join(
    ctx: &mut PartyCtx,
    db: Vec<SharedTable>,
    schema: &SchemaGraph,
    salt: u64,
) -> Result<JoinOutcome> {
    acyclic_join_mode(ctx, db, schema, salt, EngineMode::TwoParty)
}

pub fn acyclic_join_mode(
    ctx: &mut PartyCtx,
    db: Vec<SharedTable>,
    schema: &SchemaGraph,
    salt: u64,
    mode: EngineMode,
) -> Result<JoinOutcome> {
    schema.validate()?;
    let mut tables: HashMap<String, SharedTable> =
        db.into_iter().map(|t| (t.name.clone(), t)).collect();
    for def in &schema.tables {
        if !tables.contains_key(&def.name) {
            return Err(Error::Schema(format!("missing input table {}", def.name)));
        }
    }
    // Working edge list: (child, fk attr, parent).
    let mut edges: Vec<(String, String, String)> = Vec::new();
    for t in &schema.tables {
        for e in &t.fks {
            edges.push((t.name.clone(), e.attr.clone(), e.parent.clone()));
        }
    }
    let mut theta: Vec<(String, String)> = Vec::new();
    let mut join_counter = 0u64;
    let mut rename_counter = 0u64;

    while tables.len() > 1 {
        // Candidates: non-fact tables that reference nothing.
        let mut candidates: Vec<&String> = tables
            .keys()
            .filter(|n| **n != schema.fact && !edges.iter().any(|(c, _, _)| c == *n))
            .collect();
        if candidates.is_empty() {
            return Err(Error::Schema(
                "no eliminable vertex; graph not acyclic".into(),
            ));
        }
        // Smallest table first, names as tie-break.
        candidates.sort_by_key(|n| (tables[*n].rows, (*n).clone()));
        let victim = candidates[0].clone();

        // Incoming edges, payload join on the largest parent.
        let mut incoming: Vec<(String, String)> = edges
            .iter()
            .filter(|(_, _, p)| *p == victim)
            .map(|(c, a, _)| (c.clone(), a.clone()))
            .collect();
        incoming.sort_by_key(|(c, a)| (std::cmp::Reverse(tables[c].rows), c.clone(), a.clone()));

        let s = tables[&victim].clone();
        let mut first_attr: Option<String> = None;
        for (k, (child, attr)) in incoming.iter().enumerate() {
            let sel = if k == 0 {
                PayloadSel::Full
            } else {
                PayloadSel::KeysOnly
            };
            let child_table = tables[child].clone();
            let label = format!("join_{child}_{victim}");
            let joined = ctx.scoped(&label, |ctx| match mode {
                EngineMode::TwoParty => binary_join(
                    ctx,
                    &child_table,
                    attr,
                    &s,
                    sel,
                    derive_seed(salt, join_counter),
                ),
                EngineMode::TwoServer => {
                    let s_view = match sel {
                        PayloadSel::Full => s.clone(),
                        PayloadSel::KeysOnly => {
                            let mut v = s.clone();
                            let pk = v.pk.clone().unwrap();
                            v.cols.retain(|c| c.name == pk);
                            v
                        }
                    };
                    two_server_join(ctx, &child_table, attr, &s_view)
                }
            })?;
            join_counter += 1;
            let mut joined = joined;
            if k == 0 {
                first_attr = Some(attr.clone());
            } else {
                // Rename the key-only FK copy and defer the equality.
                rename_counter += 1;
                let new_name = format!("{attr}#{rename_counter}");
                joined.col_mut(attr)?.name = new_name.clone();
                theta.push((first_attr.clone().unwrap(), new_name));
            }
            tables.insert(child.clone(), joined);
        }
        tables.remove(&victim);
        edges.retain(|(_, _, p)| *p != victim);
    }

    let mut result = tables.remove(&schema.fact).expect("fact survives");

    // Enforce the deferred equalities row by row.
    if !theta.is_empty() {
        let me = ctx.party();
        let t = ctx.scoped("theta", |ctx| {
            let mut t = result.indicator_shares(ctx);
            for (a, b) in &theta {
                let ca = result.col(a)?.data.shares(me, result.rows);
                let cb = result.col(b)?.data.shares(me, result.rows);
                let eq = ctx.eq_many(&ca, &cb)?;
                t = ctx.mul_many(&t, &eq)?;
            }
            Ok::<_, Error>(t)
        })?;
        result.indicator = Some(crate::relational::ColData::Shared(t));
    }
    Ok(JoinOutcome {
        table: result,
        theta,
    })
}

/// Three-way join where one fact references two dimension tables: both
/// binary joins run against the fact and the indicators multiply.
pub fn tree_join3(
    ctx: &mut PartyCtx,
    r1: &SharedTable,
    fk2: &str,
    r2: &SharedTable,
    fk3: &str,
    r3: &SharedTable,
    salt: u64,
) -> Result<SharedTable> {
    let j12 = ctx.scoped("join_left", |ctx| {
        binary_join(ctx, r1, fk2, r2, PayloadSel::Full, derive_seed(salt, 1))
    })?;
    // The second join folds the first indicator in through the
    // existing-indicator path, yielding T12 * T13.
    ctx.scoped("join_right", |ctx| {
        binary_join(ctx, &j12, fk3, r3, PayloadSel::Full, derive_seed(salt, 2))
    })
}

/// Three-way chain join `r1 -> r2 -> r3`: the inner join runs first with
/// the roles flipped, then its result joins under `r1`.
pub fn line_join3(
    ctx: &mut PartyCtx,
    r1: &SharedTable,
    fk_b: &str,
    r2: &SharedTable,
    fk_c: &str,
    r3: &SharedTable,
    salt: u64,
) -> Result<SharedTable> {
    let j23 = ctx.scoped("join_inner", |ctx| {
        binary_join(ctx, r2, fk_c, r3, PayloadSel::Full, derive_seed(salt, 1))
    })?;
    ctx.scoped("join_outer", |ctx| {
        binary_join(ctx, r1, fk_b, &j23, PayloadSel::Full, derive_seed(salt, 2))
    })
}
