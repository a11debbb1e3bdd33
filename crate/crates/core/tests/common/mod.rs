//! Shared test support: SPMD protocol runners, table builders, plaintext
//! oracles, and random database generators.
#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use secrel::relational::{ColData, Column, SchemaGraph, SharedTable, TableDef};
use secrel::ring::FixedPoint;
use secrel::sharing::PartyCtx;
use secrel::transport::{run_protocol, Mode, Wire};
use secrel::Result;
use std::collections::{BTreeMap, HashMap};

/// Run the same closure as both parties in-process.
pub fn spmd<T: Send>(seed: u64, f: impl Fn(&mut PartyCtx) -> Result<T> + Send + Sync) -> (T, T) {
    let g = |w: &mut Wire| {
        let mut ctx = PartyCtx::new(w, seed, FixedPoint::default());
        f(&mut ctx)
    };
    let (a, b, _) = run_protocol(Mode::InProcess, g, g).expect("protocol run");
    (a, b)
}

pub fn reconstruct(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| x.wrapping_add(y)).collect()
}

/// Plaintext table model used by oracles and by the protocol builders.
#[derive(Clone, Debug)]
pub struct PlainDbTable {
    pub name: String,
    pub owner: u8,
    pub pk: String,
    pub cols: Vec<String>,
    pub rows: Vec<Vec<u64>>,
    pub t: Vec<bool>,
}

impl PlainDbTable {
    pub fn col_idx(&self, name: &str) -> usize {
        self.cols.iter().position(|c| c == name).expect("column")
    }
}

/// Build this party's view of a table whose columns are plaintext at the
/// owner.
pub fn to_shared(me: u8, p: &PlainDbTable) -> SharedTable {
    let rows = p.rows.len();
    let cols = p
        .cols
        .iter()
        .enumerate()
        .map(|(k, name)| Column {
            name: name.clone(),
            data: ColData::Plain {
                owner: p.owner,
                vals: if me == p.owner {
                    p.rows.iter().map(|r| r[k]).collect()
                } else {
                    Vec::new()
                },
            },
        })
        .collect();
    SharedTable {
        name: p.name.clone(),
        rows,
        pk: Some(p.pk.clone()),
        cols,
        indicator: Some(ColData::Plain {
            owner: p.owner,
            vals: if me == p.owner {
                p.t.iter().map(|&b| b as u64).collect()
            } else {
                Vec::new()
            },
        }),
    }
}

/// Open every column of a table plus its indicator (test-only reveal).
pub fn open_table(
    ctx: &mut PartyCtx,
    t: &SharedTable,
) -> Result<(Vec<String>, Vec<Vec<u64>>, Vec<u64>)> {
    let me = ctx.party();
    let mut flat = Vec::new();
    for c in &t.cols {
        flat.extend(c.data.shares(me, t.rows));
    }
    flat.extend(t.indicator_shares(ctx));
    let opened = ctx.open_many(&flat)?;
    let ncols = t.cols.len();
    let mut rows = vec![vec![0u64; ncols]; t.rows];
    for (k, _) in t.cols.iter().enumerate() {
        for r in 0..t.rows {
            rows[r][k] = opened[k * t.rows + r];
        }
    }
    let tvals = opened[ncols * t.rows..].to_vec();
    Ok((t.col_names(), rows, tvals))
}

/// A generated multi-table instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub schema: SchemaGraph,
    pub tables: Vec<PlainDbTable>,
}

/// Nested-loop multi-way join oracle over the FK-acyclic schema: returns
/// the multiset of surviving joined rows as attr -> value maps.
pub fn oracle_join(inst: &Instance) -> Vec<BTreeMap<String, u64>> {
    let schema = &inst.schema;
    let by_name: HashMap<&str, &PlainDbTable> =
        inst.tables.iter().map(|t| (t.name.as_str(), t)).collect();
    // Topological order, fact first (children before parents).
    let mut order: Vec<String> = Vec::new();
    let mut placed: HashMap<&str, bool> = HashMap::new();
    order.push(schema.fact.clone());
    placed.insert(schema.fact.as_str(), true);
    while order.len() < schema.tables.len() {
        for t in &schema.tables {
            if placed.contains_key(t.name.as_str()) {
                continue;
            }
            let refs = schema.edges_into(&t.name);
            if refs.iter().all(|(c, _)| placed.contains_key(c.as_str())) {
                order.push(t.name.clone());
                placed.insert(t.name.as_str(), true);
            }
        }
    }

    let fact = by_name[schema.fact.as_str()];
    let mut out = Vec::new();
    'rows: for ri in 0..fact.rows.len() {
        if !fact.t[ri] {
            continue;
        }
        let mut assigned: HashMap<String, (usize, &PlainDbTable)> = HashMap::new();
        assigned.insert(fact.name.clone(), (ri, fact));
        for tname in order.iter().skip(1) {
            let table = by_name[tname.as_str()];
            let refs = schema.edges_into(tname);
            let mut key: Option<u64> = None;
            for (child, attr) in &refs {
                let (crow, ctab) = assigned[child];
                let v = ctab.rows[crow][ctab.col_idx(attr)];
                match key {
                    None => key = Some(v),
                    Some(k) if k != v => continue 'rows,
                    _ => {}
                }
            }
            let key = key.expect("non-fact table has referrers");
            let pk_idx = table.col_idx(&table.pk);
            match table
                .rows
                .iter()
                .position(|r| r[pk_idx] == key)
                .filter(|&j| table.t[j])
            {
                Some(j) => {
                    assigned.insert(tname.clone(), (j, table));
                }
                None => continue 'rows,
            }
        }
        let mut joined = BTreeMap::new();
        for (_name, (r, tab)) in &assigned {
            for (k, col) in tab.cols.iter().enumerate() {
                joined.insert(col.clone(), tab.rows[*r][k]);
            }
        }
        out.push(joined);
    }
    out
}

/// Project the opened protocol output onto the oracle attribute space:
/// real rows only, renamed `attr#k` columns folded onto their base name
/// after asserting the deferred equality held.
pub fn project_real_rows(
    names: &[String],
    rows: &[Vec<u64>],
    t: &[u64],
) -> Vec<BTreeMap<String, u64>> {
    let mut out = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if t[r] != 1 {
            continue;
        }
        let mut m = BTreeMap::new();
        for (k, name) in names.iter().enumerate() {
            let base = name.split('#').next().unwrap().to_string();
            if let Some(&prev) = m.get(&base) {
                assert_eq!(
                    prev, row[k],
                    "renamed column {name} disagrees with {base} on a real row"
                );
            }
            m.insert(base, row[k]);
        }
        out.push(m);
    }
    out
}

/// Restrict oracle rows to the attribute set the protocol actually emits
/// (parent PK columns are dropped by design: their values equal the child
/// FK attribute on every real row).
pub fn project_onto(
    rows: Vec<BTreeMap<String, u64>>,
    names: &[String],
) -> Vec<BTreeMap<String, u64>> {
    let keep: std::collections::BTreeSet<String> = names
        .iter()
        .map(|n| n.split('#').next().unwrap().to_string())
        .collect();
    rows.into_iter()
        .map(|m| m.into_iter().filter(|(k, _)| keep.contains(k)).collect())
        .collect()
}

pub fn sort_rows(mut rows: Vec<BTreeMap<String, u64>>) -> Vec<BTreeMap<String, u64>> {
    rows.sort_by(|a, b| {
        a.iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect::<Vec<_>>()
            .cmp(&b.iter().map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>())
    });
    rows
}

/// Random FK-acyclic instance: up to `max_tables` tables, up to `max_rows`
/// rows each, random ownership, padding and key overlap.
pub fn random_instance(rng: &mut ChaCha12Rng, max_tables: usize, max_rows: usize) -> Instance {
    let k = rng.random_range(2..=max_tables.max(2));
    let mut defs: Vec<TableDef> = Vec::new();
    for i in 0..k {
        let name = format!("t{i}");
        let pk = format!("pk{i}");
        let attrs = vec![format!("v{i}")];
        defs.push(TableDef {
            name,
            owner: rng.random_range(0..2),
            pk,
            attrs,
            fks: Vec::new(),
        });
    }
    // Each non-fact table t_i gains 1..=2 child edges from earlier tables;
    // all edges into t_i share the join-variable name k{i}.
    for i in 1..k {
        let n_children = rng.random_range(1..=2.min(i));
        let mut children: Vec<usize> = (0..i).collect();
        children.shuffle(rng);
        for &c in children.iter().take(n_children) {
            let attr = format!("k{i}");
            if !defs[c].fks.iter().any(|e| e.attr == attr) {
                defs[c].fks.push(secrel::relational::FkEdge {
                    attr,
                    parent: format!("t{i}"),
                });
            }
        }
    }
    // Tables other than t0 might end up unreferenced if edges collided;
    // ensure connectivity by forcing an edge from t0 when needed.
    for i in 1..k {
        let target = format!("t{i}");
        let referenced = defs
            .iter()
            .any(|d| d.fks.iter().any(|e| e.parent == target));
        if !referenced {
            let attr = format!("k{i}");
            defs[0].fks.push(secrel::relational::FkEdge {
                attr,
                parent: target,
            });
        }
    }
    let schema = SchemaGraph::new(defs.clone()).expect("generated schema is valid");

    let key_domain = 1 + rng.random_range(4..40) as u64;
    let mut tables = Vec::new();
    for (i, def) in defs.iter().enumerate() {
        let rows_n = rng.random_range(1..=max_rows);
        let real_n = rng.random_range(1..=rows_n);
        let mut cols = vec![def.pk.clone()];
        cols.extend(def.fks.iter().map(|e| e.attr.clone()));
        cols.extend(def.attrs.iter().cloned());
        // Distinct PKs in a small domain so joins actually hit.
        let mut pks: Vec<u64> = (0..key_domain).collect();
        pks.shuffle(rng);
        let mut rows = Vec::new();
        let mut t = Vec::new();
        let mut sent = 0u64;
        for r in 0..rows_n {
            let real = r < real_n;
            let mut row = Vec::with_capacity(cols.len());
            if real && (r as u64) < key_domain {
                row.push(pks[r]);
            } else {
                row.push((1 << 63) | ((i as u64) << 32) | sent);
                sent += 1;
            }
            for _ in &def.fks {
                if real {
                    row.push(rng.random_range(0..key_domain));
                } else {
                    row.push((1 << 63) | ((i as u64) << 32) | sent);
                    sent += 1;
                }
            }
            for _ in &def.attrs {
                row.push(rng.random_range(0..1000));
            }
            rows.push(row);
            t.push(real && (r as u64) < key_domain);
        }
        tables.push(PlainDbTable {
            name: def.name.clone(),
            owner: def.owner,
            pk: def.pk.clone(),
            cols,
            rows,
            t,
        });
    }
    Instance { schema, tables }
}

/// Independent plaintext fixed-point SGD reference with round-to-nearest
/// truncation and the engine's batch schedule. Returns the final weights.
pub fn plain_sgd_final(
    xs: &[Vec<u64>],
    ys: &[u64],
    hp: &secrel::train::Hyperparams,
    fp: &FixedPoint,
    init_seed: u64,
) -> Vec<u64> {
    use secrel::train::ModelKind;
    let n = xs.len();
    let d = xs[0].len();
    let f = fp.frac_bits;
    let ptrunc = |v: u64, k: u32| (((v as i64) + (1 << (k - 1))) >> k) as u64;
    let mut w: Vec<u64> = secrel::train::initial_weights(init_seed, d)
        .iter()
        .map(|&x| fp.encode(x))
        .collect();
    let step = (hp.lr / hp.batch as f64 * (1u64 << 24) as f64).round() as i64 as u64;
    let half = fp.encode(0.5);
    let one = fp.encode(1.0);
    for it in 0..hp.iters {
        let start = (it * hp.batch) % n;
        let mut gsum = vec![0u64; d];
        for k in 0..hp.batch {
            let r = (start + k) % n;
            let mut pred = 0u64;
            for j in 0..d {
                pred = pred.wrapping_add(ptrunc(xs[r][j].wrapping_mul(w[j]), f));
            }
            let act = match hp.model {
                ModelKind::Linear => pred,
                ModelKind::Logistic => {
                    let v = pred as i64;
                    if v < -(half as i64) {
                        0
                    } else if v > half as i64 {
                        one
                    } else {
                        pred.wrapping_add(half)
                    }
                }
            };
            let err = act.wrapping_sub(ys[r]);
            for j in 0..d {
                gsum[j] = gsum[j].wrapping_add(ptrunc(err.wrapping_mul(xs[r][j]), f));
            }
        }
        for j in 0..d {
            w[j] = w[j].wrapping_sub(ptrunc(gsum[j].wrapping_mul(step), 24));
        }
    }
    w
}

/// Classification accuracy of decoded weights on plaintext rows:
/// predict 1 when w . x > 0.
pub fn accuracy(w: &[f64], xs: &[Vec<f64>], ys: &[u8]) -> f64 {
    let mut correct = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        let pred = (dot > 0.0) as u8;
        if pred == y {
            correct += 1;
        }
    }
    correct as f64 / xs.len() as f64
}
