//! Plaintext pre-joins: maximal same-owner child-parent pairs collapse
//! before any secure protocol runs, with indicators and padding preserved.
//! Both parties derive the identical plan from the public schema.

use crate::pipeline::ingest::{PlainTable, PlainTableMeta};
use crate::relational::{FkEdge, SchemaGraph, TableDef};
use crate::Result;
use std::collections::HashMap;

#[derive(Clone, Debug)]
pub struct CollapsedDb {
    pub schema: SchemaGraph,
    pub metas: Vec<PlainTableMeta>,
    pub plains: Vec<Option<PlainTable>>,
    /// (child, absorbed parent) pairs in application order.
    pub merges: Vec<(String, String)>,
}

pub fn collapse_same_owner(
    schema: &SchemaGraph,
    metas: Vec<PlainTableMeta>,
    plains: Vec<Option<PlainTable>>,
) -> Result<CollapsedDb> {
    let mut defs: Vec<TableDef> = schema.tables.clone();
    assert_eq!(metas.len(), plains.len());
    let mut plains: HashMap<String, Option<PlainTable>> =
        metas.iter().map(|m| m.name.clone()).zip(plains).collect();
    let mut metas: HashMap<String, PlainTableMeta> =
        metas.into_iter().map(|m| (m.name.clone(), m)).collect();
    let mut merges = Vec::new();

    loop {
        // Candidate: edge (child -attr-> parent) with equal owners and the
        // parent referenced by nobody else.
        let candidate = {
            let in_degree = |p: &str| -> usize {
                defs.iter()
                    .flat_map(|t| t.fks.iter())
                    .filter(|e| e.parent == p)
                    .count()
            };
            let mut options: Vec<(String, String, String)> = Vec::new();
            for t in &defs {
                for e in &t.fks {
                    let parent = defs.iter().find(|d| d.name == e.parent).unwrap();
                    if parent.owner == t.owner && in_degree(&e.parent) == 1 {
                        options.push((t.name.clone(), e.attr.clone(), e.parent.clone()));
                    }
                }
            }
            options.sort();
            options.into_iter().next()
        };
        let Some((child, attr, parent)) = candidate else {
            break;
        };

        // Metadata merge, identical on both parties.
        let parent_def = defs.iter().find(|d| d.name == parent).unwrap().clone();
        let child_def = defs.iter_mut().find(|d| d.name == child).unwrap();
        child_def
            .fks
            .retain(|e| !(e.attr == attr && e.parent == parent));
        // The FK attribute stays as a plain attribute of the merged table.
        child_def.attrs.push(attr.clone());
        child_def.attrs.extend(parent_def.attrs.iter().cloned());
        child_def
            .fks
            .extend(parent_def.fks.iter().cloned().map(|e| FkEdge {
                attr: e.attr,
                parent: e.parent,
            }));
        defs.retain(|d| d.name != parent);

        let parent_meta = metas.remove(&parent).expect("parent meta");
        let child_meta = metas.get_mut(&child).expect("child meta");
        let parent_payload: Vec<String> = parent_meta
            .col_names
            .iter()
            .filter(|c| **c != parent_meta.pk)
            .cloned()
            .collect();
        child_meta.col_names.extend(parent_payload.iter().cloned());

        // Owner-local data merge.
        let parent_plain = plains.remove(&parent).flatten();
        if let Some(Some(child_plain)) = plains.get_mut(&child) {
            let parent_plain = parent_plain.expect("owner holds both sides");
            let pk_idx = parent_plain.col_idx(&parent_plain.pk.clone())?;
            let mut by_key: HashMap<u64, usize> = HashMap::new();
            for (j, row) in parent_plain.rows_data.iter().enumerate() {
                by_key.insert(row[pk_idx], j);
            }
            let payload_idx: Vec<usize> = parent_payload
                .iter()
                .map(|c| parent_plain.col_idx(c))
                .collect::<Result<_>>()?;
            let a_idx = child_plain.col_idx(&attr)?;
            for (i, row) in child_plain.rows_data.iter_mut().enumerate() {
                match by_key.get(&row[a_idx]) {
                    Some(&j) if parent_plain.t[j] == 1 => {
                        for &c in &payload_idx {
                            row.push(parent_plain.rows_data[j][c]);
                        }
                    }
                    _ => {
                        for _ in &payload_idx {
                            row.push(0);
                        }
                        child_plain.t[i] = 0;
                    }
                }
            }
            child_plain.col_names.extend(parent_payload.iter().cloned());
        }
        merges.push((child, parent));
    }

    let schema = SchemaGraph::new(defs)?;
    let metas_out: Vec<PlainTableMeta> = schema
        .tables
        .iter()
        .map(|t| metas.remove(&t.name).expect("meta survives"))
        .collect();
    let plains_out: Vec<Option<PlainTable>> = metas_out
        .iter()
        .map(|m| plains.remove(&m.name).flatten())
        .collect();
    Ok(CollapsedDb {
        schema,
        metas: metas_out,
        plains: plains_out,
        merges,
    })
}
