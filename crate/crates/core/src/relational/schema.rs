//! The foreign-key graph: tables, ownership, PK/FK edges, and the fact
//! table. The graph must be a DAG with exactly one vertex of in-degree 0.

use crate::{Error, Result};
use std::collections::{HashMap, HashSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FkEdge {
    /// FK attribute in the child table.
    pub attr: String,
    /// Referenced (parent) table; the join matches `attr` against its PK.
    pub parent: String,
}

#[derive(Clone, Debug)]
pub struct TableDef {
    pub name: String,
    pub owner: u8,
    pub pk: String,
    /// Non-key attributes.
    pub attrs: Vec<String>,
    pub fks: Vec<FkEdge>,
}

impl TableDef {
    /// Column list; an FK attribute that doubles as the PK (a PK-PK join)
    /// is one physical column.
    pub fn all_attrs(&self) -> Vec<String> {
        let mut out = vec![self.pk.clone()];
        out.extend(
            self.fks
                .iter()
                .filter(|e| e.attr != self.pk)
                .map(|e| e.attr.clone()),
        );
        out.extend(self.attrs.iter().cloned());
        out
    }
}

#[derive(Clone, Debug)]
pub struct SchemaGraph {
    pub tables: Vec<TableDef>,
    pub fact: String,
}

impl SchemaGraph {
    pub fn new(tables: Vec<TableDef>) -> Result<Self> {
        let fact = {
            let mut referenced: HashSet<&str> = HashSet::new();
            for t in &tables {
                for e in &t.fks {
                    referenced.insert(e.parent.as_str());
                }
            }
            let roots: Vec<&TableDef> = tables
                .iter()
                .filter(|t| !referenced.contains(t.name.as_str()))
                .collect();
            if roots.len() != 1 {
                return Err(Error::Schema(format!(
                    "expected exactly one fact table (in-degree 0), found {}",
                    roots.len()
                )));
            }
            roots[0].name.clone()
        };
        let graph = SchemaGraph { tables, fact };
        graph.validate()?;
        Ok(graph)
    }

    pub fn table(&self, name: &str) -> Result<&TableDef> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown table {name}")))
    }

    pub fn validate(&self) -> Result<()> {
        let names: HashSet<&str> = self.tables.iter().map(|t| t.name.as_str()).collect();
        if names.len() != self.tables.len() {
            return Err(Error::Schema("duplicate table names".into()));
        }
        for t in &self.tables {
            let mut seen = HashSet::new();
            for a in t.all_attrs() {
                if !seen.insert(a.clone()) {
                    return Err(Error::Schema(format!(
                        "duplicate attribute {a} in table {}",
                        t.name
                    )));
                }
            }
            for e in &t.fks {
                if !names.contains(e.parent.as_str()) {
                    return Err(Error::Schema(format!(
                        "table {} references unknown parent {}",
                        t.name, e.parent
                    )));
                }
                if e.parent == t.name {
                    return Err(Error::Schema(format!("self-reference in {}", t.name)));
                }
            }
        }
        // Attribute names must be unambiguous once every table merges into
        // the fact-side result: repeats are allowed only for FK attributes
        // of the same name referencing the same parent (one join variable)
        // or an FK matching its parent's PK name.
        let mut seen: HashMap<String, (String, Option<String>)> = HashMap::new(); // attr -> (table, fk parent)
        for t in &self.tables {
            let mut check = |attr: &str, parent: Option<&str>| -> Result<()> {
                if let Some((other_table, other_parent)) = seen.get(attr) {
                    let compatible = match (parent, other_parent.as_deref()) {
                        (Some(p), Some(q)) => p == q,
                        _ => false,
                    };
                    if !compatible {
                        return Err(Error::Schema(format!(
                            "attribute {attr} appears in both {other_table} and {} without a shared parent",
                            t.name
                        )));
                    }
                } else {
                    seen.insert(attr.to_string(), (t.name.clone(), parent.map(String::from)));
                }
                Ok(())
            };
            // A table's PK counts as an FK target of itself so that child
            // FKs with the same name are compatible with it. When the PK
            // itself is an FK (PK-PK join), the referenced parent wins.
            for e in &t.fks {
                check(&e.attr, Some(&e.parent))?;
            }
            if !t.fks.iter().any(|e| e.attr == t.pk) {
                check(&t.pk, Some(&t.name))?;
            }
            for a in &t.attrs {
                check(a, None)?;
            }
        }
        // Acyclicity via repeated leaf elimination.
        let mut out_deg: HashMap<&str, usize> = self
            .tables
            .iter()
            .map(|t| (t.name.as_str(), t.fks.len()))
            .collect();
        let mut parents_of: HashMap<&str, Vec<&str>> = HashMap::new();
        for t in &self.tables {
            for e in &t.fks {
                parents_of
                    .entry(e.parent.as_str())
                    .or_default()
                    .push(t.name.as_str());
            }
        }
        let mut removed: HashSet<&str> = HashSet::new();
        loop {
            let next: Vec<&str> = out_deg
                .iter()
                .filter(|(n, &d)| d == 0 && !removed.contains(*n))
                .map(|(n, _)| *n)
                .collect();
            if next.is_empty() {
                break;
            }
            for n in next {
                removed.insert(n);
                if let Some(children) = parents_of.get(n) {
                    for c in children {
                        *out_deg.get_mut(c).unwrap() -= 1;
                    }
                }
            }
        }
        if removed.len() != self.tables.len() {
            return Err(Error::Schema("foreign-key graph contains a cycle".into()));
        }
        Ok(())
    }

    /// Edges into `parent`: (child table, fk attr), deterministic order.
    pub fn edges_into(&self, parent: &str) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for t in &self.tables {
            for e in &t.fks {
                if e.parent == parent {
                    out.push((t.name.clone(), e.attr.clone()));
                }
            }
        }
        out
    }
}
