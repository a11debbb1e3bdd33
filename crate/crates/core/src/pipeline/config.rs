//! Pipeline configuration: one TOML file, identical on both sides and
//! hash-verified at the handshake, since divergent configs would silently
//! break the obliviousness guarantees.

use crate::relational::{FkEdge, SchemaGraph, TableDef};
use crate::train::{DpParams, Hyperparams, ModelKind, RevealTo};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: RunMode,
    /// 3 reveals the join size, 4 purifies, 5 purifies and adds DP noise.
    pub privacy_level: u8,
    #[serde(default)]
    pub ring: RingConfig,
    #[serde(rename = "table")]
    pub tables: Vec<TableConfig>,
    #[serde(rename = "predicate", default)]
    pub predicates: Vec<PredicateConfig>,
    #[serde(default)]
    pub group_by: Option<GroupByConfig>,
    #[serde(default)]
    pub training: Option<TrainingConfig>,
    #[serde(default)]
    pub dp: Option<DpConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    TwoParty,
    TwoServer,
}

fn default_mode() -> RunMode {
    RunMode::TwoParty
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    /// Ring bit width; this engine is specialized to 64.
    #[serde(default = "default_bits")]
    pub bits: u32,
    #[serde(default = "default_frac")]
    pub frac_bits: u32,
}

fn default_bits() -> u32 {
    64
}
fn default_frac() -> u32 {
    crate::ring::DEFAULT_FRAC_BITS
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig {
            bits: 64,
            frac_bits: default_frac(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub name: String,
    pub owner: u8,
    /// CSV path, relative to the config file; only the owner reads it.
    pub csv: Option<String>,
    pub pk: String,
    /// Padded public row count; must be at least the real row count.
    pub rows: usize,
    /// FK edges: `[attr, parent_table]` pairs.
    #[serde(default)]
    pub fk: Vec<(String, String)>,
    /// Non-key attribute names, in column order.
    #[serde(default)]
    pub attrs: Vec<String>,
    /// Column type per attribute: id | int | float | str (default id for
    /// keys, int otherwise).
    #[serde(default)]
    pub types: BTreeMap<String, ColType>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColType {
    Id,
    Int,
    Float,
    Str,
}

/// One conjunct of the selection predicate. Entries with `table` set are
/// type-1 (applied owner-locally before the join); entries without are
/// type-2 (applied obliviously after the join).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateConfig {
    pub table: Option<String>,
    pub attr: String,
    pub op: CmpOp,
    /// Constant right-hand side (encoded per the attribute type)...
    pub value: Option<f64>,
    /// ...or another attribute.
    pub other: Option<String>,
    #[serde(default)]
    pub negate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupByConfig {
    pub attrs: Vec<String>,
    pub agg: Option<String>,
    pub op: GroupOp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupOp {
    Sum,
    Max,
    Min,
    Count,
    Distinct,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub features: Vec<String>,
    pub label: String,
    pub model: ModelKind,
    pub batch: usize,
    pub iters: usize,
    pub lr: f64,
    #[serde(default = "default_reveal")]
    pub reveal: RevealTo,
}

fn default_reveal() -> RevealTo {
    RevealTo::Both
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub clip: f64,
    pub tau: u64,
    /// The DP-protected table; declared, not derived.
    pub primary_table: String,
    #[serde(default)]
    pub log_base: Option<crate::train::LogBase>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ring.bits != 64 {
            return Err(Error::Config("only the 64-bit ring is supported".into()));
        }
        if !(8..=16).contains(&self.ring.frac_bits) {
            return Err(Error::Config("frac_bits must lie in 8..=16".into()));
        }
        if !(3..=5).contains(&self.privacy_level) {
            return Err(Error::Config("privacy_level must be 3, 4 or 5".into()));
        }
        if self.privacy_level == 5 {
            let dp = self
                .dp
                .as_ref()
                .ok_or_else(|| Error::Config("privacy level 5 requires [dp]".into()))?;
            if !self.tables.iter().any(|t| t.name == dp.primary_table) {
                return Err(Error::Config(format!(
                    "unknown primary private table {}",
                    dp.primary_table
                )));
            }
            self.dp_params()?.validate()?;
        }
        for t in &self.tables {
            if t.owner > 1 {
                return Err(Error::Config(format!(
                    "table {} owner must be 0 or 1",
                    t.name
                )));
            }
            if t.rows == 0 {
                return Err(Error::Config(format!("table {} has zero rows", t.name)));
            }
        }
        for p in &self.predicates {
            if p.value.is_some() == p.other.is_some() {
                return Err(Error::Config(
                    "predicate needs exactly one of value/other".into(),
                ));
            }
            if let Some(t) = &p.table {
                if !self.tables.iter().any(|tc| tc.name == *t) {
                    return Err(Error::Config(format!("predicate on unknown table {t}")));
                }
            }
        }
        self.schema()?;
        Ok(())
    }

    pub fn schema(&self) -> Result<SchemaGraph> {
        let defs = self
            .tables
            .iter()
            .map(|t| TableDef {
                name: t.name.clone(),
                owner: t.owner,
                pk: t.pk.clone(),
                attrs: t.attrs.clone(),
                fks: t
                    .fk
                    .iter()
                    .map(|(a, p)| FkEdge {
                        attr: a.clone(),
                        parent: p.clone(),
                    })
                    .collect(),
            })
            .collect();
        SchemaGraph::new(defs)
    }

    pub fn hyperparams(&self) -> Option<Hyperparams> {
        self.training.as_ref().map(|t| Hyperparams {
            batch: t.batch,
            iters: t.iters,
            lr: t.lr,
            model: t.model,
        })
    }

    pub fn dp_params(&self) -> Result<DpParams> {
        let dp = self
            .dp
            .as_ref()
            .ok_or_else(|| Error::Config("missing [dp] section".into()))?;
        Ok(DpParams {
            epsilon: dp.epsilon,
            delta: dp.delta,
            clip: dp.clip,
            tau: dp.tau,
            log_base: dp.log_base.unwrap_or(crate::train::LogBase::Natural),
        })
    }

    pub fn col_type(&self, table: &str, attr: &str) -> ColType {
        let t = self.tables.iter().find(|t| t.name == table);
        if let Some(t) = t {
            if let Some(ty) = t.types.get(attr) {
                return *ty;
            }
            if t.pk == attr || t.fk.iter().any(|(a, _)| a == attr) {
                return ColType::Id;
            }
        }
        ColType::Int
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
privacy_level = 4

[[table]]
name = "ratings"
owner = 0
pk = "rating_id"
rows = 16
fk = [["user_id", "users"], ["movie_id", "movies"]]
attrs = ["score"]

[table.types]
score = "float"

[[table]]
name = "users"
owner = 1
pk = "user_id"
rows = 8
attrs = ["age"]

[[table]]
name = "movies"
owner = 1
pk = "movie_id"
rows = 8
attrs = ["year"]

[[predicate]]
table = "users"
attr = "age"
op = "lt"
value = 40

[training]
features = ["age", "year"]
label = "score"
model = "linear"
batch = 4
iters = 10
lr = 0.05
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = PipelineConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.tables.len(), 3);
        assert_eq!(cfg.schema().unwrap().fact, "ratings");
        assert_eq!(cfg.col_type("ratings", "score"), ColType::Float);
        assert_eq!(cfg.col_type("ratings", "user_id"), ColType::Id);
    }

    #[test]
    fn rejects_level5_without_dp() {
        let text = SAMPLE.replace("privacy_level = 4", "privacy_level = 5");
        assert!(PipelineConfig::parse(&text).is_err());
    }

    #[test]
    fn rejects_cyclic_schema() {
        let text = r#"
seed = 1
privacy_level = 4
[[table]]
name = "a"
owner = 0
pk = "pa"
rows = 4
fk = [["pb", "b"]]
[[table]]
name = "b"
owner = 0
pk = "pb"
rows = 4
fk = [["pa2", "a"]]
"#;
        assert!(PipelineConfig::parse(text).is_err());
    }
}
