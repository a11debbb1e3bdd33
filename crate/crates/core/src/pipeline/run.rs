//! The end-to-end party program: handshake, ingest, pre-joins, secure
//! join, post-join operators, purification, training, reports.

use crate::ledger::{CostLedger, TranscriptShape};
use crate::pipeline::config::{GroupOp, PipelineConfig, RunMode};
use crate::pipeline::ingest::{self, PlainTableMeta};
use crate::pipeline::plan::collapse_same_owner;
use crate::purify::{level3_compact, purify, PurifiedTable};
use crate::relational::acyclic::{acyclic_join_mode, EngineMode, JoinOutcome};
use crate::relational::{
    apply_predicate, group_by, AggOp, ColData, Column, Predicate, SharedTable,
};
use crate::ring::{bytes_to_words, words_to_bytes, FixedPoint};
use crate::sharing::{derive_seed, PartyCtx};
use crate::train::{reveal_model, sgd_train, RevealTo};
use crate::transport::Wire;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelReport {
    /// Decoded coefficients when revealed to this party.
    pub weights: Option<Vec<f64>>,
    pub model: crate::train::ModelKind,
    pub iters: usize,
    pub batch: usize,
    pub lr: f64,
    pub privacy_level: u8,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub tau: Option<u64>,
    pub clip: Option<f64>,
    pub frac_bits: u32,
    pub features: Vec<String>,
    pub label: String,
}

/// Everything a party learns from one pipeline run.
pub struct PipelineOutput {
    pub ledger: CostLedger,
    pub trace: TranscriptShape,
    pub model: Option<ModelReport>,
    /// The fact-side join result in shared form (tests reconstruct it).
    pub join: JoinOutcome,
    /// The same-owner pre-joins that ran, for report/testing.
    pub merges: Vec<(String, String)>,
}

/// Hash of the canonical config serialization, checked at the handshake.
pub fn config_digest(cfg: &PipelineConfig) -> u64 {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    crate::sharing::public_digest(&bytes)
}

pub fn run_pipeline(cfg: &PipelineConfig, base: &Path, wire: &mut Wire) -> Result<PipelineOutput> {
    cfg.validate()?;
    let fp = FixedPoint::new(cfg.ring.frac_bits);
    let mut ctx = PartyCtx::new(wire, cfg.seed, fp);
    let me = ctx.party();

    // Handshake: config digest and seed must match.
    ctx.scoped("handshake", |ctx| {
        let digest = config_digest(cfg);
        let mine = [digest, cfg.seed];
        let theirs = ctx.wire.exchange(&words_to_bytes(&mine))?;
        let theirs = bytes_to_words(&theirs).unwrap_or_default();
        if theirs != mine {
            return Err(Error::ConfigMismatch {
                ours: digest,
                theirs: theirs.first().copied().unwrap_or(0),
            });
        }
        Ok(())
    })?;

    // Ingest own tables, collapse same-owner subtrees in plaintext.
    let schema = cfg.schema()?;
    let (metas, plains) = ingest::ingest(cfg, me, base)?;
    let collapsed = collapse_same_owner(&schema, metas, plains)?;

    // Enter the protocol: plaintext columns stay with their owner in the
    // two-party mode; the two-server mode uploads fresh shares of
    // everything.
    let mode = match cfg.mode {
        RunMode::TwoParty => EngineMode::TwoParty,
        RunMode::TwoServer => EngineMode::TwoServer,
    };
    let mut db: Vec<SharedTable> = Vec::new();
    for (meta, plain) in collapsed.metas.iter().zip(&collapsed.plains) {
        let table = ingest::to_shared_table(meta, plain.as_ref());
        db.push(match mode {
            EngineMode::TwoParty => table,
            EngineMode::TwoServer => upload_table(&mut ctx, meta, table)?,
        });
    }

    let join_salt = derive_seed(cfg.seed, 0x6a6f_696e);
    let mut outcome = ctx.scoped("join", |ctx| {
        acyclic_join_mode(ctx, db, &collapsed.schema, join_salt, mode)
    })?;

    // Type-2 predicates, conjoined.
    let type2: Vec<&crate::pipeline::config::PredicateConfig> = cfg
        .predicates
        .iter()
        .filter(|p| p.table.is_none())
        .collect();
    if !type2.is_empty() {
        let mut pred: Option<Predicate> = None;
        for p in type2 {
            let owner_table = cfg
                .tables
                .iter()
                .find(|t| {
                    t.attrs.contains(&p.attr)
                        || t.pk == p.attr
                        || t.fk.iter().any(|(a, _)| *a == p.attr)
                })
                .map(|t| t.name.clone())
                .unwrap_or_default();
            let leaf = ingest::predicate_leaf(cfg, &owner_table, p, &fp);
            pred = Some(match pred {
                None => leaf,
                Some(acc) => Predicate::And(Box::new(acc), Box::new(leaf)),
            });
        }
        outcome.table = apply_predicate(&mut ctx, &outcome.table, &pred.unwrap())?;
    }

    if let Some(g) = &cfg.group_by {
        let (op, agg) = match g.op {
            GroupOp::Sum => (AggOp::Sum, g.agg.as_deref()),
            GroupOp::Max => (AggOp::Max, g.agg.as_deref()),
            GroupOp::Min => (AggOp::Min, g.agg.as_deref()),
            GroupOp::Count => (AggOp::Count, None),
            GroupOp::Distinct => (AggOp::DistinctProject, None),
        };
        outcome.table = group_by(&mut ctx, &outcome.table, &g.attrs, agg, op)?;
    }

    // Purify / compact, then train.
    let mut model_report = None;
    if let Some(tc) = &cfg.training {
        let hp = cfg.hyperparams().unwrap();
        let (purified, shared_j): (PurifiedTable, u64) = match cfg.privacy_level {
            3 => {
                let p = level3_compact(&mut ctx, &outcome.table)?;
                if p.rows() == 0 {
                    return Err(Error::EmptyJoin);
                }
                (p, 0)
            }
            _ => purify(&mut ctx, &outcome.table)?,
        };
        let dp_params = if cfg.privacy_level == 5 {
            Some(cfg.dp_params()?)
        } else {
            None
        };
        let model = sgd_train(
            &mut ctx,
            &purified,
            &tc.features,
            &tc.label,
            &hp,
            dp_params.as_ref().map(|p| (p, shared_j)),
            cfg.seed,
        )?;
        let weights = reveal_model(&mut ctx, &model, tc.reveal)?;
        model_report = Some(ModelReport {
            weights,
            model: tc.model,
            iters: hp.iters,
            batch: hp.batch,
            lr: hp.lr,
            privacy_level: cfg.privacy_level,
            epsilon: dp_params.as_ref().map(|p| p.epsilon),
            delta: dp_params.as_ref().map(|p| p.delta),
            tau: dp_params.as_ref().map(|p| p.tau),
            clip: dp_params.as_ref().map(|p| p.clip),
            frac_bits: fp.frac_bits,
            features: tc.features.clone(),
            label: tc.label.clone(),
        });
        let _ = tc.reveal == RevealTo::None;
    }

    ctx.check_dealer_sync()?;
    let ledger = ctx.wire.merged_ledger()?;
    let trace = ctx.wire.shape.clone();
    Ok(PipelineOutput {
        ledger,
        trace,
        model: model_report,
        join: outcome,
        merges: collapsed.merges,
    })
}

/// Replace plaintext columns with fresh shares supplied by the owner.
fn upload_table(
    ctx: &mut PartyCtx,
    meta: &PlainTableMeta,
    table: SharedTable,
) -> Result<SharedTable> {
    ctx.scoped("upload", |ctx| {
        let rows = table.rows;
        let owner = meta.owner;
        let mut cols = Vec::with_capacity(table.cols.len());
        for c in &table.cols {
            let shares = match &c.data {
                ColData::Plain { vals, .. } => {
                    let vals_opt = if ctx.party() == owner {
                        Some(vals.as_slice())
                    } else {
                        None
                    };
                    ctx.input_many(owner, vals_opt, rows)?
                }
                ColData::Shared(s) => s.clone(),
            };
            cols.push(Column {
                name: c.name.clone(),
                data: ColData::Shared(shares),
            });
        }
        let indicator = match &table.indicator {
            Some(ColData::Plain { vals, .. }) => {
                let vals_opt = if ctx.party() == owner {
                    Some(vals.as_slice())
                } else {
                    None
                };
                Some(ColData::Shared(ctx.input_many(owner, vals_opt, rows)?))
            }
            other => other.clone(),
        };
        Ok(SharedTable {
            name: table.name,
            rows,
            pk: table.pk,
            cols,
            indicator,
        })
    })
}
