//! Per-stage cost accounting.
//!
//! Every protocol stage records bytes sent per party, message counts,
//! communication rounds, and primitive-operation counts. Rounds are
//! measured as communication depth: a message's depth is one more than the
//! deepest message its sender had received when sending it, so a
//! simultaneous exchange in both directions costs one round.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageStats {
    pub bytes: u64,
    pub msgs: u64,
    pub rounds: u64,
    pub arith_triples: u64,
    pub bool_triples: u64,
    pub comparisons: u64,
    pub oep_calls: u64,
    pub psi_calls: u64,
    pub sort_gates: u64,
}

impl StageStats {
    pub fn absorb(&mut self, other: &StageStats) {
        self.bytes += other.bytes;
        self.msgs += other.msgs;
        self.rounds += other.rounds;
        self.arith_triples += other.arith_triples;
        self.bool_triples += other.bool_triples;
        self.comparisons += other.comparisons;
        self.oep_calls += other.oep_calls;
        self.psi_calls += other.psi_calls;
        self.sort_gates += other.sort_gates;
    }
}

/// One party's view of the cost of a protocol run.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct PartyLedger {
    /// Stage label -> stats, insertion-ordered by first use.
    pub stages: Vec<(String, StageStats)>,
}

impl PartyLedger {
    pub fn stats_mut(&mut self, stage: &str) -> &mut StageStats {
        if let Some(pos) = self.stages.iter().position(|(name, _)| name == stage) {
            return &mut self.stages[pos].1;
        }
        self.stages.push((stage.to_string(), StageStats::default()));
        &mut self.stages.last_mut().unwrap().1
    }

    pub fn get(&self, stage: &str) -> Option<&StageStats> {
        self.stages
            .iter()
            .find(|(name, _)| name == stage)
            .map(|(_, s)| s)
    }

    pub fn total_bytes(&self) -> u64 {
        self.stages.iter().map(|(_, s)| s.bytes).sum()
    }
}

/// Merged two-party ledger, identical on both sides after exchange.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct CostLedger {
    pub parties: [PartyLedger; 2],
}

impl CostLedger {
    pub fn merged(p0: PartyLedger, p1: PartyLedger) -> Self {
        CostLedger { parties: [p0, p1] }
    }

    /// Total bytes sent by both parties in one stage.
    pub fn stage_bytes(&self, stage: &str) -> u64 {
        self.parties
            .iter()
            .filter_map(|p| p.get(stage))
            .map(|s| s.bytes)
            .sum()
    }

    /// Sum of bytes over all stages whose label starts with `prefix`.
    pub fn bytes_with_prefix(&self, prefix: &str) -> u64 {
        self.parties
            .iter()
            .flat_map(|p| p.stages.iter())
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(_, s)| s.bytes)
            .sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.parties.iter().map(|p| p.total_bytes()).sum()
    }

    /// Rounds of a stage: the maximum depth advance either party observed.
    pub fn stage_rounds(&self, stage: &str) -> u64 {
        self.parties
            .iter()
            .filter_map(|p| p.get(stage))
            .map(|s| s.rounds)
            .max()
            .unwrap_or(0)
    }

    /// Stage labels in party-0 order, then any party-1-only labels.
    pub fn stage_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.parties[0]
            .stages
            .iter()
            .map(|(n, _)| n.clone())
            .collect();
        for (n, _) in &self.parties[1].stages {
            if !labels.contains(n) {
                labels.push(n.clone());
            }
        }
        labels
    }

    /// JSON export: one object per (stage, party).
    pub fn to_json(&self) -> serde_json::Value {
        let mut rows = Vec::new();
        for label in self.stage_labels() {
            for (party, pl) in self.parties.iter().enumerate() {
                let stats = pl.get(&label).cloned().unwrap_or_default();
                rows.push(serde_json::json!({
                    "stage": label,
                    "party": party,
                    "bytes": stats.bytes,
                    "rounds": stats.rounds,
                    "triples": stats.arith_triples,
                    "gates": stats.bool_triples,
                    "comparisons": stats.comparisons,
                    "oep_calls": stats.oep_calls,
                    "psi_calls": stats.psi_calls,
                    "sort_gates": stats.sort_gates,
                }));
            }
        }
        serde_json::Value::Array(rows)
    }

    /// Per-stage message-length digest equality is checked elsewhere; the
    /// ledger asserts the coarse invariant that byte/round counts match.
    pub fn same_shape(&self, other: &CostLedger) -> bool {
        self.stage_labels() == other.stage_labels()
            && self.stage_labels().iter().all(|l| {
                self.stage_bytes(l) == other.stage_bytes(l)
                    && self.stage_rounds(l) == other.stage_rounds(l)
            })
    }
}

/// Transcript shape: per stage, the ordered (direction, length) sequence of
/// every message, folded into a digest. Two runs with the same public shape
/// must produce identical digests.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct TranscriptShape {
    pub stages: BTreeMap<String, StageShape>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageShape {
    pub msgs: u64,
    pub bytes: u64,
    pub digest: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = if seed == 0 { FNV_OFFSET } else { seed };
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl TranscriptShape {
    pub fn record(&mut self, stage: &str, outgoing: bool, len: usize) {
        let entry = self.stages.entry(stage.to_string()).or_default();
        entry.msgs += 1;
        entry.bytes += len as u64;
        let mut rec = [0u8; 9];
        rec[0] = outgoing as u8;
        rec[1..9].copy_from_slice(&(len as u64).to_le_bytes());
        entry.digest = fnv1a(entry.digest, &rec);
    }

    /// Serialize to the `trace.bin` wire format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.stages.len() as u32).to_le_bytes());
        for (name, shape) in &self.stages {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&shape.msgs.to_le_bytes());
            out.extend_from_slice(&shape.bytes.to_le_bytes());
            out.extend_from_slice(&shape.digest.to_le_bytes());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_accumulation() {
        let mut pl = PartyLedger::default();
        pl.stats_mut("psi").bytes += 10;
        pl.stats_mut("oep").bytes += 5;
        pl.stats_mut("psi").bytes += 3;
        assert_eq!(pl.get("psi").unwrap().bytes, 13);
        assert_eq!(pl.total_bytes(), 18);
    }

    #[test]
    fn transcript_digest_is_order_sensitive() {
        let mut a = TranscriptShape::default();
        a.record("s", true, 8);
        a.record("s", false, 16);
        let mut b = TranscriptShape::default();
        b.record("s", false, 16);
        b.record("s", true, 8);
        assert_ne!(a, b);
    }
}
