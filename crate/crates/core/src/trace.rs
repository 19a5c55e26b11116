//! Batch history, current position and authenticity, rebuilt from the
//! chain and the payload store alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crypto::KeyDirectory;
use crate::events::{TxDetail, TxPayload};
use crate::ledger::{Chain, HashDigest, PayloadHeader, TransactionRecord, TxKind};
use crate::overlay::NodeId;
use crate::storage::PayloadStore;
use crate::supply::{fold_step, CustodyState, IllegalTransition, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub timestamp: u64,
    pub actor: NodeId,
    pub kind: TxKind,
    pub block_height: u64,
    pub tx_id: HashDigest,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub role: Role,
    pub node: NodeId,
}

impl From<NodeId> for Position {
    fn from(node: NodeId) -> Self {
        Self { role: node.role, node }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceReport {
    pub batch_id: String,
    pub unknown_batch: bool,
    /// Batch a lot was split from, when the lot's origin checks out.
    pub parent_batch: Option<String>,
    pub events: Vec<TraceEvent>,
    /// State after folding every event up to the first illegal one.
    pub final_state: Option<CustodyState>,
    pub position: Option<Position>,
    pub illegal_transition: Option<IllegalTransition>,
}

impl TraceReport {
    /// Events that move custody, skipping complaints.
    pub fn custody_events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.kind.moves_custody())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if self.unknown_batch {
            let _ = writeln!(out, "{}: unknown batch", self.batch_id);
            return out;
        }
        let _ = writeln!(out, "batch {}", self.batch_id);
        for e in &self.events {
            let _ = writeln!(
                out,
                "  h{:<4} t={:<10} {:<17} {:<14} {}",
                e.block_height,
                e.timestamp,
                e.kind.as_str(),
                e.actor.to_string(),
                e.detail
            );
        }
        let state = self.final_state.map_or("(none)".to_string(), |s| s.to_string());
        let at = self
            .position
            .as_ref()
            .map_or("(unknown)".to_string(), |p| p.node.to_string());
        let _ = writeln!(out, "state {state} at {at}");
        if let Some(t) = &self.illegal_transition {
            let _ = writeln!(out, "{t}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthVerdict {
    pub batch_id: String,
    pub authentic: bool,
    pub findings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown batch {0}")]
pub struct UnknownBatch(pub String);

/// Role expected to sign each kind of event.
pub fn expected_signer(kind: TxKind) -> Role {
    match kind {
        TxKind::Produce | TxKind::ComplaintResponse => Role::Producer,
        TxKind::MineVerdict | TxKind::ReturnToProducer => Role::Miner,
        TxKind::SupplierForward | TxKind::SupplierReturn => Role::Supplier,
        TxKind::Distribute => Role::Distributor,
        TxKind::Dispense | TxKind::Deliver => Role::Pharmacist,
        TxKind::Complaint => Role::Customer,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Loc {
    block: usize,
    index: usize,
}

/// Per-batch lookup over one chain, for tracing many batches.
pub struct TraceIndex<'a> {
    chain: &'a Chain,
    payloads: &'a PayloadStore,
    by_batch: BTreeMap<&'a str, Vec<Loc>>,
    /// Structural problems by block position.
    broken: Vec<(usize, &'static str)>,
    /// Lots taking more units than their parent batch had left, with the
    /// excess, counting sibling lots in chain order.
    over_allocated: BTreeMap<String, u64>,
}

impl<'a> TraceIndex<'a> {
    pub fn new(chain: &'a Chain, payloads: &'a PayloadStore) -> Self {
        let mut by_batch: BTreeMap<&str, Vec<Loc>> = BTreeMap::new();
        for (b, block) in chain.blocks().iter().enumerate() {
            for (index, tx) in block.body.iter().enumerate() {
                by_batch.entry(&tx.batch_id).or_default().push(Loc { block: b, index });
            }
        }
        let mut index = Self {
            chain,
            payloads,
            by_batch,
            broken: structural_failures(chain),
            over_allocated: BTreeMap::new(),
        };
        index.over_allocated = index.scan_allocations();
        index
    }

    fn scan_allocations(&self) -> BTreeMap<String, u64> {
        let mut produced: BTreeMap<String, u64> = BTreeMap::new();
        let mut used: BTreeMap<String, u64> = BTreeMap::new();
        let mut over = BTreeMap::new();
        for (_, _, tx) in self.chain.transactions() {
            if !matches!(tx.kind, TxKind::Produce | TxKind::Distribute) {
                continue;
            }
            let Some(payload) = self.payload(tx) else { continue };
            match payload.detail {
                TxDetail::Produce { batch } => {
                    produced.entry(tx.batch_id.clone()).or_insert(batch.quantity);
                }
                TxDetail::Distribute {
                    parent_batch,
                    quantity,
                    ..
                } => {
                    let Some(&limit) = produced.get(&parent_batch) else { continue };
                    let total = used.entry(parent_batch).or_insert(0);
                    *total = total.saturating_add(quantity);
                    if *total > limit {
                        over.insert(tx.batch_id.clone(), (*total - limit).min(quantity));
                    }
                }
                _ => {}
            }
        }
        over
    }

    pub fn batch_ids(&self) -> impl Iterator<Item = &str> {
        self.by_batch.keys().copied()
    }

    fn record(&self, loc: Loc) -> &'a TransactionRecord {
        &self.chain.blocks()[loc.block].body[loc.index]
    }

    fn payload(&self, tx: &TransactionRecord) -> Option<TxPayload> {
        self.payloads
            .get_payload(&tx.tx_id)
            .and_then(|bytes| TxPayload::decode(bytes).ok())
    }

    /// Parent batch named by the lot's opening Distribute, if the lot id
    /// extends it as `"{parent}/..."` and the parent is on the chain.
    fn parent_of(&self, batch_id: &str, own: &[Loc]) -> Option<(String, Loc)> {
        let first = own.iter().copied().find(|l| self.record(*l).kind.moves_custody())?;
        let tx = self.record(first);
        if tx.kind != TxKind::Distribute {
            return None;
        }
        match self.payload(tx)?.detail {
            TxDetail::Distribute { parent_batch, .. }
                if batch_id
                    .strip_prefix(parent_batch.as_str())
                    .is_some_and(|rest| rest.starts_with('/'))
                    && self.by_batch.contains_key(parent_batch.as_str()) =>
            {
                Some((parent_batch, first))
            }
            _ => None,
        }
    }

    /// Locations making up a batch's history: its own, preceded for a lot by
    /// the parent's history up to the split.
    fn locations(&self, batch_id: &str) -> (Vec<Loc>, Option<String>) {
        let Some(own) = self.by_batch.get(batch_id) else {
            return (Vec::new(), None);
        };
        match self.parent_of(batch_id, own) {
            Some((parent, split)) => {
                let (inherited, _) = self.locations(&parent);
                let mut all: Vec<Loc> = inherited.into_iter().filter(|l| *l < split).collect();
                all.extend(own.iter().copied());
                (all, Some(parent))
            }
            None => (own.clone(), None),
        }
    }

    pub fn trace(&self, batch_id: &str) -> TraceReport {
        let (locs, parent_batch) = self.locations(batch_id);
        let mut report = TraceReport {
            batch_id: batch_id.to_string(),
            unknown_batch: locs.is_empty(),
            parent_batch,
            events: Vec::with_capacity(locs.len()),
            final_state: None,
            position: None,
            illegal_transition: None,
        };
        let mut state = None;
        for loc in locs {
            let tx = self.record(loc);
            let payload = self.payload(tx);
            report.events.push(TraceEvent {
                timestamp: tx.timestamp,
                actor: tx.actor.clone(),
                kind: tx.kind,
                block_height: self.chain.blocks()[loc.block].header.height,
                tx_id: tx.tx_id,
                detail: payload
                    .as_ref()
                    .map_or_else(|| "(payload unavailable)".to_string(), |p| p.detail.summary()),
            });
            if !tx.kind.moves_custody() {
                continue;
            }
            // Position follows the latest custody event even past an
            // illegal one; the state stops at the last legal step.
            report.position = payload.map(|p| p.recipient.into());
            if report.illegal_transition.is_none() {
                match fold_step(state, tx.kind) {
                    Ok(next) => state = next,
                    Err(e) => report.illegal_transition = Some(e),
                }
            }
        }
        report.final_state = state;
        report
    }

    pub fn verify(&self, batch_id: &str, keys: &KeyDirectory) -> AuthVerdict {
        let (locs, _) = self.locations(batch_id);
        let report = self.trace(batch_id);
        let mut findings = Vec::new();
        if report.unknown_batch {
            findings.push("unknown batch".to_string());
        } else {
            let root = batch_id.split('/').next().unwrap_or(batch_id);
            let origin_ok = locs.iter().any(|l| {
                let tx = self.record(*l);
                tx.kind == TxKind::Produce
                    && tx.batch_id == root
                    && tx.actor.role == Role::Producer
                    && tx.signature_valid(keys)
            });
            if !origin_ok {
                findings.push("unknown batch origin".to_string());
            }
        }
        let mut last_block = None;
        for loc in &locs {
            let tx = self.record(*loc);
            let what = || format!("{} tx {} by {}", tx.kind, tx.tx_id.short(), tx.actor);
            last_block = last_block.max(Some(loc.block));
            if !tx.signature_valid(keys) {
                findings.push(format!("signature failure: {}", what()));
            }
            if tx.actor.role != expected_signer(tx.kind) {
                findings.push(format!("unauthorized actor: {}", what()));
            }
            match self.payloads.get_payload(&tx.tx_id) {
                None => findings.push(format!("missing payload: {}", what())),
                Some(bytes) => {
                    if !(crate::ledger::hash_payload(bytes) == tx.tx_id
                        && PayloadHeader::decode(bytes).is_some_and(|h| h.matches(tx)))
                    {
                        findings.push(format!("payload mismatch: {}", what()));
                    }
                }
            }
        }
        if let Some(t) = &report.illegal_transition {
            findings.push(t.to_string());
        }
        if let Some(excess) = self.over_allocated.get(batch_id) {
            findings.push(format!(
                "allocation exceeds produced quantity of {} by {excess}",
                report.parent_batch.as_deref().unwrap_or("?")
            ));
        }
        if let Some(last) = last_block {
            for (position, issue) in self.broken.iter().filter(|(p, _)| *p <= last) {
                findings.push(format!("chain-link failure at height {position}: {issue}"));
            }
        }
        AuthVerdict {
            batch_id: batch_id.to_string(),
            authentic: findings.is_empty(),
            findings,
        }
    }

}

fn structural_failures(chain: &Chain) -> Vec<(usize, &'static str)> {
    use crate::ledger::chain_structure;
    let blocks = chain.blocks();
    let mut out = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| &blocks[p]);
        for issue in chain_structure(prev, block, i) {
            out.push((i, issue));
        }
    }
    out
}

pub fn trace_history(batch_id: &str, chain: &Chain, payloads: &PayloadStore) -> TraceReport {
    TraceIndex::new(chain, payloads).trace(batch_id)
}

pub fn current_position(batch_id: &str, chain: &Chain, payloads: &PayloadStore) -> Result<Position, UnknownBatch> {
    let report = trace_history(batch_id, chain, payloads);
    match report.position {
        Some(p) if !report.unknown_batch => Ok(p),
        _ => Err(UnknownBatch(batch_id.to_string())),
    }
}

pub fn verify_authenticity(
    batch_id: &str,
    chain: &Chain,
    payloads: &PayloadStore,
    keys: &KeyDirectory,
) -> AuthVerdict {
    TraceIndex::new(chain, payloads).verify(batch_id, keys)
}
