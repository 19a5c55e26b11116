use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::SimOutcome;
use crate::ledger::verify_chain;
use crate::supply::{CustodyState, Role};
use crate::trace::TraceIndex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvariantViolation {
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

/// Everything a clean run must satisfy. An empty result means the run is
/// consistent.
pub fn check_invariants(outcome: &SimOutcome) -> Vec<InvariantViolation> {
    let mut out = Vec::new();
    let mut fail = |invariant: &'static str, detail: String| out.push(InvariantViolation { invariant, detail });

    let integrity = verify_chain(&outcome.chain, &outcome.keys, &outcome.payloads);
    for finding in integrity.findings() {
        fail("chain integrity", finding.to_string());
    }
    for v in outcome.payloads.self_check() {
        fail("payload store", format!("{} hashes to {}", v.digest, v.actual));
    }

    let index = TraceIndex::new(&outcome.chain, &outcome.payloads);

    // Rejected batches never move past the miner.
    for verdict in outcome.verdicts.iter().filter(|v| !v.is_accepted()) {
        let report = index.trace(&verdict.batch_id);
        if report.final_state != Some(CustodyState::ReturnedToProducer) {
            fail(
                "pipeline safety",
                format!("rejected {} ended in {:?}", verdict.batch_id, report.final_state),
            );
        }
        if outcome.allocations.iter().any(|a| a.batch_id == verdict.batch_id) {
            fail("pipeline safety", format!("rejected {} was allocated", verdict.batch_id));
        }
    }

    // delivered <= allocated <= produced, per batch.
    let mut allocated: BTreeMap<&str, u64> = BTreeMap::new();
    for a in &outcome.allocations {
        *allocated.entry(&a.batch_id).or_insert(0) += a.quantity;
    }
    let mut delivered: BTreeMap<&str, u64> = BTreeMap::new();
    for (a, _) in &outcome.delivered {
        *delivered.entry(&a.batch_id).or_insert(0) += a.quantity;
    }
    for batch in &outcome.batches {
        let id = batch.batch_id.as_str();
        let (d, a) = (delivered.get(id).copied().unwrap_or(0), allocated.get(id).copied().unwrap_or(0));
        if !(d <= a && a <= batch.quantity) {
            fail("conservation", format!("{id}: delivered {d}, allocated {a}, produced {}", batch.quantity));
        }
    }

    // No unit leaves a later-expiring batch while an earlier one of the same
    // medicine still has stock.
    for a in &outcome.allocations {
        let Some(from) = outcome.inventory.iter().find(|b| b.batch_id == a.batch_id) else {
            fail("earliest expiry first", format!("{} allocated from unknown stock", a.lot_id));
            continue;
        };
        for other in &outcome.inventory {
            let earlier = (other.expiry_date, &other.batch_id) < (from.expiry_date, &from.batch_id);
            let left = other.quantity - allocated.get(other.batch_id.as_str()).copied().unwrap_or(0);
            if other.medicine_name == from.medicine_name && earlier && left > 0 {
                fail(
                    "earliest expiry first",
                    format!("{} drew on {} while {} had {left} left", a.lot_id, from.batch_id, other.batch_id),
                );
            }
        }
    }

    // The chain tells the same story as the simulator's own log.
    let traced: Vec<&str> = index.batch_ids().collect();
    let witnessed: Vec<&str> = outcome.truth.units.keys().map(String::as_str).collect();
    if traced != witnessed {
        fail("trace oracle", format!("chain has units {traced:?}, simulator logged {witnessed:?}"));
    }
    for (unit, truth) in &outcome.truth.units {
        let report = index.trace(unit);
        let got: Vec<_> = report
            .events
            .iter()
            .map(|e| (e.tx_id, e.kind, &e.actor, e.timestamp))
            .collect();
        let want: Vec<_> = truth.iter().map(|e| (e.tx_id, e.kind, &e.actor, e.timestamp)).collect();
        if got != want {
            fail("trace oracle", format!("{unit}: history differs from the simulator log"));
        }
        let position = report.position.as_ref().map(|p| &p.node);
        if position != outcome.truth.custodian(unit) {
            fail(
                "trace oracle",
                format!("{unit}: position {position:?}, simulator says {:?}", outcome.truth.custodian(unit)),
            );
        }
    }

    for (allocation, customer) in &outcome.delivered {
        let lot = &allocation.lot_id;
        let report = index.trace(lot);
        let custody = report.custody_events().count();
        let at = report.position.as_ref().map(|p| (p.role, &p.node));
        if custody != 6 || report.final_state != Some(CustodyState::Delivered) || at != Some((Role::Customer, customer)) {
            fail(
                "delivered trail",
                format!("{lot}: {custody} custody events, state {:?}, at {at:?}", report.final_state),
            );
        }
        let verdict = index.verify(lot, &outcome.keys);
        if !verdict.authentic {
            fail("delivered trail", format!("{lot}: {}", verdict.findings.join("; ")));
        }
    }

    // Replicas may lag, but never diverge.
    for (node, replica) in &outcome.replicas {
        let n = replica.len();
        if n > outcome.chain.len() || replica.blocks() != &outcome.chain.blocks()[..n] {
            fail("replica consistency", format!("{node} diverges from the miner's chain"));
        }
    }
    out
}
