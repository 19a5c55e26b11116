//! Runs a small scenario in memory, then answers the two traceability
//! questions for every lot: where has it been, and where is it now.

use pharmachain::scenario::{simulate, Scenario};
use pharmachain::trace::{current_position, TraceIndex, TraceReport};

const SCENARIO: &str = include_str!("../scenarios/clinic.json");

pub fn run_example() -> String {
    let scenario = Scenario::from_json(SCENARIO.as_bytes()).unwrap();
    let outcome = simulate(&scenario).unwrap();
    let index = TraceIndex::new(&outcome.chain, &outcome.payloads);

    let mut out = String::new();
    for id in index.batch_ids() {
        let report = index.trace(id);
        let verdict = index.verify(id, &outcome.keys);
        let at = report.position.as_ref().map_or("-".to_string(), |p| p.node.to_string());
        out += &format!(
            "{id:<6} {:>2} events  {:<18} at {at:<14} authentic={}\n",
            report.events.len(),
            report.final_state.map_or("-".into(), |s| s.to_string()),
            verdict.authentic
        );
    }

    let (allocation, customer) = &outcome.delivered[0];
    let report = index.trace(&allocation.lot_id);
    let json = serde_json::to_string_pretty(&report).unwrap();
    assert_eq!(serde_json::from_str::<TraceReport>(&json).unwrap(), report);
    let here = current_position(&allocation.lot_id, &outcome.chain, &outcome.payloads).unwrap();
    assert_eq!(&here.node, customer);
    out += "\n";
    out += &report.render_text();

    let missing = index.trace("B99");
    out += &format!("B99 unknown: {}\n", missing.unknown_batch);
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", run_example());
}
