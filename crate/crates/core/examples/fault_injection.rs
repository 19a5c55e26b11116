//! Each kind of fault against one clean scenario, and how it surfaces:
//! in-run faults as mining rejections, artifact faults as verifier findings.

use pharmachain::inject::apply_fault;
use pharmachain::ledger::file::write_ledger;
use pharmachain::ledger::verify_chain;
use pharmachain::scenario::{simulate, FaultKind, FaultSpec, Scenario};
use pharmachain::trace::TraceIndex;

const SCENARIO: &str = include_str!("../scenarios/minimal.json");

pub fn run_example() -> String {
    let clean = Scenario::from_json(SCENARIO.as_bytes()).unwrap();
    let base = simulate(&clean).unwrap();
    let mut out = String::new();

    for kind in [FaultKind::ExpireBatch, FaultKind::TemperatureSpike, FaultKind::WithholdQAReport] {
        let mut s = clean.clone();
        s.faults.push(FaultSpec::new(kind, 0));
        let run = simulate(&s).unwrap();
        out += &format!("{kind:?}: rejected_by_label {:?}\n", run.summary.rejected_by_label);
    }

    let mut s = clean.clone();
    s.faults.push(FaultSpec::new(FaultKind::CounterfeitInject, 0));
    let run = simulate(&s).unwrap();
    let index = TraceIndex::new(&run.chain, &run.payloads);
    let verdict = index.verify("CF-0", &run.keys);
    out += &format!("CounterfeitInject: CF-0 authentic={} ({})\n", verdict.authentic, verdict.findings.join("; "));

    for spec in [
        FaultSpec::new(FaultKind::TamperBlock, 2),
        FaultSpec::new(FaultKind::ForgeSignature, 0),
    ] {
        let mut payloads = base.payloads.clone();
        let bad = apply_fault(&base.chain, &mut payloads, &spec).unwrap();
        assert_ne!(write_ledger(&bad), write_ledger(&base.chain));
        let report = verify_chain(&bad, &base.keys, &payloads);
        let first = report.findings().into_iter().next().unwrap();
        out += &format!("{:?}: {first}\n", spec.kind);
    }
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", run_example());
}
