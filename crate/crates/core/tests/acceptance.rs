//! End-to-end acceptance run. Each criterion prints one PASS or FAIL line to
//! stderr with its timing; the test fails if any criterion does.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use common::*;
use pharmachain::cli::{self, EXIT_FINDINGS, EXIT_OK};
use pharmachain::crypto::{decrypt, encrypt, generate_keypair, sign, verify, Signature};
use pharmachain::ledger::file::{verify_ledger_bytes, write_ledger};
use pharmachain::ledger::{verify_chain, TxKind};
use pharmachain::ledger::Chain;
use pharmachain::mining::{mine_batches, MiningPolicy, MiningRound};
use pharmachain::storage::PayloadStore;
use pharmachain::overlay::NodeId;
use pharmachain::scenario::{random_scenario, simulate, RandomLimits, Scenario};
use pharmachain::supply::{advance_custody, CustodyState, Role};
use pharmachain::trace::{current_position, trace_history, TraceIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

struct Tally {
    failed: Vec<usize>,
}

impl Tally {
    fn record(&mut self, n: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(limit)) if took > limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        let line = match &result {
            Ok(detail) => format!("PASS criterion {n} {name}: {detail} ({took:.2?})"),
            Err(why) => format!("FAIL criterion {n} {name}: {why} ({took:.2?})"),
        };
        let _ = writeln!(std::io::stderr(), "{line}");
        if result.is_err() {
            self.failed.push(n);
        }
    }
}

fn mining_grid() -> Outcome {
    let formulary = grid_formulary();
    let demand = grid_demand();
    let cells = grid();
    if cells.len() != 108 {
        return Err(format!("grid has {} cells", cells.len()));
    }
    let batches: Vec<_> = cells.iter().enumerate().map(|(i, c)| grid_batch(i, *c)).collect();
    let miner = generate_keypair([3; 32], NodeId::new(Role::Miner, 0));
    let round = MiningRound {
        formulary: &formulary,
        demand: &demand,
        now: NOW,
        miner: &miner,
        supplier: &NodeId::new(Role::Supplier, 0),
        policy: MiningPolicy::default(),
    };
    let mut payloads = PayloadStore::new();
    let (verdicts, _) = mine_batches(&batches, &round, &Chain::new(miner.owner.clone()), &mut payloads)
        .map_err(|e| e.to_string())?;
    let mut seen = BTreeMap::new();
    for ((batch, verdict), cell) in batches.iter().zip(&verdicts).zip(&cells) {
        let (want, _) = mining_oracle(batch);
        if verdict.label() != want {
            return Err(format!("{} {cell:?}: got {:?}, oracle {want:?}", batch.batch_id, verdict.label()));
        }
        *seen.entry(want.unwrap_or("accepted")).or_insert(0) += 1;
    }
    for label in ["Insufficient quantity", "Unsafe Temperature", "Date Expired"] {
        if !seen.contains_key(label) {
            return Err(format!("label {label:?} never produced"));
        }
    }
    Ok(format!("108 cells agree, outcomes {seen:?}"))
}

fn bit_flips() -> Outcome {
    let f = fixture(2, 1);
    let clean = write_ledger(&f.chain);
    if f.chain.len() != 3 {
        return Err(format!("fixture has {} blocks", f.chain.len()));
    }
    let mut bytes = clean.clone();
    let mut flips = 0;
    for i in 0..bytes.len() {
        let line = clean[..i].iter().filter(|&&b| b == b'\n').count();
        for bit in 0..8 {
            bytes[i] ^= 1 << bit;
            let got = verify_ledger_bytes(&bytes, &f.keys, &f.payloads).first_invalid_position();
            bytes[i] ^= 1 << bit;
            if got != Some(line) {
                return Err(format!("byte {i} bit {bit}: flagged {got:?}, expected block {line}"));
            }
            flips += 1;
        }
    }
    Ok(format!("{flips} flips over {} bytes all pinpointed", clean.len()))
}

fn trace_oracle() -> Outcome {
    let mut units = 0;
    for seed in 0..100u64 {
        let s = random_scenario(seed, RandomLimits::default());
        let out = simulate(&s).map_err(|e| format!("seed {seed}: {e}"))?;
        let index = TraceIndex::new(&out.chain, &out.payloads);
        let traced: Vec<&str> = index.batch_ids().collect();
        let witnessed: Vec<&str> = out.truth.units.keys().map(String::as_str).collect();
        if traced != witnessed {
            return Err(format!("seed {seed}: units differ"));
        }
        for (unit, truth) in &out.truth.units {
            let report = trace_history(unit, &out.chain, &out.payloads);
            let got: Vec<_> = report.events.iter().map(|e| (e.tx_id, e.kind, &e.actor, e.timestamp)).collect();
            let want: Vec<_> = truth.iter().map(|e| (e.tx_id, e.kind, &e.actor, e.timestamp)).collect();
            if got != want {
                return Err(format!("seed {seed} {unit}: history mismatch"));
            }
            let position = current_position(unit, &out.chain, &out.payloads).map_err(|e| format!("{e:?}"))?;
            if Some(&position.node) != out.truth.custodian(unit) {
                return Err(format!("seed {seed} {unit}: at {}, custodian {:?}", position.node, out.truth.custodian(unit)));
            }
            units += 1;
        }
    }
    Ok(format!("100 scenarios, {units} units, 0 mismatches"))
}

struct RunDir {
    dir: tempfile::TempDir,
}

impl RunDir {
    fn run(scenario: &Scenario) -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("scenario.json");
        std::fs::write(&path, scenario.to_json()).map_err(|e| e.to_string())?;
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli::cmd_run(&path, &dir.path().join("out"), &mut out, &mut err);
        if code != EXIT_OK {
            return Err(format!("run exited {code}: {}", String::from_utf8_lossy(&err)));
        }
        Ok(Self { dir })
    }

    fn out(&self) -> std::path::PathBuf {
        self.dir.path().join("out")
    }

    fn file(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.out().join(name)).unwrap_or_default()
    }

    fn verify(&self) -> i32 {
        let o = self.out();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        cli::cmd_verify(
            &o.join(cli::LEDGER_FILE),
            &o.join(cli::SNAPSHOT_FILE),
            &o.join(cli::KEYS_FILE),
            &mut out,
            &mut err,
        )
    }

    fn label_count(&self, label: &str) -> u64 {
        let summary: serde_json::Value = serde_json::from_slice(&self.file(cli::SUMMARY_FILE)).unwrap_or_default();
        summary["rejected_by_label"][label].as_u64().unwrap_or(0)
    }
}

const FAULT_LABELS: [&str; 3] = ["Date Expired", "Unsafe Temperature", "Quality Assurance Problem"];

fn fault_detection() -> Outcome {
    let scenarios = corpus();
    let faults = fault_corpus();
    if scenarios.len() < 5 || faults.len() < 6 {
        return Err(format!("{} scenarios, {} faults", scenarios.len(), faults.len()));
    }
    let mut detected = 0;
    for (name, scenario) in &scenarios {
        let clean = RunDir::run(scenario).map_err(|e| format!("{name}: {e}"))?;
        let code = clean.verify();
        if code != EXIT_OK {
            return Err(format!("{name}: clean run verifies with exit {code}"));
        }
        if let Some(l) = FAULT_LABELS.iter().find(|l| clean.label_count(l) > 0) {
            return Err(format!("{name}: clean run rejected a batch as {l:?}"));
        }
        for (fname, fault) in &faults {
            let mut s = scenario.clone();
            s.faults.push(fault.clone());
            let run = RunDir::run(&s).map_err(|e| format!("{name}+{fname}: {e}"))?;
            let caught = match fault.kind.expected_label() {
                Some(label) => run.label_count(label) > clean.label_count(label),
                None => run.verify() == EXIT_FINDINGS,
            };
            if !caught {
                return Err(format!("{name}+{fname}: not detected"));
            }
            detected += 1;
        }
    }
    Ok(format!(
        "{detected} of {} faulted runs detected, {} clean runs verified",
        scenarios.len() * faults.len(),
        scenarios.len()
    ))
}

fn crypto_pairs() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let owner = NodeId::new(Role::Pharmacist, 0);
    for i in 0..100 {
        let seed: [u8; 32] = rng.gen();
        let len = rng.gen_range(1..512);
        let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let kp = generate_keypair(seed, owner.clone());
        let mut other: [u8; 32] = rng.gen();
        if other == seed {
            other[0] ^= 1;
        }
        let wrong = generate_keypair(other, owner.clone());

        let sig = sign(&kp.private, &msg);
        if !verify(&kp.public, &msg, &sig) {
            return Err(format!("pair {i}: signature does not verify"));
        }
        let ct = encrypt(&kp.public, &msg, &mut rng);
        if decrypt(&kp.private, &ct).ok().as_deref() != Some(msg.as_slice()) {
            return Err(format!("pair {i}: decrypt round trip failed"));
        }
        if decrypt(&wrong.private, &ct).is_ok() {
            return Err(format!("pair {i}: wrong key decrypted"));
        }
        let mut bad = sig.as_bytes().to_vec();
        let bit = rng.gen_range(0..bad.len() * 8);
        bad[bit / 8] ^= 1 << (bit % 8);
        if verify(&kp.public, &msg, &Signature::from_bytes(bad)) {
            return Err(format!("pair {i}: flipped signature verified"));
        }
    }
    Ok("100 pairs: round trips ok, 100/100 wrong-key and flipped-signature failures".into())
}

fn custody_table() -> Outcome {
    let mut pairs = 0;
    let mut legal = 0;
    for state in CustodyState::ALL {
        for event in TxKind::ALL {
            pairs += 1;
            let got = advance_custody(state, event).ok();
            if got != edge_oracle(state, event) {
                return Err(format!("({state:?}, {event:?}): got {got:?}"));
            }
            legal += got.is_some() as usize;
        }
    }
    if (pairs, legal) != (70, EDGES.len()) {
        return Err(format!("{pairs} pairs, {legal} legal"));
    }
    Ok(format!("{pairs} pairs, {legal} legal edges"))
}

fn determinism() -> Outcome {
    let mut scenarios: Vec<(String, Scenario)> = corpus();
    for (fname, fault) in fault_corpus() {
        let mut s = scenarios[0].1.clone();
        s.faults.push(fault);
        scenarios.push((format!("{}+{fname}", scenarios[0].0), s));
    }
    for seed in 0..5 {
        scenarios.push((format!("random-{seed}"), random_scenario(seed, RandomLimits::default())));
    }
    for (name, s) in &scenarios {
        let a = RunDir::run(s).map_err(|e| format!("{name}: {e}"))?;
        let b = RunDir::run(s).map_err(|e| format!("{name}: {e}"))?;
        for file in [cli::LEDGER_FILE, cli::SNAPSHOT_FILE, cli::DELIVERY_LOG_FILE] {
            let (x, y) = (a.file(file), b.file(file));
            if x.is_empty() || x != y {
                return Err(format!("{name}: {file} differs between runs"));
            }
        }
    }
    Ok(format!("{} scenarios replayed byte-identically", scenarios.len()))
}

/// 20 medicines, 10 pharmacists and 20 customers; 3320 orders in five
/// timestamp rounds give just over 10,000 transactions.
fn large_scenario() -> Scenario {
    let medicines: Vec<_> = (0..20)
        .map(|i| {
            serde_json::json!({
                "name": format!("Med{i:02}"),
                "ingredients": {"api": 100 + i},
                "storage_temp_min": 20,
                "storage_temp_max": 250,
                "shelf_life_days": 700,
            })
        })
        .collect();
    let mut nodes: Vec<String> = ["producer-0", "miner-0", "supplier-0", "distributor-0"].map(String::from).to_vec();
    nodes.extend((0..10).map(|i| format!("pharmacist-{i}")));
    nodes.extend((0..20).map(|i| format!("customer-{i}")));
    let n = 3320;
    let orders: Vec<_> = (0..n)
        .map(|i| {
            serde_json::json!({
                "order_id": format!("o{i:05}"),
                "pharmacist": format!("pharmacist-{}", i % 10),
                "medicine_name": format!("Med{:02}", i % 20),
                "quantity": 1 + i % 7,
                "timestamp": 60 * (i * 5 / n),
            })
        })
        .collect();
    let json = serde_json::json!({"seed": 5, "medicines": medicines, "nodes": nodes, "orders": orders});
    Scenario::from_json(&serde_json::to_vec(&json).unwrap()).expect("generated scenario is valid")
}

fn scale() -> Outcome {
    let scenario = large_scenario();
    let out = simulate(&scenario).map_err(|e| e.to_string())?;
    let txs = out.chain.tx_count();
    if txs < 10_000 {
        return Err(format!("only {txs} transactions"));
    }
    let report = verify_chain(&out.chain, &out.keys, &out.payloads);
    if !report.is_valid() {
        return Err(format!("chain invalid: {:?}", report.findings()));
    }
    let index = TraceIndex::new(&out.chain, &out.payloads);
    let mut batches = 0;
    for id in index.batch_ids() {
        if !index.verify(id, &out.keys).authentic {
            return Err(format!("{id} not authentic"));
        }
        batches += 1;
    }
    Ok(format!("{txs} transactions in {} blocks, {batches} units verified", out.chain.len()))
}

#[test]
fn acceptance() {
    let mut t = Tally { failed: Vec::new() };
    t.record(1, "mining grid", Some(Duration::from_secs(1)), mining_grid);
    t.record(2, "bit flips", Some(Duration::from_secs(30)), bit_flips);
    t.record(3, "trace oracle", Some(Duration::from_secs(60)), trace_oracle);
    t.record(4, "fault corpus", None, fault_detection);
    t.record(5, "crypto", None, crypto_pairs);
    t.record(6, "custody table", None, custody_table);
    t.record(7, "determinism", None, determinism);
    t.record(8, "scale", Some(Duration::from_secs(10)), scale);
    assert!(t.failed.is_empty(), "failed criteria: {:?}", t.failed);
}
