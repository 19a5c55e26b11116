//! Oracles and fixtures shared by the integration suites. Nothing here calls
//! the library's own checks; the point is to disagree with it if it is wrong.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use pharmachain::ledger::TxKind;
use pharmachain::mining::{DemandLedger, MedicineBatch, QAReport, TemperatureLog, TemperatureReading};
use pharmachain::overlay::NodeId;
use pharmachain::scenario::{FaultSpec, Scenario};
use pharmachain::storage::{MedicineListStore, MedicineSpec};
use pharmachain::supply::{CustodyState, Role};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// The bundled clean scenarios, by file stem.
pub fn corpus() -> Vec<(String, Scenario)> {
    let mut paths: Vec<_> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, Scenario::from_json(&std::fs::read(&p).unwrap()).unwrap())
        })
        .collect()
}

pub fn fault_corpus() -> Vec<(String, FaultSpec)> {
    let mut paths: Vec<_> = std::fs::read_dir(scenario_dir().join("faults"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, FaultSpec::from_json(&std::fs::read(&p).unwrap()).unwrap())
        })
        .collect()
}

// ---- custody ----

/// The legal custody edges, written out by hand.
pub const EDGES: [(CustodyState, TxKind, CustodyState); 9] = {
    use CustodyState::*;
    [
        (Produced, TxKind::MineVerdict, Validated),
        (Produced, TxKind::ReturnToProducer, ReturnedToProducer),
        (Produced, TxKind::SupplierReturn, ReturnedToProducer),
        (Validated, TxKind::ReturnToProducer, ReturnedToProducer),
        (Validated, TxKind::SupplierReturn, ReturnedToProducer),
        (Validated, TxKind::SupplierForward, SupplierCleared),
        (SupplierCleared, TxKind::Distribute, Distributed),
        (Distributed, TxKind::Dispense, Dispensed),
        (Dispensed, TxKind::Deliver, Delivered),
    ]
};

pub fn edge_oracle(state: CustodyState, event: TxKind) -> Option<CustodyState> {
    EDGES.iter().find(|(s, e, _)| *s == state && *e == event).map(|(_, _, to)| *to)
}

// ---- mining grid ----

pub const MEDICINE: &str = "Amoxicillin";
pub const DEMAND: u64 = 100;
pub const NOW: u64 = 1_000_000;
pub const T_MIN: i64 = 20;
pub const T_MAX: i64 = 250;

pub fn grid_formulary() -> MedicineListStore {
    let mut f = MedicineListStore::new();
    f.register_medicine(MedicineSpec {
        name: MEDICINE.into(),
        ingredients: BTreeMap::from([("amoxicillin_trihydrate".into(), 500), ("magnesium_stearate".into(), 5)]),
        storage_temp_min: T_MIN,
        storage_temp_max: T_MAX,
        shelf_life_days: 730,
    })
    .unwrap();
    f
}

pub fn grid_demand() -> DemandLedger {
    let mut d = DemandLedger::default();
    d.current_demand.insert(MEDICINE.into(), DEMAND);
    d.past_orders.insert(MEDICINE.into(), vec![60, 40]);
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingredients {
    Exact,
    Deviant,
}
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Below,
    Equal,
    Above,
}
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Log {
    Empty,
    InRange,
    OutOfRange,
}
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freshness {
    Expired,
    Fresh,
}
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Qa {
    Absent,
    Fail,
    Pass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub ingredients: Ingredients,
    pub quantity: Quantity,
    pub log: Log,
    pub freshness: Freshness,
    pub qa: Qa,
}

pub fn grid() -> Vec<Cell> {
    let mut out = Vec::new();
    for ingredients in [Ingredients::Exact, Ingredients::Deviant] {
        for quantity in [Quantity::Below, Quantity::Equal, Quantity::Above] {
            for log in [Log::Empty, Log::InRange, Log::OutOfRange] {
                for freshness in [Freshness::Expired, Freshness::Fresh] {
                    for qa in [Qa::Absent, Qa::Fail, Qa::Pass] {
                        out.push(Cell { ingredients, quantity, log, freshness, qa });
                    }
                }
            }
        }
    }
    out
}

pub fn grid_batch(i: usize, c: Cell) -> MedicineBatch {
    let mut ingredients = BTreeMap::from([("amoxicillin_trihydrate".to_string(), 500), ("magnesium_stearate".to_string(), 5)]);
    if c.ingredients == Ingredients::Deviant {
        ingredients.insert("amoxicillin_trihydrate".into(), 450);
    }
    let reading = |t, temp| TemperatureReading { sensor_id: "s".into(), timestamp: t, temp };
    let readings = match c.log {
        Log::Empty => vec![],
        Log::InRange => vec![reading(1, T_MIN), reading(2, T_MAX), reading(3, 135)],
        Log::OutOfRange => vec![reading(1, 135), reading(2, T_MAX + 1)],
    };
    MedicineBatch {
        batch_id: format!("G{i:03}"),
        medicine_name: MEDICINE.into(),
        producer: NodeId::new(Role::Producer, 0),
        ingredients,
        quantity: match c.quantity {
            Quantity::Below => DEMAND - 1,
            Quantity::Equal => DEMAND,
            Quantity::Above => DEMAND + 1,
        },
        manufacture_date: 0,
        expiry_date: match c.freshness {
            Freshness::Expired => NOW,
            Freshness::Fresh => NOW + 1,
        },
        temperature_log: TemperatureLog::new(readings),
        qa_report: match c.qa {
            Qa::Absent => QAReport::absent(),
            Qa::Fail => QAReport::failing(vec!["dissolution out of spec".into()]),
            Qa::Pass => QAReport::passing(),
        },
    }
}

/// Evaluates all five predicates straight from the batch fields and returns
/// the label of the first failure in pipeline order, plus how many stages
/// that takes.
pub fn mining_oracle(batch: &MedicineBatch) -> (Option<&'static str>, usize) {
    let spec_ingredients: BTreeMap<String, u64> =
        BTreeMap::from([("amoxicillin_trihydrate".into(), 500), ("magnesium_stearate".into(), 5)]);
    let temps: Vec<i64> = batch.temperature_log.readings.iter().map(|r| r.temp).collect();
    let checks = [
        (batch.medicine_name == MEDICINE && batch.ingredients == spec_ingredients, "Inaccurate Ingredients"),
        (batch.quantity >= DEMAND, "Insufficient quantity"),
        (!temps.is_empty() && temps.iter().all(|t| (T_MIN..=T_MAX).contains(t)), "Unsafe Temperature"),
        (batch.expiry_date > NOW, "Date Expired"),
        (batch.qa_report.present && batch.qa_report.passed, "Quality Assurance Problem"),
    ];
    match checks.iter().position(|(ok, _)| !ok) {
        Some(i) => (Some(checks[i].1), i + 1),
        None => (None, 5),
    }
}

// ---- ledger fixtures ----

pub struct Fixture {
    pub chain: pharmachain::ledger::Chain,
    pub keys: pharmachain::crypto::KeyDirectory,
    pub payloads: pharmachain::storage::PayloadStore,
}

/// Genesis plus `blocks` blocks of `per_block` signed complaints each.
pub fn fixture(blocks: usize, per_block: usize) -> Fixture {
    use pharmachain::crypto::{generate_keypair, KeyDirectory};
    use pharmachain::events::{SignedTx, TxDetail, TxPayload};
    use pharmachain::ledger::Chain;
    use pharmachain::storage::PayloadStore;

    let miner = generate_keypair([1; 32], NodeId::new(Role::Miner, 0));
    let customer = generate_keypair([2; 32], NodeId::new(Role::Customer, 0));
    let mut keys = KeyDirectory::new();
    keys.insert(miner.owner.clone(), miner.public.clone());
    keys.insert(customer.owner.clone(), customer.public.clone());
    let mut payloads = PayloadStore::new();
    let mut chain = Chain::new(miner.owner.clone());
    for b in 0..blocks {
        let t = 100 * (b as u64 + 1);
        let records = (0..per_block)
            .map(|i| {
                SignedTx::sign(
                    &customer,
                    TxPayload::new(
                        &customer.owner,
                        &format!("B{b}"),
                        t,
                        NodeId::new(Role::Producer, 0),
                        TxDetail::Complaint { complaint_id: format!("C{b}.{i}"), description: "x".into() },
                    ),
                )
                .commit(&mut payloads)
            })
            .collect();
        chain.seal(records, miner.owner.clone(), t).unwrap();
    }
    Fixture { chain, keys, payloads }
}
