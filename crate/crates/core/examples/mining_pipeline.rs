//! Five candidate batches, each built to fail a different stage (or none),
//! mined in one round.

use std::collections::BTreeMap;

use pharmachain::crypto::generate_keypair;
use pharmachain::ledger::Chain;
use pharmachain::mining::{
    mine_batches, DemandLedger, MedicineBatch, MiningPolicy, MiningRound, QAReport, TemperatureLog,
    TemperatureReading,
};
use pharmachain::overlay::NodeId;
use pharmachain::storage::{MedicineListStore, MedicineSpec, PayloadStore};
use pharmachain::supply::{Role, SECS_PER_DAY};

fn batch(id: &str, quantity: u64, temp: i64, expiry: u64, qa: QAReport) -> MedicineBatch {
    MedicineBatch {
        batch_id: id.into(),
        medicine_name: "Insulin".into(),
        producer: NodeId::new(Role::Producer, 0),
        ingredients: BTreeMap::from([("insulin_glargine".into(), 100)]),
        quantity,
        manufacture_date: 0,
        expiry_date: expiry,
        temperature_log: TemperatureLog::new(vec![TemperatureReading {
            sensor_id: "fridge".into(),
            timestamp: 10,
            temp,
        }]),
        qa_report: qa,
    }
}

pub fn run_example() -> String {
    let mut formulary = MedicineListStore::new();
    formulary
        .register_medicine(MedicineSpec {
            name: "Insulin".into(),
            ingredients: BTreeMap::from([("insulin_glargine".into(), 100)]),
            storage_temp_min: 20,
            storage_temp_max: 80,
            shelf_life_days: 365,
        })
        .unwrap();
    let mut demand = DemandLedger::default();
    demand.current_demand.insert("Insulin".into(), 50);

    let now = 7 * SECS_PER_DAY;
    let year = 365 * SECS_PER_DAY;
    let mut wrong_recipe = batch("B0", 50, 40, year, QAReport::passing());
    wrong_recipe.ingredients.insert("filler".into(), 1);
    let batches = vec![
        wrong_recipe,
        batch("B1", 20, 40, year, QAReport::passing()),
        batch("B2", 50, 95, year, QAReport::passing()),
        batch("B3", 50, 40, now, QAReport::passing()),
        batch("B4", 50, 40, year, QAReport::absent()),
        batch("B5", 50, 40, year, QAReport::passing()),
    ];

    let miner = generate_keypair([9; 32], NodeId::new(Role::Miner, 0));
    let round = MiningRound {
        formulary: &formulary,
        demand: &demand,
        now,
        miner: &miner,
        supplier: &NodeId::new(Role::Supplier, 0),
        policy: MiningPolicy::default(),
    };
    let mut payloads = PayloadStore::new();
    let chain = Chain::new(miner.owner.clone());
    let (verdicts, chain) = mine_batches(&batches, &round, &chain, &mut payloads).unwrap();

    let mut out = String::new();
    for v in &verdicts {
        let stages = v.stages_run.len();
        match v.label() {
            Some(label) => out += &format!("{}: rejected after {stages} stages: {label}\n", v.batch_id),
            None => out += &format!("{}: accepted\n", v.batch_id),
        }
    }
    out += &format!("one block at height {} holds {} verdicts\n", chain.head().height(), chain.head().body.len());
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", run_example());
}
