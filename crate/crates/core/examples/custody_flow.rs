//! One batch walked through every role by hand: produce, mine, clear,
//! distribute into lots, dispense, complain. Each step is sealed into the
//! chain and the lot is traced at the end.

use std::collections::BTreeMap;

use pharmachain::crypto::{generate_keypair, KeyDirectory, KeyPair};
use pharmachain::ledger::Chain;
use pharmachain::mining::{mine_batches, MiningPolicy, MiningRound, TemperatureReading};
use pharmachain::overlay::NodeId;
use pharmachain::storage::{MedicineListStore, MedicineSpec, PayloadStore};
use pharmachain::supply::{
    collect_demand, dispense, distribute, produce_with, respond_complaint, submit_complaint, supplier_check,
    CustodyBook, Order, Role,
};
use pharmachain::trace::{trace_history, verify_authenticity};

fn key(role: Role, index: u32) -> KeyPair {
    generate_keypair([role as u8 * 16 + index as u8; 32], NodeId::new(role, index))
}

pub fn run_example() -> String {
    let [producer, miner, supplier, distributor] =
        [Role::Producer, Role::Miner, Role::Supplier, Role::Distributor].map(|r| key(r, 0));
    let pharmacists = [key(Role::Pharmacist, 0), key(Role::Pharmacist, 1)];
    let customer = key(Role::Customer, 0);
    let mut keys = KeyDirectory::new();
    for k in [&producer, &miner, &supplier, &distributor, &pharmacists[0], &pharmacists[1], &customer] {
        keys.insert(k.owner.clone(), k.public.clone());
    }

    let mut formulary = MedicineListStore::new();
    formulary
        .register_medicine(MedicineSpec {
            name: "Amoxicillin".into(),
            ingredients: BTreeMap::from([("amoxicillin".into(), 500)]),
            storage_temp_min: 20,
            storage_temp_max: 250,
            shelf_life_days: 730,
        })
        .unwrap();
    let orders: Vec<Order> = pharmacists
        .iter()
        .enumerate()
        .map(|(i, p)| Order {
            order_id: format!("o{i}"),
            pharmacist: p.owner.clone(),
            medicine_name: "Amoxicillin".into(),
            quantity: 40 + 20 * i as u64,
            timestamp: i as u64,
        })
        .collect();

    let mut book = CustodyBook::new();
    let mut payloads = PayloadStore::new();
    let mut chain = Chain::new(miner.owner.clone());
    let seal = |chain: &mut Chain, txs: Vec<_>, t: u64| {
        chain.seal(txs, miner.owner.clone(), t).unwrap();
    };

    let demand = collect_demand(&orders);
    let produced = produce_with(&demand, &formulary, 100, &producer, 0, &mut book, |_, b| {
        b.temperature_log.readings.push(TemperatureReading {
            sensor_id: "line-1".into(),
            timestamp: 90,
            temp: 180,
        });
    })
    .unwrap();
    let (batches, txs): (Vec<_>, Vec<_>) = produced.into_iter().unzip();
    let records = txs.into_iter().map(|tx| tx.commit(&mut payloads)).collect();
    seal(&mut chain, records, 100);

    let round = MiningRound {
        formulary: &formulary,
        demand: &demand,
        now: 200,
        miner: &miner,
        supplier: &supplier.owner,
        policy: MiningPolicy::default(),
    };
    let (verdicts, mined) = mine_batches(&batches, &round, &chain, &mut payloads).unwrap();
    chain = mined;
    for v in &verdicts {
        book.record(&v.batch_id, pharmachain::ledger::TxKind::MineVerdict).unwrap();
    }

    let (decision, tx) = supplier_check(&batches[0], 300, 30, &supplier, &distributor.owner, &mut book).unwrap();
    seal(&mut chain, vec![tx.commit(&mut payloads)], 300);

    let plan = distribute(&batches, &orders, 400, &distributor, &mut book).unwrap();
    let records = plan.transactions.into_iter().map(|tx| tx.commit(&mut payloads)).collect();
    seal(&mut chain, records, 400);

    let lot = plan.allocations[0].lot_id.clone();
    let [d, deliver] = dispense(&lot, &customer.owner, 500, &pharmacists[0], &mut book).unwrap();
    seal(&mut chain, vec![d.commit(&mut payloads), deliver.commit(&mut payloads)], 500);

    let (complaint, tx) = submit_complaint(&customer, &lot, "capsules stuck together", 600, &producer.owner, &mut book).unwrap();
    seal(&mut chain, vec![tx.commit(&mut payloads)], 600);
    let (_, tx) = respond_complaint(&producer, &complaint.complaint_id, "refund issued", 700, &mut book).unwrap();
    seal(&mut chain, vec![tx.commit(&mut payloads)], 700);

    let mut out = format!("supplier decision: {decision:?}\n");
    for a in &plan.allocations {
        out += &format!("lot {} -> {} ({} units)\n", a.lot_id, a.pharmacist, a.quantity);
    }
    let report = trace_history(&lot, &chain, &payloads);
    out += &report.render_text();
    let verdict = verify_authenticity(&lot, &chain, &payloads, &keys);
    assert!(verdict.authentic, "{:?}", verdict.findings);
    out += &format!("authentic: {}\n", verdict.authentic);
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", run_example());
}
