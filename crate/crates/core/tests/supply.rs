use std::collections::BTreeMap;

use pharmachain::crypto::generate_keypair;
use pharmachain::ledger::TxKind;
use pharmachain::mining::{MedicineBatch, QAReport, TemperatureLog};
use pharmachain::overlay::NodeId;
use pharmachain::supply::{
    dispense, distribute, submit_complaint, CustodyBook, CustodyState, Order, Role, SupplyError,
};
use proptest::prelude::*;

fn cleared(book: &mut CustodyBook, id: &str) {
    for k in [TxKind::Produce, TxKind::MineVerdict, TxKind::SupplierForward] {
        book.record(id, k).unwrap();
    }
}

fn batch(i: usize, medicine: &str, quantity: u64, expiry: u64) -> MedicineBatch {
    MedicineBatch {
        batch_id: format!("B{i}"),
        medicine_name: medicine.into(),
        producer: NodeId::new(Role::Producer, 0),
        ingredients: BTreeMap::from([("x".into(), 1)]),
        quantity,
        manufacture_date: 0,
        expiry_date: expiry,
        temperature_log: TemperatureLog::default(),
        qa_report: QAReport::passing(),
    }
}

/// Unit-at-a-time fill: each unit of each order, in arrival order, comes
/// from the earliest-expiring batch that still has one.
fn oracle(inventory: &[MedicineBatch], orders: &[Order]) -> (Vec<(String, String, u64)>, Vec<(String, u64)>) {
    let mut left: BTreeMap<&str, u64> = inventory.iter().map(|b| (b.batch_id.as_str(), b.quantity)).collect();
    let mut idx: Vec<usize> = (0..orders.len()).collect();
    idx.sort_by_key(|&i| (orders[i].timestamp, i));
    let mut grants = Vec::new();
    let mut short = Vec::new();
    for i in idx {
        let o = &orders[i];
        let mut per_batch: Vec<(String, u64)> = Vec::new();
        let mut missing = 0;
        for _ in 0..o.quantity {
            let pick = inventory
                .iter()
                .filter(|b| b.medicine_name == o.medicine_name && left[b.batch_id.as_str()] > 0)
                .min_by(|a, b| (a.expiry_date, &a.batch_id).cmp(&(b.expiry_date, &b.batch_id)));
            match pick {
                Some(b) => {
                    *left.get_mut(b.batch_id.as_str()).unwrap() -= 1;
                    match per_batch.last_mut() {
                        Some((id, n)) if *id == b.batch_id => *n += 1,
                        _ => per_batch.push((b.batch_id.clone(), 1)),
                    }
                }
                None => missing += 1,
            }
        }
        grants.extend(per_batch.into_iter().map(|(b, n)| (b, o.order_id.clone(), n)));
        if missing > 0 {
            short.push((o.order_id.clone(), missing));
        }
    }
    (grants, short)
}

fn arb_case() -> impl Strategy<Value = (Vec<MedicineBatch>, Vec<Order>)> {
    let meds = ["Alpha", "Beta"];
    (
        prop::collection::vec((0usize..2, 1u64..60, 1u64..5), 1..6),
        prop::collection::vec((0usize..2, 0u32..3, 1u64..80, 0u64..4), 1..8),
    )
        .prop_map(move |(bs, os)| {
            let inventory = bs
                .into_iter()
                .enumerate()
                .map(|(i, (m, q, e))| batch(i, meds[m], q, e * 1000))
                .collect();
            let orders = os
                .into_iter()
                .enumerate()
                .map(|(i, (m, p, q, t))| Order {
                    order_id: format!("o{i}"),
                    pharmacist: NodeId::new(Role::Pharmacist, p),
                    medicine_name: meds[m].into(),
                    quantity: q,
                    timestamp: t,
                })
                .collect();
            (inventory, orders)
        })
}

proptest! {
    #[test]
    fn distribute_matches_unit_oracle((inventory, orders) in arb_case()) {
        let mut book = CustodyBook::new();
        for b in &inventory {
            cleared(&mut book, &b.batch_id);
        }
        let distributor = generate_keypair([4; 32], NodeId::new(Role::Distributor, 0));
        let plan = distribute(&inventory, &orders, 10, &distributor, &mut book).unwrap();
        let (grants, short) = oracle(&inventory, &orders);
        let got: Vec<_> = plan.allocations.iter().map(|a| (a.batch_id.clone(), a.order_id.clone(), a.quantity)).collect();
        prop_assert_eq!(got, grants);
        let got: Vec<_> = plan.shortfalls.iter().map(|s| (s.order_id.clone(), s.missing)).collect();
        prop_assert_eq!(got, short);
        prop_assert_eq!(plan.transactions.len(), plan.allocations.len());

        // Conservation and lot bookkeeping.
        for b in &inventory {
            let allocated: u64 = plan.allocations.iter().filter(|a| a.batch_id == b.batch_id).map(|a| a.quantity).sum();
            prop_assert!(allocated <= b.quantity);
            prop_assert_eq!(book.allocated(&b.batch_id), allocated);
        }
        for a in &plan.allocations {
            prop_assert!(a.quantity > 0);
            let prefix = format!("{}/", a.batch_id);
            prop_assert!(a.lot_id.starts_with(&prefix));
            prop_assert_eq!(book.state(&a.lot_id), Some(CustodyState::Distributed));
        }
    }
}

#[test]
fn distribute_refuses_uncleared_stock() {
    let mut book = CustodyBook::new();
    book.record("B0", TxKind::Produce).unwrap();
    let d = generate_keypair([4; 32], NodeId::new(Role::Distributor, 0));
    let err = distribute(&[batch(0, "Alpha", 5, 10)], &[], 1, &d, &mut book).unwrap_err();
    assert!(matches!(err, SupplyError::WrongState { .. }), "{err:?}");
}

#[test]
fn dispense_then_complaint_guards() {
    let mut book = CustodyBook::new();
    cleared(&mut book, "B0");
    let d = generate_keypair([4; 32], NodeId::new(Role::Distributor, 0));
    let p = generate_keypair([5; 32], NodeId::new(Role::Pharmacist, 0));
    let c = generate_keypair([6; 32], NodeId::new(Role::Customer, 0));
    let stranger = generate_keypair([7; 32], NodeId::new(Role::Customer, 1));
    let order = Order {
        order_id: "o".into(),
        pharmacist: p.owner.clone(),
        medicine_name: "Alpha".into(),
        quantity: 3,
        timestamp: 0,
    };
    let plan = distribute(&[batch(0, "Alpha", 5, 10)], &[order], 1, &d, &mut book).unwrap();
    let lot = &plan.allocations[0].lot_id;

    let producer = NodeId::new(Role::Producer, 0);
    assert!(submit_complaint(&c, lot, "early", 2, &producer, &mut book).is_err());
    let [a, b] = dispense(lot, &c.owner, 2, &p, &mut book).unwrap();
    assert_eq!((a.payload.kind, b.payload.kind), (TxKind::Dispense, TxKind::Deliver));
    assert_eq!(book.state(lot), Some(CustodyState::Delivered));
    assert!(dispense(lot, &c.owner, 3, &p, &mut book).is_err());
    assert!(submit_complaint(&stranger, lot, "not mine", 3, &producer, &mut book).is_err());
    assert!(submit_complaint(&c, lot, "cracked", 3, &producer, &mut book).is_ok());
}
