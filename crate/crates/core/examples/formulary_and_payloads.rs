//! The formulary of registered medicines and the content-addressed payload
//! store, saved together as one snapshot.

use std::collections::BTreeMap;

use pharmachain::ledger::hash_payload;
use pharmachain::storage::{read_snapshot, write_snapshot, MedicineListStore, MedicineSpec, PayloadStore};

pub fn run_example() -> String {
    let mut out = String::new();
    let mut formulary = MedicineListStore::new();
    formulary
        .register_medicine(MedicineSpec {
            name: "Paracetamol".into(),
            ingredients: BTreeMap::from([("acetaminophen".into(), 500)]),
            storage_temp_min: 150,
            storage_temp_max: 300,
            shelf_life_days: 1095,
        })
        .unwrap();
    let bad = MedicineSpec {
        name: "Broken".into(),
        ingredients: BTreeMap::new(),
        storage_temp_min: 300,
        storage_temp_max: 100,
        shelf_life_days: 10,
    };
    out += &format!("invalid spec refused: {}\n", formulary.register_medicine(bad).unwrap_err());

    let mut payloads = PayloadStore::new();
    let digest = payloads.put_payload(b"{\"note\":\"hello\"}");
    assert_eq!(digest, hash_payload(b"{\"note\":\"hello\"}"));
    assert_eq!(payloads.put_payload(b"{\"note\":\"hello\"}"), digest);
    out += &format!("stored 1 payload under {digest}\n");

    let snapshot = write_snapshot(&formulary, &payloads);
    let (f2, p2) = read_snapshot(&snapshot).unwrap();
    assert_eq!((f2, p2), (formulary, payloads.clone()));
    out += &format!("snapshot round-trips ({} bytes)\n", snapshot.len());

    payloads.overwrite_unchecked(digest, b"tampered".to_vec());
    let problems = payloads.self_check();
    assert_eq!(problems.len(), 1);
    out += &format!("self check after overwrite: {} bad entry\n", problems.len());
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", run_example());
}
