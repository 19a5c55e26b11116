//! Seal signed transactions into blocks, write the ledger file, then flip a
//! byte and let the verifier point at the damaged block.

use pharmachain::crypto::{generate_keypair, KeyDirectory};
use pharmachain::events::{SignedTx, TxDetail, TxPayload};
use pharmachain::ledger::file::{read_ledger, verify_ledger_bytes, write_ledger};
use pharmachain::ledger::{verify_chain, Chain};
use pharmachain::overlay::NodeId;
use pharmachain::storage::PayloadStore;
use pharmachain::supply::Role;

pub fn run_example() -> String {
    let mut out = String::new();
    let miner = generate_keypair([1; 32], NodeId::new(Role::Miner, 0));
    let customer = generate_keypair([2; 32], NodeId::new(Role::Customer, 0));
    let mut keys = KeyDirectory::new();
    keys.insert(miner.owner.clone(), miner.public.clone());
    keys.insert(customer.owner.clone(), customer.public.clone());

    let mut payloads = PayloadStore::new();
    let mut chain = Chain::new(miner.owner.clone());
    for (i, text) in ["cap loose", "label smudged"].into_iter().enumerate() {
        let tx = SignedTx::sign(
            &customer,
            TxPayload::new(
                &customer.owner,
                "B0",
                100 * (i as u64 + 1),
                NodeId::new(Role::Producer, 0),
                TxDetail::Complaint {
                    complaint_id: format!("C{}", i + 1),
                    description: text.into(),
                },
            ),
        );
        let record = tx.commit(&mut payloads);
        let block = chain.seal(vec![record], miner.owner.clone(), 100 * (i as u64 + 1)).unwrap();
        out += &format!("sealed height {} hash {}\n", block.height(), block.hash());
    }
    assert!(verify_chain(&chain, &keys, &payloads).is_valid());

    let bytes = write_ledger(&chain);
    assert_eq!(read_ledger(&bytes).unwrap(), chain);
    out += &format!("ledger file: {} bytes, {} lines\n", bytes.len(), chain.len());

    // Flip one bit inside the second block's line.
    let line_start = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    let mut damaged = bytes.clone();
    damaged[line_start + 40] ^= 0x01;
    let report = verify_ledger_bytes(&damaged, &keys, &payloads);
    let at = report.first_invalid_position();
    assert_eq!(at, Some(1));
    out += &format!("after one bit flip the first invalid block is {}\n", at.unwrap());
    for finding in report.findings() {
        out += &format!("  {finding}\n");
    }
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", run_example());
}
