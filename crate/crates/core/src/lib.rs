//! A lightweight permissioned ledger for pharmaceutical supply chains.
//!
//! Six roles (producer, miner, supplier, distributor, pharmacist, customer)
//! exchange signed transactions over a simulated overlay. Blocks hold only
//! transaction records; full payloads live in a content-addressed store.
//! Every batch passes a five-stage mining check and can be traced from
//! production to the customer.

pub mod cli;
pub mod crypto;
pub mod events;
pub mod inject;
pub mod ledger;
pub mod mining;
pub mod overlay;
pub mod storage;
pub mod supply;
pub mod scenario;
pub mod trace;
