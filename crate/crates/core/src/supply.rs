//! Roles, the custody state machine, and the operations that move a batch
//! from producer to customer.
//!
//! Operations sign their transactions but do not store or seal them; the
//! caller commits the returned [`SignedTx`]s. A [`CustodyBook`] carries the
//! per-batch state the guards need.
//!
//! A batch split across orders is tracked as lots: every allocation gets
//! its own id `"{batch_id}/{n}"` (n from 1) and the Distribute, Dispense and
//! Deliver transactions for it use the lot id.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::KeyPair;
use crate::events::{SignedTx, TxDetail, TxPayload};
use crate::ledger::TxKind;
use crate::mining::{DemandLedger, MedicineBatch, QAReport, TemperatureLog};
use crate::overlay::NodeId;
use crate::storage::MedicineListStore;

pub const SECS_PER_DAY: u64 = 86_400;
pub const DEFAULT_SUPPLIER_POLICY_DAYS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Producer,
    Miner,
    Supplier,
    Distributor,
    Pharmacist,
    Customer,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Producer,
        Role::Miner,
        Role::Supplier,
        Role::Distributor,
        Role::Pharmacist,
        Role::Customer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Producer => "producer",
            Role::Miner => "miner",
            Role::Supplier => "supplier",
            Role::Distributor => "distributor",
            Role::Pharmacist => "pharmacist",
            Role::Customer => "customer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CustodyState {
    Produced,
    Validated,
    SupplierCleared,
    Distributed,
    Dispensed,
    Delivered,
    ReturnedToProducer,
}

impl CustodyState {
    pub const ALL: [CustodyState; 7] = [
        CustodyState::Produced,
        CustodyState::Validated,
        CustodyState::SupplierCleared,
        CustodyState::Distributed,
        CustodyState::Dispensed,
        CustodyState::Delivered,
        CustodyState::ReturnedToProducer,
    ];
}

impl fmt::Display for CustodyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("illegal transition: {event} in state {}", .state.map_or("(none)".to_string(), |s| s.to_string()))]
pub struct IllegalTransition {
    /// `None` before the first event.
    pub state: Option<CustodyState>,
    pub event: TxKind,
}

pub fn advance_custody(state: CustodyState, event: TxKind) -> Result<CustodyState, IllegalTransition> {
    use CustodyState::*;
    use TxKind as K;
    match (state, event) {
        (Produced, K::MineVerdict) => Ok(Validated),
        (Produced | Validated, K::ReturnToProducer | K::SupplierReturn) => Ok(ReturnedToProducer),
        (Validated, K::SupplierForward) => Ok(SupplierCleared),
        (SupplierCleared, K::Distribute) => Ok(Distributed),
        (Distributed, K::Dispense) => Ok(Dispensed),
        (Dispensed, K::Deliver) => Ok(Delivered),
        _ => Err(IllegalTransition {
            state: Some(state),
            event,
        }),
    }
}

/// Like [`advance_custody`] but also accepts the opening Produce, and lets
/// events that do not move custody pass through unchanged.
pub fn fold_step(state: Option<CustodyState>, event: TxKind) -> Result<Option<CustodyState>, IllegalTransition> {
    match (state, event) {
        (_, k) if !k.moves_custody() => Ok(state),
        (None, TxKind::Produce) => Ok(Some(CustodyState::Produced)),
        (None, event) => Err(IllegalTransition { state: None, event }),
        (Some(s), event) => advance_custody(s, event).map(Some),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Order {
    pub order_id: String,
    pub pharmacist: NodeId,
    pub medicine_name: String,
    pub quantity: u64,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub lot_id: String,
    /// The batch the units come from.
    pub batch_id: String,
    pub order_id: String,
    pub pharmacist: NodeId,
    pub quantity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub order_id: String,
    pub medicine_name: String,
    pub missing: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComplaintStatus {
    Open,
    Responded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complaint {
    pub complaint_id: String,
    pub customer: NodeId,
    pub batch_id: String,
    pub description: String,
    pub status: ComplaintStatus,
    pub response: String,
    /// Producer the complaint is addressed to.
    pub producer: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SupplyError {
    #[error("no formulary entry for {0:?}")]
    UnknownMedicine(String),
    #[error("batch {batch_id} is in state {}, expected {expected}", .state.map_or("(none)".to_string(), |s| s.to_string()))]
    WrongState {
        batch_id: String,
        state: Option<CustodyState>,
        expected: CustodyState,
    },
    #[error("no outstanding allocation {0}")]
    UnknownAllocation(String),
    #[error("allocation {lot_id} belongs to another pharmacist, not {pharmacist}")]
    NotHolder { lot_id: String, pharmacist: NodeId },
    #[error("{customer} never received {batch_id}")]
    NotRecipient { customer: NodeId, batch_id: String },
    #[error("complaint {0} already has a response")]
    AlreadyResponded(String),
    #[error("no complaint {0}")]
    UnknownComplaint(String),
    #[error("response to complaint {0} is empty")]
    EmptyResponse(String),
    #[error(transparent)]
    Illegal(#[from] IllegalTransition),
}

/// Custody state and bookkeeping for every batch and lot one party has seen.
#[derive(Debug, Clone, Default)]
pub struct CustodyBook {
    states: BTreeMap<String, CustodyState>,
    /// Units already allocated out of each batch.
    allocated: BTreeMap<String, u64>,
    lots_issued: BTreeMap<String, u32>,
    outstanding: BTreeMap<String, Allocation>,
    delivered_to: BTreeMap<String, NodeId>,
    complaints: BTreeMap<String, Complaint>,
}

impl CustodyBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self, batch_id: &str) -> Option<CustodyState> {
        self.states.get(batch_id).copied()
    }

    pub fn states(&self) -> &BTreeMap<String, CustodyState> {
        &self.states
    }

    /// Applies one event to a batch's state.
    pub fn record(&mut self, batch_id: &str, event: TxKind) -> Result<Option<CustodyState>, IllegalTransition> {
        let next = fold_step(self.state(batch_id), event)?;
        if let Some(s) = next {
            self.states.insert(batch_id.to_string(), s);
        }
        Ok(next)
    }

    pub fn allocated(&self, batch_id: &str) -> u64 {
        self.allocated.get(batch_id).copied().unwrap_or(0)
    }

    pub fn outstanding(&self) -> impl Iterator<Item = &Allocation> {
        self.outstanding.values()
    }

    pub fn delivered_to(&self, lot_id: &str) -> Option<&NodeId> {
        self.delivered_to.get(lot_id)
    }

    pub fn complaint(&self, complaint_id: &str) -> Option<&Complaint> {
        self.complaints.get(complaint_id)
    }

    fn require(&self, batch_id: &str, expected: CustodyState) -> Result<(), SupplyError> {
        let state = self.state(batch_id);
        if state == Some(expected) {
            Ok(())
        } else {
            Err(SupplyError::WrongState {
                batch_id: batch_id.to_string(),
                state,
                expected,
            })
        }
    }
}

pub fn collect_demand(orders: &[Order]) -> DemandLedger {
    let mut demand = DemandLedger::default();
    for order in orders {
        *demand
            .current_demand
            .entry(order.medicine_name.clone())
            .or_insert(0) += order.quantity;
        demand
            .past_orders
            .entry(order.medicine_name.clone())
            .or_default()
            .push(order.quantity);
    }
    demand
}

pub fn batch_id_for(origin_index: usize) -> String {
    format!("B{origin_index}")
}

/// `produce_with` without a finishing hook.
pub fn produce(
    demand: &DemandLedger,
    formulary: &MedicineListStore,
    now: u64,
    producer: &KeyPair,
    book: &mut CustodyBook,
) -> Result<Vec<(MedicineBatch, SignedTx)>, SupplyError> {
    produce_with(demand, formulary, now, producer, 0, book, |_, _| {})
}

/// One batch per demanded medicine, in name order, numbered from
/// `first_index`. `finish` sees each batch with its origin index before it
/// is signed; this is where telemetry gets attached.
pub fn produce_with(
    demand: &DemandLedger,
    formulary: &MedicineListStore,
    now: u64,
    producer: &KeyPair,
    first_index: usize,
    book: &mut CustodyBook,
    mut finish: impl FnMut(usize, &mut MedicineBatch),
) -> Result<Vec<(MedicineBatch, SignedTx)>, SupplyError> {
    if let Some(name) = demand
        .current_demand
        .keys()
        .find(|name| formulary.get_medicine(name).is_none())
    {
        return Err(SupplyError::UnknownMedicine(name.clone()));
    }
    let mut out = Vec::new();
    for (offset, (name, &quantity)) in demand
        .current_demand
        .iter()
        .filter(|(_, q)| **q > 0)
        .enumerate()
    {
        let spec = formulary.get_medicine(name).expect("checked above");
        let index = first_index + offset;
        let mut batch = MedicineBatch {
            batch_id: batch_id_for(index),
            medicine_name: name.clone(),
            producer: producer.owner.clone(),
            ingredients: spec.ingredients.clone(),
            quantity,
            manufacture_date: now,
            expiry_date: now + spec.shelf_life_days * SECS_PER_DAY,
            temperature_log: TemperatureLog::default(),
            qa_report: QAReport::passing(),
        };
        finish(index, &mut batch);
        book.record(&batch.batch_id, TxKind::Produce)?;
        let tx = SignedTx::sign(
            producer,
            TxPayload::new(
                &producer.owner,
                &batch.batch_id,
                now,
                producer.owner.clone(),
                TxDetail::Produce {
                    batch: batch.clone(),
                },
            ),
        );
        out.push((batch, tx));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupplierDecision {
    Forward,
    Return,
}

/// Forwards to `distributor` iff at least `policy_days` of shelf life
/// remain; otherwise returns the batch to its producer.
pub fn supplier_check(
    batch: &MedicineBatch,
    now: u64,
    policy_days: u64,
    supplier: &KeyPair,
    distributor: &NodeId,
    book: &mut CustodyBook,
) -> Result<(SupplierDecision, SignedTx), SupplyError> {
    book.require(&batch.batch_id, CustodyState::Validated)?;
    let remaining_secs = batch.expiry_date.saturating_sub(now);
    let (decision, recipient, detail) = if remaining_secs >= policy_days * SECS_PER_DAY {
        (
            SupplierDecision::Forward,
            distributor.clone(),
            TxDetail::SupplierForward {
                remaining_secs,
                policy_days,
            },
        )
    } else {
        (
            SupplierDecision::Return,
            batch.producer.clone(),
            TxDetail::SupplierReturn {
                remaining_secs,
                policy_days,
            },
        )
    };
    let tx = SignedTx::sign(
        supplier,
        TxPayload::new(&supplier.owner, &batch.batch_id, now, recipient, detail),
    );
    book.record(&batch.batch_id, tx.payload.kind)?;
    Ok((decision, tx))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Distribution {
    pub allocations: Vec<Allocation>,
    pub shortfalls: Vec<Shortfall>,
    /// One Distribute per allocation, same order.
    pub transactions: Vec<SignedTx>,
}

/// Fills orders by arrival (timestamp, then input position), drawing each
/// from the earliest-expiring batches of its medicine.
pub fn distribute(
    inventory: &[MedicineBatch],
    orders: &[Order],
    now: u64,
    distributor: &KeyPair,
    book: &mut CustodyBook,
) -> Result<Distribution, SupplyError> {
    for batch in inventory {
        book.require(&batch.batch_id, CustodyState::SupplierCleared)?;
    }
    let mut stock: BTreeMap<&str, Vec<&MedicineBatch>> = BTreeMap::new();
    for batch in inventory {
        stock.entry(&batch.medicine_name).or_default().push(batch);
    }
    for batches in stock.values_mut() {
        batches.sort_by(|a, b| (a.expiry_date, &a.batch_id).cmp(&(b.expiry_date, &b.batch_id)));
    }
    let mut arrival: Vec<&Order> = orders.iter().collect();
    arrival.sort_by_key(|o| o.timestamp);

    let mut out = Distribution::default();
    for order in arrival {
        let mut wanted = order.quantity;
        for batch in stock.get(order.medicine_name.as_str()).into_iter().flatten() {
            if wanted == 0 {
                break;
            }
            let available = batch.quantity - book.allocated(&batch.batch_id);
            let take = wanted.min(available);
            if take == 0 {
                continue;
            }
            wanted -= take;
            *book.allocated.entry(batch.batch_id.clone()).or_insert(0) += take;
            let n = book.lots_issued.entry(batch.batch_id.clone()).or_insert(0);
            *n += 1;
            let allocation = Allocation {
                lot_id: format!("{}/{n}", batch.batch_id),
                batch_id: batch.batch_id.clone(),
                order_id: order.order_id.clone(),
                pharmacist: order.pharmacist.clone(),
                quantity: take,
            };
            let tx = SignedTx::sign(
                distributor,
                TxPayload::new(
                    &distributor.owner,
                    &allocation.lot_id,
                    now,
                    order.pharmacist.clone(),
                    TxDetail::Distribute {
                        parent_batch: batch.batch_id.clone(),
                        order_id: order.order_id.clone(),
                        pharmacist: order.pharmacist.clone(),
                        quantity: take,
                    },
                ),
            );
            book.states
                .insert(allocation.lot_id.clone(), advance_custody(CustodyState::SupplierCleared, TxKind::Distribute)?);
            book.outstanding.insert(allocation.lot_id.clone(), allocation.clone());
            out.allocations.push(allocation);
            out.transactions.push(tx);
        }
        if wanted > 0 {
            out.shortfalls.push(Shortfall {
                order_id: order.order_id.clone(),
                medicine_name: order.medicine_name.clone(),
                missing: wanted,
            });
        }
    }
    Ok(out)
}

/// Hands a whole lot to `customer`: a Dispense and a Deliver, both signed
/// by the pharmacist holding the lot. The allocation is consumed.
pub fn dispense(
    lot_id: &str,
    customer: &NodeId,
    now: u64,
    pharmacist: &KeyPair,
    book: &mut CustodyBook,
) -> Result<[SignedTx; 2], SupplyError> {
    let Some(allocation) = book.outstanding.get(lot_id) else {
        return Err(match book.state(lot_id) {
            Some(s @ (CustodyState::Produced | CustodyState::Validated | CustodyState::SupplierCleared | CustodyState::ReturnedToProducer)) => {
                SupplyError::WrongState {
                    batch_id: lot_id.to_string(),
                    state: Some(s),
                    expected: CustodyState::Distributed,
                }
            }
            _ => SupplyError::UnknownAllocation(lot_id.to_string()),
        });
    };
    if allocation.pharmacist != pharmacist.owner {
        return Err(SupplyError::NotHolder {
            lot_id: lot_id.to_string(),
            pharmacist: pharmacist.owner.clone(),
        });
    }
    book.require(lot_id, CustodyState::Distributed)?;
    let allocation = book.outstanding.remove(lot_id).expect("checked above");
    let me = &pharmacist.owner;
    let dispense = SignedTx::sign(
        pharmacist,
        TxPayload::new(
            me,
            lot_id,
            now,
            me.clone(),
            TxDetail::Dispense {
                order_id: allocation.order_id.clone(),
                customer: customer.clone(),
                quantity: allocation.quantity,
            },
        ),
    );
    let deliver = SignedTx::sign(
        pharmacist,
        TxPayload::new(
            me,
            lot_id,
            now,
            customer.clone(),
            TxDetail::Deliver {
                customer: customer.clone(),
                quantity: allocation.quantity,
            },
        ),
    );
    book.record(lot_id, TxKind::Dispense)?;
    book.record(lot_id, TxKind::Deliver)?;
    book.delivered_to.insert(lot_id.to_string(), customer.clone());
    Ok([dispense, deliver])
}

/// Opens a complaint from the customer a lot was delivered to, addressed to
/// `producer`.
pub fn submit_complaint(
    customer: &KeyPair,
    batch_id: &str,
    description: &str,
    now: u64,
    producer: &NodeId,
    book: &mut CustodyBook,
) -> Result<(Complaint, SignedTx), SupplyError> {
    if book.delivered_to(batch_id) != Some(&customer.owner)
        || book.state(batch_id) != Some(CustodyState::Delivered)
    {
        return Err(SupplyError::NotRecipient {
            customer: customer.owner.clone(),
            batch_id: batch_id.to_string(),
        });
    }
    let complaint = Complaint {
        complaint_id: format!("C{}", book.complaints.len() + 1),
        customer: customer.owner.clone(),
        batch_id: batch_id.to_string(),
        description: description.to_string(),
        status: ComplaintStatus::Open,
        response: String::new(),
        producer: producer.clone(),
    };
    let tx = SignedTx::sign(
        customer,
        TxPayload::new(
            &customer.owner,
            batch_id,
            now,
            producer.clone(),
            TxDetail::Complaint {
                complaint_id: complaint.complaint_id.clone(),
                description: description.to_string(),
            },
        ),
    );
    book.complaints
        .insert(complaint.complaint_id.clone(), complaint.clone());
    Ok((complaint, tx))
}

pub fn respond_complaint(
    producer: &KeyPair,
    complaint_id: &str,
    response: &str,
    now: u64,
    book: &mut CustodyBook,
) -> Result<(Complaint, SignedTx), SupplyError> {
    let complaint = book
        .complaints
        .get_mut(complaint_id)
        .ok_or_else(|| SupplyError::UnknownComplaint(complaint_id.to_string()))?;
    if complaint.status == ComplaintStatus::Responded {
        return Err(SupplyError::AlreadyResponded(complaint_id.to_string()));
    }
    if response.is_empty() {
        return Err(SupplyError::EmptyResponse(complaint_id.to_string()));
    }
    complaint.status = ComplaintStatus::Responded;
    complaint.response = response.to_string();
    let tx = SignedTx::sign(
        producer,
        TxPayload::new(
            &producer.owner,
            &complaint.batch_id,
            now,
            complaint.customer.clone(),
            TxDetail::ComplaintResponse {
                complaint_id: complaint_id.to_string(),
                response: response.to_string(),
            },
        ),
    );
    Ok((complaint.clone(), tx))
}
