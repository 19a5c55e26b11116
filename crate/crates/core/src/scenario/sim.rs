//! The six-step working principle run over the simulated overlay.
//!
//! Every actor talks to the others through signed envelopes: orders and
//! hand-offs are encrypted point-to-point, transaction records go to the
//! miner, and sealed blocks are broadcast and relayed by every receiver.
//! Payloads go straight into the shared payload store.
//!
//! Alongside the chain the simulator keeps its own log of what happened to
//! each unit and who physically holds it. That log never reads the chain
//! and serves as the oracle for tracing.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FaultKind, Scenario, ScenarioError, ScenarioOrder};
use crate::crypto::{generate_keypair, KeyDirectory, KeyPair, SignedEnvelope, Topic};
use crate::events::{SignedTx, TxDetail, TxPayload};
use crate::ledger::{Block, Chain, HashDigest, TransactionRecord, TxKind};
use crate::mining::{
    mine_batches, overproduction_warnings, DemandLedger, MedicineBatch, MiningPolicy, MiningRound,
    QAReport, TemperatureReading, Verdict,
};
use crate::overlay::{DeliveryLog, Network, NodeId, SimConfig};
use crate::storage::{MedicineListStore, PayloadStore};
use crate::supply::{
    collect_demand, dispense, distribute, produce_with, respond_complaint, submit_complaint,
    supplier_check, Allocation, Complaint, CustodyBook, Order, Role, Shortfall, SupplierDecision,
};

/// Simulated seconds between protocol steps.
pub const PHASE_GAP: u64 = 3_600;

/// Key pair for `node` under a scenario seed.
pub fn node_keypair(seed: u64, node: &NodeId) -> KeyPair {
    let mut h = Sha256::new();
    h.update(b"pharmachain/node");
    h.update(seed.to_le_bytes());
    h.update(node.to_string().as_bytes());
    generate_keypair(h.finalize().into(), node.clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub tx_id: HashDigest,
    pub kind: TxKind,
    pub actor: NodeId,
    pub timestamp: u64,
    /// Who holds the unit after the event.
    pub custodian: NodeId,
}

/// Per-unit event log kept by the simulator, independent of the chain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub units: BTreeMap<String, Vec<TruthEvent>>,
}

impl GroundTruth {
    fn log(&mut self, unit: &str, record: &TransactionRecord, custodian: &NodeId) {
        self.units.entry(unit.to_string()).or_default().push(TruthEvent {
            tx_id: record.tx_id,
            kind: record.kind,
            actor: record.actor.clone(),
            timestamp: record.timestamp,
            custodian: custodian.clone(),
        });
    }

    /// A lot starts out with its batch's history.
    fn split(&mut self, parent: &str, lot: &str) {
        let history = self.units.get(parent).cloned().unwrap_or_default();
        self.units.insert(lot.to_string(), history);
    }

    pub fn custodian(&self, unit: &str) -> Option<&NodeId> {
        self.units.get(unit)?.last().map(|e| &e.custodian)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub orders: usize,
    pub batches: usize,
    pub accepted: usize,
    pub rejected_by_label: BTreeMap<String, usize>,
    pub supplier_returned: usize,
    /// Lots handed to a customer.
    pub delivered: usize,
    pub delivered_units: u64,
    pub shortfalls: usize,
    pub shortfall_units: u64,
    pub counterfeit_lots: usize,
    pub complaints: usize,
    pub complaints_answered: usize,
    pub blocks: usize,
    pub transactions: usize,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
}

pub struct SimOutcome {
    pub chain: Chain,
    pub payloads: PayloadStore,
    pub formulary: MedicineListStore,
    pub keys: KeyDirectory,
    pub deliveries: DeliveryLog,
    pub batches: Vec<MedicineBatch>,
    pub verdicts: Vec<Verdict>,
    /// Batches the supplier forwarded to the distributor.
    pub inventory: Vec<MedicineBatch>,
    pub allocations: Vec<Allocation>,
    pub shortfalls: Vec<Shortfall>,
    pub delivered: Vec<(Allocation, NodeId)>,
    pub complaints: Vec<Complaint>,
    pub truth: GroundTruth,
    /// Every other node's copy of the chain.
    pub replicas: BTreeMap<NodeId, Chain>,
    pub warnings: Vec<String>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Message {
    Order(ScenarioOrder),
    Transaction(TransactionRecord),
    Block(Block),
    /// Goods changing hands, with the record that moved them.
    Handoff {
        record: TransactionRecord,
        batch: MedicineBatch,
        allocation: Option<Allocation>,
    },
    Notice(TransactionRecord),
    /// Everything one node had for another when the clock moved on.
    Bundle(Vec<Message>),
}

impl Message {
    fn topic(&self) -> Topic {
        match self {
            Message::Order(_) => Topic::Order,
            Message::Transaction(_) => Topic::Transaction,
            Message::Block(_) => Topic::BlockAnnounce,
            Message::Handoff { .. } | Message::Notice(_) => Topic::Notice,
            Message::Bundle(msgs) => msgs.first().map_or(Topic::Notice, Message::topic),
        }
    }
}

#[derive(Default)]
struct Replica {
    chain: Option<Chain>,
    /// Blocks that arrived ahead of their predecessor.
    waiting: BTreeMap<u64, Block>,
}

struct Sim<'s> {
    scenario: &'s Scenario,
    formulary: MedicineListStore,
    keys: BTreeMap<NodeId, KeyPair>,
    net: Network,
    rng: ChaCha20Rng,
    miner: NodeId,
    producer: NodeId,
    supplier: NodeId,
    distributor: NodeId,
    chain: Chain,
    replicas: BTreeMap<NodeId, Replica>,
    mail: BTreeMap<NodeId, Vec<Message>>,
    outbox: BTreeMap<(NodeId, NodeId), Vec<Message>>,
    pending: Vec<TransactionRecord>,
    payloads: PayloadStore,
    book: CustodyBook,
    truth: GroundTruth,
    customers: BTreeMap<String, NodeId>,
    out: Outputs,
}

#[derive(Default)]
struct Outputs {
    batches: Vec<MedicineBatch>,
    verdicts: Vec<Verdict>,
    inventory: Vec<MedicineBatch>,
    allocations: Vec<Allocation>,
    shortfalls: Vec<Shortfall>,
    delivered: Vec<(Allocation, NodeId)>,
    complaints: Vec<Complaint>,
    warnings: Vec<String>,
    supplier_returned: usize,
    counterfeit_lots: usize,
}

/// Runs a validated scenario to completion. Only in-run faults act here;
/// TamperBlock and ForgeSignature apply to written artifacts.
pub fn simulate(scenario: &Scenario) -> Result<SimOutcome, ScenarioError> {
    scenario.validate()?;
    let mut sim = Sim::new(scenario)?;
    sim.place_orders();
    sim.produce()?;
    sim.mine();
    sim.supplier_step()?;
    sim.distribute_step()?;
    sim.dispense_step()?;
    sim.complaint_step()?;
    sim.deliver_all();
    Ok(sim.finish())
}

fn invalid(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Invalid(e.to_string())
}

impl<'s> Sim<'s> {
    fn new(scenario: &'s Scenario) -> Result<Self, ScenarioError> {
        let mut net = Network::new(SimConfig {
            seed: scenario.seed,
            link_latency: scenario.link_latency,
            drop_rate: scenario.drop_rate,
        })
        .map_err(invalid)?;
        let mut keys = BTreeMap::new();
        for node in &scenario.nodes {
            let kp = node_keypair(scenario.seed, node);
            net.join_node(node.clone(), kp.public).map_err(invalid)?;
            keys.insert(node.clone(), kp);
        }
        let miner = scenario.singleton(Role::Miner).clone();
        let customers = scenario.nodes_of(Role::Customer);
        let customer_of = scenario
            .orders
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let c = o.customer.clone().unwrap_or_else(|| customers[i % customers.len()].clone());
                (o.order_id.clone(), c)
            })
            .collect();
        let replicas = scenario
            .nodes
            .iter()
            .filter(|n| **n != miner)
            .map(|n| (n.clone(), Replica::default()))
            .collect();
        Ok(Self {
            scenario,
            formulary: scenario.formulary()?,
            keys,
            net,
            rng: ChaCha20Rng::seed_from_u64(scenario.seed ^ 0x5eed_c0de),
            producer: scenario.singleton(Role::Producer).clone(),
            supplier: scenario.singleton(Role::Supplier).clone(),
            distributor: scenario.singleton(Role::Distributor).clone(),
            chain: Chain::new(miner.clone()),
            miner,
            replicas,
            mail: BTreeMap::new(),
            outbox: BTreeMap::new(),
            pending: Vec::new(),
            payloads: PayloadStore::new(),
            book: CustodyBook::new(),
            truth: GroundTruth::default(),
            customers: customer_of,
            out: Outputs::default(),
        })
    }

    fn now(&self) -> u64 {
        self.net.now()
    }

    fn next_phase(&mut self) -> u64 {
        self.flush();
        let t = self.net.now() + PHASE_GAP;
        self.net.advance_to(t);
        t
    }

    /// Queues `msg`; queued messages leave as one envelope per sender and
    /// recipient when the clock next moves.
    fn send(&mut self, from: &NodeId, to: &NodeId, msg: &Message) {
        self.outbox.entry((from.clone(), to.clone())).or_default().push(msg.clone());
    }

    fn flush(&mut self) {
        for ((from, to), mut msgs) in std::mem::take(&mut self.outbox) {
            let msg = match msgs.len() {
                1 => msgs.pop().expect("one message"),
                _ => Message::Bundle(msgs),
            };
            let bytes = serde_json::to_vec(&msg).expect("messages serialize");
            let env = SignedEnvelope::directed(
                &self.keys[&from],
                &to,
                &self.keys[&to].public,
                msg.topic(),
                &bytes,
                &mut self.rng,
            );
            self.net.send(&from, &to, env).expect("scenario nodes are live");
        }
    }

    fn announce(&mut self) {
        let msg = Message::Block(self.chain.head().clone());
        let bytes = serde_json::to_vec(&msg).expect("messages serialize");
        let env = SignedEnvelope::broadcast(&self.keys[&self.miner], Topic::BlockAnnounce, &bytes);
        self.net.broadcast(&self.miner, env).expect("miner is live");
    }

    /// Stores the payload and ships the record to the miner.
    fn submit(&mut self, tx: SignedTx) -> TransactionRecord {
        let actor = tx.record.actor.clone();
        let record = tx.commit(&mut self.payloads);
        let miner = self.miner.clone();
        self.send(&actor, &miner, &Message::Transaction(record.clone()));
        record
    }

    /// Runs the network dry, relaying block announcements, then opens every
    /// delivered envelope into the receiver's mailbox.
    fn deliver_all(&mut self) {
        self.flush();
        self.net.run_until_quiescent_with(|net, delivery, env| {
            if env.topic == Topic::BlockAnnounce {
                let _ = net.broadcast(&delivery.to, env.clone());
            }
        });
        let nodes: Vec<NodeId> = self.keys.keys().cloned().collect();
        for node in nodes {
            for (_, env) in self.net.take_inbox(&node) {
                let Ok(bytes) = env.open(&self.keys[&node], self.net.directory()) else {
                    continue;
                };
                let Ok(msg) = serde_json::from_slice::<Message>(&bytes) else {
                    continue;
                };
                self.receive(&node, msg);
            }
        }
    }

    fn receive(&mut self, node: &NodeId, msg: Message) {
        match msg {
            Message::Bundle(msgs) => {
                for m in msgs {
                    self.receive(node, m);
                }
            }
            Message::Block(block) => self.receive_block(node, block),
            Message::Transaction(record) if *node == self.miner => {
                if record.signature_valid(self.net.directory()) && self.payloads.contains(&record.tx_id) {
                    self.pending.push(record);
                }
            }
            other => self.mail.entry(node.clone()).or_default().push(other),
        }
    }

    fn receive_block(&mut self, node: &NodeId, block: Block) {
        let Some(replica) = self.replicas.get_mut(node) else { return };
        let chain = replica.chain.get_or_insert_with(|| Chain::new(self.miner.clone()));
        if block.height() >= chain.len() as u64 {
            replica.waiting.insert(block.height(), block);
        }
        while let Some(next) = replica.waiting.remove(&(chain.len() as u64)) {
            if chain.push(next).is_err() {
                break;
            }
        }
    }

    /// Seals whatever the miner has collected and announces it.
    fn seal(&mut self) {
        self.deliver_all();
        if self.pending.is_empty() {
            return;
        }
        let txs = std::mem::take(&mut self.pending);
        let now = self.now();
        self.chain
            .seal(txs, self.miner.clone(), now)
            .expect("simulation clock never runs backwards");
        self.announce();
        self.deliver_all();
    }

    fn take_mail(&mut self, node: &NodeId) -> Vec<Message> {
        self.mail.remove(node).unwrap_or_default()
    }

    fn orders_in(msgs: &[Message]) -> Vec<Order> {
        msgs.iter()
            .filter_map(|m| match m {
                Message::Order(o) => Some(o.order()),
                _ => None,
            })
            .collect()
    }

    /// Step 1: pharmacists send their orders to the producer, the miner and
    /// the distributor.
    fn place_orders(&mut self) {
        let mut orders: Vec<&ScenarioOrder> = self.scenario.orders.iter().collect();
        orders.sort_by_key(|o| o.timestamp);
        let recipients = [self.producer.clone(), self.miner.clone(), self.distributor.clone()];
        for o in orders {
            if o.timestamp > self.now() {
                self.flush();
                self.net.advance_to(o.timestamp);
            }
            let msg = Message::Order(o.clone());
            for to in &recipients {
                self.send(&o.pharmacist, to, &msg);
            }
        }
        self.deliver_all();
    }

    /// Step 1 continued: one batch per demanded medicine, with telemetry and
    /// in-run faults applied before the producer signs.
    fn produce(&mut self) -> Result<(), ScenarioError> {
        let now = self.next_phase();
        let mail = self.take_mail(&self.producer.clone());
        let demand = collect_demand(&Self::orders_in(&mail));
        let scenario = self.scenario;
        let producer = self.keys[&self.producer].clone();
        let spec_of = |name: &str| self.formulary.get_medicine(name).cloned();
        let made = produce_with(&demand, &self.formulary, now, &producer, 0, &mut self.book, |index, batch| {
            if let Some(&limit) = scenario.production_limits.get(&batch.medicine_name) {
                batch.quantity = batch.quantity.min(limit);
            }
            batch.temperature_log.readings = match scenario.telemetry.get(&index) {
                Some(readings) => readings.clone(),
                None => {
                    let spec = spec_of(&batch.medicine_name).expect("produced from the formulary");
                    nominal_readings(scenario.seed, index, now, spec.storage_temp_min, spec.storage_temp_max)
                }
            };
            for fault in scenario.faults.iter().filter(|f| f.target as usize == index) {
                match fault.kind {
                    FaultKind::ExpireBatch => batch.expiry_date = batch.manufacture_date + 1,
                    FaultKind::TemperatureSpike => {
                        let spec = spec_of(&batch.medicine_name).expect("produced from the formulary");
                        let delta: i64 = fault.param("delta", 10).expect("validated");
                        let t = batch.temperature_log.readings.last().map_or(now, |r| r.timestamp) + 1;
                        batch.temperature_log.readings.push(TemperatureReading {
                            sensor_id: "spike".into(),
                            timestamp: t,
                            temp: spec.storage_temp_max + delta.max(1),
                        });
                    }
                    FaultKind::WithholdQAReport => batch.qa_report = QAReport::absent(),
                    _ => {}
                }
            }
        })
        .map_err(invalid)?;
        for (batch, tx) in made {
            batch.validate().map_err(invalid)?;
            self.truth.log(&batch.batch_id, &tx.record, &self.producer);
            self.submit(tx);
            self.out.batches.push(batch);
        }
        self.seal();
        Ok(())
    }

    /// Step 2: the miner validates every batch whose Produce it sealed and
    /// hands each to the supplier or back to the producer.
    fn mine(&mut self) {
        let now = self.next_phase();
        let mail = self.take_mail(&self.miner.clone());
        let demand: DemandLedger = collect_demand(&Self::orders_in(&mail));
        let batches: Vec<MedicineBatch> = self
            .chain
            .transactions()
            .filter(|(_, _, tx)| tx.kind == TxKind::Produce)
            .filter_map(|(_, _, tx)| {
                let payload = TxPayload::decode(self.payloads.get_payload(&tx.tx_id)?).ok()?;
                match payload.detail {
                    TxDetail::Produce { batch } => Some(batch),
                    _ => None,
                }
            })
            .collect();
        if batches.is_empty() {
            return;
        }
        self.out.warnings = overproduction_warnings(&batches, &demand);
        let miner = self.keys[&self.miner].clone();
        let round = MiningRound {
            formulary: &self.formulary,
            demand: &demand,
            now,
            miner: &miner,
            supplier: &self.supplier,
            policy: MiningPolicy::default(),
        };
        let (verdicts, chain) =
            mine_batches(&batches, &round, &self.chain, &mut self.payloads).expect("verdict block extends the head");
        self.chain = chain;
        let records = self.chain.head().body.clone();
        self.announce();
        for ((batch, verdict), record) in batches.into_iter().zip(&verdicts).zip(records) {
            self.book
                .record(&batch.batch_id, record.kind)
                .expect("verdict follows Produce");
            let to = if verdict.is_accepted() {
                self.supplier.clone()
            } else {
                batch.producer.clone()
            };
            self.truth.log(&batch.batch_id, &record, &to);
            let miner_id = self.miner.clone();
            self.send(
                &miner_id,
                &to,
                &Message::Handoff {
                    record,
                    batch,
                    allocation: None,
                },
            );
        }
        self.out.verdicts = verdicts;
        self.deliver_all();
    }

    /// Step 3: the supplier rechecks remaining shelf life.
    fn supplier_step(&mut self) -> Result<(), ScenarioError> {
        let now = self.next_phase();
        let me = self.supplier.clone();
        let key = self.keys[&me].clone();
        for msg in self.take_mail(&me) {
            let Message::Handoff { record, batch, .. } = msg else { continue };
            if record.kind != TxKind::MineVerdict {
                continue;
            }
            let (decision, tx) = supplier_check(
                &batch,
                now,
                self.scenario.supplier_policy_days,
                &key,
                &self.distributor,
                &mut self.book,
            )
            .map_err(invalid)?;
            let to = match decision {
                SupplierDecision::Forward => self.distributor.clone(),
                SupplierDecision::Return => {
                    self.out.supplier_returned += 1;
                    batch.producer.clone()
                }
            };
            self.truth.log(&batch.batch_id, &tx.record, &to);
            let record = self.submit(tx);
            self.send(
                &me,
                &to,
                &Message::Handoff {
                    record,
                    batch,
                    allocation: None,
                },
            );
        }
        self.seal();
        Ok(())
    }

    /// Step 4: the distributor fills orders from what the supplier cleared.
    fn distribute_step(&mut self) -> Result<(), ScenarioError> {
        let now = self.next_phase();
        let me = self.distributor.clone();
        let key = self.keys[&me].clone();
        let mail = self.take_mail(&me);
        let orders = Self::orders_in(&mail);
        let inventory: Vec<MedicineBatch> = mail
            .into_iter()
            .filter_map(|m| match m {
                Message::Handoff { record, batch, .. } if record.kind == TxKind::SupplierForward => Some(batch),
                _ => None,
            })
            .collect();
        let by_id: BTreeMap<String, MedicineBatch> =
            inventory.iter().map(|b| (b.batch_id.clone(), b.clone())).collect();
        let result = distribute(&inventory, &orders, now, &key, &mut self.book).map_err(invalid)?;
        for (allocation, tx) in result.allocations.iter().zip(result.transactions) {
            self.truth.split(&allocation.batch_id, &allocation.lot_id);
            self.truth.log(&allocation.lot_id, &tx.record, &allocation.pharmacist);
            let record = self.submit(tx);
            self.send(
                &me,
                &allocation.pharmacist,
                &Message::Handoff {
                    record,
                    batch: by_id[&allocation.batch_id].clone(),
                    allocation: Some(allocation.clone()),
                },
            );
        }
        for fault in self.scenario.faults.iter().filter(|f| f.kind == FaultKind::CounterfeitInject) {
            let lot = format!("CF-{}", fault.target);
            let pharmacist = self.scenario.nodes_of(Role::Pharmacist)[0].clone();
            let quantity = fault.param("quantity", 10u64).expect("validated");
            let tx = SignedTx::sign(
                &key,
                TxPayload::new(
                    &me,
                    &lot,
                    now,
                    pharmacist.clone(),
                    TxDetail::Distribute {
                        parent_batch: lot.clone(),
                        order_id: "counterfeit".into(),
                        pharmacist: pharmacist.clone(),
                        quantity,
                    },
                ),
            );
            self.truth.log(&lot, &tx.record, &pharmacist);
            self.submit(tx);
            self.out.counterfeit_lots += 1;
        }
        self.out.inventory = inventory;
        self.out.allocations = result.allocations;
        self.out.shortfalls = result.shortfalls;
        self.seal();
        Ok(())
    }

    /// Step 5: each pharmacist dispenses and delivers its lots.
    fn dispense_step(&mut self) -> Result<(), ScenarioError> {
        let now = self.next_phase();
        let pharmacists: Vec<NodeId> = self.scenario.nodes_of(Role::Pharmacist).into_iter().cloned().collect();
        for me in pharmacists {
            let key = self.keys[&me].clone();
            for msg in self.take_mail(&me) {
                let Message::Handoff {
                    batch,
                    allocation: Some(allocation),
                    ..
                } = msg
                else {
                    continue;
                };
                let customer = self.customers[&allocation.order_id].clone();
                let [d, v] = dispense(&allocation.lot_id, &customer, now, &key, &mut self.book).map_err(invalid)?;
                self.truth.log(&allocation.lot_id, &d.record, &me);
                self.truth.log(&allocation.lot_id, &v.record, &customer);
                self.submit(d);
                let record = self.submit(v);
                self.send(
                    &me,
                    &customer,
                    &Message::Handoff {
                        record,
                        batch,
                        allocation: Some(allocation.clone()),
                    },
                );
                self.out.delivered.push((allocation, customer));
            }
        }
        self.seal();
        Ok(())
    }

    /// Step 6: customers complain to the producer, who answers.
    fn complaint_step(&mut self) -> Result<(), ScenarioError> {
        if self.scenario.complaints.is_empty() {
            return Ok(());
        }
        let now = self.next_phase();
        let mut responses = BTreeMap::new();
        for spec in &self.scenario.complaints {
            let Some((allocation, customer)) = self
                .out
                .delivered
                .iter()
                .find(|(a, _)| a.order_id == spec.order_id)
                .cloned()
            else {
                continue;
            };
            let key = self.keys[&customer].clone();
            let (complaint, tx) =
                submit_complaint(&key, &allocation.lot_id, &spec.description, now, &self.producer, &mut self.book)
                    .map_err(invalid)?;
            self.truth.log(&allocation.lot_id, &tx.record, &customer);
            let record = self.submit(tx);
            let producer = self.producer.clone();
            self.send(&customer, &producer, &Message::Notice(record));
            responses.insert(complaint.complaint_id.clone(), spec.response.clone());
            self.out.complaints.push(complaint);
        }
        self.seal();

        let now = self.next_phase();
        let me = self.producer.clone();
        let key = self.keys[&me].clone();
        for msg in self.take_mail(&me) {
            let Message::Notice(record) = msg else { continue };
            let Some(TxDetail::Complaint { complaint_id, .. }) = self
                .payloads
                .get_payload(&record.tx_id)
                .and_then(|b| TxPayload::decode(b).ok())
                .map(|p| p.detail)
            else {
                continue;
            };
            let response = responses.get(&complaint_id).cloned().unwrap_or_default();
            if response.is_empty() {
                continue;
            }
            let (updated, tx) = respond_complaint(&key, &complaint_id, &response, now, &mut self.book).map_err(invalid)?;
            let holder = self
                .truth
                .custodian(&updated.batch_id)
                .cloned()
                .expect("complaints concern delivered lots");
            self.truth.log(&updated.batch_id, &tx.record, &holder);
            self.submit(tx);
            if let Some(c) = self.out.complaints.iter_mut().find(|c| c.complaint_id == complaint_id) {
                *c = updated;
            }
        }
        self.seal();
        Ok(())
    }

    fn finish(self) -> SimOutcome {
        let out = self.out;
        let mut rejected_by_label: BTreeMap<String, usize> = BTreeMap::new();
        for v in &out.verdicts {
            if let Some(label) = v.label() {
                *rejected_by_label.entry(label.to_string()).or_insert(0) += 1;
            }
        }
        let stats = self.net.stats();
        let summary = Summary {
            orders: self.scenario.orders.len(),
            batches: out.batches.len(),
            accepted: out.verdicts.iter().filter(|v| v.is_accepted()).count(),
            rejected_by_label,
            supplier_returned: out.supplier_returned,
            delivered: out.delivered.len(),
            delivered_units: out.delivered.iter().map(|(a, _)| a.quantity).sum(),
            shortfalls: out.shortfalls.len(),
            shortfall_units: out.shortfalls.iter().map(|s| s.missing).sum(),
            counterfeit_lots: out.counterfeit_lots,
            complaints: out.complaints.len(),
            complaints_answered: out
                .complaints
                .iter()
                .filter(|c| c.status == crate::supply::ComplaintStatus::Responded)
                .count(),
            blocks: self.chain.len(),
            transactions: self.chain.tx_count(),
            messages_delivered: stats.delivered,
            messages_dropped: stats.dropped,
        };
        let miner = self.miner.clone();
        SimOutcome {
            keys: self.keys.values().map(|k| (k.owner.clone(), k.public)).collect(),
            deliveries: self.net.delivery_log(),
            replicas: self
                .replicas
                .into_iter()
                .map(|(n, r)| (n, r.chain.unwrap_or_else(|| Chain::new(miner.clone()))))
                .collect(),
            chain: self.chain,
            payloads: self.payloads,
            formulary: self.formulary,
            batches: out.batches,
            verdicts: out.verdicts,
            inventory: out.inventory,
            allocations: out.allocations,
            shortfalls: out.shortfalls,
            delivered: out.delivered,
            complaints: out.complaints,
            truth: self.truth,
            warnings: out.warnings,
            summary,
        }
    }
}

/// Three in-range readings over the hour after manufacture.
fn nominal_readings(seed: u64, index: usize, start: u64, min: i64, max: i64) -> Vec<TemperatureReading> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64);
    (1..=3)
        .map(|i| TemperatureReading {
            sensor_id: format!("sensor-{index}"),
            timestamp: start + i * 600,
            temp: rng.gen_range(min..=max),
        })
        .collect()
}
