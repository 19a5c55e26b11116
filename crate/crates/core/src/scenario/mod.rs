//! Scenario files, the deterministic end-to-end simulation, and post-run
//! invariant checks.

mod checks;
mod random;
mod sim;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::mining::TemperatureReading;
use crate::overlay::{DropRate, NodeId};
use crate::storage::{MedicineListStore, MedicineSpec};
use crate::supply::{Order, Role, DEFAULT_SUPPLIER_POLICY_DAYS};

pub use checks::{check_invariants, InvariantViolation};
pub use random::{random_scenario, RandomLimits};
pub use sim::{
    node_keypair, simulate, GroundTruth, SimOutcome, Summary, TruthEvent, PHASE_GAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    CounterfeitInject,
    ExpireBatch,
    TemperatureSpike,
    TamperBlock,
    ForgeSignature,
    WithholdQAReport,
}

impl FaultKind {
    /// Faults applied to the written artifacts rather than inside the run.
    pub fn is_artifact_fault(&self) -> bool {
        matches!(self, FaultKind::TamperBlock | FaultKind::ForgeSignature)
    }

    /// Mining label a fault is expected to produce, if it acts through the
    /// validation pipeline.
    pub fn expected_label(&self) -> Option<&'static str> {
        match self {
            FaultKind::ExpireBatch => Some(crate::mining::LABEL_EXPIRY),
            FaultKind::TemperatureSpike => Some(crate::mining::LABEL_TEMPERATURE),
            FaultKind::WithholdQAReport => Some(crate::mining::LABEL_QUALITY),
            _ => None,
        }
    }
}

/// `target` is a batch-origin index, except for TamperBlock where it is a
/// block height.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub target: u64,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, target: u64) -> Self {
        Self {
            kind,
            target,
            parameters: BTreeMap::new(),
        }
    }

    pub fn param<T: std::str::FromStr>(&self, name: &str, default: T) -> Result<T, ScenarioError> {
        match self.parameters.get(name) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                ScenarioError::Invalid(format!("fault {:?}: bad parameter {name}={v:?}", self.kind))
            }),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOrder {
    pub order_id: String,
    pub pharmacist: NodeId,
    pub medicine_name: String,
    pub quantity: u64,
    pub timestamp: u64,
    /// Who the pharmacist serves. Defaults to customers in turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub customer: Option<NodeId>,
}

impl ScenarioOrder {
    pub fn order(&self) -> Order {
        Order {
            order_id: self.order_id.clone(),
            pharmacist: self.pharmacist.clone(),
            medicine_name: self.medicine_name.clone(),
            quantity: self.quantity,
            timestamp: self.timestamp,
        }
    }
}

/// A customer complaint about the goods delivered for one order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplaintSpec {
    pub order_id: String,
    pub description: String,
    /// Producer's answer; empty leaves the complaint open.
    #[serde(default)]
    pub response: String,
}

fn default_policy() -> u64 {
    DEFAULT_SUPPLIER_POLICY_DAYS
}

fn default_latency() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "default_policy")]
    pub supplier_policy_days: u64,
    #[serde(default = "default_latency")]
    pub link_latency: u64,
    #[serde(default)]
    pub drop_rate: DropRate,
    pub medicines: Vec<MedicineSpec>,
    pub nodes: Vec<NodeId>,
    pub orders: Vec<ScenarioOrder>,
    /// Batch-origin index to sensor readings. Batches without an entry get
    /// seeded in-range readings.
    #[serde(default)]
    pub telemetry: BTreeMap<usize, Vec<TemperatureReading>>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub complaints: Vec<ComplaintSpec>,
    /// Caps the producer's output per medicine.
    #[serde(default)]
    pub production_limits: BTreeMap<String, u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_slice(bytes)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("scenario serializes");
        out.push(b'\n');
        out
    }

    pub fn formulary(&self) -> Result<MedicineListStore, ScenarioError> {
        let mut store = MedicineListStore::new();
        for spec in &self.medicines {
            store
                .register_medicine(spec.clone())
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn nodes_of(&self, role: Role) -> Vec<&NodeId> {
        self.nodes.iter().filter(|n| n.role == role).collect()
    }

    /// The single node holding `role`. Panics on an unvalidated scenario.
    pub fn singleton(&self, role: Role) -> &NodeId {
        self.nodes_of(role)[0]
    }

    /// Number of batches the producer will make: one per ordered medicine.
    pub fn batch_count(&self) -> usize {
        self.orders
            .iter()
            .map(|o| o.medicine_name.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        self.drop_rate
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let formulary = self.formulary()?;

        let mut seen = BTreeSet::new();
        for node in &self.nodes {
            if !seen.insert(node) {
                return invalid(format!("duplicate node {node}"));
            }
        }
        for role in [Role::Producer, Role::Miner, Role::Supplier, Role::Distributor] {
            let n = self.nodes_of(role).len();
            if n != 1 {
                return invalid(format!("need exactly one {role}, found {n}"));
            }
        }
        for role in [Role::Pharmacist, Role::Customer] {
            if self.nodes_of(role).is_empty() {
                return invalid(format!("need at least one {role}"));
            }
        }

        let mut order_ids = BTreeSet::new();
        for o in &self.orders {
            if !order_ids.insert(o.order_id.as_str()) {
                return invalid(format!("duplicate order id {}", o.order_id));
            }
            if o.quantity == 0 {
                return invalid(format!("order {}: quantity must be positive", o.order_id));
            }
            if formulary.get_medicine(&o.medicine_name).is_none() {
                return invalid(format!("order {}: unregistered medicine {:?}", o.order_id, o.medicine_name));
            }
            if o.pharmacist.role != Role::Pharmacist || !seen.contains(&o.pharmacist) {
                return invalid(format!("order {}: {} is not a pharmacist node", o.order_id, o.pharmacist));
            }
            if let Some(c) = &o.customer {
                if c.role != Role::Customer || !seen.contains(c) {
                    return invalid(format!("order {}: {c} is not a customer node", o.order_id));
                }
            }
        }
        for name in self.production_limits.keys() {
            if formulary.get_medicine(name).is_none() {
                return invalid(format!("production limit for unregistered medicine {name:?}"));
            }
        }

        let batches = self.batch_count();
        for (index, readings) in &self.telemetry {
            if *index >= batches {
                return invalid(format!("telemetry for batch {index}, but only {batches} batches"));
            }
            if readings.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
                return invalid(format!("telemetry for batch {index} is out of time order"));
            }
        }
        for fault in &self.faults {
            if fault.kind != FaultKind::TamperBlock && fault.target as usize >= batches {
                return invalid(format!(
                    "fault {:?} targets batch {}, but only {batches} batches",
                    fault.kind, fault.target
                ));
            }
            if fault.kind == FaultKind::TamperBlock && fault.target == 0 {
                return invalid("TamperBlock cannot target the genesis block".into());
            }
            if fault.kind == FaultKind::TemperatureSpike {
                fault.param::<i64>("delta", 10)?;
            }
            if fault.kind == FaultKind::CounterfeitInject {
                fault.param::<u64>("quantity", 10)?;
            }
        }
        for c in &self.complaints {
            if !order_ids.contains(c.order_id.as_str()) {
                return invalid(format!("complaint about unknown order {}", c.order_id));
            }
        }
        Ok(())
    }
}
