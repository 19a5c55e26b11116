//! Off-chain transaction payloads and their signed on-chain records.

use serde::{Deserialize, Serialize};

use crate::crypto::KeyPair;
use crate::ledger::{hash_payload, to_canonical_bytes, TransactionRecord, TxKind};
use crate::mining::{MedicineBatch, Stage, StageResult};
use crate::overlay::NodeId;
use crate::storage::PayloadStore;

/// Kind-specific body of a transaction payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxDetail {
    Produce {
        batch: MedicineBatch,
    },
    MineVerdict {
        stages: Vec<StageResult>,
    },
    ReturnToProducer {
        stage: Stage,
        label: String,
        stages: Vec<StageResult>,
    },
    SupplierForward {
        remaining_secs: u64,
        policy_days: u64,
    },
    SupplierReturn {
        remaining_secs: u64,
        policy_days: u64,
    },
    Distribute {
        parent_batch: String,
        order_id: String,
        pharmacist: NodeId,
        quantity: u64,
    },
    Dispense {
        order_id: String,
        customer: NodeId,
        quantity: u64,
    },
    Deliver {
        customer: NodeId,
        quantity: u64,
    },
    Complaint {
        complaint_id: String,
        description: String,
    },
    ComplaintResponse {
        complaint_id: String,
        response: String,
    },
}

impl TxDetail {
    pub fn kind(&self) -> TxKind {
        match self {
            TxDetail::Produce { .. } => TxKind::Produce,
            TxDetail::MineVerdict { .. } => TxKind::MineVerdict,
            TxDetail::ReturnToProducer { .. } => TxKind::ReturnToProducer,
            TxDetail::SupplierForward { .. } => TxKind::SupplierForward,
            TxDetail::SupplierReturn { .. } => TxKind::SupplierReturn,
            TxDetail::Distribute { .. } => TxKind::Distribute,
            TxDetail::Dispense { .. } => TxKind::Dispense,
            TxDetail::Deliver { .. } => TxKind::Deliver,
            TxDetail::Complaint { .. } => TxKind::Complaint,
            TxDetail::ComplaintResponse { .. } => TxKind::ComplaintResponse,
        }
    }

    /// One-line human summary for audit trails.
    pub fn summary(&self) -> String {
        match self {
            TxDetail::Produce { batch } => format!(
                "{} x{} of {}, expires t={}",
                batch.batch_id, batch.quantity, batch.medicine_name, batch.expiry_date
            ),
            TxDetail::MineVerdict { stages } => {
                let temp = stages
                    .iter()
                    .find(|s| s.stage == Stage::Temperature)
                    .map(|s| if s.passed { "temperature ok" } else { "temperature failed" })
                    .unwrap_or("temperature not evaluated");
                format!("accepted after {} stages; {temp}", stages.len())
            }
            TxDetail::ReturnToProducer { stage, label, .. } => {
                format!("rejected at {stage:?}: {label}")
            }
            TxDetail::SupplierForward {
                remaining_secs,
                policy_days,
            } => format!(
                "forwarded, {} days shelf left (policy {policy_days})",
                remaining_secs / 86_400
            ),
            TxDetail::SupplierReturn {
                remaining_secs,
                policy_days,
            } => format!(
                "returned, {} days shelf left (policy {policy_days})",
                remaining_secs / 86_400
            ),
            TxDetail::Distribute {
                parent_batch,
                order_id,
                pharmacist,
                quantity,
            } => format!("{quantity} units of {parent_batch} to {pharmacist} for {order_id}"),
            TxDetail::Dispense {
                order_id,
                customer,
                quantity,
            } => format!("dispensed {quantity} units to {customer} for {order_id}"),
            TxDetail::Deliver { customer, quantity } => {
                format!("delivered {quantity} units to {customer}")
            }
            TxDetail::Complaint {
                complaint_id,
                description,
            } => format!("{complaint_id}: {description}"),
            TxDetail::ComplaintResponse {
                complaint_id,
                response,
            } => format!("{complaint_id}: {response}"),
        }
    }
}

/// Full transaction details stored off-chain under the digest of their
/// canonical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxPayload {
    pub kind: TxKind,
    pub batch_id: String,
    pub actor: NodeId,
    pub timestamp: u64,
    /// Custodian after a custody event, or the addressee of a complaint.
    pub recipient: NodeId,
    pub detail: TxDetail,
}

impl TxPayload {
    pub fn new(
        actor: &NodeId,
        batch_id: impl Into<String>,
        timestamp: u64,
        recipient: NodeId,
        detail: TxDetail,
    ) -> Self {
        Self {
            kind: detail.kind(),
            batch_id: batch_id.into(),
            actor: actor.clone(),
            timestamp,
            recipient,
            detail,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("payloads hold integers only")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

/// A signed record together with the payload bytes it commits to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedTx {
    pub record: TransactionRecord,
    pub payload: TxPayload,
    pub bytes: Vec<u8>,
}

impl SignedTx {
    /// Panics if `signer` is not the payload's actor.
    pub fn sign(signer: &KeyPair, payload: TxPayload) -> Self {
        assert_eq!(signer.owner, payload.actor, "signer must be the payload actor");
        let bytes = payload.to_bytes();
        let record = TransactionRecord::signed(
            signer,
            hash_payload(&bytes),
            payload.kind,
            payload.batch_id.clone(),
            payload.timestamp,
        );
        Self {
            record,
            payload,
            bytes,
        }
    }

    /// Stores the payload and returns the record for inclusion in a block.
    pub fn commit(self, store: &mut PayloadStore) -> TransactionRecord {
        let id = store.put_payload(&self.bytes);
        debug_assert_eq!(id, self.record.tx_id);
        self.record
    }
}
