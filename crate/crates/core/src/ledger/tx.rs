use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::digest::HashDigest;
use crate::crypto::{self, KeyDirectory, KeyPair, Signature};
use crate::overlay::NodeId;

/// Every event the ledger records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    Produce,
    MineVerdict,
    SupplierForward,
    SupplierReturn,
    Distribute,
    Dispense,
    Deliver,
    Complaint,
    ComplaintResponse,
    ReturnToProducer,
}

impl TxKind {
    pub const ALL: [TxKind; 10] = [
        TxKind::Produce,
        TxKind::MineVerdict,
        TxKind::SupplierForward,
        TxKind::SupplierReturn,
        TxKind::Distribute,
        TxKind::Dispense,
        TxKind::Deliver,
        TxKind::Complaint,
        TxKind::ComplaintResponse,
        TxKind::ReturnToProducer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TxKind::Produce => "Produce",
            TxKind::MineVerdict => "MineVerdict",
            TxKind::SupplierForward => "SupplierForward",
            TxKind::SupplierReturn => "SupplierReturn",
            TxKind::Distribute => "Distribute",
            TxKind::Dispense => "Dispense",
            TxKind::Deliver => "Deliver",
            TxKind::Complaint => "Complaint",
            TxKind::ComplaintResponse => "ComplaintResponse",
            TxKind::ReturnToProducer => "ReturnToProducer",
        }
    }

    /// Complaints are recorded but do not move custody.
    pub fn moves_custody(&self) -> bool {
        !matches!(self, TxKind::Complaint | TxKind::ComplaintResponse)
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TxKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TxKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown transaction kind {s:?}"))
    }
}

/// On-chain record of one event. The full details live off-chain in the
/// payload store under `tx_id`; the actor signs `tx_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionRecord {
    pub tx_id: HashDigest,
    pub kind: TxKind,
    pub batch_id: String,
    pub actor: NodeId,
    pub timestamp: u64,
    pub signature: Signature,
}

impl TransactionRecord {
    pub fn signed(
        signer: &KeyPair,
        tx_id: HashDigest,
        kind: TxKind,
        batch_id: impl Into<String>,
        timestamp: u64,
    ) -> Self {
        Self {
            tx_id,
            kind,
            batch_id: batch_id.into(),
            actor: signer.owner.clone(),
            timestamp,
            signature: crypto::sign(&signer.private, tx_id.as_bytes()),
        }
    }

    pub fn signature_valid(&self, keys: &KeyDirectory) -> bool {
        keys.get(&self.actor)
            .is_some_and(|pk| crypto::verify(pk, self.tx_id.as_bytes(), &self.signature))
    }
}

/// The routing fields every transaction payload repeats, so a record can be
/// checked against the payload it points to.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PayloadHeader {
    pub kind: TxKind,
    pub batch_id: String,
    pub actor: NodeId,
    pub timestamp: u64,
}

impl PayloadHeader {
    pub fn decode(payload: &[u8]) -> Option<Self> {
        serde_json::from_slice(payload).ok()
    }

    pub fn matches(&self, record: &TransactionRecord) -> bool {
        self.kind == record.kind
            && self.batch_id == record.batch_id
            && self.actor == record.actor
            && self.timestamp == record.timestamp
    }
}
