//! Append-only hash-linked ledger.
//!
//! Blocks hold [`TransactionRecord`]s: a payload digest plus routing
//! metadata and the actor's signature. Payloads themselves live in the
//! off-chain [`PayloadStore`](crate::storage::PayloadStore).

mod block;
mod canonical;
mod chain;
mod digest;
pub mod file;
mod tx;

pub use block::{body_digest, build_block, Block, BlockHeader};
pub use canonical::{canonical_digest, to_canonical_bytes, CanonicalError};
pub use chain::{
    chain_structure, head_digest, verify_chain, BlockReport, Chain, Finding, IntegrityReport, Issue, TxReport,
};
pub use digest::{hash_payload, DigestParseError, HashDigest, DIGEST_LEN};
pub use tx::{PayloadHeader, TransactionRecord, TxKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("block body is empty")]
    EmptyBody,
    #[error("block timestamp {got} precedes previous block timestamp {previous}")]
    ClockRegression { previous: u64, got: u64 },
    #[error("block at height {height} does not link to the chain head")]
    BadLink { height: u64 },
    #[error("expected height {expected}, got {got}")]
    BadHeight { expected: u64, got: u64 },
    #[error("body hash mismatch at height {height}")]
    BadBodyHash { height: u64 },
    #[error("block hash mismatch at height {height}")]
    BadBlockHash { height: u64 },
}
