use serde::{Deserialize, Serialize};

use super::canonical::{canonical_digest, to_canonical_bytes};
use super::digest::HashDigest;
use super::tx::TransactionRecord;
use super::LedgerError;
use crate::overlay::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: HashDigest,
    pub body_hash: HashDigest,
    pub miner: NodeId,
    pub timestamp: u64,
}

impl BlockHeader {
    pub fn digest(&self) -> HashDigest {
        canonical_digest(self).expect("header has no floats")
    }
}

/// A ledger entry. `block_hash` seals the header at build time so a block
/// carries its own integrity check even at the tip of the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub header: BlockHeader,
    pub block_hash: HashDigest,
    pub body: Vec<TransactionRecord>,
}

pub fn body_digest(body: &[TransactionRecord]) -> HashDigest {
    canonical_digest(body).expect("transaction records have no floats")
}

impl Block {
    pub fn genesis(miner: NodeId) -> Self {
        let header = BlockHeader {
            height: 0,
            prev_hash: HashDigest::ZERO,
            body_hash: body_digest(&[]),
            miner,
            timestamp: 0,
        };
        Self {
            block_hash: header.digest(),
            header,
            body: Vec::new(),
        }
    }

    pub fn hash(&self) -> HashDigest {
        self.block_hash
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    /// Canonical serialization; also the ledger-file line for this block.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("block has no floats")
    }
}

pub fn build_block(
    prev: &BlockHeader,
    txs: Vec<TransactionRecord>,
    miner: NodeId,
    timestamp: u64,
) -> Result<Block, LedgerError> {
    if txs.is_empty() {
        return Err(LedgerError::EmptyBody);
    }
    if timestamp < prev.timestamp {
        return Err(LedgerError::ClockRegression {
            previous: prev.timestamp,
            got: timestamp,
        });
    }
    let header = BlockHeader {
        height: prev.height + 1,
        prev_hash: prev.digest(),
        body_hash: body_digest(&txs),
        miner,
        timestamp,
    };
    Ok(Block {
        block_hash: header.digest(),
        header,
        body: txs,
    })
}
