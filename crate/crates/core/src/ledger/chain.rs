use std::fmt;

use serde::Serialize;

use super::block::{body_digest, Block};
use super::digest::{hash_payload, HashDigest};
use super::tx::{PayloadHeader, TransactionRecord, TxKind};
use super::LedgerError;
use crate::crypto::KeyDirectory;
use crate::overlay::NodeId;
use crate::storage::PayloadStore;

/// Hash-linked sequence of blocks starting at genesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    pub fn new(genesis_miner: NodeId) -> Self {
        Self {
            blocks: vec![Block::genesis(genesis_miner)],
        }
    }

    /// Wraps blocks without checking them; pair with [`verify_chain`].
    pub fn from_blocks_unchecked(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn genesis(&self) -> Option<&Block> {
        self.blocks.first()
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn head_hash(&self) -> HashDigest {
        self.head().hash()
    }

    pub fn transactions(&self) -> impl Iterator<Item = (&Block, usize, &TransactionRecord)> {
        self.blocks
            .iter()
            .flat_map(|b| b.body.iter().enumerate().map(move |(i, tx)| (b, i, tx)))
    }

    pub fn tx_count(&self) -> usize {
        self.blocks.iter().map(|b| b.body.len()).sum()
    }

    /// Returns the extended chain; `self` is left as it was.
    pub fn append_block(&self, block: Block) -> Result<Chain, LedgerError> {
        let mut next = self.clone();
        next.push(block)?;
        Ok(next)
    }

    /// In-place variant of [`Chain::append_block`] for the single writer.
    pub fn push(&mut self, block: Block) -> Result<(), LedgerError> {
        check_append(self.head(), &block)?;
        self.blocks.push(block);
        Ok(())
    }

    /// Builds a block on the current head and appends it.
    pub fn seal(
        &mut self,
        txs: Vec<TransactionRecord>,
        miner: NodeId,
        timestamp: u64,
    ) -> Result<&Block, LedgerError> {
        let block = super::block::build_block(&self.head().header, txs, miner, timestamp)?;
        self.push(block)?;
        Ok(self.head())
    }
}

fn check_append(prev: &Block, block: &Block) -> Result<(), LedgerError> {
    let s = StructuralCheck::run(Some(prev), block, prev.height() as usize + 1);
    if !s.link_ok {
        return Err(LedgerError::BadLink {
            height: block.header.height,
        });
    }
    if !s.height_ok {
        return Err(LedgerError::BadHeight {
            expected: prev.height() + 1,
            got: block.header.height,
        });
    }
    if !s.clock_ok {
        return Err(LedgerError::ClockRegression {
            previous: prev.header.timestamp,
            got: block.header.timestamp,
        });
    }
    if !s.block_hash_ok {
        return Err(LedgerError::BadBlockHash {
            height: block.header.height,
        });
    }
    if !s.body_hash_ok {
        return Err(LedgerError::BadBodyHash {
            height: block.header.height,
        });
    }
    if !s.shape_ok {
        return Err(LedgerError::EmptyBody);
    }
    Ok(())
}

/// Link and self-consistency checks of one block against its predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct StructuralCheck {
    pub link_ok: bool,
    pub height_ok: bool,
    pub clock_ok: bool,
    pub block_hash_ok: bool,
    pub body_hash_ok: bool,
    pub shape_ok: bool,
}

impl StructuralCheck {
    /// `position` is the block's index in the chain. A missing `prev` at a
    /// non-zero position means the predecessor could not be read; the link
    /// and clock checks are then skipped.
    pub fn run(prev: Option<&Block>, block: &Block, position: usize) -> Self {
        let header = &block.header;
        let (link_ok, clock_ok) = match (position, prev) {
            (0, _) => (header.prev_hash == HashDigest::ZERO, header.timestamp == 0),
            (_, Some(p)) => (
                header.prev_hash == p.header.digest(),
                header.timestamp >= p.header.timestamp,
            ),
            (_, None) => (true, true),
        };
        let shape_ok = if position == 0 {
            block.body.is_empty()
        } else {
            !block.body.is_empty()
        };
        Self {
            link_ok,
            height_ok: header.height == position as u64,
            clock_ok,
            block_hash_ok: block.block_hash == header.digest(),
            body_hash_ok: header.body_hash == body_digest(&block.body),
            shape_ok,
        }
    }
}

/// Names of the structural checks `block` fails at `position`.
pub fn chain_structure(prev: Option<&Block>, block: &Block, position: usize) -> Vec<&'static str> {
    let s = StructuralCheck::run(prev, block, position);
    [
        (s.link_ok, "prev_hash mismatch"),
        (s.height_ok, "height out of sequence"),
        (s.clock_ok, "timestamp regression"),
        (s.block_hash_ok, "block hash mismatch"),
        (s.body_hash_ok, "body hash mismatch"),
        (s.shape_ok, "invalid block body shape"),
    ]
    .into_iter()
    .filter(|(ok, _)| !ok)
    .map(|(_, name)| name)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxReport {
    pub index: usize,
    pub tx_id: HashDigest,
    pub kind: TxKind,
    pub actor: NodeId,
    pub signature_ok: bool,
    pub payload_present: bool,
    /// Stored bytes hash to `tx_id` and repeat the record's routing fields.
    pub payload_consistent: bool,
}

impl TxReport {
    pub fn check(index: usize, tx: &TransactionRecord, keys: &KeyDirectory, payloads: &PayloadStore) -> Self {
        let stored = payloads.get_payload(&tx.tx_id);
        let payload_consistent = stored.is_some_and(|bytes| {
            hash_payload(bytes) == tx.tx_id
                && PayloadHeader::decode(bytes).is_some_and(|h| h.matches(tx))
        });
        Self {
            index,
            tx_id: tx.tx_id,
            kind: tx.kind,
            actor: tx.actor.clone(),
            signature_ok: tx.signature_valid(keys),
            payload_present: stored.is_some(),
            payload_consistent,
        }
    }

    pub fn ok(&self) -> bool {
        self.signature_ok && self.payload_present && self.payload_consistent
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockReport {
    /// Index in the chain (line number in a ledger file).
    pub position: usize,
    /// `None` when the block could not be decoded.
    pub height: Option<u64>,
    pub parse_error: Option<String>,
    pub canonical_ok: bool,
    pub link_ok: bool,
    pub height_ok: bool,
    pub clock_ok: bool,
    pub block_hash_ok: bool,
    pub body_hash_ok: bool,
    pub shape_ok: bool,
    pub txs: Vec<TxReport>,
}

impl BlockReport {
    pub(crate) fn checked(
        position: usize,
        prev: Option<&Block>,
        block: &Block,
        keys: &KeyDirectory,
        payloads: &PayloadStore,
    ) -> Self {
        let s = StructuralCheck::run(prev, block, position);
        Self {
            position,
            height: Some(block.header.height),
            parse_error: None,
            canonical_ok: true,
            link_ok: s.link_ok,
            height_ok: s.height_ok,
            clock_ok: s.clock_ok,
            block_hash_ok: s.block_hash_ok,
            body_hash_ok: s.body_hash_ok,
            shape_ok: s.shape_ok,
            txs: block
                .body
                .iter()
                .enumerate()
                .map(|(i, tx)| TxReport::check(i, tx, keys, payloads))
                .collect(),
        }
    }

    pub(crate) fn unparseable(position: usize, error: String) -> Self {
        Self {
            position,
            height: None,
            parse_error: Some(error),
            canonical_ok: false,
            link_ok: false,
            height_ok: false,
            clock_ok: false,
            block_hash_ok: false,
            body_hash_ok: false,
            shape_ok: false,
            txs: Vec::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.parse_error.is_none()
            && self.canonical_ok
            && self.link_ok
            && self.height_ok
            && self.clock_ok
            && self.block_hash_ok
            && self.body_hash_ok
            && self.shape_ok
            && self.txs.iter().all(TxReport::ok)
    }

    pub fn findings(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        let mut push = |issue: Issue, tx: Option<&TxReport>| {
            out.push(Finding {
                position: self.position,
                tx_id: tx.map(|t| t.tx_id),
                actor: tx.map(|t| t.actor.clone()),
                issue,
            })
        };
        if let Some(err) = &self.parse_error {
            push(Issue::Unparseable(err.clone()), None);
            return out;
        }
        if !self.canonical_ok {
            push(Issue::NonCanonical, None);
        }
        if !self.link_ok {
            push(Issue::BadLink, None);
        }
        if !self.height_ok {
            push(Issue::BadHeight, None);
        }
        if !self.clock_ok {
            push(Issue::ClockRegression, None);
        }
        if !self.block_hash_ok {
            push(Issue::BadBlockHash, None);
        }
        if !self.body_hash_ok {
            push(Issue::BadBodyHash, None);
        }
        if !self.shape_ok {
            push(Issue::BadShape, None);
        }
        for tx in &self.txs {
            if !tx.signature_ok {
                push(Issue::SignatureFailure, Some(tx));
            }
            if !tx.payload_present {
                push(Issue::MissingPayload, Some(tx));
            } else if !tx.payload_consistent {
                push(Issue::PayloadMismatch, Some(tx));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Issue {
    Unparseable(String),
    NonCanonical,
    BadLink,
    BadHeight,
    ClockRegression,
    BadBlockHash,
    BadBodyHash,
    /// Genesis with transactions, or a later block with none.
    BadShape,
    SignatureFailure,
    MissingPayload,
    PayloadMismatch,
    MissingGenesis,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Unparseable(e) => write!(f, "unparseable block: {e}"),
            Issue::NonCanonical => f.write_str("non-canonical encoding"),
            Issue::BadLink => f.write_str("chain-link failure (prev_hash mismatch)"),
            Issue::BadHeight => f.write_str("height out of sequence"),
            Issue::ClockRegression => f.write_str("timestamp regression"),
            Issue::BadBlockHash => f.write_str("block hash mismatch"),
            Issue::BadBodyHash => f.write_str("body hash mismatch"),
            Issue::BadShape => f.write_str("invalid block body shape"),
            Issue::SignatureFailure => f.write_str("signature failure"),
            Issue::MissingPayload => f.write_str("missing payload"),
            Issue::PayloadMismatch => f.write_str("payload does not match record"),
            Issue::MissingGenesis => f.write_str("missing genesis block"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub position: usize,
    pub tx_id: Option<HashDigest>,
    pub actor: Option<NodeId>,
    pub issue: Issue,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "height {}: {}", self.position, self.issue)?;
        if let Some(tx) = &self.tx_id {
            write!(f, " (tx {tx}")?;
            if let Some(actor) = &self.actor {
                write!(f, ", actor {actor}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntegrityReport {
    pub blocks: Vec<BlockReport>,
}

impl IntegrityReport {
    pub fn is_valid(&self) -> bool {
        !self.blocks.is_empty() && self.blocks.iter().all(BlockReport::is_valid)
    }

    pub fn findings(&self) -> Vec<Finding> {
        if self.blocks.is_empty() {
            return vec![Finding {
                position: 0,
                tx_id: None,
                actor: None,
                issue: Issue::MissingGenesis,
            }];
        }
        self.blocks.iter().flat_map(BlockReport::findings).collect()
    }

    /// Positions of blocks with at least one finding.
    pub fn invalid_positions(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .filter(|b| !b.is_valid())
            .map(|b| b.position)
            .collect()
    }

    pub fn first_invalid_position(&self) -> Option<usize> {
        self.invalid_positions().first().copied()
    }

    pub fn unresolvable_payloads(&self) -> Vec<HashDigest> {
        self.blocks
            .iter()
            .flat_map(|b| b.txs.iter())
            .filter(|t| !t.payload_present)
            .map(|t| t.tx_id)
            .collect()
    }
}

/// Checks links, hashes, signatures and payload availability of every block.
/// Problems are reported, never raised.
pub fn verify_chain(chain: &Chain, keys: &KeyDirectory, payloads: &PayloadStore) -> IntegrityReport {
    let blocks = chain.blocks();
    IntegrityReport {
        blocks: blocks
            .iter()
            .enumerate()
            .map(|(i, block)| {
                let prev = i.checked_sub(1).map(|p| &blocks[p]);
                BlockReport::checked(i, prev, block, keys, payloads)
            })
            .collect(),
    }
}

/// Header digest of the block the chain points at, for comparing replicas.
pub fn head_digest(chain: &Chain) -> HashDigest {
    chain.head().header.digest()
}
