//! Adversarial edits to written artifacts, for exercising the verifier.
//! Every function returns a modified copy.

use sha2::{Digest, Sha256};

use crate::crypto::{generate_keypair, sign, KeyPair};
use crate::events::{SignedTx, TxDetail, TxPayload};
use crate::ledger::{body_digest, build_block, Block, Chain, HashDigest, TxKind};
use crate::overlay::NodeId;
use crate::scenario::{FaultKind, FaultSpec, PHASE_GAP};
use crate::storage::PayloadStore;
use crate::supply::{batch_id_for, Role};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("ledger has no blocks after genesis")]
    EmptyLedger,
    #[error("fault not applicable: {0}")]
    NotApplicable(String),
}

/// Key pair nobody registered, claiming to be `owner`.
pub fn rogue_keypair(owner: NodeId) -> KeyPair {
    let seed: [u8; 32] = Sha256::digest(b"pharmachain/rogue").into();
    generate_keypair(seed, owner)
}

fn not_applicable(msg: impl Into<String>) -> InjectError {
    InjectError::NotApplicable(msg.into())
}

/// Changes one field of the block at `height` without rehashing anything.
/// `field` is one of `tx_timestamp` (default), `batch_id`, `kind`,
/// `miner`, `timestamp`.
pub fn tamper_block(chain: &Chain, height: u64, field: &str) -> Result<Chain, InjectError> {
    if chain.len() < 2 {
        return Err(InjectError::EmptyLedger);
    }
    let mut blocks = chain.blocks().to_vec();
    let block = blocks
        .get_mut(height as usize)
        .filter(|_| height > 0)
        .ok_or_else(|| not_applicable(format!("no block at height {height} to tamper with")))?;
    match field {
        "tx_timestamp" => block.body[0].timestamp += 1,
        "batch_id" => block.body[0].batch_id.push('X'),
        "kind" => {
            let tx = &mut block.body[0];
            tx.kind = if tx.kind == TxKind::Deliver { TxKind::Dispense } else { TxKind::Deliver };
        }
        "miner" => block.header.miner = NodeId::new(Role::Customer, 999),
        "timestamp" => block.header.timestamp += 1,
        other => return Err(not_applicable(format!("unknown tamper field {other:?}"))),
    }
    Ok(Chain::from_blocks_unchecked(blocks))
}

/// Recomputes body hashes, links and block hashes from `from` onwards, as
/// an attacker rewriting history would.
pub fn reseal_from(blocks: &mut [Block], from: usize) {
    for i in from.max(1)..blocks.len() {
        let prev_hash = blocks[i - 1].hash();
        let block = &mut blocks[i];
        block.header.prev_hash = prev_hash;
        block.header.body_hash = body_digest(&block.body);
        block.block_hash = block.header.digest();
    }
}

fn root(batch_id: &str) -> &str {
    batch_id.split('/').next().unwrap_or(batch_id)
}

/// Re-signs the first `kind` transaction of batch-origin `target` (or any
/// of its lots) with an unregistered key, then reseals the chain so only
/// the signature is wrong.
pub fn forge_signature(chain: &Chain, kind: TxKind, target: u64) -> Result<Chain, InjectError> {
    if chain.len() < 2 {
        return Err(InjectError::EmptyLedger);
    }
    let wanted = batch_id_for(target as usize);
    let mut blocks = chain.blocks().to_vec();
    let (b, i) = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, block)| block.body.iter().enumerate().map(move |(i, tx)| (b, i, tx)))
        .find(|(_, _, tx)| tx.kind == kind && root(&tx.batch_id) == wanted)
        .map(|(b, i, _)| (b, i))
        .ok_or_else(|| not_applicable(format!("no {kind} transaction for batch {wanted}")))?;
    let tx = &mut blocks[b].body[i];
    let rogue = rogue_keypair(tx.actor.clone());
    tx.signature = sign(&rogue.private, tx.tx_id.as_bytes());
    reseal_from(&mut blocks, b);
    Ok(Chain::from_blocks_unchecked(blocks))
}

/// Appends a block holding a Distribute for `"CF-{target}"`, a batch that
/// was never produced, signed by an unregistered key posing as the
/// distributor. The payload goes into `payloads`.
pub fn append_counterfeit(
    chain: &Chain,
    payloads: &mut PayloadStore,
    target: u64,
    quantity: u64,
) -> Result<(Chain, HashDigest), InjectError> {
    if chain.len() < 2 {
        return Err(InjectError::EmptyLedger);
    }
    let actor_of = |role: Role| {
        chain
            .transactions()
            .find(|(_, _, tx)| tx.actor.role == role)
            .map_or_else(|| NodeId::new(role, 0), |(_, _, tx)| tx.actor.clone())
    };
    let distributor = actor_of(Role::Distributor);
    let pharmacist = actor_of(Role::Pharmacist);
    let lot = format!("CF-{target}");
    let head = &chain.head().header;
    let now = head.timestamp + PHASE_GAP;
    let rogue = rogue_keypair(distributor.clone());
    let tx = SignedTx::sign(
        &rogue,
        TxPayload::new(
            &distributor,
            &lot,
            now,
            pharmacist.clone(),
            TxDetail::Distribute {
                parent_batch: lot.clone(),
                order_id: "counterfeit".into(),
                pharmacist,
                quantity,
            },
        ),
    );
    let record = tx.commit(payloads);
    let tx_id = record.tx_id;
    let block = build_block(head, vec![record], head.miner.clone(), now).expect("non-empty, clock forward");
    let longer = chain.append_block(block).expect("built on the head");
    Ok((longer, tx_id))
}

/// Applies an artifact-level fault. `payloads` receives any new payload.
pub fn apply_fault(chain: &Chain, payloads: &mut PayloadStore, fault: &FaultSpec) -> Result<Chain, InjectError> {
    let param = |name: &str| fault.parameters.get(name).map(String::as_str);
    match fault.kind {
        FaultKind::TamperBlock => tamper_block(chain, fault.target, param("field").unwrap_or("tx_timestamp")),
        FaultKind::ForgeSignature => {
            let kind = param("tx_kind")
                .unwrap_or("Dispense")
                .parse()
                .map_err(|e: String| not_applicable(e))?;
            forge_signature(chain, kind, fault.target)
        }
        FaultKind::CounterfeitInject => {
            let quantity = param("quantity")
                .unwrap_or("10")
                .parse()
                .map_err(|_| not_applicable("quantity must be a non-negative integer"))?;
            append_counterfeit(chain, payloads, fault.target, quantity).map(|(c, _)| c)
        }
        other => Err(not_applicable(format!("{other:?} acts during a run, not on a ledger"))),
    }
}
