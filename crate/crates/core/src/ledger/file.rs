//! Ledger file: newline-delimited JSON, one canonical block per line,
//! genesis first. Re-hashing a line's `header` object reproduces its
//! `block_hash`.

use super::block::Block;
use super::chain::{BlockReport, Chain, IntegrityReport};
use crate::crypto::KeyDirectory;
use crate::storage::PayloadStore;

#[derive(Debug, thiserror::Error)]
pub enum LedgerFileError {
    #[error("ledger file is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
}

pub fn write_ledger(chain: &Chain) -> Vec<u8> {
    let mut out = Vec::new();
    for block in chain.blocks() {
        out.extend_from_slice(&block.to_canonical_bytes());
        out.push(b'\n');
    }
    out
}

/// Splits into lines; the text after the final newline must be empty.
fn lines(bytes: &[u8]) -> Vec<&[u8]> {
    let mut parts: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    if parts.last().is_some_and(|l| l.is_empty()) {
        parts.pop();
    }
    parts
}

fn decode_line(line: &[u8]) -> Result<Block, String> {
    let block: Block = serde_json::from_slice(line).map_err(|e| e.to_string())?;
    if block.to_canonical_bytes() != line {
        return Err("non-canonical encoding".to_string());
    }
    Ok(block)
}

/// Strict reader: every line must decode and be canonical. Link and hash
/// checks are left to [`verify_ledger_bytes`].
pub fn read_ledger(bytes: &[u8]) -> Result<Chain, LedgerFileError> {
    if bytes.is_empty() {
        return Err(LedgerFileError::Empty);
    }
    if bytes.last() != Some(&b'\n') {
        return Err(LedgerFileError::Line {
            line: lines(bytes).len().saturating_sub(1),
            reason: "missing trailing newline".into(),
        });
    }
    let blocks = lines(bytes)
        .into_iter()
        .enumerate()
        .map(|(i, line)| decode_line(line).map_err(|reason| LedgerFileError::Line { line: i, reason }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Chain::from_blocks_unchecked(blocks))
}

/// Lenient verification straight from file bytes: an undecodable or
/// non-canonical line becomes a finding at that position instead of an error.
pub fn verify_ledger_bytes(bytes: &[u8], keys: &KeyDirectory, payloads: &PayloadStore) -> IntegrityReport {
    let all = lines(bytes);
    let last = all.len().saturating_sub(1);
    let terminated = bytes.last() == Some(&b'\n');
    let mut reports = Vec::with_capacity(all.len());
    let mut prev: Option<Block> = None;
    for (i, line) in all.into_iter().enumerate() {
        let parsed: Result<Block, serde_json::Error> = serde_json::from_slice(line);
        match parsed {
            Ok(block) => {
                let mut report = BlockReport::checked(i, prev.as_ref(), &block, keys, payloads);
                report.canonical_ok = block.to_canonical_bytes() == line && (i != last || terminated);
                prev = Some(block);
                reports.push(report);
            }
            Err(e) => {
                reports.push(BlockReport::unparseable(i, e.to_string()));
                prev = None;
            }
        }
    }
    IntegrityReport { blocks: reports }
}
