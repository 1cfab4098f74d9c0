//! Binary ledger files and offline verification.
//!
//! Layout: the magic `ARMALDG\0`, a big-endian `u64` version, a `u64` block
//! count, then each block as a `u64` length followed by its canonical
//! encoding.

use arma_core::assembler::verify_header;
use arma_core::encoding::{decode_block, encode_block};
use arma_core::{Block, Digest, FaultModel, PublicKey};

pub const MAGIC: &[u8; 8] = b"ARMALDG\0";
pub const VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("not a ledger file")]
    BadMagic,
    #[error("unsupported ledger version {0}")]
    Version(u64),
    #[error("truncated at byte {0}")]
    Truncated(usize),
    #[error("block {index}: {reason}")]
    Block { index: u64, reason: String },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

pub fn encode(blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    out.extend_from_slice(&(blocks.len() as u64).to_be_bytes());
    for b in blocks {
        let bytes = encode_block(b);
        out.extend_from_slice(&(bytes.len() as u64).to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

fn read_u64(bytes: &[u8], at: &mut usize) -> Result<u64, LedgerError> {
    let end = at.checked_add(8).ok_or(LedgerError::Truncated(*at))?;
    let raw = bytes.get(*at..end).ok_or(LedgerError::Truncated(*at))?;
    *at = end;
    Ok(u64::from_be_bytes(raw.try_into().expect("8 bytes")))
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Block>, LedgerError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(LedgerError::BadMagic);
    }
    let mut at = MAGIC.len();
    let version = read_u64(bytes, &mut at)?;
    if version != VERSION {
        return Err(LedgerError::Version(version));
    }
    let count = read_u64(bytes, &mut at)?;
    let mut blocks = Vec::new();
    for index in 0..count {
        let len = read_u64(bytes, &mut at)?;
        let end = usize::try_from(len)
            .ok()
            .and_then(|l| at.checked_add(l))
            .filter(|&e| e <= bytes.len())
            .ok_or(LedgerError::Truncated(at))?;
        let block = decode_block(&bytes[at..end]).map_err(|e| LedgerError::Block {
            index,
            reason: e.to_string(),
        })?;
        blocks.push(block);
        at = end;
    }
    if at != bytes.len() {
        return Err(LedgerError::Trailing(bytes.len() - at));
    }
    Ok(blocks)
}

/// Checks quorum signatures, sequence numbers, the hash chain and that every
/// block carries exactly the batches its header names.
pub fn verify(blocks: &[Block], keys: &[PublicKey], faults: FaultModel) -> Result<(), LedgerError> {
    let mut prev = Digest::ZERO;
    for (i, b) in blocks.iter().enumerate() {
        let index = i as u64;
        let fail = |reason: String| LedgerError::Block { index, reason };
        verify_header(&b.header, keys, &faults, index, prev).map_err(|e| fail(e.to_string()))?;
        if b.batches.len() != b.header.batch_keys.len() {
            return Err(fail(format!(
                "{} batches for {} keys",
                b.batches.len(),
                b.header.batch_keys.len()
            )));
        }
        for (j, (batch, key)) in b.batches.iter().zip(&b.header.batch_keys).enumerate() {
            if batch.key() != *key {
                return Err(fail(format!("batch {j} does not match its header key")));
            }
        }
        prev = b.header.hash();
    }
    Ok(())
}

/// Decodes and verifies in one step.
pub fn verify_bytes(
    bytes: &[u8],
    keys: &[PublicKey],
    faults: FaultModel,
) -> Result<usize, LedgerError> {
    let blocks = decode(bytes)?;
    verify(&blocks, keys, faults)?;
    Ok(blocks.len())
}
