//! Canonical byte encodings.
//!
//! Every integer is 8-byte big-endian, digests are 32 raw bytes, and
//! variable-length fields and lists carry an 8-byte length prefix. Each
//! top-level structure starts with a 4-byte ASCII tag. The layout is
//! documented byte-for-byte in `docs/wire-format.md`.

use alloc::vec::Vec;
use core::fmt;

use crate::crypto::{Scheme, Signature};
use crate::model::{
    Batch, BatchKey, Block, BlockHeader, ClientId, Digest, Epoch, PartyId, ShardId, Term,
    Transaction,
};

pub const BAS_TAG: &[u8; 4] = b"ABS1";
pub const COMPLAINT_TAG: &[u8; 4] = b"ACV1";
pub const BATCH_TAG: &[u8; 4] = b"ABT1";
pub const HEADER_TAG: &[u8; 4] = b"AHD1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    UnexpectedEnd { needed: usize, offset: usize },
    BadTag { expected: [u8; 4], offset: usize },
    UnknownScheme(u64),
    SignatureLength { scheme: Scheme, len: u64 },
    IdOutOfRange(u64),
    TrailingBytes(usize),
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeError::UnexpectedEnd { needed, offset } => {
                write!(
                    f,
                    "unexpected end of input: {needed} bytes needed at offset {offset}"
                )
            }
            DecodeError::BadTag { expected, offset } => write!(
                f,
                "expected tag {:?} at offset {offset}",
                core::str::from_utf8(expected).unwrap_or("?")
            ),
            DecodeError::UnknownScheme(id) => write!(f, "unknown signature scheme {id}"),
            DecodeError::SignatureLength { scheme, len } => {
                write!(f, "signature of length {len} is invalid for {scheme}")
            }
            DecodeError::IdOutOfRange(v) => write!(f, "identifier {v} out of range"),
            DecodeError::TrailingBytes(n) => write!(f, "{n} trailing bytes"),
        }
    }
}

impl core::error::Error for DecodeError {}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tag(&mut self, tag: &[u8; 4]) -> &mut Self {
        self.buf.extend_from_slice(tag);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.buf.extend_from_slice(&d.0);
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
        self
    }

    pub fn raw(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn signature(&mut self, s: &Signature) -> &mut Self {
        self.u64(s.scheme.id());
        self.bytes(&s.bytes)
    }

    pub fn batch_key(&mut self, k: &BatchKey) -> &mut Self {
        self.u64(k.seq)
            .u64(k.shard.0 as u64)
            .digest(&k.digest)
            .u64(k.primary.0 as u64)
    }

    pub fn transaction(&mut self, tx: &Transaction) -> &mut Self {
        self.u64(tx.client.0)
            .bytes(&tx.payload)
            .signature(&tx.signature)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Decoder { input, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEnd {
                needed: n,
                offset: self.pos,
            });
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn tag(&mut self, expected: &[u8; 4]) -> Result<(), DecodeError> {
        let offset = self.pos;
        if self.take(4)? != expected {
            return Err(DecodeError::BadTag {
                expected: *expected,
                offset,
            });
        }
        Ok(())
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let raw = self.take(8)?;
        Ok(u64::from_be_bytes(raw.try_into().expect("8 bytes")))
    }

    pub fn u32_id(&mut self) -> Result<u32, DecodeError> {
        let v = self.u64()?;
        u32::try_from(v).map_err(|_| DecodeError::IdOutOfRange(v))
    }

    pub fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest(self.take(32)?.try_into().expect("32 bytes")))
    }

    /// A length-prefixed byte string.
    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u64()?;
        let len = usize::try_from(len).unwrap_or(usize::MAX);
        self.take(len)
    }

    /// A list length, sanity-checked against the bytes left so that a
    /// corrupted prefix cannot trigger a huge allocation.
    pub fn count(&mut self, min_item_len: usize) -> Result<usize, DecodeError> {
        let offset = self.pos;
        let n = self.u64()?;
        let needed = (n as u128) * (min_item_len.max(1) as u128);
        if needed > self.remaining() as u128 {
            return Err(DecodeError::UnexpectedEnd {
                needed: usize::try_from(needed).unwrap_or(usize::MAX),
                offset,
            });
        }
        Ok(n as usize)
    }

    pub fn signature(&mut self) -> Result<Signature, DecodeError> {
        let id = self.u64()?;
        let scheme = Scheme::from_id(id).ok_or(DecodeError::UnknownScheme(id))?;
        let bytes = self.bytes()?;
        if bytes.len() != scheme.signature_len() {
            return Err(DecodeError::SignatureLength {
                scheme,
                len: bytes.len() as u64,
            });
        }
        Ok(Signature {
            scheme,
            bytes: bytes.to_vec(),
        })
    }

    pub fn batch_key(&mut self) -> Result<BatchKey, DecodeError> {
        Ok(BatchKey {
            seq: self.u64()?,
            shard: ShardId(self.u32_id()?),
            digest: self.digest()?,
            primary: PartyId(self.u32_id()?),
        })
    }

    pub fn transaction(&mut self) -> Result<Transaction, DecodeError> {
        Ok(Transaction {
            client: ClientId(self.u64()?),
            payload: self.bytes()?.to_vec(),
            signature: self.signature()?,
        })
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

pub const BATCH_KEY_LEN: usize = 8 + 8 + 32 + 8;
const MIN_TX_LEN: usize = 8 + 8 + 8 + 8;
const MIN_SIG_ENTRY_LEN: usize = 8 + 8 + 8;

/// Payload signed by a batcher when attesting that a batch is persisted.
pub fn encode_bas_payload(
    seq: u64,
    digest: &Digest,
    shard: ShardId,
    primary: PartyId,
    epoch: Epoch,
    orphan_refs: &[BatchKey],
) -> Vec<u8> {
    let mut e = Encoder::new();
    e.tag(BAS_TAG)
        .u64(seq)
        .digest(digest)
        .u64(shard.0 as u64)
        .u64(primary.0 as u64)
        .u64(epoch.0)
        .u64(orphan_refs.len() as u64);
    for r in orphan_refs {
        e.batch_key(r);
    }
    e.finish()
}

/// Decoded form of [`encode_bas_payload`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasPayload {
    pub seq: u64,
    pub digest: Digest,
    pub shard: ShardId,
    pub primary: PartyId,
    pub epoch: Epoch,
    pub orphan_refs: Vec<BatchKey>,
}

pub fn decode_bas_payload(bytes: &[u8]) -> Result<BasPayload, DecodeError> {
    let mut d = Decoder::new(bytes);
    d.tag(BAS_TAG)?;
    let seq = d.u64()?;
    let digest = d.digest()?;
    let shard = ShardId(d.u32_id()?);
    let primary = PartyId(d.u32_id()?);
    let epoch = Epoch(d.u64()?);
    let n = d.count(BATCH_KEY_LEN)?;
    let orphan_refs = (0..n)
        .map(|_| d.batch_key())
        .collect::<Result<Vec<_>, _>>()?;
    d.finish()?;
    Ok(BasPayload {
        seq,
        digest,
        shard,
        primary,
        epoch,
        orphan_refs,
    })
}

pub fn encode_complaint_payload(term: Term, shard: ShardId) -> Vec<u8> {
    let mut e = Encoder::new();
    e.tag(COMPLAINT_TAG).u64(term.0).u64(shard.0 as u64);
    e.finish()
}

fn put_batch(e: &mut Encoder, batch: &Batch) {
    e.tag(BATCH_TAG)
        .u64(batch.shard.0 as u64)
        .u64(batch.seq)
        .u64(batch.term.0)
        .u64(batch.primary.0 as u64)
        .u64(batch.txs.len() as u64);
    for tx in &batch.txs {
        e.transaction(tx);
    }
}

pub fn encode_batch(batch: &Batch) -> Vec<u8> {
    let mut e = Encoder::new();
    put_batch(&mut e, batch);
    e.finish()
}

pub fn read_batch(d: &mut Decoder<'_>) -> Result<Batch, DecodeError> {
    d.tag(BATCH_TAG)?;
    let shard = ShardId(d.u32_id()?);
    let seq = d.u64()?;
    let term = Term(d.u64()?);
    let primary = PartyId(d.u32_id()?);
    let n = d.count(MIN_TX_LEN)?;
    let txs = (0..n)
        .map(|_| d.transaction())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Batch {
        shard,
        seq,
        term,
        primary,
        txs,
    })
}

pub fn decode_batch(bytes: &[u8]) -> Result<Batch, DecodeError> {
    let mut d = Decoder::new(bytes);
    let b = read_batch(&mut d)?;
    d.finish()?;
    Ok(b)
}

fn put_header_unsigned(e: &mut Encoder, h: &BlockHeader) {
    e.tag(HEADER_TAG)
        .u64(h.block_seq)
        .digest(&h.prev_header_hash)
        .u64(h.batch_keys.len() as u64);
    for k in &h.batch_keys {
        e.batch_key(k);
    }
}

/// Bytes signed by consensus nodes and hashed into the chain.
pub fn encode_header_unsigned(h: &BlockHeader) -> Vec<u8> {
    let mut e = Encoder::new();
    put_header_unsigned(&mut e, h);
    e.finish()
}

fn put_header(e: &mut Encoder, h: &BlockHeader) {
    put_header_unsigned(e, h);
    e.u64(h.quorum_sigs.len() as u64);
    for (signer, sig) in &h.quorum_sigs {
        e.u64(signer.0 as u64).signature(sig);
    }
}

pub fn encode_header(h: &BlockHeader) -> Vec<u8> {
    let mut e = Encoder::new();
    put_header(&mut e, h);
    e.finish()
}

pub fn read_header(d: &mut Decoder<'_>) -> Result<BlockHeader, DecodeError> {
    d.tag(HEADER_TAG)?;
    let block_seq = d.u64()?;
    let prev_header_hash = d.digest()?;
    let n = d.count(BATCH_KEY_LEN)?;
    let batch_keys = (0..n)
        .map(|_| d.batch_key())
        .collect::<Result<Vec<_>, _>>()?;
    let m = d.count(MIN_SIG_ENTRY_LEN)?;
    let quorum_sigs = (0..m)
        .map(|_| Ok((PartyId(d.u32_id()?), d.signature()?)))
        .collect::<Result<Vec<_>, DecodeError>>()?;
    Ok(BlockHeader {
        block_seq,
        prev_header_hash,
        batch_keys,
        quorum_sigs,
    })
}

pub fn decode_header(bytes: &[u8]) -> Result<BlockHeader, DecodeError> {
    let mut d = Decoder::new(bytes);
    let h = read_header(&mut d)?;
    d.finish()?;
    Ok(h)
}

/// `header ‖ batch_count ‖ batch*`.
pub fn encode_block(block: &Block) -> Vec<u8> {
    let mut e = Encoder::new();
    put_header(&mut e, &block.header);
    e.u64(block.batches.len() as u64);
    for b in &block.batches {
        put_batch(&mut e, b);
    }
    e.finish()
}

pub fn decode_block(bytes: &[u8]) -> Result<Block, DecodeError> {
    let mut d = Decoder::new(bytes);
    let header = read_header(&mut d)?;
    let n = d.count(4 + 5 * 8)?;
    let batches = (0..n)
        .map(|_| read_batch(&mut d))
        .collect::<Result<Vec<_>, _>>()?;
    d.finish()?;
    Ok(Block { header, batches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, sign};
    use alloc::vec;
    use proptest::prelude::*;

    fn key(seq: u64, shard: u32, d: u8, primary: u32) -> BatchKey {
        BatchKey {
            seq,
            shard: ShardId(shard),
            digest: Digest([d; 32]),
            primary: PartyId(primary),
        }
    }

    #[test]
    fn zero_bas_payload_is_fixed() {
        let a = encode_bas_payload(0, &Digest::ZERO, ShardId(0), PartyId(0), Epoch(0), &[]);
        let b = encode_bas_payload(0, &Digest::ZERO, ShardId(0), PartyId(0), Epoch(0), &[]);
        assert_eq!(a, b);
        let mut expected = b"ABS1".to_vec();
        expected.extend_from_slice(&[0u8; 8 + 32 + 8 + 8 + 8 + 8]);
        assert_eq!(a, expected);
    }

    #[test]
    fn shard_changes_payload() {
        let a = encode_bas_payload(5, &Digest([1; 32]), ShardId(0), PartyId(2), Epoch(1), &[]);
        let b = encode_bas_payload(5, &Digest([1; 32]), ShardId(1), PartyId(2), Epoch(1), &[]);
        assert_ne!(a, b);
    }

    #[test]
    fn two_refs_decode_back() {
        let refs = vec![key(1, 0, 9, 1), key(2, 0, 8, 3)];
        let bytes =
            encode_bas_payload(4, &Digest([5; 32]), ShardId(0), PartyId(1), Epoch(3), &refs);
        let decoded = decode_bas_payload(&bytes).unwrap();
        assert_eq!(decoded.orphan_refs, refs);
        assert_eq!(decoded.seq, 4);
        assert_eq!(decoded.epoch, Epoch(3));
    }

    #[test]
    fn trailing_and_truncated_inputs_are_rejected() {
        let mut bytes = encode_bas_payload(0, &Digest::ZERO, ShardId(0), PartyId(0), Epoch(0), &[]);
        bytes.push(0);
        assert_eq!(
            decode_bas_payload(&bytes),
            Err(DecodeError::TrailingBytes(1))
        );
        bytes.truncate(20);
        assert!(matches!(
            decode_bas_payload(&bytes),
            Err(DecodeError::UnexpectedEnd { .. })
        ));
    }

    #[test]
    fn huge_count_prefix_does_not_allocate() {
        let mut bytes = encode_bas_payload(0, &Digest::ZERO, ShardId(0), PartyId(0), Epoch(0), &[]);
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&u64::MAX.to_be_bytes());
        assert!(decode_bas_payload(&bytes).is_err());
    }

    #[test]
    fn block_round_trip() {
        let k = keygen(&[2; 32], Scheme::TestMac);
        let tx = Transaction::new_signed(ClientId(3), vec![1, 2, 3], &k);
        let batch = Batch {
            shard: ShardId(1),
            seq: 0,
            term: Term(2),
            primary: PartyId(2),
            txs: vec![tx],
        };
        let mut header = BlockHeader::unsigned(0, Digest::ZERO, vec![batch.key()]);
        header.quorum_sigs = vec![(PartyId(0), sign(&k, &header.signing_bytes()))];
        let block = Block {
            header,
            batches: vec![batch],
        };
        assert_eq!(decode_block(&encode_block(&block)).unwrap(), block);
    }

    fn arb_key() -> impl Strategy<Value = BatchKey> {
        (any::<u64>(), any::<u32>(), any::<[u8; 32]>(), any::<u32>()).prop_map(
            |(seq, shard, d, primary)| BatchKey {
                seq,
                shard: ShardId(shard),
                digest: Digest(d),
                primary: PartyId(primary),
            },
        )
    }

    type PayloadParts = (u64, [u8; 32], u32, u32, u64, Vec<BatchKey>);

    fn arb_payload() -> impl Strategy<Value = PayloadParts> {
        (
            any::<u64>(),
            any::<[u8; 32]>(),
            any::<u32>(),
            any::<u32>(),
            any::<u64>(),
            proptest::collection::vec(arb_key(), 0..4),
        )
    }

    fn encode_parts(p: &PayloadParts) -> Vec<u8> {
        encode_bas_payload(
            p.0,
            &Digest(p.1),
            ShardId(p.2),
            PartyId(p.3),
            Epoch(p.4),
            &p.5,
        )
    }

    proptest! {
        #[test]
        fn bas_payload_round_trips(p in arb_payload()) {
            let d = decode_bas_payload(&encode_parts(&p)).unwrap();
            prop_assert_eq!((d.seq, d.digest, d.shard, d.primary, d.epoch, d.orphan_refs),
                (p.0, Digest(p.1), ShardId(p.2), PartyId(p.3), Epoch(p.4), p.5));
        }

        #[test]
        fn bas_payload_is_injective(a in arb_payload(), b in arb_payload()) {
            prop_assume!(a != b);
            prop_assert_ne!(encode_parts(&a), encode_parts(&b));
        }
    }
}
