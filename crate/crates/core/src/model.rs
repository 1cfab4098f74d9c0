//! Domain types shared by every node role, plus the fault-tolerance
//! arithmetic (quorum size and attestation threshold).

use alloc::vec::Vec;
use core::fmt;

use crate::crypto::{self, KeyPair, PublicKey, Signature};
use crate::encoding;

macro_rules! id_newtype {
    ($(#[$m:meta])* $name:ident($inner:ty)) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(&self.0, f)
            }
        }
    };
}

id_newtype!(
    /// A consensus participant; one of `N`.
    PartyId(u32)
);
id_newtype!(
    /// A deterministic partition of the transaction space; one of `k`.
    ShardId(u32)
);
id_newtype!(
    /// Per-shard primary epoch. The primary of term `t` is party `t mod N`.
    Term(u64)
);
id_newtype!(
    /// Coarse wall-clock slice stamped into attestations.
    Epoch(u64)
);
id_newtype!(ClientId(u64));

impl PartyId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ShardId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl Term {
    pub fn next(self) -> Term {
        Term(self.0 + 1)
    }
}

/// Milliseconds on the node's clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn plus_ms(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(ms))
    }

    pub fn millis_since(self, earlier: Timestamp) -> u64 {
        self.0.saturating_sub(earlier.0)
    }

    /// `floor(now / epoch_length)`.
    pub fn epoch(self, epoch_length_ms: u64) -> Epoch {
        Epoch(self.0 / epoch_length_ms.max(1))
    }
}

/// A 32-byte collision-resistant digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of(parts: &[&[u8]]) -> Digest {
        Digest(crypto::sha256(parts))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..4] {
            write!(f, "{b:02x}")?;
        }
        f.write_str("..")
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

pub type TxId = Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvalidFaultModel {
    pub n: usize,
    pub f: usize,
}

impl fmt::Display for InvalidFaultModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N >= 3F+1 violated: N={}, F={} requires at least {} parties",
            self.n,
            self.f,
            3 * self.f + 1
        )
    }
}

impl core::error::Error for InvalidFaultModel {}

/// Smallest quorum such that any two quorums intersect in at least `F+1`
/// parties: `ceil((N + F + 1) / 2)`, which is `2F+1` when `N = 3F+1`.
pub fn quorum_size(n: usize, f: usize) -> Result<usize, InvalidFaultModel> {
    if n < 3 * f + 1 {
        return Err(InvalidFaultModel { n, f });
    }
    Ok((n + f + 1).div_ceil(2))
}

/// Number of distinct attestations that guarantee at least one correct holder.
pub const fn bas_threshold(f: usize) -> usize {
    f + 1
}

/// Round-robin primary assignment.
pub fn primary_for(term: Term, n: usize) -> PartyId {
    PartyId((term.0 % n as u64) as u32)
}

/// A validated `(N, F)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultModel {
    n: usize,
    f: usize,
}

impl FaultModel {
    pub fn new(n: usize, f: usize) -> Result<FaultModel, InvalidFaultModel> {
        quorum_size(n, f)?;
        Ok(FaultModel { n, f })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn quorum(&self) -> usize {
        (self.n + self.f + 1).div_ceil(2)
    }

    pub fn threshold(&self) -> usize {
        bas_threshold(self.f)
    }

    pub fn primary(&self, term: Term) -> PartyId {
        primary_for(term, self.n)
    }

    pub fn parties(&self) -> impl Iterator<Item = PartyId> {
        (0..self.n as u32).map(PartyId)
    }

    /// Most recent term `<= current` in which `party` was primary.
    pub fn last_term_as_primary(&self, party: PartyId, current: Term) -> Option<Term> {
        let n = self.n as u64;
        let p = party.0 as u64;
        if p >= n || current.0 < p {
            return None;
        }
        Some(Term(current.0 - (current.0 - p) % n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transaction {
    pub client: ClientId,
    pub payload: Vec<u8>,
    pub signature: Signature,
}

impl Transaction {
    /// Bytes covered by the client signature: `client_id ‖ payload`.
    pub fn signing_bytes(client: ClientId, payload: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + payload.len());
        out.extend_from_slice(&client.0.to_be_bytes());
        out.extend_from_slice(payload);
        out
    }

    pub fn new_signed(client: ClientId, payload: Vec<u8>, key: &KeyPair) -> Transaction {
        let signature = crypto::sign(key, &Self::signing_bytes(client, &payload));
        Transaction {
            client,
            payload,
            signature,
        }
    }

    pub fn id(&self) -> TxId {
        Digest::of(&[&self.client.0.to_be_bytes(), &self.payload])
    }

    pub fn signature_valid(&self, key: &PublicKey) -> bool {
        crypto::verify(
            key,
            &Self::signing_bytes(self.client, &self.payload),
            &self.signature,
        )
    }
}

/// The aggregation key of attestation shares: `(seq, shard, digest, primary)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BatchKey {
    pub seq: u64,
    pub shard: ShardId,
    pub digest: Digest,
    pub primary: PartyId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub shard: ShardId,
    pub seq: u64,
    pub term: Term,
    pub primary: PartyId,
    pub txs: Vec<Transaction>,
}

impl Batch {
    /// SHA-256 over the canonical encoding; covers metadata and tx order.
    pub fn digest(&self) -> Digest {
        Digest::of(&[&encoding::encode_batch(self)])
    }

    pub fn key(&self) -> BatchKey {
        BatchKey {
            seq: self.seq,
            shard: self.shard,
            digest: self.digest(),
            primary: self.primary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchAttestationShare {
    pub signer: PartyId,
    pub seq: u64,
    pub digest: Digest,
    pub shard: ShardId,
    pub primary: PartyId,
    pub epoch: Epoch,
    pub orphan_refs: Vec<BatchKey>,
    pub signature: Signature,
}

impl BatchAttestationShare {
    pub fn new_signed(
        signer: PartyId,
        key: BatchKey,
        epoch: Epoch,
        orphan_refs: Vec<BatchKey>,
        signing_key: &KeyPair,
    ) -> Self {
        let payload = encoding::encode_bas_payload(
            key.seq,
            &key.digest,
            key.shard,
            key.primary,
            epoch,
            &orphan_refs,
        );
        BatchAttestationShare {
            signer,
            seq: key.seq,
            digest: key.digest,
            shard: key.shard,
            primary: key.primary,
            epoch,
            orphan_refs,
            signature: crypto::sign(signing_key, &payload),
        }
    }

    pub fn key(&self) -> BatchKey {
        BatchKey {
            seq: self.seq,
            shard: self.shard,
            digest: self.digest,
            primary: self.primary,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        encoding::encode_bas_payload(
            self.seq,
            &self.digest,
            self.shard,
            self.primary,
            self.epoch,
            &self.orphan_refs,
        )
    }

    pub fn verify(&self, signer_key: &PublicKey) -> bool {
        crypto::verify(signer_key, &self.payload(), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplaintVote {
    pub signer: PartyId,
    pub term: Term,
    pub shard: ShardId,
    pub signature: Signature,
}

impl ComplaintVote {
    pub fn new_signed(signer: PartyId, term: Term, shard: ShardId, key: &KeyPair) -> Self {
        ComplaintVote {
            signer,
            term,
            shard,
            signature: crypto::sign(key, &encoding::encode_complaint_payload(term, shard)),
        }
    }

    pub fn verify(&self, signer_key: &PublicKey) -> bool {
        crypto::verify(
            signer_key,
            &encoding::encode_complaint_payload(self.term, self.shard),
            &self.signature,
        )
    }
}

/// A hash-chained block header. The chain pointer and the header hash cover
/// everything except `quorum_sigs`, so every correct consensus node derives
/// the same hash regardless of which signature subset it collected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub block_seq: u64,
    pub prev_header_hash: Digest,
    pub batch_keys: Vec<BatchKey>,
    pub quorum_sigs: Vec<(PartyId, Signature)>,
}

impl BlockHeader {
    pub fn unsigned(block_seq: u64, prev_header_hash: Digest, batch_keys: Vec<BatchKey>) -> Self {
        BlockHeader {
            block_seq,
            prev_header_hash,
            batch_keys,
            quorum_sigs: Vec::new(),
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        encoding::encode_header_unsigned(self)
    }

    pub fn hash(&self) -> Digest {
        Digest::of(&[&self.signing_bytes()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub batches: Vec<Batch>,
}

impl Block {
    /// Identity of the committed block: header hash plus batch contents.
    /// Two blocks with equal ids are the same block up to the choice of
    /// quorum signature subset.
    pub fn id(&self) -> Digest {
        let mut parts: Vec<[u8; 32]> = Vec::with_capacity(1 + self.batches.len());
        parts.push(self.header.hash().0);
        parts.extend(self.batches.iter().map(|b| b.digest().0));
        let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
        Digest::of(&refs)
    }

    pub fn tx_count(&self) -> usize {
        self.batches.iter().map(|b| b.txs.len()).sum()
    }
}
