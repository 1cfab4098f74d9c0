//! Block assembly.
//!
//! An assembler takes quorum-signed headers from its consensus node, fetches
//! every referenced batch by digest from the batchers of the right shard,
//! and appends blocks strictly in header order. Batches are persisted in a
//! [`BatchStore`] before the block that references them is indexed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::crypto::{self, PublicKey};
use crate::model::{
    Batch, BatchKey, Block, BlockHeader, Digest, FaultModel, PartyId, ShardId, Timestamp,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeaderRejection {
    InsufficientQuorum { have: usize, need: usize },
    BadSignature(PartyId),
    DuplicateSigner(PartyId),
    UnknownSigner(PartyId),
    ChainBreak,
    BadSeq { expected: u64, got: u64 },
}

impl fmt::Display for HeaderRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeaderRejection::InsufficientQuorum { have, need } => {
                write!(f, "{have} signatures, need {need}")
            }
            HeaderRejection::BadSignature(p) => write!(f, "invalid signature from party {p}"),
            HeaderRejection::DuplicateSigner(p) => write!(f, "party {p} signed twice"),
            HeaderRejection::UnknownSigner(p) => write!(f, "unknown signer {p}"),
            HeaderRejection::ChainBreak => f.write_str("previous header hash mismatch"),
            HeaderRejection::BadSeq { expected, got } => {
                write!(f, "block sequence {got}, expected {expected}")
            }
        }
    }
}

impl core::error::Error for HeaderRejection {}

/// Checks position, chain pointer and quorum signatures. Any invalid
/// signature rejects the header, even if a quorum of valid ones remains.
pub fn verify_header(
    header: &BlockHeader,
    keys: &[PublicKey],
    faults: &FaultModel,
    expected_seq: u64,
    prev_hash: Digest,
) -> Result<(), HeaderRejection> {
    if header.block_seq != expected_seq {
        return Err(HeaderRejection::BadSeq {
            expected: expected_seq,
            got: header.block_seq,
        });
    }
    if header.prev_header_hash != prev_hash {
        return Err(HeaderRejection::ChainBreak);
    }
    let msg = header.signing_bytes();
    let mut seen = BTreeSet::new();
    for (signer, sig) in &header.quorum_sigs {
        let key = keys
            .get(signer.index())
            .ok_or(HeaderRejection::UnknownSigner(*signer))?;
        if !seen.insert(*signer) {
            return Err(HeaderRejection::DuplicateSigner(*signer));
        }
        if !crypto::verify(key, &msg, sig) {
            return Err(HeaderRejection::BadSignature(*signer));
        }
    }
    let need = faults.quorum();
    if seen.len() < need {
        return Err(HeaderRejection::InsufficientQuorum {
            have: seen.len(),
            need,
        });
    }
    Ok(())
}

/// Content-addressed batch storage.
pub trait BatchStore {
    fn put(&mut self, batch: Arc<Batch>);
    fn get(&self, digest: &Digest) -> Option<Arc<Batch>>;
}

#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    batches: BTreeMap<Digest, Arc<Batch>>,
}

impl MemoryStore {
    pub fn new() -> MemoryStore {
        MemoryStore::default()
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

impl BatchStore for MemoryStore {
    fn put(&mut self, batch: Arc<Batch>) {
        self.batches.insert(batch.digest(), batch);
    }

    fn get(&self, digest: &Digest) -> Option<Arc<Batch>> {
        self.batches.get(digest).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchRequest {
    pub req_id: u64,
    pub digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    pub req_id: u64,
    pub batch: Option<Arc<Batch>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssemblerAction {
    /// Ask the batcher of `shard` at party `to` for a batch.
    Fetch {
        to: PartyId,
        shard: ShardId,
        request: FetchRequest,
    },
    Appended(u64),
    Rejected {
        block_seq: u64,
        reason: HeaderRejection,
    },
}

#[derive(Debug, Clone)]
pub struct AssemblerConfig {
    pub party: PartyId,
    pub faults: FaultModel,
    pub fetch_timeout_ms: u64,
}

#[derive(Debug, Clone)]
struct Missing {
    index: usize,
    attempt: usize,
    req_id: u64,
    deadline: Timestamp,
}

#[derive(Debug)]
struct InProgress {
    header: BlockHeader,
    batches: Vec<Option<Arc<Batch>>>,
    missing: Vec<Missing>,
}

#[derive(Debug)]
pub struct Assembler<S: BatchStore = MemoryStore> {
    cfg: AssemblerConfig,
    keys: Arc<Vec<PublicKey>>,
    store: S,
    buffered: BTreeMap<u64, BlockHeader>,
    current: Option<InProgress>,
    next_seq: u64,
    prev_hash: Digest,
    next_req: u64,
    ledger: Vec<Block>,
    fetches: u64,
}

impl<S: BatchStore> Assembler<S> {
    pub fn new(cfg: AssemblerConfig, keys: Arc<Vec<PublicKey>>, store: S) -> Assembler<S> {
        Assembler {
            cfg,
            keys,
            store,
            buffered: BTreeMap::new(),
            current: None,
            next_seq: 0,
            prev_hash: Digest::ZERO,
            next_req: 0,
            ledger: Vec::new(),
            fetches: 0,
        }
    }

    pub fn ledger(&self) -> &[Block] {
        &self.ledger
    }

    pub fn height(&self) -> u64 {
        self.next_seq
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn fetches_sent(&self) -> u64 {
        self.fetches
    }

    /// Header waiting for batches, if any.
    pub fn waiting_on(&self) -> Option<u64> {
        self.current.as_ref().map(|c| c.header.block_seq)
    }

    pub fn next_deadline(&self) -> Option<Timestamp> {
        self.current
            .as_ref()
            .and_then(|c| c.missing.iter().map(|m| m.deadline).min())
    }

    pub fn on_header(
        &mut self,
        header: BlockHeader,
        now: Timestamp,
        out: &mut Vec<AssemblerAction>,
    ) {
        if header.block_seq < self.next_seq || self.waiting_on() == Some(header.block_seq) {
            return;
        }
        self.buffered.entry(header.block_seq).or_insert(header);
        self.advance(now, out);
    }

    pub fn on_fetch_response(
        &mut self,
        _from: PartyId,
        resp: FetchResponse,
        now: Timestamp,
        out: &mut Vec<AssemblerAction>,
    ) {
        let Some(cur) = self.current.as_mut() else {
            return;
        };
        let Some(pos) = cur.missing.iter().position(|m| m.req_id == resp.req_id) else {
            return;
        };
        let idx = cur.missing[pos].index;
        let want = cur.header.batch_keys[idx];
        match resp.batch {
            Some(b) if b.key() == want => {
                cur.batches[idx] = Some(b);
                cur.missing.swap_remove(pos);
            }
            _ => {
                let mut m = cur.missing.swap_remove(pos);
                m.attempt += 1;
                self.send_fetch(m, want, now, out);
            }
        }
        self.advance(now, out);
    }

    pub fn on_timer(&mut self, now: Timestamp, out: &mut Vec<AssemblerAction>) {
        let Some(cur) = self.current.as_mut() else {
            return;
        };
        let (due, keep): (Vec<Missing>, Vec<Missing>) =
            cur.missing.drain(..).partition(|m| m.deadline <= now);
        cur.missing = keep;
        for mut m in due {
            let want = self
                .current
                .as_ref()
                .expect("in progress")
                .header
                .batch_keys[m.index];
            m.attempt += 1;
            self.send_fetch(m, want, now, out);
        }
    }

    fn target(&self, attempt: usize) -> PartyId {
        let n = self.cfg.faults.n();
        PartyId(((self.cfg.party.index() + attempt) % n) as u32)
    }

    fn send_fetch(
        &mut self,
        mut m: Missing,
        key: BatchKey,
        now: Timestamp,
        out: &mut Vec<AssemblerAction>,
    ) {
        m.req_id = self.next_req;
        self.next_req += 1;
        m.deadline = now.plus_ms(self.cfg.fetch_timeout_ms);
        self.fetches += 1;
        out.push(AssemblerAction::Fetch {
            to: self.target(m.attempt),
            shard: key.shard,
            request: FetchRequest {
                req_id: m.req_id,
                digest: key.digest,
            },
        });
        if let Some(cur) = self.current.as_mut() {
            cur.missing.push(m);
        }
    }

    fn advance(&mut self, now: Timestamp, out: &mut Vec<AssemblerAction>) {
        loop {
            if let Some(cur) = &self.current {
                if !cur.missing.is_empty() {
                    return;
                }
                let cur = self.current.take().expect("in progress");
                self.append(cur, out);
                continue;
            }
            let Some(header) = self.buffered.remove(&self.next_seq) else {
                return;
            };
            if let Err(reason) = verify_header(
                &header,
                &self.keys,
                &self.cfg.faults,
                self.next_seq,
                self.prev_hash,
            ) {
                out.push(AssemblerAction::Rejected {
                    block_seq: header.block_seq,
                    reason,
                });
                return;
            }
            self.start(header, now, out);
        }
    }

    fn start(&mut self, header: BlockHeader, now: Timestamp, out: &mut Vec<AssemblerAction>) {
        let batches: Vec<Option<Arc<Batch>>> = header
            .batch_keys
            .iter()
            .map(|k| self.store.get(&k.digest).filter(|b| b.key() == *k))
            .collect();
        let want: Vec<(usize, BatchKey)> = batches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_none())
            .map(|(i, _)| (i, header.batch_keys[i]))
            .collect();
        self.current = Some(InProgress {
            header,
            batches,
            missing: Vec::new(),
        });
        for (index, key) in want {
            let m = Missing {
                index,
                attempt: 0,
                req_id: 0,
                deadline: now,
            };
            self.send_fetch(m, key, now, out);
        }
    }

    fn append(&mut self, cur: InProgress, out: &mut Vec<AssemblerAction>) {
        let mut batches = Vec::with_capacity(cur.batches.len());
        for b in cur.batches {
            let b = b.expect("all batches present");
            self.store.put(b.clone());
            batches.push(Arc::unwrap_or_clone(b));
        }
        let seq = cur.header.block_seq;
        self.prev_hash = cur.header.hash();
        self.next_seq = seq + 1;
        self.ledger.push(Block {
            header: cur.header,
            batches,
        });
        out.push(AssemblerAction::Appended(seq));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, KeyPair, Scheme, Signature};
    use crate::model::{ClientId, Term, Transaction};
    use alloc::vec;

    fn keys(n: usize) -> Vec<KeyPair> {
        (0..n)
            .map(|i| keygen(&[i as u8 + 7; 32], Scheme::TestMac))
            .collect()
    }

    fn batch(seq: u64, shard: u32) -> Arc<Batch> {
        let k = keygen(&[1; 32], Scheme::TestMac);
        Arc::new(Batch {
            shard: ShardId(shard),
            seq,
            term: Term(0),
            primary: PartyId(0),
            txs: vec![Transaction::new_signed(
                ClientId(1),
                vec![seq as u8, shard as u8],
                &k,
            )],
        })
    }

    fn signed(
        seq: u64,
        prev: Digest,
        batches: &[Arc<Batch>],
        signers: &[usize],
        ks: &[KeyPair],
    ) -> BlockHeader {
        let mut h = BlockHeader::unsigned(seq, prev, batches.iter().map(|b| b.key()).collect());
        let msg = h.signing_bytes();
        h.quorum_sigs = signers
            .iter()
            .map(|&i| (PartyId(i as u32), crypto::sign(&ks[i], &msg)))
            .collect();
        h
    }

    fn assembler(ks: &[KeyPair]) -> Assembler {
        let public = Arc::new(ks.iter().map(|k| k.public.clone()).collect());
        Assembler::new(
            AssemblerConfig {
                party: PartyId(1),
                faults: FaultModel::new(4, 1).unwrap(),
                fetch_timeout_ms: 100,
            },
            public,
            MemoryStore::new(),
        )
    }

    fn fetches(out: &[AssemblerAction]) -> Vec<(PartyId, FetchRequest)> {
        out.iter()
            .filter_map(|a| match a {
                AssemblerAction::Fetch { to, request, .. } => Some((*to, request.clone())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn header_verification() {
        let ks = keys(4);
        let public: Vec<_> = ks.iter().map(|k| k.public.clone()).collect();
        let fm = FaultModel::new(4, 1).unwrap();
        let b = [batch(0, 0)];
        let ok = signed(0, Digest::ZERO, &b, &[0, 1, 2], &ks);
        assert_eq!(verify_header(&ok, &public, &fm, 0, Digest::ZERO), Ok(()));
        assert_eq!(
            verify_header(&ok, &public, &fm, 1, Digest::ZERO),
            Err(HeaderRejection::BadSeq {
                expected: 1,
                got: 0
            })
        );
        assert_eq!(
            verify_header(&ok, &public, &fm, 0, Digest([1; 32])),
            Err(HeaderRejection::ChainBreak)
        );
        let short = signed(0, Digest::ZERO, &b, &[0, 1], &ks);
        assert_eq!(
            verify_header(&short, &public, &fm, 0, Digest::ZERO),
            Err(HeaderRejection::InsufficientQuorum { have: 2, need: 3 })
        );
        let dup = signed(0, Digest::ZERO, &b, &[0, 1, 1], &ks);
        assert_eq!(
            verify_header(&dup, &public, &fm, 0, Digest::ZERO),
            Err(HeaderRejection::DuplicateSigner(PartyId(1)))
        );
        let mut bad = signed(0, Digest::ZERO, &b, &[0, 1, 2, 3], &ks);
        bad.quorum_sigs[3].1 = Signature::garbage(Scheme::TestMac, 9);
        assert_eq!(
            verify_header(&bad, &public, &fm, 0, Digest::ZERO),
            Err(HeaderRejection::BadSignature(PartyId(3)))
        );
    }

    #[test]
    fn fetches_locally_first_and_appends() {
        let ks = keys(4);
        let mut a = assembler(&ks);
        let b = [batch(0, 0), batch(0, 1)];
        let mut out = Vec::new();
        a.on_header(
            signed(0, Digest::ZERO, &b, &[0, 1, 2], &ks),
            Timestamp(0),
            &mut out,
        );
        let f = fetches(&out);
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|(to, _)| *to == PartyId(1)));
        out.clear();
        for (i, (_, req)) in f.iter().enumerate() {
            let batch = b.iter().find(|x| x.digest() == req.digest).cloned();
            assert!(batch.is_some());
            a.on_fetch_response(
                PartyId(1),
                FetchResponse {
                    req_id: req.req_id,
                    batch,
                },
                Timestamp(5),
                &mut out,
            );
            assert_eq!(a.height(), i as u64);
        }
        assert_eq!(out, vec![AssemblerAction::Appended(0)]);
        assert_eq!(a.ledger()[0].batches.len(), 2);
        assert_eq!(a.store().len(), 2);
    }

    #[test]
    fn not_found_and_timeout_rotate_targets() {
        let ks = keys(4);
        let mut a = assembler(&ks);
        let b = [batch(0, 0)];
        let mut out = Vec::new();
        a.on_header(
            signed(0, Digest::ZERO, &b, &[0, 1, 2], &ks),
            Timestamp(0),
            &mut out,
        );
        let (_, req) = fetches(&out).remove(0);
        out.clear();
        a.on_fetch_response(
            PartyId(1),
            FetchResponse {
                req_id: req.req_id,
                batch: None,
            },
            Timestamp(1),
            &mut out,
        );
        let (to, req2) = fetches(&out).remove(0);
        assert_eq!(to, PartyId(2));
        out.clear();
        assert_eq!(a.next_deadline(), Some(Timestamp(101)));
        a.on_timer(Timestamp(101), &mut out);
        let (to, req3) = fetches(&out).remove(0);
        assert_eq!(to, PartyId(3));
        out.clear();
        a.on_fetch_response(
            PartyId(2),
            FetchResponse {
                req_id: req2.req_id,
                batch: Some(b[0].clone()),
            },
            Timestamp(102),
            &mut out,
        );
        assert_eq!(a.height(), 0);
        let wrong = batch(5, 0);
        a.on_fetch_response(
            PartyId(3),
            FetchResponse {
                req_id: req3.req_id,
                batch: Some(wrong),
            },
            Timestamp(103),
            &mut out,
        );
        let (to, req4) = fetches(&out).remove(0);
        assert_eq!(to, PartyId(0));
        a.on_fetch_response(
            PartyId(0),
            FetchResponse {
                req_id: req4.req_id,
                batch: Some(b[0].clone()),
            },
            Timestamp(104),
            &mut out,
        );
        assert_eq!(a.height(), 1);
    }

    #[test]
    fn out_of_order_headers_wait() {
        let ks = keys(4);
        let mut a = assembler(&ks);
        let b0 = [batch(0, 0)];
        let b1 = [batch(1, 0)];
        let h0 = signed(0, Digest::ZERO, &b0, &[0, 1, 2], &ks);
        let h1 = signed(1, h0.hash(), &b1, &[1, 2, 3], &ks);
        let mut out = Vec::new();
        a.on_header(h1, Timestamp(0), &mut out);
        assert!(out.is_empty());
        a.on_header(h0, Timestamp(0), &mut out);
        for _ in 0..2 {
            let (_, req) = fetches(&out).pop().unwrap();
            out.clear();
            let batch = [&b0[0], &b1[0]]
                .into_iter()
                .find(|x| x.digest() == req.digest)
                .cloned();
            a.on_fetch_response(
                PartyId(1),
                FetchResponse {
                    req_id: req.req_id,
                    batch,
                },
                Timestamp(1),
                &mut out,
            );
        }
        assert_eq!(a.height(), 2);
        assert_eq!(
            a.ledger()[1].header.prev_header_hash,
            a.ledger()[0].header.hash()
        );
    }

    #[test]
    fn invalid_header_is_rejected_and_valid_copy_accepted() {
        let ks = keys(4);
        let mut a = assembler(&ks);
        let b = [batch(0, 0)];
        let mut out = Vec::new();
        a.on_header(
            signed(0, Digest::ZERO, &b, &[0, 1], &ks),
            Timestamp(0),
            &mut out,
        );
        assert!(matches!(
            out[0],
            AssemblerAction::Rejected { block_seq: 0, .. }
        ));
        out.clear();
        a.on_header(
            signed(0, Digest::ZERO, &b, &[0, 1, 3], &ks),
            Timestamp(0),
            &mut out,
        );
        assert_eq!(fetches(&out).len(), 1);
    }
}
