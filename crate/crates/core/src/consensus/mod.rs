//! Consensus nodes.
//!
//! A consensus node screens attestation shares and complaints, hands the
//! survivors to a [`TotalOrderBroadcast`], and processes the ordered rounds
//! deterministically: it extracts `F+1` thresholds, tracks orphans and their
//! reference votes, counts complaints into term changes, and builds one
//! hash-chained header per round that produced thresholds. Header signatures
//! are exchanged between nodes and a header is published to the local
//! assembler once a quorum of them is known.

mod order;
mod threshold;

pub use order::{Round, Sequencer, TotalOrderBroadcast};
pub use threshold::{
    process_round, process_round_with, purge_orphans, ref_is_valid, OrphanVotes, Threshold,
};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::crypto::{self, KeyPair, PublicKey, Signature};
use crate::encoding::Encoder;
use crate::model::{
    BatchAttestationShare, BatchKey, BlockHeader, ComplaintVote, Digest, Epoch, FaultModel,
    PartyId, ShardId, Term, Timestamp,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsensusEvent {
    Bas(BatchAttestationShare),
    Complaint(ComplaintVote),
}

impl ConsensusEvent {
    pub fn signer(&self) -> PartyId {
        match self {
            ConsensusEvent::Bas(b) => b.signer,
            ConsensusEvent::Complaint(c) => c.signer,
        }
    }

    /// Digest over the signed content, signer and signature.
    pub fn id(&self) -> Digest {
        let mut e = Encoder::new();
        match self {
            ConsensusEvent::Bas(b) => {
                e.raw(&b.payload())
                    .u64(b.signer.0 as u64)
                    .signature(&b.signature);
            }
            ConsensusEvent::Complaint(c) => {
                e.raw(&crate::encoding::encode_complaint_payload(c.term, c.shard))
                    .u64(c.signer.0 as u64)
                    .signature(&c.signature);
            }
        }
        Digest::of(&[&e.finish()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropReason {
    BadSignature,
    UnknownSigner,
    UnknownShard,
    StaleEpoch,
    FutureEpoch,
    Duplicate,
    StaleTerm,
    FutureTerm,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::BadSignature => "bad_signature",
            DropReason::UnknownSigner => "unknown_signer",
            DropReason::UnknownShard => "unknown_shard",
            DropReason::StaleEpoch => "stale_epoch",
            DropReason::FutureEpoch => "future_epoch",
            DropReason::Duplicate => "duplicate",
            DropReason::StaleTerm => "stale_term",
            DropReason::FutureTerm => "future_term",
        })
    }
}

/// Consensus output relevant to batchers, one per ordered round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderedUpdate {
    pub round: u64,
    pub thresholds: Vec<BatchKey>,
    /// Keys that gained a pending share after having been thresholded.
    pub orphaned: Vec<BatchKey>,
    pub purged: Vec<BatchKey>,
    pub term_changes: Vec<(ShardId, Term)>,
}

/// One node's signature over the header at `block_seq`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderShare {
    pub block_seq: u64,
    pub header_hash: Digest,
    pub signer: PartyId,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Evidence {
    /// Two batch keys for one `(shard, seq, primary)` with different digests.
    Equivocation {
        first: BatchKey,
        second: BatchKey,
    },
    /// A header share for a different header than the one built locally.
    ConflictingShare {
        signer: PartyId,
        block_seq: u64,
    },
    InvalidShare {
        signer: PartyId,
        block_seq: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsensusAction {
    /// Submit to the total-order primitive.
    Order(ConsensusEvent),
    /// Send to every other consensus node.
    Share(HeaderShare),
    /// Quorum-signed header for the local assembler.
    Publish(BlockHeader),
    /// For the local batchers.
    Update(OrderedUpdate),
    Evidence(Evidence),
}

#[derive(Debug, Clone)]
pub struct ConsensusConfig {
    pub party: PartyId,
    pub faults: FaultModel,
    pub shard_count: u32,
    pub epoch_length_ms: u64,
    /// Epochs a share stays acceptable and a dedup entry is retained.
    pub epoch_window: u64,
}

impl ConsensusConfig {
    pub fn new(party: PartyId, faults: FaultModel, shard_count: u32) -> ConsensusConfig {
        ConsensusConfig {
            party,
            faults,
            shard_count,
            epoch_length_ms: 10_000,
            epoch_window: 2,
        }
    }
}

/// Batch keys that already produced a header, with the epoch of insertion.
#[derive(Debug, Clone, Default)]
pub struct DedupDb {
    entries: BTreeMap<BatchKey, Epoch>,
    by_epoch: BTreeMap<Epoch, Vec<BatchKey>>,
}

impl DedupDb {
    pub fn contains(&self, key: &BatchKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn insert(&mut self, key: BatchKey, epoch: Epoch) {
        if self.entries.insert(key, epoch).is_none() {
            self.by_epoch.entry(epoch).or_default().push(key);
        }
    }

    /// Removes entries with `inserted + window < current`.
    pub fn evict(&mut self, current: Epoch, window: u64) -> Vec<BatchKey> {
        let mut out = Vec::new();
        while let Some(entry) = self.by_epoch.first_entry() {
            if entry.key().0 + window >= current.0 {
                break;
            }
            for k in entry.remove() {
                self.entries.remove(&k);
                out.push(k);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
struct HeaderSlot {
    header: BlockHeader,
    hash: Digest,
    sigs: BTreeMap<PartyId, Signature>,
    published: bool,
}

/// Published headers kept around to detect conflicting late shares.
const RETAINED_HEADERS: u64 = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConsensusStats {
    pub rounds: u64,
    pub headers_built: u64,
    pub headers_published: u64,
    pub dropped_pre_order: u64,
    pub dropped_post_order: u64,
    pub orphans: u64,
    pub purged: u64,
}

#[derive(Debug)]
pub struct ConsensusNode {
    cfg: ConsensusConfig,
    key: KeyPair,
    keys: Arc<Vec<PublicKey>>,
    pending: Vec<BatchAttestationShare>,
    pending_index: BTreeSet<(PartyId, BatchKey)>,
    dedup: DedupDb,
    votes: OrphanVotes,
    terms: Vec<Term>,
    complaints: BTreeMap<(ShardId, Term), BTreeSet<PartyId>>,
    positions: BTreeMap<(ShardId, u64, PartyId), Digest>,
    rounds: BTreeMap<u64, Round>,
    next_round: u64,
    next_block_seq: u64,
    prev_hash: Digest,
    slots: BTreeMap<u64, HeaderSlot>,
    early_shares: BTreeMap<u64, Vec<HeaderShare>>,
    stats: ConsensusStats,
}

impl ConsensusNode {
    pub fn new(cfg: ConsensusConfig, key: KeyPair, keys: Arc<Vec<PublicKey>>) -> ConsensusNode {
        let shards = cfg.shard_count as usize;
        ConsensusNode {
            cfg,
            key,
            keys,
            pending: Vec::new(),
            pending_index: BTreeSet::new(),
            dedup: DedupDb::default(),
            votes: OrphanVotes::new(),
            terms: alloc::vec![Term(0); shards],
            complaints: BTreeMap::new(),
            positions: BTreeMap::new(),
            rounds: BTreeMap::new(),
            next_round: 0,
            next_block_seq: 0,
            prev_hash: Digest::ZERO,
            slots: BTreeMap::new(),
            early_shares: BTreeMap::new(),
            stats: ConsensusStats::default(),
        }
    }

    pub fn config(&self) -> &ConsensusConfig {
        &self.cfg
    }

    pub fn pending(&self) -> &[BatchAttestationShare] {
        &self.pending
    }

    pub fn dedup(&self) -> &DedupDb {
        &self.dedup
    }

    pub fn term(&self, shard: ShardId) -> Term {
        self.terms[shard.index()]
    }

    pub fn next_block_seq(&self) -> u64 {
        self.next_block_seq
    }

    pub fn stats(&self) -> ConsensusStats {
        self.stats
    }

    fn signer_key(&self, p: PartyId) -> Option<&PublicKey> {
        self.keys.get(p.index())
    }

    fn epoch_check(&self, epoch: Epoch, current: Epoch) -> Result<(), DropReason> {
        let w = self.cfg.epoch_window;
        if epoch.0 + w < current.0 {
            Err(DropReason::StaleEpoch)
        } else if epoch.0 > current.0 + w {
            Err(DropReason::FutureEpoch)
        } else {
            Ok(())
        }
    }

    fn check_signature(&self, event: &ConsensusEvent) -> Result<(), DropReason> {
        let key = self
            .signer_key(event.signer())
            .ok_or(DropReason::UnknownSigner)?;
        let (shard, ok) = match event {
            ConsensusEvent::Bas(b) => (b.shard, b.verify(key)),
            ConsensusEvent::Complaint(c) => (c.shard, c.verify(key)),
        };
        if shard.0 >= self.cfg.shard_count {
            return Err(DropReason::UnknownShard);
        }
        if !ok {
            return Err(DropReason::BadSignature);
        }
        Ok(())
    }

    /// Screening before an event is submitted for ordering.
    pub fn filter_event(
        &self,
        event: &ConsensusEvent,
        local_epoch: Epoch,
    ) -> Result<(), DropReason> {
        self.check_signature(event)?;
        match event {
            ConsensusEvent::Bas(b) => {
                self.epoch_check(b.epoch, local_epoch)?;
                let key = b.key();
                if self.dedup.contains(&key) || self.pending_index.contains(&(b.signer, key)) {
                    return Err(DropReason::Duplicate);
                }
            }
            ConsensusEvent::Complaint(c) => {
                if c.term < self.term(c.shard) {
                    return Err(DropReason::StaleTerm);
                }
            }
        }
        Ok(())
    }

    /// Entry point for shares and complaints sent by batchers.
    pub fn on_submission(
        &mut self,
        event: ConsensusEvent,
        now: Timestamp,
        out: &mut Vec<ConsensusAction>,
    ) -> Result<(), DropReason> {
        match self.filter_event(&event, now.epoch(self.cfg.epoch_length_ms)) {
            Ok(()) => {
                out.push(ConsensusAction::Order(event));
                Ok(())
            }
            Err(e) => {
                self.stats.dropped_pre_order += 1;
                Err(e)
            }
        }
    }

    /// Rounds may arrive out of order; they are processed strictly in order.
    pub fn on_round(&mut self, round: Round, out: &mut Vec<ConsensusAction>) {
        if round.number < self.next_round {
            return;
        }
        self.rounds.insert(round.number, round);
        while let Some(r) = self.rounds.remove(&self.next_round) {
            self.next_round += 1;
            self.process(r, out);
        }
    }

    fn process(&mut self, round: Round, out: &mut Vec<ConsensusAction>) {
        self.stats.rounds += 1;
        let epoch = round.timestamp.epoch(self.cfg.epoch_length_ms);
        let f = self.cfg.faults.f();
        let mut shares = Vec::new();
        let mut complaints = Vec::new();
        for event in round.events {
            if self.check_signature(&event).is_err() {
                self.stats.dropped_post_order += 1;
                continue;
            }
            match event {
                ConsensusEvent::Bas(b) => {
                    let key = b.key();
                    if self.epoch_check(b.epoch, epoch).is_err()
                        || !self.pending_index.insert((b.signer, key))
                    {
                        self.stats.dropped_post_order += 1;
                        continue;
                    }
                    self.note_position(&key, out);
                    shares.push(b);
                }
                ConsensusEvent::Complaint(c) => complaints.push(c),
            }
        }

        let mut orphaned = Vec::new();
        for b in &shares {
            let key = b.key();
            if self.dedup.contains(&key) && !orphaned.contains(&key) {
                orphaned.push(key);
            }
        }
        self.stats.orphans += orphaned.len() as u64;

        for b in &shares {
            let referrer = b.key();
            let term = self.term(b.shard);
            for r in &b.orphan_refs {
                if ref_is_valid(r, &referrer, &self.cfg.faults, term) {
                    self.votes.record(*r, b.signer);
                }
            }
        }

        let pending = core::mem::take(&mut self.pending);
        let dedup = &self.dedup;
        let (rest, thresholds) = process_round_with(pending, shares, f, |k| dedup.contains(k));
        self.pending = rest;
        for t in &thresholds {
            for s in &t.shares {
                self.pending_index.remove(&(s.signer, t.key));
            }
            self.dedup.insert(t.key, epoch);
        }

        let purged = purge_orphans(&mut self.pending, &self.votes, f);
        self.stats.purged += purged.len() as u64;
        self.pending_index.retain(|(_, k)| !purged.contains(k));

        for k in self.dedup.evict(epoch, self.cfg.epoch_window) {
            self.votes.forget(&k);
            self.pending.retain(|b| b.key() != k);
            self.pending_index.retain(|(_, pk)| *pk != k);
        }
        let w = self.cfg.epoch_window;
        let index = &mut self.pending_index;
        self.pending.retain(|b| {
            let live = b.epoch.0 + w >= epoch.0;
            if !live {
                index.remove(&(b.signer, b.key()));
            }
            live
        });

        let mut term_changes = Vec::new();
        for c in complaints {
            let current = self.term(c.shard);
            if c.term != current {
                self.stats.dropped_post_order += 1;
                continue;
            }
            let voters = self.complaints.entry((c.shard, current)).or_default();
            voters.insert(c.signer);
            if voters.len() > f {
                self.complaints.retain(|(s, _), _| *s != c.shard);
                let next = current.next();
                self.terms[c.shard.index()] = next;
                term_changes.push((c.shard, next));
            }
        }

        let keys: Vec<BatchKey> = thresholds.iter().map(|t| t.key).collect();
        if !keys.is_empty() {
            self.build_header(keys.clone(), out);
        }
        out.push(ConsensusAction::Update(OrderedUpdate {
            round: round.number,
            thresholds: keys,
            orphaned,
            purged,
            term_changes,
        }));
    }

    fn note_position(&mut self, key: &BatchKey, out: &mut Vec<ConsensusAction>) {
        let pos = (key.shard, key.seq, key.primary);
        match self.positions.get(&pos) {
            None => {
                self.positions.insert(pos, key.digest);
            }
            Some(d) if *d != key.digest => {
                let first = BatchKey { digest: *d, ..*key };
                out.push(ConsensusAction::Evidence(Evidence::Equivocation {
                    first,
                    second: *key,
                }));
            }
            Some(_) => {}
        }
    }

    fn build_header(&mut self, keys: Vec<BatchKey>, out: &mut Vec<ConsensusAction>) {
        let header = BlockHeader::unsigned(self.next_block_seq, self.prev_hash, keys);
        let hash = header.hash();
        let signature = crypto::sign(&self.key, &header.signing_bytes());
        let seq = header.block_seq;
        self.next_block_seq += 1;
        self.prev_hash = hash;
        self.stats.headers_built += 1;
        let mut sigs = BTreeMap::new();
        sigs.insert(self.cfg.party, signature.clone());
        self.slots.insert(
            seq,
            HeaderSlot {
                header,
                hash,
                sigs,
                published: false,
            },
        );
        let floor = seq.saturating_sub(RETAINED_HEADERS);
        self.slots.retain(|s, _| *s >= floor);
        out.push(ConsensusAction::Share(HeaderShare {
            block_seq: seq,
            header_hash: hash,
            signer: self.cfg.party,
            signature,
        }));
        for share in self.early_shares.remove(&seq).unwrap_or_default() {
            self.add_share(share, out);
        }
        self.try_publish(seq, out);
    }

    pub fn on_share(&mut self, share: HeaderShare, out: &mut Vec<ConsensusAction>) {
        if self.signer_key(share.signer).is_none() {
            return;
        }
        if share.block_seq >= self.next_block_seq {
            self.early_shares
                .entry(share.block_seq)
                .or_default()
                .push(share);
            return;
        }
        let seq = share.block_seq;
        self.add_share(share, out);
        self.try_publish(seq, out);
    }

    fn add_share(&mut self, share: HeaderShare, out: &mut Vec<ConsensusAction>) {
        let Some(slot) = self.slots.get(&share.block_seq) else {
            return;
        };
        if share.header_hash != slot.hash {
            out.push(ConsensusAction::Evidence(Evidence::ConflictingShare {
                signer: share.signer,
                block_seq: share.block_seq,
            }));
            return;
        }
        let key = &self.keys[share.signer.index()];
        if !crypto::verify(key, &slot.header.signing_bytes(), &share.signature) {
            out.push(ConsensusAction::Evidence(Evidence::InvalidShare {
                signer: share.signer,
                block_seq: share.block_seq,
            }));
            return;
        }
        if let Some(slot) = self.slots.get_mut(&share.block_seq) {
            if !slot.published {
                slot.sigs.entry(share.signer).or_insert(share.signature);
            }
        }
    }

    fn try_publish(&mut self, seq: u64, out: &mut Vec<ConsensusAction>) {
        let quorum = self.cfg.faults.quorum();
        let Some(slot) = self.slots.get_mut(&seq) else {
            return;
        };
        if !slot.published && slot.sigs.len() >= quorum {
            slot.published = true;
            let mut header = slot.header.clone();
            header.quorum_sigs = slot.sigs.iter().map(|(p, s)| (*p, s.clone())).collect();
            self.stats.headers_published += 1;
            out.push(ConsensusAction::Publish(header));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, Scheme};
    use alloc::vec;

    struct Net {
        keys: Vec<KeyPair>,
        nodes: Vec<ConsensusNode>,
    }

    fn net(n: usize, f: usize, shards: u32) -> Net {
        let fm = FaultModel::new(n, f).unwrap();
        let keys: Vec<KeyPair> = (0..n)
            .map(|i| keygen(&[i as u8 + 1; 32], Scheme::TestMac))
            .collect();
        let public = Arc::new(keys.iter().map(|k| k.public.clone()).collect::<Vec<_>>());
        let nodes = (0..n)
            .map(|i| {
                ConsensusNode::new(
                    ConsensusConfig::new(PartyId(i as u32), fm, shards),
                    keys[i].clone(),
                    public.clone(),
                )
            })
            .collect();
        Net { keys, nodes }
    }

    fn key(seq: u64, d: u8) -> BatchKey {
        BatchKey {
            seq,
            shard: ShardId(0),
            digest: Digest([d; 32]),
            primary: PartyId(0),
        }
    }

    impl Net {
        fn bas(&self, signer: u32, k: BatchKey, epoch: u64, refs: Vec<BatchKey>) -> ConsensusEvent {
            ConsensusEvent::Bas(BatchAttestationShare::new_signed(
                PartyId(signer),
                k,
                Epoch(epoch),
                refs,
                &self.keys[signer as usize],
            ))
        }

        fn complaint(&self, signer: u32, term: u64) -> ConsensusEvent {
            ConsensusEvent::Complaint(ComplaintVote::new_signed(
                PartyId(signer),
                Term(term),
                ShardId(0),
                &self.keys[signer as usize],
            ))
        }

        /// Delivers one round to every node and exchanges header shares.
        fn round(
            &mut self,
            number: u64,
            at_ms: u64,
            events: Vec<ConsensusEvent>,
        ) -> Vec<Vec<ConsensusAction>> {
            let round = Round {
                number,
                timestamp: Timestamp(at_ms),
                events,
            };
            let mut outs: Vec<Vec<ConsensusAction>> = Vec::new();
            for node in &mut self.nodes {
                let mut out = Vec::new();
                node.on_round(round.clone(), &mut out);
                outs.push(out);
            }
            let shares: Vec<HeaderShare> = outs
                .iter()
                .flatten()
                .filter_map(|a| match a {
                    ConsensusAction::Share(s) => Some(s.clone()),
                    _ => None,
                })
                .collect();
            for (i, node) in self.nodes.iter_mut().enumerate() {
                for s in &shares {
                    if s.signer.index() != i {
                        node.on_share(s.clone(), &mut outs[i]);
                    }
                }
            }
            outs
        }
    }

    fn published(out: &[ConsensusAction]) -> Vec<BlockHeader> {
        out.iter()
            .filter_map(|a| match a {
                ConsensusAction::Publish(h) => Some(h.clone()),
                _ => None,
            })
            .collect()
    }

    fn update(out: &[ConsensusAction]) -> OrderedUpdate {
        out.iter()
            .find_map(|a| match a {
                ConsensusAction::Update(u) => Some(u.clone()),
                _ => None,
            })
            .unwrap()
    }

    #[test]
    fn fresh_share_is_accepted_and_replays_are_not() {
        let mut net = net(4, 1, 1);
        let e = net.bas(1, key(0, 1), 5, vec![]);
        let node = &net.nodes[0];
        assert_eq!(node.filter_event(&e, Epoch(5)), Ok(()));
        assert_eq!(node.filter_event(&e, Epoch(8)), Err(DropReason::StaleEpoch));
        assert_eq!(node.filter_event(&e, Epoch(7)), Ok(()));
        net.round(0, 50_000, vec![e.clone()]);
        assert_eq!(
            net.nodes[0].filter_event(&e, Epoch(5)),
            Err(DropReason::Duplicate)
        );
        let mut forged = e;
        if let ConsensusEvent::Bas(b) = &mut forged {
            b.seq += 1;
        }
        assert_eq!(
            net.nodes[0].filter_event(&forged, Epoch(5)),
            Err(DropReason::BadSignature)
        );
    }

    #[test]
    fn two_batches_in_one_round_share_a_header() {
        let mut net = net(4, 1, 1);
        let events = vec![
            net.bas(0, key(0, 1), 0, vec![]),
            net.bas(1, key(0, 1), 0, vec![]),
            net.bas(0, key(1, 2), 0, vec![]),
            net.bas(2, key(1, 2), 0, vec![]),
        ];
        let outs = net.round(0, 100, events);
        let headers: Vec<_> = outs.iter().map(|o| published(o)).collect();
        for h in &headers {
            assert_eq!(h.len(), 1);
            assert_eq!(h[0].batch_keys, vec![key(0, 1), key(1, 2)]);
            assert_eq!(h[0].quorum_sigs.len(), 3);
            assert_eq!(h[0].hash(), headers[0][0].hash());
        }
    }

    #[test]
    fn empty_round_builds_no_header() {
        let mut net = net(4, 1, 1);
        let e = net.bas(0, key(0, 1), 0, vec![]);
        let outs = net.round(0, 100, vec![e]);
        assert!(published(&outs[0]).is_empty());
        assert_eq!(net.nodes[0].next_block_seq(), 0);
    }

    #[test]
    fn consecutive_headers_chain() {
        let mut net = net(4, 1, 1);
        let r0 = vec![
            net.bas(0, key(0, 1), 0, vec![]),
            net.bas(1, key(0, 1), 0, vec![]),
        ];
        let r1 = vec![
            net.bas(0, key(1, 2), 0, vec![]),
            net.bas(1, key(1, 2), 0, vec![]),
        ];
        let h1 = published(&net.round(0, 100, r0)[0]).remove(0);
        let h2 = published(&net.round(1, 200, r1)[0]).remove(0);
        assert_eq!(h1.prev_header_hash, Digest::ZERO);
        assert_eq!(h2.prev_header_hash, h1.hash());
        assert_eq!(h2.block_seq, 1);
    }

    #[test]
    fn late_share_is_an_orphan_and_references_purge_it() {
        let mut net = net(4, 1, 1);
        let k = key(0, 1);
        let r0 = vec![net.bas(0, k, 0, vec![]), net.bas(1, k, 0, vec![])];
        net.round(0, 100, r0);
        let r1 = vec![net.bas(2, k, 0, vec![])];
        let u = update(&net.round(1, 200, r1)[0]);
        assert_eq!(u.orphaned, vec![k]);
        assert!(u.thresholds.is_empty());
        assert_eq!(net.nodes[0].pending().len(), 1);
        let r2 = vec![net.bas(0, key(1, 2), 0, vec![k])];
        assert!(update(&net.round(2, 300, r2)[0]).purged.is_empty());
        let r3 = vec![net.bas(1, key(1, 2), 0, vec![k])];
        let outs = net.round(3, 400, r3);
        assert_eq!(update(&outs[0]).purged, vec![k]);
        assert!(net.nodes[0].pending().is_empty());
        assert_eq!(published(&outs[0]).len(), 1);
    }

    #[test]
    fn forward_reference_does_not_purge() {
        let mut net = net(4, 1, 1);
        let k = key(5, 1);
        net.round(
            0,
            100,
            vec![net.bas(0, k, 0, vec![]), net.bas(1, k, 0, vec![])],
        );
        net.round(1, 200, vec![net.bas(2, k, 0, vec![])]);
        let r = vec![
            net.bas(0, key(4, 2), 0, vec![k]),
            net.bas(1, key(4, 2), 0, vec![k]),
        ];
        assert!(update(&net.round(2, 300, r)[0]).purged.is_empty());
        assert_eq!(net.nodes[0].pending().len(), 1);
    }

    #[test]
    fn complaints_rotate_on_f_plus_one_distinct_signers() {
        let mut net = net(4, 1, 1);
        let u = update(&net.round(0, 100, vec![net.complaint(1, 0), net.complaint(1, 0)])[0]);
        assert!(u.term_changes.is_empty());
        let u = update(&net.round(1, 200, vec![net.complaint(2, 0)])[0]);
        assert_eq!(u.term_changes, vec![(ShardId(0), Term(1))]);
        assert_eq!(net.nodes[3].term(ShardId(0)), Term(1));
        let u = update(&net.round(2, 300, vec![net.complaint(3, 0)])[0]);
        assert!(u.term_changes.is_empty());
    }

    #[test]
    fn f_complainers_alone_never_rotate() {
        let mut net = net(7, 2, 1);
        for r in 0..20 {
            let events = vec![net.complaint(5, 0), net.complaint(6, 0)];
            let u = update(&net.round(r, 100 * (r + 1), events)[0]);
            assert!(u.term_changes.is_empty());
        }
        assert_eq!(net.nodes[0].term(ShardId(0)), Term(0));
    }

    #[test]
    fn stale_replay_after_eviction_yields_no_second_header() {
        let mut net = net(4, 1, 1);
        let k = key(0, 1);
        let a = net.bas(0, k, 0, vec![]);
        let b = net.bas(1, k, 0, vec![]);
        net.round(0, 100, vec![a.clone(), b.clone()]);
        net.round(1, 40_000, vec![net.bas(0, key(1, 2), 4, vec![])]);
        assert!(!net.nodes[0].dedup().contains(&k));
        let outs = net.round(2, 41_000, vec![a, b]);
        assert!(published(&outs[0]).is_empty());
        assert!(net.nodes[0].pending().iter().all(|p| p.key() != k));
    }

    #[test]
    fn conflicting_keys_are_reported() {
        let mut net = net(4, 1, 1);
        let outs = net.round(
            0,
            100,
            vec![
                net.bas(0, key(0, 1), 0, vec![]),
                net.bas(1, key(0, 2), 0, vec![]),
            ],
        );
        assert!(outs[0]
            .iter()
            .any(|a| matches!(a, ConsensusAction::Evidence(Evidence::Equivocation { .. }))));
    }

    #[test]
    fn conflicting_share_is_evidence() {
        let mut net = net(4, 1, 1);
        net.round(0, 100, vec![net.bas(0, key(0, 1), 0, vec![])]);
        let mut out = Vec::new();
        let other = BlockHeader::unsigned(0, Digest::ZERO, vec![key(0, 9)]);
        let bogus = HeaderShare {
            block_seq: 0,
            header_hash: other.hash(),
            signer: PartyId(3),
            signature: crypto::sign(&net.keys[3], &other.signing_bytes()),
        };
        net.round(1, 200, vec![net.bas(1, key(0, 1), 0, vec![])]);
        net.nodes[0].on_share(bogus, &mut out);
        assert!(matches!(
            out[0],
            ConsensusAction::Evidence(Evidence::ConflictingShare { .. })
        ));
    }
}
