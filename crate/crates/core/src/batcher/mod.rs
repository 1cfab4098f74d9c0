//! Per-shard batchers.
//!
//! Each party runs one batcher per shard. The batcher of the shard's current
//! primary bundles transactions into batches; the others pull those batches
//! in ledger order, spot-check them, persist them and attest to them. A
//! secondary that keeps seeing transactions left out of batches forwards
//! them to the primary and, if that does not help, complains. Complaints are
//! ordered by consensus and `F+1` of them rotate the primary.
//!
//! [`Batcher`] is sans-IO: every entry point takes the current time and a
//! buffer into which outbound [`BatcherAction`]s are pushed. After any input
//! the caller should arm a timer for [`Batcher::next_deadline`].

mod pool;
mod sampling;

pub use pool::{InsertOutcome, PrimaryPool, SecondaryPool};
pub use sampling::{
    required_sample_size, sample_verify, sampling_rng, SampleOutcome, SampleSizeError,
};

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::consensus::OrderedUpdate;
use crate::crypto::KeyPair;
use crate::model::{
    Batch, BatchAttestationShare, BatchKey, ComplaintVote, Digest, FaultModel, PartyId, ShardId,
    Term, Timestamp, Transaction, TxId,
};
use crate::router::{validate_transaction, ClientDirectory, DEFAULT_MAX_TX_SIZE};

#[derive(Debug, Clone)]
pub struct BatcherConfig {
    pub party: PartyId,
    pub shard: ShardId,
    pub faults: FaultModel,
    pub max_batch_size: usize,
    pub max_batch_latency_ms: u64,
    /// Minimum spacing between two cuts by the primary.
    pub dispatch_interval_ms: u64,
    pub bucket_period_ms: u64,
    pub t_forward_ms: u64,
    pub t_complain_ms: u64,
    pub epoch_length_ms: u64,
    /// Transactions checked per fetched batch; 0 disables checking.
    pub sample_size: usize,
    pub pool_capacity: usize,
    pub max_orphan_refs: usize,
    pub max_tx_size: usize,
    /// Upper bound on batches returned by one pull response.
    pub max_pull_batches: usize,
    pub seed: u64,
}

impl BatcherConfig {
    pub fn new(party: PartyId, shard: ShardId, faults: FaultModel) -> BatcherConfig {
        BatcherConfig {
            party,
            shard,
            faults,
            max_batch_size: 10_000,
            max_batch_latency_ms: 500,
            dispatch_interval_ms: 0,
            bucket_period_ms: 100,
            t_forward_ms: 2_000,
            t_complain_ms: 2_000,
            epoch_length_ms: 10_000,
            sample_size: 30,
            pool_capacity: 1_000_000,
            max_orphan_refs: 8,
            max_tx_size: DEFAULT_MAX_TX_SIZE,
            max_pull_batches: 16,
            seed: 0,
        }
    }
}

/// Behaviour knobs of a primary; the default methods are the honest protocol.
pub trait PrimaryHooks: Send {
    /// Whether a transaction enters the primary pool, either on arrival or
    /// when carried over at a term change. Dropped arrivals are still
    /// acknowledged.
    fn admit(&mut self, _tx: &Transaction) -> bool {
        true
    }

    /// Final say over the contents of the batch about to be cut at `seq`.
    fn shape(&mut self, _seq: u64, txs: Vec<Transaction>) -> Vec<Transaction> {
        txs
    }

    /// A replacement for `batch` when serving it to `requester`.
    fn serve(&mut self, _requester: PartyId, _batch: &Arc<Batch>) -> Option<Arc<Batch>> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Honest;

impl PrimaryHooks for Honest {}

/// Secondary to primary: "send me batches from my height on".
///
/// `checkpoints` lists `(seq, digest)` pairs of the requester's ledger at
/// exponentially spaced positions below its height, newest first, so the
/// primary can locate the longest common prefix in one round trip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PullRequest {
    pub req_id: u64,
    pub term: Term,
    pub height: u64,
    pub checkpoints: Vec<(u64, Digest)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PullResponse {
    pub req_id: u64,
    pub term: Term,
    pub batches: Vec<Arc<Batch>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatcherAction {
    Pull {
        to: PartyId,
        request: PullRequest,
    },
    Serve {
        to: PartyId,
        response: PullResponse,
    },
    /// To be sent to every consensus node.
    SubmitBas(BatchAttestationShare),
    Complain(ComplaintVote),
    /// Transactions re-sent to the router of the primary's party.
    Forward {
        to: PartyId,
        txs: Vec<Transaction>,
    },
    /// Durably persisted; offered to the local assembler.
    Persisted(Arc<Batch>),
}

#[derive(Debug)]
struct PrimaryState {
    pool: PrimaryPool,
    pending_since: Option<Timestamp>,
    last_cut: Option<Timestamp>,
    /// Long-polling pull requests: requester to `(req_id, start seq)`.
    parked: BTreeMap<PartyId, (u64, u64)>,
}

#[derive(Debug)]
struct SecondaryState {
    pool: SecondaryPool,
    outstanding: Option<u64>,
    halted: bool,
    complained: bool,
}

#[derive(Debug)]
enum Role {
    Primary(PrimaryState),
    Secondary(SecondaryState),
}

#[derive(Debug, Clone)]
struct Entry {
    batch: Arc<Batch>,
    key: BatchKey,
}

/// Counters for reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatcherStats {
    pub batches_cut: u64,
    pub batches_persisted: u64,
    pub complaints: u64,
    pub forwarded_txs: u64,
    pub rebases: u64,
    pub reproposed_txs: u64,
}

pub struct Batcher {
    cfg: BatcherConfig,
    key: KeyPair,
    clients: Arc<ClientDirectory>,
    hooks: Box<dyn PrimaryHooks>,
    term: Term,
    role: Role,
    ledger: Vec<Entry>,
    store: BTreeMap<Digest, Arc<Batch>>,
    persisted_txs: BTreeMap<TxId, u32>,
    attested: BTreeSet<BatchKey>,
    thresholded: BTreeSet<BatchKey>,
    orphans: BTreeSet<BatchKey>,
    updates: BTreeMap<u64, OrderedUpdate>,
    next_round: u64,
    future_pulls: BTreeMap<PartyId, PullRequest>,
    next_req_id: u64,
    stats: BatcherStats,
}

impl core::fmt::Debug for Batcher {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Batcher")
            .field("party", &self.cfg.party)
            .field("shard", &self.cfg.shard)
            .field("term", &self.term)
            .field("height", &self.ledger.len())
            .finish_non_exhaustive()
    }
}

/// Ledger positions a secondary reports in a pull: `h-1, h-2, h-4, ..., 0`.
pub fn checkpoint_positions(height: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut back = 1u64;
    while back <= height {
        out.push(height - back);
        back = back.saturating_mul(2);
    }
    if height > 0 && out.last() != Some(&0) {
        out.push(0);
    }
    out
}

fn primary_state(cfg: &BatcherConfig) -> PrimaryState {
    PrimaryState {
        pool: PrimaryPool::new(cfg.max_batch_size, cfg.pool_capacity),
        pending_since: None,
        last_cut: None,
        parked: BTreeMap::new(),
    }
}

fn secondary_state(cfg: &BatcherConfig) -> SecondaryState {
    SecondaryState {
        pool: SecondaryPool::new(cfg.pool_capacity),
        outstanding: None,
        halted: false,
        complained: false,
    }
}

impl Batcher {
    pub fn new(
        cfg: BatcherConfig,
        key: KeyPair,
        clients: Arc<ClientDirectory>,
        hooks: Box<dyn PrimaryHooks>,
    ) -> Batcher {
        let term = Term(0);
        let role = if cfg.faults.primary(term) == cfg.party {
            Role::Primary(primary_state(&cfg))
        } else {
            Role::Secondary(secondary_state(&cfg))
        };
        Batcher {
            cfg,
            key,
            clients,
            hooks,
            term,
            role,
            ledger: Vec::new(),
            store: BTreeMap::new(),
            persisted_txs: BTreeMap::new(),
            attested: BTreeSet::new(),
            thresholded: BTreeSet::new(),
            orphans: BTreeSet::new(),
            updates: BTreeMap::new(),
            next_round: 0,
            future_pulls: BTreeMap::new(),
            next_req_id: 0,
            stats: BatcherStats::default(),
        }
    }

    pub fn config(&self) -> &BatcherConfig {
        &self.cfg
    }

    pub fn term(&self) -> Term {
        self.term
    }

    pub fn primary(&self) -> PartyId {
        self.cfg.faults.primary(self.term)
    }

    pub fn is_primary(&self) -> bool {
        matches!(self.role, Role::Primary(_))
    }

    pub fn height(&self) -> u64 {
        self.ledger.len() as u64
    }

    pub fn ledger_keys(&self) -> impl Iterator<Item = &BatchKey> {
        self.ledger.iter().map(|e| &e.key)
    }

    pub fn ledger_batch(&self, seq: u64) -> Option<&Arc<Batch>> {
        self.ledger.get(seq as usize).map(|e| &e.batch)
    }

    pub fn stats(&self) -> BatcherStats {
        self.stats
    }

    pub fn is_halted(&self) -> bool {
        matches!(&self.role, Role::Secondary(s) if s.halted)
    }

    pub fn pool_len(&self) -> usize {
        match &self.role {
            Role::Primary(p) => p.pool.len(),
            Role::Secondary(s) => s.pool.len(),
        }
    }

    pub fn pending_orphan_refs(&self) -> usize {
        self.orphans.len()
    }

    /// Any batch this batcher ever persisted, including rolled-back ones.
    pub fn batch_by_digest(&self, digest: &Digest) -> Option<Arc<Batch>> {
        self.store.get(digest).cloned()
    }

    /// Initial actions; a secondary opens its pull stream.
    pub fn start(&mut self, now: Timestamp, out: &mut Vec<BatcherAction>) {
        self.send_pull(out);
        self.drive(now, out);
    }

    pub fn enqueue(
        &mut self,
        tx: Transaction,
        now: Timestamp,
        out: &mut Vec<BatcherAction>,
    ) -> InsertOutcome {
        let id = tx.id();
        if self.persisted_txs.contains_key(&id) {
            return InsertOutcome::Duplicate;
        }
        let outcome = match &mut self.role {
            Role::Primary(p) => {
                if !self.hooks.admit(&tx) {
                    return InsertOutcome::Accepted;
                }
                let outcome = p.pool.insert(id, tx);
                if outcome == InsertOutcome::Accepted && p.pending_since.is_none() {
                    p.pending_since = Some(now);
                }
                outcome
            }
            Role::Secondary(s) => s.pool.insert(id, tx, now),
        };
        self.drive(now, out);
        outcome
    }

    /// Earliest time at which [`Batcher::on_timer`] has work to do.
    pub fn next_deadline(&self) -> Option<Timestamp> {
        match &self.role {
            Role::Primary(p) => {
                let earliest = p
                    .last_cut
                    .map_or(Timestamp(0), |t| t.plus_ms(self.cfg.dispatch_interval_ms));
                if p.pool.has_full_batch() {
                    Some(earliest)
                } else {
                    let due = p.pending_since?.plus_ms(self.cfg.max_batch_latency_ms);
                    Some(due.max(earliest))
                }
            }
            Role::Secondary(s) => {
                let complaint = if s.complained {
                    None
                } else {
                    s.pool.complaint_deadline(self.cfg.t_complain_ms)
                };
                [
                    s.pool.seal_deadline(self.cfg.bucket_period_ms),
                    s.pool.forward_deadline(self.cfg.t_forward_ms),
                    complaint,
                ]
                .into_iter()
                .flatten()
                .min()
            }
        }
    }

    pub fn on_timer(&mut self, now: Timestamp, out: &mut Vec<BatcherAction>) {
        self.drive(now, out);
    }

    fn drive(&mut self, now: Timestamp, out: &mut Vec<BatcherAction>) {
        if self.is_primary() {
            while self.cut_due(now) {
                self.cut(now, out);
            }
            return;
        }
        let primary = self.primary();
        let cfg = &self.cfg;
        let Role::Secondary(s) = &mut self.role else {
            return;
        };
        if s.pool
            .seal_deadline(cfg.bucket_period_ms)
            .is_some_and(|d| d <= now)
        {
            s.pool.seal(now);
        }
        let txs = s.pool.take_due_forwards(now, cfg.t_forward_ms);
        let complain = !s.complained && s.pool.complaint_due(now, cfg.t_complain_ms);
        if !txs.is_empty() {
            self.stats.forwarded_txs += txs.len() as u64;
            out.push(BatcherAction::Forward { to: primary, txs });
        }
        if complain {
            self.complain(out);
        }
    }

    fn cut_due(&self, now: Timestamp) -> bool {
        let Role::Primary(p) = &self.role else {
            return false;
        };
        if p.last_cut
            .is_some_and(|t| now < t.plus_ms(self.cfg.dispatch_interval_ms))
        {
            return false;
        }
        p.pool.has_full_batch()
            || p.pending_since
                .is_some_and(|t| t.plus_ms(self.cfg.max_batch_latency_ms) <= now)
    }

    fn cut(&mut self, now: Timestamp, out: &mut Vec<BatcherAction>) {
        let seq = self.height();
        let Role::Primary(p) = &mut self.role else {
            return;
        };
        let txs = p.pool.next_batch(Transaction::id).unwrap_or_default();
        p.last_cut = Some(now);
        p.pending_since = (!p.pool.is_empty()).then_some(now);
        let txs = self.hooks.shape(seq, txs);
        if txs.is_empty() {
            return;
        }
        let batch = Arc::new(Batch {
            shard: self.cfg.shard,
            seq,
            term: self.term,
            primary: self.cfg.party,
            txs,
        });
        self.stats.batches_cut += 1;
        self.persist(batch, true, now, out);
        self.serve_parked(out);
    }

    fn persist(
        &mut self,
        batch: Arc<Batch>,
        attest: bool,
        now: Timestamp,
        out: &mut Vec<BatcherAction>,
    ) {
        let key = batch.key();
        for tx in &batch.txs {
            *self.persisted_txs.entry(tx.id()).or_insert(0) += 1;
        }
        self.store.insert(key.digest, batch.clone());
        self.ledger.push(Entry {
            batch: batch.clone(),
            key,
        });
        self.stats.batches_persisted += 1;
        if attest && !self.thresholded.contains(&key) && self.attested.insert(key) {
            let refs = self.take_orphan_refs(&key);
            out.push(BatcherAction::SubmitBas(BatchAttestationShare::new_signed(
                self.cfg.party,
                key,
                now.epoch(self.cfg.epoch_length_ms),
                refs,
                &self.key,
            )));
        }
        out.push(BatcherAction::Persisted(batch));
    }

    /// Orphan references must point to an earlier sequence number or to a
    /// batch of an earlier term, so that references never form cycles.
    fn ref_allowed(&self, orphan: &BatchKey, bas: &BatchKey) -> bool {
        if orphan.shard != bas.shard || orphan == bas {
            return false;
        }
        if orphan.seq < bas.seq {
            return true;
        }
        let fm = &self.cfg.faults;
        match (
            fm.last_term_as_primary(orphan.primary, self.term),
            fm.last_term_as_primary(bas.primary, self.term),
        ) {
            (Some(a), Some(b)) => a < b,
            (None, Some(_)) => true,
            _ => false,
        }
    }

    fn take_orphan_refs(&mut self, bas: &BatchKey) -> Vec<BatchKey> {
        let chosen: Vec<BatchKey> = self
            .orphans
            .iter()
            .filter(|o| self.ref_allowed(o, bas))
            .take(self.cfg.max_orphan_refs)
            .copied()
            .collect();
        for k in &chosen {
            self.orphans.remove(k);
        }
        chosen
    }

    fn complain(&mut self, out: &mut Vec<BatcherAction>) {
        let Role::Secondary(s) = &mut self.role else {
            return;
        };
        if s.complained {
            return;
        }
        s.complained = true;
        self.stats.complaints += 1;
        out.push(BatcherAction::Complain(ComplaintVote::new_signed(
            self.cfg.party,
            self.term,
            self.cfg.shard,
            &self.key,
        )));
    }

    fn send_pull(&mut self, out: &mut Vec<BatcherAction>) {
        let to = self.primary();
        let height = self.height();
        let checkpoints = checkpoint_positions(height)
            .into_iter()
            .map(|s| (s, self.ledger[s as usize].key.digest))
            .collect();
        let req_id = self.next_req_id;
        let term = self.term;
        let Role::Secondary(s) = &mut self.role else {
            return;
        };
        if s.halted {
            return;
        }
        self.next_req_id += 1;
        s.outstanding = Some(req_id);
        out.push(BatcherAction::Pull {
            to,
            request: PullRequest {
                req_id,
                term,
                height,
                checkpoints,
            },
        });
    }

    fn served(&mut self, requester: PartyId, seq: u64) -> Arc<Batch> {
        let batch = &self.ledger[seq as usize].batch;
        self.hooks
            .serve(requester, batch)
            .unwrap_or_else(|| batch.clone())
    }

    fn served_digest(&mut self, requester: PartyId, seq: u64) -> Digest {
        let entry = &self.ledger[seq as usize];
        match self.hooks.serve(requester, &entry.batch) {
            Some(alt) => alt.digest(),
            None => entry.key.digest,
        }
    }

    /// First position at which the requester's ledger may differ from ours.
    fn common_prefix(&mut self, requester: PartyId, req: &PullRequest) -> u64 {
        let height = self.height();
        for &(seq, digest) in &req.checkpoints {
            if seq < height && self.served_digest(requester, seq) == digest {
                return seq + 1;
            }
        }
        0
    }

    pub fn on_pull_request(
        &mut self,
        from: PartyId,
        req: PullRequest,
        now: Timestamp,
        out: &mut Vec<BatcherAction>,
    ) {
        if req.term > self.term {
            self.future_pulls.insert(from, req);
            return;
        }
        if req.term < self.term || !self.is_primary() {
            return;
        }
        let start = self.common_prefix(from, &req);
        if let Role::Primary(p) = &mut self.role {
            p.parked.insert(from, (req.req_id, start));
        }
        self.serve_parked(out);
        self.drive(now, out);
    }

    fn serve_parked(&mut self, out: &mut Vec<BatcherAction>) {
        let height = self.height();
        let ready: Vec<(PartyId, u64, u64)> = match &self.role {
            Role::Primary(p) => p
                .parked
                .iter()
                .filter(|(_, &(_, start))| start < height)
                .map(|(&who, &(req_id, start))| (who, req_id, start))
                .collect(),
            Role::Secondary(_) => return,
        };
        for (who, req_id, start) in ready {
            if let Role::Primary(p) = &mut self.role {
                p.parked.remove(&who);
            }
            let end = height.min(start + self.cfg.max_pull_batches.max(1) as u64);
            let batches = (start..end).map(|s| self.served(who, s)).collect();
            out.push(BatcherAction::Serve {
                to: who,
                response: PullResponse {
                    req_id,
                    term: self.term,
                    batches,
                },
            });
        }
    }

    pub fn on_pull_response(
        &mut self,
        from: PartyId,
        resp: PullResponse,
        now: Timestamp,
        out: &mut Vec<BatcherAction>,
    ) {
        let expected = self.primary();
        let Role::Secondary(s) = &mut self.role else {
            return;
        };
        if from != expected || resp.term != self.term || s.outstanding != Some(resp.req_id) {
            return;
        }
        s.outstanding = None;
        for batch in resp.batches {
            if !self.accept_batch(batch, now, out) {
                break;
            }
        }
        self.send_pull(out);
        self.drive(now, out);
    }

    /// Returns whether later batches of the same response may be processed.
    fn accept_batch(
        &mut self,
        batch: Arc<Batch>,
        now: Timestamp,
        out: &mut Vec<BatcherAction>,
    ) -> bool {
        if self.is_halted() {
            return false;
        }
        let current = batch.term == self.term;
        let fm = self.cfg.faults;
        let well_formed = batch.shard == self.cfg.shard
            && batch.term <= self.term
            && batch.primary == fm.primary(batch.term)
            && !batch.txs.is_empty()
            && batch.txs.len() <= self.cfg.max_batch_size
            && batch.seq <= self.height();
        if !well_formed {
            if current {
                self.halt_and_complain(out);
            }
            return false;
        }
        let seq = batch.seq as usize;
        let digest = batch.digest();
        if seq < self.ledger.len() {
            if self.ledger[seq].key.digest == digest {
                return true;
            }
            // Rolling back a batch of the running term means the primary
            // served two different batches for one position.
            if self.ledger[seq..].iter().any(|e| e.batch.term == self.term) {
                self.halt_and_complain(out);
                return false;
            }
            self.rollback(seq, now);
        }
        if seq > 0 && self.ledger[seq - 1].batch.term > batch.term {
            if current {
                self.halt_and_complain(out);
            }
            return false;
        }
        let mut rng = sampling_rng(self.cfg.seed, self.cfg.party, self.cfg.shard, batch.seq);
        let outcome = sample_verify(
            &batch.txs,
            self.cfg.sample_size,
            &mut rng,
            &self.clients,
            self.cfg.max_tx_size,
        );
        let valid = outcome == SampleOutcome::AllSampledValid;
        if !valid && current {
            self.halt_and_complain(out);
            return false;
        }
        if let Role::Secondary(s) = &mut self.role {
            for tx in &batch.txs {
                s.pool.remove(&tx.id());
            }
        }
        self.persist(batch, valid, now, out);
        true
    }

    fn halt_and_complain(&mut self, out: &mut Vec<BatcherAction>) {
        if let Role::Secondary(s) = &mut self.role {
            s.halted = true;
            s.outstanding = None;
        }
        self.complain(out);
    }

    /// Drops ledger entries from `seq` on. Transactions of entries that never
    /// reached the attestation threshold go back into the pool.
    fn rollback(&mut self, seq: usize, now: Timestamp) {
        self.stats.rebases += 1;
        let dropped: Vec<Entry> = self.ledger.drain(seq..).collect();
        let mut back = Vec::new();
        for e in dropped {
            if self.thresholded.contains(&e.key) {
                continue;
            }
            for tx in &e.batch.txs {
                let id = tx.id();
                if let Some(c) = self.persisted_txs.get_mut(&id) {
                    *c -= 1;
                    if *c == 0 {
                        self.persisted_txs.remove(&id);
                        back.push(tx.clone());
                    }
                }
            }
        }
        if let Role::Secondary(s) = &mut self.role {
            s.pool.insert_sealed(back, now);
        }
    }

    /// Applies consensus output; updates are buffered and applied in round
    /// order.
    pub fn on_ordered_update(
        &mut self,
        update: OrderedUpdate,
        now: Timestamp,
        out: &mut Vec<BatcherAction>,
    ) {
        if update.round < self.next_round {
            return;
        }
        self.updates.insert(update.round, update);
        while let Some(u) = self.updates.remove(&self.next_round) {
            self.next_round += 1;
            self.apply_update(u, now, out);
        }
        self.drive(now, out);
    }

    fn apply_update(&mut self, u: OrderedUpdate, now: Timestamp, out: &mut Vec<BatcherAction>) {
        let shard = self.cfg.shard;
        for k in u.thresholds.iter().filter(|k| k.shard == shard) {
            self.thresholded.insert(*k);
        }
        for k in u.orphaned.iter().filter(|k| k.shard == shard) {
            self.orphans.insert(*k);
        }
        for k in &u.purged {
            self.orphans.remove(k);
        }
        for &(s, t) in &u.term_changes {
            if s == shard && t > self.term {
                self.change_term(t, now, out);
            }
        }
    }

    fn change_term(&mut self, term: Term, now: Timestamp, out: &mut Vec<BatcherAction>) {
        self.term = term;
        let leading = self.cfg.faults.primary(term) == self.cfg.party;
        let old = core::mem::replace(&mut self.role, Role::Secondary(secondary_state(&self.cfg)));
        match (old, leading) {
            (Role::Primary(mut p), true) => {
                p.parked.clear();
                p.pending_since = p.pending_since.or((!p.pool.is_empty()).then_some(now));
                self.role = Role::Primary(p);
            }
            (Role::Primary(mut p), false) => {
                let txs = p.pool.drain();
                if let Role::Secondary(s) = &mut self.role {
                    s.pool.insert_sealed(txs, now);
                }
                self.send_pull(out);
            }
            (Role::Secondary(mut s), true) => {
                let mut p = primary_state(&self.cfg);
                let mut carried = self.reproposals();
                carried.retain(|(_, tx)| self.hooks.admit(tx));
                p.pool.insert_front(carried);
                for tx in s.pool.drain() {
                    let id = tx.id();
                    if !self.persisted_txs.contains_key(&id) && self.hooks.admit(&tx) {
                        p.pool.insert(id, tx);
                    }
                }
                if !p.pool.is_empty() {
                    p.pending_since = Some(now);
                }
                self.role = Role::Primary(p);
            }
            (Role::Secondary(mut s), false) => {
                s.pool.restart_timers(now);
                s.halted = false;
                s.complained = false;
                s.outstanding = None;
                self.role = Role::Secondary(s);
                self.send_pull(out);
            }
        }
        let waiting = core::mem::take(&mut self.future_pulls);
        for (from, req) in waiting {
            if req.term >= term {
                self.on_pull_request(from, req, now, out);
            }
        }
    }

    /// Transactions of the ledger suffix that has not been seen to reach the
    /// attestation threshold, re-validated, oldest first.
    fn reproposals(&mut self) -> Vec<(TxId, Transaction)> {
        let start = self
            .ledger
            .iter()
            .rposition(|e| self.thresholded.contains(&e.key))
            .map_or(0, |i| i + 1);
        let mut out = Vec::new();
        for e in &self.ledger[start..] {
            for tx in &e.batch.txs {
                if validate_transaction(tx, &self.clients, self.cfg.max_tx_size).is_ok() {
                    out.push((tx.id(), tx.clone()));
                }
            }
        }
        self.stats.reproposed_txs += out.len() as u64;
        out
    }
}
