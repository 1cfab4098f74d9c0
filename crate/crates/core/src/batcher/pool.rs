//! Memory pools.
//!
//! The primary keeps a bundling pool: an open batch that is atomically moved
//! to a FIFO of full batches when it reaches the size limit, so the next
//! batch is always either the queue head or the open batch. Secondaries keep
//! timestamped buckets; a sealed bucket that stays non-empty is evidence that
//! the primary is not including its transactions.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;
use core::mem;

use crate::model::{Timestamp, Transaction, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Accepted,
    Duplicate,
    /// The pool is at capacity.
    Full,
}

#[derive(Debug, Clone)]
pub struct PrimaryPool {
    max_batch_size: usize,
    capacity: usize,
    pending: Vec<Transaction>,
    full: VecDeque<Vec<Transaction>>,
    index: BTreeSet<TxId>,
    /// Queue-structure operations performed by [`PrimaryPool::next_batch`].
    pub queue_ops: u64,
}

impl PrimaryPool {
    pub fn new(max_batch_size: usize, capacity: usize) -> PrimaryPool {
        PrimaryPool {
            max_batch_size: max_batch_size.max(1),
            capacity,
            pending: Vec::new(),
            full: VecDeque::new(),
            index: BTreeSet::new(),
            queue_ops: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.index.contains(id)
    }

    pub fn has_full_batch(&self) -> bool {
        !self.full.is_empty()
    }

    pub fn full_batches(&self) -> usize {
        self.full.len()
    }

    pub fn insert(&mut self, id: TxId, tx: Transaction) -> InsertOutcome {
        if self.index.contains(&id) {
            return InsertOutcome::Duplicate;
        }
        if self.index.len() >= self.capacity {
            return InsertOutcome::Full;
        }
        self.index.insert(id);
        self.pending.push(tx);
        if self.pending.len() >= self.max_batch_size {
            self.full.push_back(mem::take(&mut self.pending));
        }
        InsertOutcome::Accepted
    }

    /// Places `txs` ahead of everything already queued, skipping any already
    /// present. Capacity is not enforced for re-proposals.
    pub fn insert_front(&mut self, txs: Vec<(TxId, Transaction)>) {
        let mut fresh = Vec::new();
        for (id, tx) in txs {
            if self.index.insert(id) {
                fresh.push(tx);
            }
        }
        let chunks: Vec<Vec<Transaction>> = fresh
            .chunks(self.max_batch_size)
            .map(|c| c.to_vec())
            .collect();
        for chunk in chunks.into_iter().rev() {
            self.full.push_front(chunk);
        }
    }

    /// Takes the queue head, or the open batch when no full batch is queued.
    pub fn next_batch(&mut self, id_of: impl Fn(&Transaction) -> TxId) -> Option<Vec<Transaction>> {
        self.queue_ops += 1;
        let batch = match self.full.pop_front() {
            Some(b) => b,
            None if !self.pending.is_empty() => mem::take(&mut self.pending),
            None => return None,
        };
        for tx in &batch {
            self.index.remove(&id_of(tx));
        }
        Some(batch)
    }

    /// Empties the pool, oldest transactions first.
    pub fn drain(&mut self) -> Vec<Transaction> {
        self.index.clear();
        let mut out: Vec<Transaction> = self.full.drain(..).flatten().collect();
        out.append(&mut self.pending);
        out
    }
}

#[derive(Debug, Clone)]
struct Bucket {
    id: u64,
    sealed_at: Timestamp,
    forwarded_at: Option<Timestamp>,
    txs: BTreeMap<u64, Transaction>,
}

/// Secondary tracking structure: one open bucket and a FIFO of sealed ones.
#[derive(Debug, Clone)]
pub struct SecondaryPool {
    capacity: usize,
    open: BTreeMap<u64, Transaction>,
    open_since: Timestamp,
    sealed: VecDeque<Bucket>,
    locator: BTreeMap<TxId, (Option<u64>, u64)>,
    next_slot: u64,
    next_bucket: u64,
}

impl SecondaryPool {
    pub fn new(capacity: usize) -> SecondaryPool {
        SecondaryPool {
            capacity,
            open: BTreeMap::new(),
            open_since: Timestamp(0),
            sealed: VecDeque::new(),
            locator: BTreeMap::new(),
            next_slot: 0,
            next_bucket: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.locator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locator.is_empty()
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.locator.contains_key(id)
    }

    pub fn sealed_buckets(&self) -> usize {
        self.sealed.len()
    }

    pub fn open_len(&self) -> usize {
        self.open.len()
    }

    pub fn insert(&mut self, id: TxId, tx: Transaction, now: Timestamp) -> InsertOutcome {
        if self.locator.contains_key(&id) {
            return InsertOutcome::Duplicate;
        }
        if self.locator.len() >= self.capacity {
            return InsertOutcome::Full;
        }
        if self.open.is_empty() {
            self.open_since = now;
        }
        let slot = self.next_slot;
        self.next_slot += 1;
        self.open.insert(slot, tx);
        self.locator.insert(id, (None, slot));
        InsertOutcome::Accepted
    }

    pub fn remove(&mut self, id: &TxId) -> Option<Transaction> {
        let (bucket, slot) = self.locator.remove(id)?;
        match bucket {
            None => self.open.remove(&slot),
            Some(bid) => {
                let pos = self.sealed.binary_search_by_key(&bid, |b| b.id).ok()?;
                let tx = self.sealed[pos].txs.remove(&slot);
                if self.sealed[pos].txs.is_empty() {
                    self.sealed.remove(pos);
                }
                tx
            }
        }
    }

    /// When the open bucket must next be sealed.
    pub fn seal_deadline(&self, bucket_period_ms: u64) -> Option<Timestamp> {
        (!self.open.is_empty()).then(|| self.open_since.plus_ms(bucket_period_ms))
    }

    pub fn seal(&mut self, now: Timestamp) {
        if self.open.is_empty() {
            return;
        }
        let txs = mem::take(&mut self.open);
        self.push_sealed(txs, now);
    }

    fn push_sealed(&mut self, txs: BTreeMap<u64, Transaction>, now: Timestamp) {
        let id = self.next_bucket;
        self.next_bucket += 1;
        for (slot, tx) in &txs {
            let tx_id = tx.id();
            self.locator.insert(tx_id, (Some(id), *slot));
        }
        self.sealed.push_back(Bucket {
            id,
            sealed_at: now,
            forwarded_at: None,
            txs,
        });
    }

    /// Earliest time at which a sealed bucket becomes due for forwarding.
    pub fn forward_deadline(&self, t_forward_ms: u64) -> Option<Timestamp> {
        self.sealed
            .iter()
            .filter(|b| b.forwarded_at.is_none())
            .map(|b| b.sealed_at.plus_ms(t_forward_ms))
            .min()
    }

    /// Earliest time at which a forwarded, still non-empty bucket justifies a
    /// complaint.
    pub fn complaint_deadline(&self, t_complain_ms: u64) -> Option<Timestamp> {
        self.sealed
            .iter()
            .filter_map(|b| b.forwarded_at)
            .map(|t| t.plus_ms(t_complain_ms))
            .min()
    }

    /// Marks buckets older than `t_forward` as forwarded and returns their
    /// transactions. Each bucket is forwarded at most once.
    pub fn take_due_forwards(&mut self, now: Timestamp, t_forward_ms: u64) -> Vec<Transaction> {
        let mut out = Vec::new();
        for b in self.sealed.iter_mut() {
            if b.forwarded_at.is_none() && b.sealed_at.plus_ms(t_forward_ms) <= now {
                b.forwarded_at = Some(now);
                out.extend(b.txs.values().cloned());
            }
        }
        out
    }

    pub fn complaint_due(&self, now: Timestamp, t_complain_ms: u64) -> bool {
        self.complaint_deadline(t_complain_ms)
            .is_some_and(|t| t <= now)
    }

    /// Collapses every bucket into one sealed bucket stamped `now`, restarting
    /// the forward and complaint timers for all tracked transactions.
    pub fn restart_timers(&mut self, now: Timestamp) {
        let mut all = BTreeMap::new();
        for b in self.sealed.drain(..) {
            all.extend(b.txs);
        }
        all.append(&mut self.open);
        if !all.is_empty() {
            self.push_sealed(all, now);
        }
    }

    /// Adds transactions as a single sealed bucket stamped `now`.
    pub fn insert_sealed(&mut self, txs: Vec<Transaction>, now: Timestamp) {
        let mut bucket = BTreeMap::new();
        for tx in txs {
            let id = tx.id();
            if self.locator.contains_key(&id) {
                continue;
            }
            let slot = self.next_slot;
            self.next_slot += 1;
            self.locator.insert(id, (None, slot));
            bucket.insert(slot, tx);
        }
        if !bucket.is_empty() {
            self.push_sealed(bucket, now);
        }
    }

    /// Empties the pool, oldest transactions first.
    pub fn drain(&mut self) -> Vec<Transaction> {
        self.locator.clear();
        let mut out: Vec<Transaction> = Vec::new();
        for b in self.sealed.drain(..) {
            out.extend(b.txs.into_values());
        }
        out.extend(mem::take(&mut self.open).into_values());
        out
    }
}
