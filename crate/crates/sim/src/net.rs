//! Addresses, messages and the timestamped event queue.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use arma_core::assembler::{FetchRequest, FetchResponse};
use arma_core::batcher::{PullRequest, PullResponse};
use arma_core::consensus::{ConsensusEvent, HeaderShare, OrderedUpdate, Round};
use arma_core::{BlockHeader, PartyId, ShardId, Timestamp, Transaction};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::Network as NetworkConfig;

/// A simulated node. The derived order is the tie-break among senders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Addr {
    Client(u32),
    Router(PartyId),
    Batcher(PartyId, ShardId),
    Consensus(PartyId),
    Assembler(PartyId),
    Adversary(PartyId),
    Sequencer,
}

#[derive(Debug, Clone)]
pub enum Msg {
    Timer,
    Submit(Transaction),
    Forward(Vec<Transaction>),
    Pull(PullRequest),
    Serve(PullResponse),
    ToConsensus(ConsensusEvent),
    Order(ConsensusEvent),
    Round(Arc<Round>),
    Share(HeaderShare),
    Update(Arc<OrderedUpdate>),
    Header(BlockHeader),
    Fetch(FetchRequest),
    FetchReply(FetchResponse),
    Crash,
    Replay,
}

#[derive(Debug)]
pub struct Event {
    pub at: Timestamp,
    pub from: Addr,
    pub seq: u64,
    pub to: Addr,
    pub msg: Msg,
}

impl Event {
    fn key(&self) -> (Timestamp, Addr, u64) {
        (self.at, self.from, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Event queue plus the latency model.
#[derive(Debug)]
pub struct Network {
    cfg: NetworkConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<Event>>,
    seqs: BTreeMap<Addr, u64>,
    pub sent: u64,
    pub dropped: u64,
}

impl Network {
    pub fn new(cfg: NetworkConfig, rng: ChaCha8Rng) -> Network {
        Network {
            cfg,
            rng,
            queue: BinaryHeap::new(),
            seqs: BTreeMap::new(),
            sent: 0,
            dropped: 0,
        }
    }

    pub fn delay(&mut self, now: Timestamp) -> u64 {
        let mut d = self.cfg.base_latency_ms + self.rng.random_range(0..=self.cfg.jitter_ms);
        if now.0 < self.cfg.gst_ms {
            d += self.rng.random_range(0..=self.cfg.gst_ms - now.0);
        }
        d
    }

    /// Sends over a link, subject to delay and the post-GST drop knob.
    pub fn send(&mut self, now: Timestamp, from: Addr, to: Addr, msg: Msg) {
        self.sent += 1;
        if now.0 >= self.cfg.gst_ms
            && self.cfg.drop_after_gst > 0.0
            && self.rng.random_bool(self.cfg.drop_after_gst)
        {
            self.dropped += 1;
            return;
        }
        let at = now.plus_ms(self.delay(now));
        self.schedule(at, from, to, msg);
    }

    /// Delivers exactly at `at`, bypassing the latency model.
    pub fn schedule(&mut self, at: Timestamp, from: Addr, to: Addr, msg: Msg) {
        let seq = self.seqs.entry(from).or_insert(0);
        let ev = Event {
            at,
            from,
            seq: *seq,
            to,
            msg,
        };
        *seq += 1;
        self.queue.push(Reverse(ev));
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.queue.peek().map(|Reverse(e)| e.at)
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.queue.pop().map(|Reverse(e)| e)
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn net(gst: u64) -> Network {
        Network::new(
            NetworkConfig {
                base_latency_ms: 3,
                jitter_ms: 2,
                gst_ms: gst,
                drop_after_gst: 0.0,
            },
            ChaCha8Rng::seed_from_u64(1),
        )
    }

    #[test]
    fn ties_break_by_sender_then_sequence() {
        let mut n = net(0);
        let t = Timestamp(5);
        n.schedule(t, Addr::Sequencer, Addr::Client(0), Msg::Timer);
        n.schedule(t, Addr::Client(1), Addr::Client(0), Msg::Timer);
        n.schedule(t, Addr::Client(1), Addr::Client(0), Msg::Crash);
        n.schedule(Timestamp(4), Addr::Sequencer, Addr::Client(0), Msg::Replay);
        let order: Vec<(u64, Addr, u64)> = std::iter::from_fn(|| n.pop())
            .map(|e| (e.at.0, e.from, e.seq))
            .collect();
        assert_eq!(
            order,
            vec![
                (4, Addr::Sequencer, 1),
                (5, Addr::Client(1), 0),
                (5, Addr::Client(1), 1),
                (5, Addr::Sequencer, 0),
            ]
        );
    }

    #[test]
    fn post_gst_delay_is_bounded() {
        let mut n = net(0);
        for i in 0..1000 {
            let d = n.delay(Timestamp(i));
            assert!((3..=5).contains(&d));
        }
    }

    #[test]
    fn pre_gst_delay_ends_by_gst_plus_delta() {
        let mut n = net(1000);
        let mut late = false;
        for i in 0..1000 {
            let d = n.delay(Timestamp(i));
            assert!(i + d <= 1000 + 5);
            late |= d > 5;
        }
        assert!(late);
    }
}
