//! The total-order primitive consensus nodes run on.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;

use super::ConsensusEvent;
use crate::model::{Digest, Timestamp};

/// A batch of events delivered identically, and in the same position, to
/// every correct consensus node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round {
    pub number: u64,
    pub timestamp: Timestamp,
    pub events: Vec<ConsensusEvent>,
}

/// An atomic broadcast. Implementations must deliver the same sequence of
/// rounds to all correct nodes and, after stabilization, must eventually
/// include every event submitted by a correct node.
pub trait TotalOrderBroadcast {
    fn submit(&mut self, event: ConsensusEvent, now: Timestamp);

    /// When the next round can be cut, if anything is buffered.
    fn next_deadline(&self) -> Option<Timestamp>;

    fn poll(&mut self, now: Timestamp) -> Option<Round>;
}

/// Rounds for which [`Sequencer`] remembers submitted events.
pub const DEFAULT_MEMORY_ROUNDS: usize = 16;

/// A trusted sequencer: buffers submissions, cuts a round on a fixed grid of
/// `round_interval_ms`, and drops exact resubmissions of events ordered in
/// the last few rounds. Older resubmissions are ordered again.
#[derive(Debug, Clone)]
pub struct Sequencer {
    round_interval_ms: u64,
    memory_rounds: usize,
    buffer: Vec<ConsensusEvent>,
    seen: BTreeSet<Digest>,
    history: VecDeque<Vec<Digest>>,
    next_round: u64,
    deadline: Option<Timestamp>,
}

impl Sequencer {
    pub fn new(round_interval_ms: u64) -> Sequencer {
        Sequencer::with_memory(round_interval_ms, DEFAULT_MEMORY_ROUNDS)
    }

    pub fn with_memory(round_interval_ms: u64, memory_rounds: usize) -> Sequencer {
        Sequencer {
            round_interval_ms: round_interval_ms.max(1),
            memory_rounds,
            buffer: Vec::new(),
            seen: BTreeSet::new(),
            history: VecDeque::new(),
            next_round: 0,
            deadline: None,
        }
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn rounds_cut(&self) -> u64 {
        self.next_round
    }
}

impl TotalOrderBroadcast for Sequencer {
    fn submit(&mut self, event: ConsensusEvent, now: Timestamp) {
        if !self.seen.insert(event.id()) {
            return;
        }
        if self.buffer.is_empty() {
            let ri = self.round_interval_ms;
            self.deadline = Some(Timestamp((now.0 / ri + 1) * ri));
        }
        self.buffer.push(event);
    }

    fn next_deadline(&self) -> Option<Timestamp> {
        self.deadline
    }

    fn poll(&mut self, now: Timestamp) -> Option<Round> {
        if self.deadline.is_none_or(|d| now < d) {
            return None;
        }
        self.deadline = None;
        self.history
            .push_back(self.buffer.iter().map(ConsensusEvent::id).collect());
        while self.history.len() > self.memory_rounds {
            for id in self.history.pop_front().unwrap_or_default() {
                self.seen.remove(&id);
            }
        }
        let round = Round {
            number: self.next_round,
            timestamp: now,
            events: core::mem::take(&mut self.buffer),
        };
        self.next_round += 1;
        Some(round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, Scheme};
    use crate::model::{ComplaintVote, PartyId, ShardId, Term};

    fn complaint(signer: u32) -> ConsensusEvent {
        let k = keygen(&[signer as u8; 32], Scheme::TestMac);
        ConsensusEvent::Complaint(ComplaintVote::new_signed(
            PartyId(signer),
            Term(0),
            ShardId(0),
            &k,
        ))
    }

    #[test]
    fn rounds_cut_on_grid_and_dedup() {
        let mut s = Sequencer::new(50);
        assert_eq!(s.next_deadline(), None);
        s.submit(complaint(1), Timestamp(10));
        s.submit(complaint(1), Timestamp(11));
        s.submit(complaint(2), Timestamp(60));
        assert_eq!(s.next_deadline(), Some(Timestamp(50)));
        assert!(s.poll(Timestamp(49)).is_none());
        let r = s.poll(Timestamp(50)).unwrap();
        assert_eq!(r.number, 0);
        assert_eq!(r.events.len(), 2);
        assert!(s.poll(Timestamp(100)).is_none());
        s.submit(complaint(3), Timestamp(100));
        assert_eq!(s.next_deadline(), Some(Timestamp(150)));
        assert_eq!(s.poll(Timestamp(150)).unwrap().number, 1);
    }

    #[test]
    fn old_resubmissions_are_ordered_again() {
        let mut s = Sequencer::with_memory(10, 2);
        s.submit(complaint(1), Timestamp(0));
        assert_eq!(s.poll(Timestamp(10)).unwrap().events.len(), 1);
        s.submit(complaint(1), Timestamp(10));
        s.submit(complaint(2), Timestamp(10));
        assert_eq!(s.poll(Timestamp(20)).unwrap().events.len(), 1);
        s.submit(complaint(3), Timestamp(20));
        s.poll(Timestamp(30)).unwrap();
        s.submit(complaint(1), Timestamp(30));
        assert_eq!(s.poll(Timestamp(40)).unwrap().events, vec![complaint(1)]);
    }
}
