//! Stateless transaction validation and shard mapping.
//!
//! A router checks that a transaction is well formed and signed by a known
//! client, computes its shard from the transaction id, and hands it to the
//! batcher of that shard on the same party. It acknowledges only once the
//! batcher has confirmed the enqueue.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use core::fmt;

use crate::batcher::InsertOutcome;
use crate::crypto::PublicKey;
use crate::model::{ClientId, PartyId, ShardId, Transaction, TxId};

pub const DEFAULT_MAX_TX_SIZE: usize = 1 << 20;

/// Known clients and their verification keys.
pub type ClientDirectory = BTreeMap<ClientId, PublicKey>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InvalidReason {
    UnknownClient,
    BadSignature,
    Malformed,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvalidReason::UnknownClient => "unknown_client",
            InvalidReason::BadSignature => "bad_signature",
            InvalidReason::Malformed => "malformed",
        })
    }
}

impl core::error::Error for InvalidReason {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Invalid(InvalidReason),
    Unavailable,
    Backpressure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Ack,
    Rejected(RejectReason),
}

/// The batcher of `shard` on this party could not be reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unavailable;

/// Access to the batchers of the router's own party.
pub trait BatcherGateway {
    fn enqueue(&mut self, shard: ShardId, tx: Transaction) -> Result<InsertOutcome, Unavailable>;
}

#[derive(Debug, Clone)]
pub struct RouterConfig {
    pub party: PartyId,
    pub shard_count: u32,
    pub max_tx_size: usize,
    pub clients: Arc<ClientDirectory>,
}

/// `CRC32(tx_id) mod k`.
pub fn map_to_shard(tx_id: &TxId, shard_count: u32) -> ShardId {
    ShardId(crc32fast::hash(tx_id.as_bytes()) % shard_count.max(1))
}

/// Well-formedness and client signature check, shared with batcher sampling.
pub fn validate_transaction(
    tx: &Transaction,
    clients: &ClientDirectory,
    max_tx_size: usize,
) -> Result<(), InvalidReason> {
    if tx.payload.is_empty() || tx.payload.len() > max_tx_size {
        return Err(InvalidReason::Malformed);
    }
    let key = clients
        .get(&tx.client)
        .ok_or(InvalidReason::UnknownClient)?;
    if !tx.signature_valid(key) {
        return Err(InvalidReason::BadSignature);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Router {
    cfg: RouterConfig,
}

impl Router {
    pub fn new(cfg: RouterConfig) -> Router {
        assert!(cfg.shard_count >= 1, "at least one shard is required");
        Router { cfg }
    }

    pub fn config(&self) -> &RouterConfig {
        &self.cfg
    }

    pub fn validate(&self, tx: &Transaction) -> Result<(), InvalidReason> {
        validate_transaction(tx, &self.cfg.clients, self.cfg.max_tx_size)
    }

    pub fn shard_of(&self, tx: &Transaction) -> ShardId {
        map_to_shard(&tx.id(), self.cfg.shard_count)
    }

    pub fn handle_submission(
        &self,
        tx: Transaction,
        batchers: &mut impl BatcherGateway,
    ) -> SubmitOutcome {
        if let Err(reason) = self.validate(&tx) {
            return SubmitOutcome::Rejected(RejectReason::Invalid(reason));
        }
        let shard = self.shard_of(&tx);
        match batchers.enqueue(shard, tx) {
            Ok(InsertOutcome::Accepted | InsertOutcome::Duplicate) => SubmitOutcome::Ack,
            Ok(InsertOutcome::Full) => SubmitOutcome::Rejected(RejectReason::Backpressure),
            Err(Unavailable) => SubmitOutcome::Rejected(RejectReason::Unavailable),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, KeyPair, Scheme};
    use crate::model::Digest;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn client_key(c: u64) -> KeyPair {
        keygen(&[c as u8; 32], Scheme::TestMac)
    }

    fn router(k: u32) -> Router {
        let clients = (1..=3)
            .map(|c| (ClientId(c), client_key(c).public))
            .collect();
        Router::new(RouterConfig {
            party: PartyId(0),
            shard_count: k,
            max_tx_size: 64,
            clients: Arc::new(clients),
        })
    }

    #[derive(Default)]
    struct Recorder {
        calls: Vec<ShardId>,
        reply: Option<Result<InsertOutcome, Unavailable>>,
    }

    impl BatcherGateway for Recorder {
        fn enqueue(
            &mut self,
            shard: ShardId,
            _tx: Transaction,
        ) -> Result<InsertOutcome, Unavailable> {
            self.calls.push(shard);
            self.reply.unwrap_or(Ok(InsertOutcome::Accepted))
        }
    }

    fn signed(c: u64, payload: Vec<u8>) -> Transaction {
        Transaction::new_signed(ClientId(c), payload, &client_key(c))
    }

    #[test]
    fn valid_tx_is_acked_after_enqueue() {
        let r = router(4);
        let mut gw = Recorder::default();
        let tx = signed(1, vec![1, 2]);
        let shard = r.shard_of(&tx);
        assert_eq!(r.handle_submission(tx, &mut gw), SubmitOutcome::Ack);
        assert_eq!(gw.calls, vec![shard]);
    }

    #[test]
    fn invalid_tx_never_reaches_batcher() {
        let r = router(4);
        let mut gw = Recorder::default();
        let stranger = Transaction::new_signed(ClientId(99), vec![1], &client_key(99));
        assert_eq!(
            r.handle_submission(stranger, &mut gw),
            SubmitOutcome::Rejected(RejectReason::Invalid(InvalidReason::UnknownClient))
        );
        assert_eq!(
            r.handle_submission(signed(1, vec![]), &mut gw),
            SubmitOutcome::Rejected(RejectReason::Invalid(InvalidReason::Malformed))
        );
        assert_eq!(
            r.handle_submission(signed(1, vec![0; 65]), &mut gw),
            SubmitOutcome::Rejected(RejectReason::Invalid(InvalidReason::Malformed))
        );
        assert!(gw.calls.is_empty());
    }

    #[test]
    fn unreachable_batcher_is_reported() {
        let r = router(2);
        let mut gw = Recorder {
            reply: Some(Err(Unavailable)),
            ..Recorder::default()
        };
        assert_eq!(
            r.handle_submission(signed(2, vec![5]), &mut gw),
            SubmitOutcome::Rejected(RejectReason::Unavailable)
        );
        gw.reply = Some(Ok(InsertOutcome::Full));
        assert_eq!(
            r.handle_submission(signed(2, vec![5]), &mut gw),
            SubmitOutcome::Rejected(RejectReason::Backpressure)
        );
        gw.reply = Some(Ok(InsertOutcome::Duplicate));
        assert_eq!(
            r.handle_submission(signed(2, vec![5]), &mut gw),
            SubmitOutcome::Ack
        );
    }

    #[test]
    fn single_shard_maps_everything_to_zero() {
        for i in 0..100u8 {
            assert_eq!(map_to_shard(&Digest([i; 32]), 1), ShardId(0));
        }
    }

    #[test]
    fn mapping_agrees_across_instances() {
        let a = router(8);
        let b = router(8);
        let tx = signed(3, vec![7; 10]);
        assert_eq!(a.shard_of(&tx), b.shard_of(&tx));
        assert_eq!(a.shard_of(&tx), a.shard_of(&tx));
    }

    #[test]
    fn crc_mapping_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0u32; 8];
        for _ in 0..100_000 {
            let mut id = [0u8; 32];
            rng.fill_bytes(&mut id);
            counts[map_to_shard(&Digest(id), 8).index()] += 1;
        }
        for c in counts {
            assert!((11_875..=13_125).contains(&c), "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn flipped_payload_bit_is_bad_signature(
            payload in proptest::collection::vec(any::<u8>(), 1..64),
            bit in any::<prop::sample::Index>(),
        ) {
            let r = router(2);
            let mut tx = signed(1, payload);
            let i = bit.index(tx.payload.len() * 8);
            tx.payload[i / 8] ^= 1 << (i % 8);
            prop_assert_eq!(r.validate(&tx), Err(InvalidReason::BadSignature));
        }
    }
}
