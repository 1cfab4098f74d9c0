//! Byzantine primaries, expressed as batcher hooks.
//!
//! Behaviors that only suppress or add messages (share withholding, silent
//! secondaries, spurious complaints, replays, crashes) are applied by the
//! engine on the way out of a node.

use std::collections::BTreeSet;
use std::sync::Arc;

use arma_core::batcher::{Honest, PrimaryHooks};
use arma_core::crypto::Signature;
use arma_core::{Batch, ClientId, PartyId, Scheme, Transaction};
use rand::seq::index::sample;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::config::Behavior;

pub struct Censor {
    clients: Option<BTreeSet<ClientId>>,
}

impl PrimaryHooks for Censor {
    fn admit(&mut self, tx: &Transaction) -> bool {
        self.clients
            .as_ref()
            .is_some_and(|c| !c.contains(&tx.client))
    }
}

pub struct InjectBogus {
    fraction: f64,
    scheme: Scheme,
    rng: ChaCha8Rng,
}

impl InjectBogus {
    fn forge(&mut self, like: &Transaction) -> Transaction {
        let mut payload = vec![0u8; like.payload.len().max(16)];
        self.rng.fill_bytes(&mut payload);
        Transaction {
            client: like.client,
            payload,
            signature: Signature::garbage(self.scheme, 0xbd),
        }
    }
}

impl PrimaryHooks for InjectBogus {
    fn shape(&mut self, _seq: u64, mut txs: Vec<Transaction>) -> Vec<Transaction> {
        let count = ((txs.len() as f64) * self.fraction).ceil() as usize;
        let count = count.min(txs.len());
        for i in sample(&mut self.rng, txs.len(), count) {
            txs[i] = self.forge(&txs[i]);
        }
        txs
    }
}

pub struct Equivocate {
    party: PartyId,
    victim: PartyId,
}

impl PrimaryHooks for Equivocate {
    fn serve(&mut self, requester: PartyId, batch: &Arc<Batch>) -> Option<Arc<Batch>> {
        if requester != self.victim || batch.primary != self.party || batch.txs.len() < 2 {
            return None;
        }
        let mut alt = (**batch).clone();
        alt.txs.reverse();
        Some(Arc::new(alt))
    }
}

/// Hooks for one batcher of `party`, seeded independently per shard.
pub fn hooks_for(
    behavior: Option<&Behavior>,
    party: PartyId,
    scheme: Scheme,
    rng: ChaCha8Rng,
) -> Box<dyn PrimaryHooks> {
    match behavior {
        Some(Behavior::CensorTx { clients }) => Box::new(Censor {
            clients: clients
                .as_ref()
                .map(|c| c.iter().map(|&c| ClientId(c as u64)).collect()),
        }),
        Some(Behavior::InjectBogus { fraction }) => Box::new(InjectBogus {
            fraction: *fraction,
            scheme,
            rng,
        }),
        Some(Behavior::EquivocateBatch { victim }) => Box::new(Equivocate {
            party,
            victim: PartyId(*victim),
        }),
        _ => Box::new(Honest),
    }
}
