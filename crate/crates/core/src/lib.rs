//! Protocol state machines for sharded Byzantine fault tolerant ordering.
//!
//! Transactions are disseminated and validated by per-shard batchers, while a
//! consensus layer only orders small batch attestation shares (BASs). Once
//! `F+1` parties attest to a batch it is referenced from a hash-chained,
//! quorum-signed block header, and assemblers join headers with the batches
//! they pull from batchers.
//!
//! The crate is `no_std` (it needs `alloc`). Every node type is a sans-IO
//! state machine: callers feed it events and a clock reading and it pushes
//! outbound actions into a caller-provided buffer. The `arma-sim` crate hosts
//! these machines in a discrete-event simulator.
//!
//! - [`model`]: identifiers, transactions, batches, attestations, headers.
//! - [`encoding`]: the canonical byte layout used for signing and storage.
//! - [`crypto`]: pluggable signatures (keyed MAC for simulation, Ed25519).
//! - [`router`]: stateless transaction validation and shard mapping.
//! - [`batcher`]: memory pools, batch dissemination, sampling, failover.
//! - [`consensus`]: threshold extraction, dedup, orphan purging, headers.
//! - [`assembler`]: block assembly from headers and fetched batches.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod assembler;
pub mod batcher;
pub mod consensus;
pub mod crypto;
pub mod encoding;
pub mod model;
pub mod router;

pub use crypto::{keygen, sign, verify, KeyPair, PublicKey, Scheme, Signature};
pub use model::{
    bas_threshold, primary_for, quorum_size, Batch, BatchAttestationShare, BatchKey, Block,
    BlockHeader, ClientId, ComplaintVote, Digest, Epoch, FaultModel, InvalidFaultModel, PartyId,
    ShardId, Term, Timestamp, Transaction, TxId,
};
