//! Probabilistic batch verification.
//!
//! A secondary checks `K` transactions drawn uniformly with replacement. If a
//! fraction `1 - α` of the batch is invalid, all draws miss with probability
//! `α^K`, so `K = ceil(ln p / ln α)` bounds the miss rate by `p`.

use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::sha256;
use crate::model::{PartyId, ShardId, Transaction};
use crate::router::{validate_transaction, ClientDirectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSizeError {
    AlphaOutOfRange(f64),
    PFailOutOfRange(f64),
}

impl fmt::Display for SampleSizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSizeError::AlphaOutOfRange(a) => write!(f, "alpha must lie in (0, 1), got {a}"),
            SampleSizeError::PFailOutOfRange(p) => write!(f, "p_fail must lie in (0, 1), got {p}"),
        }
    }
}

impl core::error::Error for SampleSizeError {}

/// `ceil(ln(p_fail) / ln(alpha))`.
pub fn required_sample_size(alpha: f64, p_fail: f64) -> Result<usize, SampleSizeError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SampleSizeError::AlphaOutOfRange(alpha));
    }
    if !(p_fail > 0.0 && p_fail < 1.0) {
        return Err(SampleSizeError::PFailOutOfRange(p_fail));
    }
    let exact = libm::log(p_fail) / libm::log(alpha);
    // Guard against `ln` rounding pushing an exact integer ratio up by one.
    let nearest = libm::round(exact);
    let k = if libm::fabs(exact - nearest) < 1e-9 {
        nearest
    } else {
        libm::ceil(exact)
    };
    Ok((k as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleOutcome {
    AllSampledValid,
    FoundInvalid(usize),
}

/// Deterministic sampling stream for one `(party, shard, seq)` verification.
pub fn sampling_rng(seed: u64, party: PartyId, shard: ShardId, seq: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(sha256(&[
        &seed.to_be_bytes(),
        &(party.0 as u64).to_be_bytes(),
        &(shard.0 as u64).to_be_bytes(),
        &seq.to_be_bytes(),
    ]))
}

/// Draws `min(k, |txs|)` indices with replacement and validates each pick.
pub fn sample_verify<R: Rng>(
    txs: &[Transaction],
    k: usize,
    rng: &mut R,
    clients: &ClientDirectory,
    max_tx_size: usize,
) -> SampleOutcome {
    if txs.is_empty() {
        return SampleOutcome::AllSampledValid;
    }
    for _ in 0..k.min(txs.len()) {
        let i = rng.random_range(0..txs.len());
        if validate_transaction(&txs[i], clients, max_tx_size).is_err() {
            return SampleOutcome::FoundInvalid(i);
        }
    }
    SampleOutcome::AllSampledValid
}
