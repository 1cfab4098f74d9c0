//! Threshold extraction over totally ordered attestation shares, and the
//! reference-vote bookkeeping used to purge orphaned shares.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::model::{BatchAttestationShare, BatchKey, FaultModel, PartyId, Term};

/// A batch key that collected at least `F+1` shares, with those shares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Threshold {
    pub key: BatchKey,
    pub shares: Vec<BatchAttestationShare>,
}

impl Threshold {
    pub fn signers(&self) -> BTreeSet<PartyId> {
        self.shares.iter().map(|s| s.signer).collect()
    }
}

/// One round of threshold collection: `P ∪ B` grouped by key; every key with
/// `F+1` distinct signers leaves the pending list as a threshold, in order of
/// first appearance. Everything else stays pending, in arrival order.
pub fn process_round(
    pending: Vec<BatchAttestationShare>,
    round: Vec<BatchAttestationShare>,
    f: usize,
) -> (Vec<BatchAttestationShare>, Vec<Threshold>) {
    process_round_with(pending, round, f, |_| false)
}

/// [`process_round`], except that keys for which `settled` holds never form
/// a threshold; their shares remain pending as orphans.
pub fn process_round_with(
    pending: Vec<BatchAttestationShare>,
    round: Vec<BatchAttestationShare>,
    f: usize,
    settled: impl Fn(&BatchKey) -> bool,
) -> (Vec<BatchAttestationShare>, Vec<Threshold>) {
    let mut all = pending;
    all.extend(round);
    let mut order: Vec<BatchKey> = Vec::new();
    let mut signers: BTreeMap<BatchKey, BTreeSet<PartyId>> = BTreeMap::new();
    for bas in &all {
        let key = bas.key();
        let set = signers.entry(key).or_insert_with(|| {
            order.push(key);
            BTreeSet::new()
        });
        set.insert(bas.signer);
    }
    let reached: BTreeSet<BatchKey> = signers
        .iter()
        .filter(|(k, s)| s.len() > f && !settled(k))
        .map(|(k, _)| *k)
        .collect();
    let mut groups: BTreeMap<BatchKey, Vec<BatchAttestationShare>> = BTreeMap::new();
    let mut rest = Vec::new();
    for bas in all {
        let key = bas.key();
        if reached.contains(&key) {
            groups.entry(key).or_default().push(bas);
        } else {
            rest.push(bas);
        }
    }
    let thresholds = order
        .into_iter()
        .filter_map(|key| groups.remove(&key).map(|shares| Threshold { key, shares }))
        .collect();
    (rest, thresholds)
}

/// Whether `orphan`, referenced from a share for `referrer`, points strictly
/// backwards: same shard and either an earlier sequence number or a primary
/// whose latest term is earlier than the referrer primary's.
pub fn ref_is_valid(
    orphan: &BatchKey,
    referrer: &BatchKey,
    faults: &FaultModel,
    current_term: Term,
) -> bool {
    if orphan.shard != referrer.shard || orphan == referrer {
        return false;
    }
    if orphan.seq < referrer.seq {
        return true;
    }
    match (
        faults.last_term_as_primary(orphan.primary, current_term),
        faults.last_term_as_primary(referrer.primary, current_term),
    ) {
        (Some(a), Some(b)) => a < b,
        (None, Some(_)) => true,
        _ => false,
    }
}

/// Distinct referencing signers per batch key, accumulated across rounds.
#[derive(Debug, Clone, Default)]
pub struct OrphanVotes {
    votes: BTreeMap<BatchKey, BTreeSet<PartyId>>,
}

impl OrphanVotes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: BatchKey, signer: PartyId) {
        self.votes.entry(key).or_default().insert(signer);
    }

    pub fn count(&self, key: &BatchKey) -> usize {
        self.votes.get(key).map_or(0, BTreeSet::len)
    }

    pub fn forget(&mut self, key: &BatchKey) {
        self.votes.remove(key);
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }
}

/// Removes every pending share whose key has `F+1` distinct reference votes.
/// Returns the purged keys in order of first appearance.
pub fn purge_orphans(
    pending: &mut Vec<BatchAttestationShare>,
    votes: &OrphanVotes,
    f: usize,
) -> Vec<BatchKey> {
    let mut purged = Vec::new();
    pending.retain(|bas| {
        let key = bas.key();
        if votes.count(&key) > f {
            if !purged.contains(&key) {
                purged.push(key);
            }
            false
        } else {
            true
        }
    });
    purged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Scheme, Signature};
    use crate::model::{Digest, Epoch, ShardId};
    use alloc::vec;
    use proptest::prelude::*;

    fn key(i: u8) -> BatchKey {
        BatchKey {
            seq: i as u64,
            shard: ShardId(0),
            digest: Digest([i; 32]),
            primary: PartyId(0),
        }
    }

    fn bas(signer: u32, k: BatchKey) -> BatchAttestationShare {
        bas_with_refs(signer, k, vec![])
    }

    fn bas_with_refs(signer: u32, k: BatchKey, refs: Vec<BatchKey>) -> BatchAttestationShare {
        BatchAttestationShare {
            signer: PartyId(signer),
            seq: k.seq,
            digest: k.digest,
            shard: k.shard,
            primary: k.primary,
            epoch: Epoch(0),
            orphan_refs: refs,
            signature: Signature::garbage(Scheme::TestMac, 0),
        }
    }

    #[test]
    fn second_share_completes_threshold() {
        let (p, t) = process_round(vec![bas(0, key(1))], vec![bas(1, key(1))], 1);
        assert!(p.is_empty());
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].key, key(1));
        assert_eq!(
            t[0].signers(),
            [PartyId(0), PartyId(1)].into_iter().collect()
        );
    }

    #[test]
    fn single_share_stays_pending() {
        let (p, t) = process_round(vec![], vec![bas(0, key(1))], 1);
        assert_eq!(p, vec![bas(0, key(1))]);
        assert!(t.is_empty());
    }

    #[test]
    fn thresholds_take_all_shares_and_leave_others() {
        let (p, t) = process_round(
            vec![bas(0, key(1)), bas(1, key(2))],
            vec![bas(2, key(1)), bas(3, key(1))],
            1,
        );
        assert_eq!(p, vec![bas(1, key(2))]);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].shares.len(), 3);
    }

    #[test]
    fn same_signer_counts_once() {
        let (p, t) = process_round(vec![bas(0, key(1))], vec![bas(0, key(1))], 1);
        assert!(t.is_empty());
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn order_is_first_appearance() {
        let (_, t) = process_round(
            vec![bas(0, key(5)), bas(0, key(3))],
            vec![bas(1, key(3)), bas(1, key(5))],
            1,
        );
        assert_eq!(
            t.iter().map(|t| t.key).collect::<Vec<_>>(),
            vec![key(5), key(3)]
        );
    }

    #[test]
    fn settled_keys_never_threshold() {
        let (p, t) = process_round_with(vec![bas(0, key(1))], vec![bas(1, key(1))], 1, |k| {
            *k == key(1)
        });
        assert!(t.is_empty());
        assert_eq!(p.len(), 2);
    }

    fn fm4() -> FaultModel {
        FaultModel::new(4, 1).unwrap()
    }

    #[test]
    fn two_references_purge_an_orphan() {
        let orphan = key(1);
        let mut pending = vec![bas(2, orphan)];
        let mut votes = OrphanVotes::new();
        for signer in [0, 1] {
            let referrer = bas_with_refs(signer, key(4), vec![orphan]);
            for r in &referrer.orphan_refs {
                if ref_is_valid(r, &referrer.key(), &fm4(), Term(0)) {
                    votes.record(*r, referrer.signer);
                }
            }
            if signer == 0 {
                assert!(purge_orphans(&mut pending, &votes, 1).is_empty());
                assert_eq!(pending.len(), 1);
            }
        }
        assert_eq!(purge_orphans(&mut pending, &votes, 1), vec![orphan]);
        assert!(pending.is_empty());
    }

    #[test]
    fn forward_references_are_invalid() {
        let fm = fm4();
        assert!(!ref_is_valid(&key(5), &key(4), &fm, Term(0)));
        assert!(ref_is_valid(&key(3), &key(4), &fm, Term(0)));
        let mut older_primary = key(9);
        older_primary.primary = PartyId(0);
        let mut newer = key(9);
        newer.digest = Digest([1; 32]);
        newer.primary = PartyId(1);
        assert!(ref_is_valid(&older_primary, &newer, &fm, Term(1)));
        assert!(!ref_is_valid(&newer, &older_primary, &fm, Term(1)));
        let mut other_shard = key(1);
        other_shard.shard = ShardId(1);
        assert!(!ref_is_valid(&other_shard, &key(4), &fm, Term(0)));
    }

    fn arb_rounds() -> impl Strategy<Value = (usize, Vec<Vec<(u32, u8)>>)> {
        (0usize..=2).prop_flat_map(|f| {
            let n = (3 * f + 1).max(2) as u32;
            let n = n.min(6);
            (
                Just(f),
                proptest::collection::vec(proptest::collection::vec((0..n, 0u8..8), 0..10), 1..5),
            )
        })
    }

    proptest! {
        #[test]
        fn thresholds_are_keys_with_f_plus_one_signers((f, rounds) in arb_rounds()) {
            let mut pending = Vec::new();
            let mut thresholded = BTreeSet::new();
            for round in &rounds {
                let b: Vec<_> = round.iter().map(|&(s, k)| bas(s, key(k))).collect();
                let (p, t) = process_round(pending, b, f);
                for th in &t {
                    prop_assert!(th.signers().len() > f);
                    thresholded.insert(th.key);
                }
                pending = p;
            }
            let mut left: BTreeMap<BatchKey, BTreeSet<PartyId>> = BTreeMap::new();
            for b in &pending {
                left.entry(b.key()).or_default().insert(b.signer);
            }
            for set in left.values() {
                prop_assert!(set.len() <= f);
            }
        }
    }
}
