//! Post-run property checks over the committed ledgers and the report.

use std::collections::{BTreeMap, BTreeSet};

use arma_core::router::{validate_transaction, DEFAULT_MAX_TX_SIZE};
use arma_core::{BatchKey, Block, ShardId, Term, TxId};
use serde::{Deserialize, Serialize};

use crate::config::{Behavior, ScenarioConfig};
use crate::engine::RunOutput;
use crate::report::RunStatus;

/// Timing bounds derived from the configuration, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub delta_ms: u64,
    /// Upper bound on getting an attestation from a batcher into a published
    /// header and a fetch request out: `6Δ + round_interval`.
    pub order_ms: u64,
    /// Upper bound on one censoring term.
    pub t_censor_ms: u64,
    /// Submission-to-commit bound with `F` censoring primaries in a row.
    pub t_max_ms: u64,
}

pub fn bounds(cfg: &ScenarioConfig) -> Bounds {
    let d = cfg.delta_ms();
    let p = &cfg.protocol;
    let order = 6 * d + p.round_interval_ms;
    let cut = p.max_batch_latency_ms.max(p.dispatch_interval_ms);
    let t_censor = d + p.bucket_period_ms + p.t_forward_ms + p.t_complain_ms + order + d + cut;
    Bounds {
        delta_ms: d,
        order_ms: order,
        t_censor_ms: t_censor,
        t_max_ms: cfg.system.faults as u64 * t_censor + order + 2 * d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    /// The property does not apply to this scenario.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, ok: bool, detail: impl Into<String>) -> Verdict {
        Verdict {
            name: name.into(),
            outcome: if ok { Outcome::Pass } else { Outcome::Fail },
            detail: detail.into(),
        }
    }

    fn skip(name: &str, detail: &str) -> Verdict {
        Verdict {
            name: name.into(),
            outcome: Outcome::Skip,
            detail: detail.into(),
        }
    }

    pub fn failed(&self) -> bool {
        self.outcome == Outcome::Fail
    }
}

/// Every `(shard, term)` a transaction was committed under, per ledger.
fn occurrences(blocks: &[Block]) -> BTreeMap<TxId, Vec<(ShardId, Term)>> {
    let mut m: BTreeMap<TxId, Vec<(ShardId, Term)>> = BTreeMap::new();
    for batch in blocks.iter().flat_map(|b| &b.batches) {
        for tx in &batch.txs {
            m.entry(tx.id())
                .or_default()
                .push((batch.shard, batch.term));
        }
    }
    m
}

pub fn agreement(ledgers: &[Vec<Block>], quiescent: bool) -> Result<(), String> {
    let Some(first) = ledgers.first() else {
        return Ok(());
    };
    for other in &ledgers[1..] {
        if let Some(i) = first.iter().zip(other).position(|(a, b)| a.id() != b.id()) {
            return Err(format!("ledgers diverge at block {i}"));
        }
        if quiescent && other.len() != first.len() {
            return Err(format!(
                "heights {} and {} differ",
                first.len(),
                other.len()
            ));
        }
    }
    Ok(())
}

pub fn unique_keys(blocks: &[Block]) -> Result<(), String> {
    let mut seen: BTreeSet<BatchKey> = BTreeSet::new();
    for b in blocks {
        for k in &b.header.batch_keys {
            if !seen.insert(*k) {
                return Err(format!(
                    "batch ({}, {}) of primary {} appears twice (again in block {})",
                    k.shard, k.seq, k.primary, b.header.block_seq
                ));
            }
        }
    }
    Ok(())
}

pub fn evaluate(cfg: &ScenarioConfig, out: &RunOutput) -> Vec<Verdict> {
    let r = &out.report;
    let ledgers: Vec<Vec<Block>> = out.ledgers.iter().map(|(_, l)| l.clone()).collect();
    let quiescent = r.status == RunStatus::Complete;
    let mut v = Vec::new();

    v.push(Verdict::new(
        "quiescence",
        quiescent,
        format!("ended at {} ms", r.end_time_ms),
    ));

    v.push(match agreement(&ledgers, quiescent) {
        Ok(()) => Verdict::new("agreement", true, format!("{} ledgers", ledgers.len())),
        Err(e) => Verdict::new("agreement", false, e),
    });

    let occ: Vec<BTreeMap<TxId, Vec<(ShardId, Term)>>> =
        ledgers.iter().map(|l| occurrences(l)).collect();
    let deposed: BTreeSet<u32> = r.term_changes.iter().map(|t| t.shard).collect();
    let quorum = cfg.system.parties - cfg.system.faults;
    let mut lost = 0usize;
    let mut bad_dup = 0usize;
    let mut first_problem = String::new();
    for t in &r.txs {
        let id = hex_id(&t.id);
        let in_all = occ.iter().all(|o| o.contains_key(&id));
        if t.acks >= quorum && !in_all {
            lost += 1;
            if first_problem.is_empty() {
                first_problem = format!("tx {} acked but not committed everywhere", &t.id[..16]);
            }
        }
        for o in &occ {
            let Some(places) = o.get(&id) else { continue };
            if places.len() < 2 {
                continue;
            }
            let terms: BTreeSet<Term> = places.iter().map(|p| p.1).collect();
            let shards: BTreeSet<ShardId> = places.iter().map(|p| p.0).collect();
            let ok = terms.len() == places.len()
                && shards.len() == 1
                && deposed.contains(&places[0].0 .0);
            if !ok {
                bad_dup += 1;
                if first_problem.is_empty() {
                    first_problem = format!("tx {} duplicated within one term", &t.id[..16]);
                }
            }
        }
    }
    v.push(Verdict::new(
        "no_loss_no_unbounded_dup",
        lost == 0 && bad_dup == 0,
        if first_problem.is_empty() {
            format!(
                "{} acked, {} duplicated",
                r.totals.acked, r.totals.duplicated
            )
        } else {
            format!("{lost} lost, {bad_dup} bad duplicates; {first_problem}")
        },
    ));

    let recount_committed = r
        .txs
        .iter()
        .filter(|t| {
            let id = hex_id(&t.id);
            !occ.is_empty() && occ.iter().all(|o| o.contains_key(&id))
        })
        .count();
    let recount_dup = r
        .txs
        .iter()
        .filter(|t| {
            let id = hex_id(&t.id);
            occ.iter().any(|o| o.get(&id).is_some_and(|p| p.len() > 1))
        })
        .count();
    let integrity = recount_committed == r.totals.committed && recount_dup == r.totals.duplicated;
    v.push(Verdict::new(
        "metrics_integrity",
        integrity,
        format!(
            "committed {} vs {}, duplicated {} vs {}",
            r.totals.committed, recount_committed, r.totals.duplicated, recount_dup
        ),
    ));

    let mut key_err = None;
    for l in &ledgers {
        if let Err(e) = unique_keys(l) {
            key_err = Some(e);
            break;
        }
    }
    v.push(match key_err {
        None => Verdict::new("unique_batch_keys", true, ""),
        Some(e) => Verdict::new("unique_batch_keys", false, e),
    });

    let limit = 1.0 - cfg.protocol.alpha;
    let mut worst = 0.0f64;
    if let Some(l) = ledgers.first() {
        for batch in l.iter().flat_map(|b| &b.batches) {
            if batch.txs.is_empty() {
                continue;
            }
            let bad = batch
                .txs
                .iter()
                .filter(|tx| validate_transaction(tx, &out.clients, DEFAULT_MAX_TX_SIZE).is_err())
                .count();
            worst = worst.max(bad as f64 / batch.txs.len() as f64);
        }
    }
    v.push(Verdict::new(
        "validity",
        worst <= limit,
        format!("worst invalid fraction {worst:.3}, limit {limit:.3}"),
    ));

    let censors = cfg
        .adversaries
        .iter()
        .any(|a| matches!(a.behavior, Behavior::CensorTx { .. }));
    if censors {
        let b = r.bounds;
        let gst = cfg.network.gst_ms;
        let mut worst = 0u64;
        let mut missing = 0usize;
        for t in r.txs.iter().filter(|t| t.submit_ms >= gst) {
            match t.commit_ms {
                Some(c) => worst = worst.max(c - t.submit_ms),
                None => missing += 1,
            }
        }
        v.push(Verdict::new(
            "censorship_bound",
            missing == 0 && worst <= b.t_max_ms + 1,
            format!(
                "worst {worst} ms, bound {} ms, {missing} uncommitted",
                b.t_max_ms
            ),
        ));
    } else {
        v.push(Verdict::skip("censorship_bound", "no censoring adversary"));
    }

    let may_depose = cfg.adversaries.iter().any(|a| a.behavior.may_depose());
    if may_depose || cfg.network.gst_ms > 0 || cfg.network.drop_after_gst > 0.0 {
        v.push(Verdict::skip(
            "stable_primary",
            "adversary or network may legitimately depose",
        ));
    } else {
        v.push(Verdict::new(
            "stable_primary",
            r.term_changes.is_empty(),
            format!("{} term changes", r.term_changes.len()),
        ));
    }
    v
}

fn hex_id(h: &str) -> TxId {
    let mut d = [0u8; 32];
    hex::decode_to_slice(h, &mut d).expect("report ids are hex");
    arma_core::Digest(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use arma_core::{BlockHeader, Digest, PartyId};

    fn block(seq: u64, keys: Vec<BatchKey>) -> Block {
        Block {
            header: BlockHeader::unsigned(seq, Digest::ZERO, keys),
            batches: Vec::new(),
        }
    }

    fn key(seq: u64) -> BatchKey {
        BatchKey {
            seq,
            shard: ShardId(0),
            digest: Digest([seq as u8; 32]),
            primary: PartyId(0),
        }
    }

    #[test]
    fn bounds_follow_the_definitions() {
        let cfg = ScenarioConfig::default();
        let b = bounds(&cfg);
        assert_eq!(b.delta_ms, 10);
        assert_eq!(b.order_ms, 80);
        assert_eq!(b.t_censor_ms, 10 + 100 + 400 + 400 + 80 + 10 + 50);
        assert_eq!(b.t_max_ms, b.t_censor_ms + 80 + 20);
    }

    #[test]
    fn agreement_detects_divergence_and_lag() {
        let a = vec![block(0, vec![key(0)]), block(1, vec![key(1)])];
        let b = vec![block(0, vec![key(0)])];
        assert!(agreement(&[a.clone(), b.clone()], false).is_ok());
        assert!(agreement(&[a.clone(), b], true).is_err());
        let c = vec![block(0, vec![key(0)]), block(1, vec![key(2)])];
        assert_eq!(
            agreement(&[a, c], true).unwrap_err(),
            "ledgers diverge at block 1"
        );
    }

    #[test]
    fn repeated_keys_are_found() {
        let l = vec![block(0, vec![key(0), key(1)]), block(1, vec![key(1)])];
        assert!(unique_keys(&l).is_err());
        assert!(unique_keys(&l[..1]).is_ok());
    }
}
