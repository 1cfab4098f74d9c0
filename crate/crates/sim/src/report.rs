//! The JSON run report and the CSV time series.

use arma_core::{Block, PartyId};
use serde::{Deserialize, Serialize};

use crate::checks::{self, Bounds, Verdict};
use crate::config::ScenarioConfig;
use crate::engine::Metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub seed: u64,
    pub parties: usize,
    pub faults: usize,
    pub shards: u32,
    pub scheme: String,
    pub gst_ms: u64,
    /// `p<party>:<behavior>` per adversary.
    pub adversaries: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    /// The event queue drained.
    Complete,
    /// The virtual-time budget ran out first.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub id: String,
    pub client: u32,
    pub shard: u32,
    pub submit_ms: u64,
    pub acks: usize,
    /// When `N - F` routers had acknowledged.
    pub acked_ms: Option<u64>,
    pub first_commit_ms: Option<u64>,
    /// When the last correct party committed it.
    pub commit_ms: Option<u64>,
    /// Largest number of copies in any correct ledger.
    pub copies: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermChange {
    pub shard: u32,
    pub term: u64,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time_ms: u64,
    pub committed_txs: u64,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: u64,
    pub pending_bas: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPending {
    pub epoch: u64,
    pub max_pending: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub party: u32,
    pub height: usize,
    pub tx_count: usize,
    pub head: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub submitted: usize,
    pub acked: usize,
    pub committed: usize,
    pub committed_any: usize,
    pub duplicated: usize,
    pub bogus_committed: usize,
    pub blocks: usize,
    pub mean_latency_ms: f64,
    pub p50_latency_ms: u64,
    pub p95_latency_ms: u64,
    pub p99_latency_ms: u64,
    pub max_latency_ms: u64,
    pub throughput_tps: f64,
}

/// Aggregated over correct parties.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolStats {
    pub batches_cut: u64,
    pub complaints: u64,
    pub forwarded_txs: u64,
    pub rebases: u64,
    pub reproposed_txs: u64,
    pub rounds: u64,
    pub orphans: u64,
    pub purged: u64,
    pub dropped_shares: u64,
    pub fetches: u64,
    pub equivocations: u64,
    pub conflicting_shares: u64,
    pub invalid_shares: u64,
    pub rejected_headers: u64,
    pub router_rejections: u64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioSummary,
    pub status: RunStatus,
    pub end_time_ms: u64,
    pub bounds: Bounds,
    pub correct_parties: Vec<u32>,
    pub totals: Totals,
    pub stats: ProtocolStats,
    pub verdicts: Vec<Verdict>,
    pub term_changes: Vec<TermChange>,
    pub pending_by_epoch: Vec<EpochPending>,
    pub ledgers: Vec<LedgerSummary>,
    pub series: Vec<SeriesPoint>,
    pub txs: Vec<TxRecord>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<RunReport> {
        serde_json::from_str(text)
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| !v.failed())
    }

    pub fn series_csv(&self) -> String {
        let mut out =
            String::from("time_ms,committed_txs,mean_latency_ms,p95_latency_ms,pending_bas\n");
        for p in &self.series {
            out.push_str(&format!(
                "{},{},{:.3},{},{}\n",
                p.time_ms, p.committed_txs, p.mean_latency_ms, p.p95_latency_ms, p.pending_bas
            ));
        }
        out
    }
}

/// Nearest-rank percentile over sorted samples.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn mean(xs: &[u64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<u64>() as f64 / xs.len() as f64
    }
}

pub(crate) fn build(
    cfg: &ScenarioConfig,
    complete: bool,
    end_time_ms: u64,
    correct: &[PartyId],
    metrics: &Metrics,
    ledgers: &[(PartyId, Vec<Block>)],
    stats: ProtocolStats,
) -> RunReport {
    let quorum = cfg.system.parties - cfg.system.faults;
    let txs: Vec<TxRecord> = metrics
        .txs
        .iter()
        .map(|t| {
            let all = t.commits.len() == correct.len() && !correct.is_empty();
            TxRecord {
                id: hex::encode(t.id.0),
                client: t.client,
                shard: t.shard,
                submit_ms: t.submit_ms,
                acks: t.acks.len(),
                acked_ms: t.acked_ms,
                first_commit_ms: t.commits.values().map(|c| c.0).min(),
                commit_ms: all.then(|| t.commits.values().map(|c| c.0).max()).flatten(),
                copies: t.commits.values().map(|c| c.1).max().unwrap_or(0),
            }
        })
        .collect();

    let mut latencies: Vec<u64> = txs
        .iter()
        .filter_map(|t| t.commit_ms.map(|c| c - t.submit_ms))
        .collect();
    latencies.sort_unstable();
    let first_submit = txs.iter().map(|t| t.submit_ms).min().unwrap_or(0);
    let last_commit = txs.iter().filter_map(|t| t.commit_ms).max().unwrap_or(0);
    let span_ms = last_commit.saturating_sub(first_submit);
    let bogus_committed = ledgers.first().map_or(0, |(_, blocks)| {
        blocks
            .iter()
            .flat_map(|b| &b.batches)
            .flat_map(|b| &b.txs)
            .filter(|tx| !metrics.index.contains_key(&tx.id()))
            .count()
    });
    let totals = Totals {
        submitted: txs.len(),
        acked: txs.iter().filter(|t| t.acks >= quorum).count(),
        committed: latencies.len(),
        committed_any: txs.iter().filter(|t| t.first_commit_ms.is_some()).count(),
        duplicated: txs.iter().filter(|t| t.copies > 1).count(),
        bogus_committed,
        blocks: ledgers.first().map_or(0, |(_, b)| b.len()),
        mean_latency_ms: mean(&latencies),
        p50_latency_ms: percentile(&latencies, 0.50),
        p95_latency_ms: percentile(&latencies, 0.95),
        p99_latency_ms: percentile(&latencies, 0.99),
        max_latency_ms: latencies.last().copied().unwrap_or(0),
        throughput_tps: if span_ms == 0 {
            0.0
        } else {
            latencies.len() as f64 * 1000.0 / span_ms as f64
        },
    };

    let interval = cfg.run.series_interval_ms.max(1);
    let buckets = end_time_ms / interval + 1;
    let mut per_bucket: Vec<Vec<u64>> = vec![Vec::new(); buckets as usize];
    for t in &txs {
        if let Some(c) = t.commit_ms {
            per_bucket[(c / interval).min(buckets - 1) as usize].push(c - t.submit_ms);
        }
    }
    let series = per_bucket
        .into_iter()
        .enumerate()
        .map(|(i, mut lat)| {
            lat.sort_unstable();
            SeriesPoint {
                time_ms: (i as u64 + 1) * interval,
                committed_txs: lat.len() as u64,
                mean_latency_ms: mean(&lat),
                p95_latency_ms: percentile(&lat, 0.95),
                pending_bas: metrics
                    .pending_by_bucket
                    .get(&(i as u64))
                    .copied()
                    .unwrap_or(0),
            }
        })
        .collect();

    RunReport {
        scenario: ScenarioSummary {
            seed: cfg.seed,
            parties: cfg.system.parties,
            faults: cfg.system.faults,
            shards: cfg.system.shards,
            scheme: cfg.system.scheme.clone(),
            gst_ms: cfg.network.gst_ms,
            adversaries: cfg
                .adversaries
                .iter()
                .map(|a| format!("p{}:{}", a.party, a.behavior.name()))
                .collect(),
        },
        status: if complete {
            RunStatus::Complete
        } else {
            RunStatus::Incomplete
        },
        end_time_ms,
        bounds: checks::bounds(cfg),
        correct_parties: correct.iter().map(|p| p.0).collect(),
        totals,
        stats,
        verdicts: Vec::new(),
        term_changes: metrics
            .term_changes
            .iter()
            .map(|(&(shard, term), &at_ms)| TermChange { shard, term, at_ms })
            .collect(),
        pending_by_epoch: metrics
            .pending_by_epoch
            .iter()
            .map(|(&epoch, &max_pending)| EpochPending { epoch, max_pending })
            .collect(),
        ledgers: ledgers
            .iter()
            .map(|(p, blocks)| LedgerSummary {
                party: p.0,
                height: blocks.len(),
                tx_count: blocks.iter().map(Block::tx_count).sum(),
                head: blocks
                    .last()
                    .map_or_else(String::new, |b| hex::encode(b.header.hash().0)),
            })
            .collect(),
        series,
        txs,
    }
}
