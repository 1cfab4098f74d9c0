//! Scenario configuration.
//!
//! Scenarios are TOML documents. Every section is optional and falls back to
//! the defaults below; unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [system]
//! parties = 4
//! faults = 1
//! shards = 2
//! scheme = "test_mac"        # or "standard_signature"
//!
//! [network]
//! base_latency_ms = 5
//! jitter_ms = 5
//! gst_ms = 0
//!
//! [workload]
//! clients = 4
//! txs_per_client = 250
//! interval_ms = 4
//!
//! [protocol]
//! max_batch_size = 64
//! sample_size = 30            # or alpha + p_fail
//!
//! [[adversary]]
//! party = 0
//! behavior = "censor-tx"
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use arma_core::batcher::{required_sample_size, SampleSizeError};
use arma_core::{quorum_size, PartyId, Scheme};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("N >= 3F+1 violated: N={n}, F={f}")]
    FaultModel { n: usize, f: usize },
    #[error("at least one shard is required")]
    NoShards,
    #[error("{count} adversary parties exceed F={f}")]
    TooManyAdversaries { count: usize, f: usize },
    #[error("adversary party {0} does not exist")]
    UnknownParty(u32),
    #[error("party {0} has more than one behavior")]
    DuplicateAdversary(u32),
    #[error("unknown signature scheme {0:?}")]
    UnknownScheme(String),
    #[error("sampling: {0}")]
    Sampling(#[from] SampleSizeError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct System {
    pub parties: usize,
    pub faults: usize,
    pub shards: u32,
    pub scheme: String,
}

impl Default for System {
    fn default() -> Self {
        System {
            parties: 4,
            faults: 1,
            shards: 1,
            scheme: "test_mac".into(),
        }
    }
}

/// Per-message delay is `base + U[0, jitter]`, so `Δ = base + jitter`.
/// Messages sent before GST get an extra `U[0, gst - now]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Network {
    pub base_latency_ms: u64,
    pub jitter_ms: u64,
    pub gst_ms: u64,
    /// Drop probability after GST. Breaks the model; negative controls only.
    pub drop_after_gst: f64,
}

impl Default for Network {
    fn default() -> Self {
        Network {
            base_latency_ms: 5,
            jitter_ms: 5,
            gst_ms: 0,
            drop_after_gst: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workload {
    pub clients: u32,
    pub txs_per_client: u64,
    /// Gap between two submissions of one client.
    pub interval_ms: u64,
    pub tx_size: usize,
    pub start_ms: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            clients: 4,
            txs_per_client: 250,
            interval_ms: 4,
            tx_size: 64,
            start_ms: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub max_batch_size: usize,
    pub max_batch_latency_ms: u64,
    pub dispatch_interval_ms: u64,
    /// Explicit K. When absent, K is derived from `alpha` and `p_fail`.
    pub sample_size: Option<usize>,
    pub alpha: f64,
    pub p_fail: f64,
    pub bucket_period_ms: u64,
    pub t_forward_ms: u64,
    pub t_complain_ms: u64,
    pub epoch_length_ms: u64,
    pub epoch_window: u64,
    pub round_interval_ms: u64,
    pub fetch_timeout_ms: u64,
    pub max_orphan_refs: usize,
    pub max_pull_batches: usize,
    pub pool_capacity: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            max_batch_size: 64,
            max_batch_latency_ms: 50,
            dispatch_interval_ms: 0,
            sample_size: None,
            alpha: 0.5,
            p_fail: (0.5f64).powi(30),
            bucket_period_ms: 100,
            t_forward_ms: 400,
            t_complain_ms: 400,
            epoch_length_ms: 10_000,
            epoch_window: 2,
            round_interval_ms: 20,
            fetch_timeout_ms: 200,
            max_orphan_refs: 8,
            max_pull_batches: 16,
            pool_capacity: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunLimits {
    /// Virtual-time budget; a run still busy at this point is incomplete.
    pub max_time_ms: u64,
    pub series_interval_ms: u64,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_time_ms: 600_000,
            series_interval_ms: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Behavior {
    /// Every node of the party stops at `at_ms`.
    Crash { at_ms: u64 },
    /// As primary, silently drops transactions of the listed clients, or of
    /// every client when the list is absent.
    CensorTx {
        #[serde(default)]
        clients: Option<Vec<u32>>,
    },
    /// As primary, replaces this fraction of every batch with forged
    /// transactions.
    InjectBogus { fraction: f64 },
    /// Never submits attestation shares.
    WithholdBas,
    /// Sends nothing at all while secondary.
    SilentSecondary,
    /// As primary, serves `victim` a reordered copy of every batch.
    EquivocateBatch { victim: u32 },
    /// Complains against every primary each `interval_ms`.
    SpuriousComplaint {
        #[serde(default)]
        interval_ms: Option<u64>,
    },
    /// As primary, serves batches only to `serve_to` and never attests,
    /// leaving batches with fewer than F+1 shares at failover.
    StallPrimary { serve_to: Vec<u32> },
    /// Re-submits every share it ever sent straight to the ordering service
    /// at `at_ms`.
    ReplayBas { at_ms: u64 },
}

impl Behavior {
    pub fn name(&self) -> &'static str {
        match self {
            Behavior::Crash { .. } => "crash",
            Behavior::CensorTx { .. } => "censor-tx",
            Behavior::InjectBogus { .. } => "inject-bogus",
            Behavior::WithholdBas => "withhold-bas",
            Behavior::SilentSecondary => "silent-secondary",
            Behavior::EquivocateBatch { .. } => "equivocate-batch",
            Behavior::SpuriousComplaint { .. } => "spurious-complaint",
            Behavior::StallPrimary { .. } => "stall-primary",
            Behavior::ReplayBas { .. } => "replay-bas",
        }
    }

    /// Whether the behavior can legitimately cause a term change.
    pub fn may_depose(&self) -> bool {
        matches!(
            self,
            Behavior::Crash { .. }
                | Behavior::CensorTx { .. }
                | Behavior::InjectBogus { .. }
                | Behavior::StallPrimary { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub party: u32,
    #[serde(flatten)]
    pub behavior: Behavior,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub system: System,
    pub network: Network,
    pub workload: Workload,
    pub protocol: Protocol,
    pub run: RunLimits,
    #[serde(rename = "adversary")]
    pub adversaries: Vec<AdversarySpec>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ScenarioConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Post-GST delay bound.
    pub fn delta_ms(&self) -> u64 {
        self.network.base_latency_ms + self.network.jitter_ms
    }

    pub fn scheme(&self) -> Result<Scheme, ConfigError> {
        Scheme::from_name(&self.system.scheme)
            .ok_or_else(|| ConfigError::UnknownScheme(self.system.scheme.clone()))
    }

    pub fn sample_size(&self) -> Result<usize, ConfigError> {
        match self.protocol.sample_size {
            Some(k) => Ok(k),
            None => Ok(required_sample_size(
                self.protocol.alpha,
                self.protocol.p_fail,
            )?),
        }
    }

    pub fn behavior_of(&self, party: PartyId) -> Option<&Behavior> {
        self.adversaries
            .iter()
            .find(|a| a.party == party.0)
            .map(|a| &a.behavior)
    }

    pub fn is_correct(&self, party: PartyId) -> bool {
        self.behavior_of(party).is_none()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (n, f) = (self.system.parties, self.system.faults);
        quorum_size(n, f).map_err(|_| ConfigError::FaultModel { n, f })?;
        if self.system.shards == 0 {
            return Err(ConfigError::NoShards);
        }
        self.scheme()?;
        self.sample_size()?;
        let mut seen = BTreeSet::new();
        for a in &self.adversaries {
            if a.party as usize >= n {
                return Err(ConfigError::UnknownParty(a.party));
            }
            if !seen.insert(a.party) {
                return Err(ConfigError::DuplicateAdversary(a.party));
            }
            match &a.behavior {
                Behavior::EquivocateBatch { victim }
                    if *victim as usize >= n || *victim == a.party =>
                {
                    return Err(ConfigError::Invalid(format!(
                        "bad equivocation victim {victim}"
                    )));
                }
                Behavior::InjectBogus { fraction } if !(0.0..=1.0).contains(fraction) => {
                    return Err(ConfigError::Invalid(format!(
                        "bogus fraction {fraction} not in [0, 1]"
                    )));
                }
                Behavior::StallPrimary { serve_to }
                    if serve_to.iter().any(|p| *p as usize >= n) =>
                {
                    return Err(ConfigError::Invalid(
                        "stall-primary target out of range".into(),
                    ));
                }
                _ => {}
            }
        }
        if seen.len() > f {
            return Err(ConfigError::TooManyAdversaries {
                count: seen.len(),
                f,
            });
        }
        let p = &self.protocol;
        if p.max_batch_size == 0 {
            return Err(ConfigError::Invalid(
                "max_batch_size must be positive".into(),
            ));
        }
        if p.epoch_length_ms == 0 || p.round_interval_ms == 0 || self.run.series_interval_ms == 0 {
            return Err(ConfigError::Invalid(
                "epoch_length_ms, round_interval_ms and series_interval_ms must be positive".into(),
            ));
        }
        if self.workload.tx_size < 16 {
            return Err(ConfigError::Invalid(
                "tx_size must be at least 16 bytes".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.network.drop_after_gst) {
            return Err(ConfigError::Invalid("drop_after_gst not in [0, 1]".into()));
        }
        Ok(())
    }
}
