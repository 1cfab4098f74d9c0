//! Deterministic discrete-event simulation of an `arma-core` deployment.
//!
//! A scenario ([`config::ScenarioConfig`]) fixes the party count, shards,
//! network model, workload and adversaries. [`run_scenario`] executes it in
//! virtual time and returns the committed ledgers of every correct party
//! together with a [`report::RunReport`] whose verdicts come from
//! [`checks`]. The same seed always gives the same bytes.
//!
//! ```
//! let mut cfg = arma_sim::config::ScenarioConfig::default();
//! cfg.workload.txs_per_client = 5;
//! let run = arma_sim::run_scenario(&cfg).unwrap();
//! assert!(run.report.passed());
//! assert_eq!(run.report.totals.committed, 20);
//! ```

pub mod adversary;
pub mod checks;
pub mod cli;
pub mod config;
pub mod engine;
pub mod keys;
pub mod ledger_file;
pub mod net;
pub mod report;

pub use engine::{run_scenario, RunOutput};
