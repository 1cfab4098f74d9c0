//! The `arma` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use arma_core::batcher::required_sample_size;
use arma_core::FaultModel;
use clap::{Parser, Subcommand};

use crate::checks::Outcome;
use crate::config::ScenarioConfig;
use crate::engine::run_scenario;
use crate::keys::KeysFile;
use crate::ledger_file;
use crate::report::{percentile, RunReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "arma",
    version,
    about = "Deterministic simulator for a sharded BFT ordering service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and check its properties.
    Run {
        /// Scenario TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for report.json, series.csv, ledgers and keys.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a ledger file against a keys file.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        keys: PathBuf,
    },
    /// Smallest sample size K with alpha^K <= p_fail.
    SampleSize {
        /// Largest fraction of valid transactions in a batch that must still be caught.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5f64.powi(30))]
        p_fail: f64,
    },
    /// Summarize a report.json.
    Stats {
        #[arg(long)]
        report: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out: dir,
        } => cmd_run(config.as_deref(), seed, dir.as_deref(), out),
        Command::Verify { ledger, keys } => cmd_verify(&ledger, &keys, out),
        Command::SampleSize { alpha, p_fail } => cmd_sample_size(alpha, p_fail, out),
        Command::Stats { report } => cmd_stats(&report, out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

type CmdResult = Result<i32, String>;

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_run(
    config: Option<&Path>,
    seed: Option<u64>,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let mut cfg = match config {
        Some(p) => ScenarioConfig::load(p).map_err(|e| e.to_string())?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let run = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let r = &run.report;
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        write_file(&dir.join("report.json"), r.to_json().as_bytes())?;
        write_file(&dir.join("series.csv"), r.series_csv().as_bytes())?;
        write_file(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
        let scheme = cfg.scheme().map_err(|e| e.to_string())?;
        let keys = KeysFile::new(scheme, cfg.system.faults, &run.public_keys);
        write_file(&dir.join("keys.json"), keys.to_json().as_bytes())?;
        for (p, blocks) in &run.ledgers {
            write_file(
                &dir.join(format!("ledger-p{}.bin", p.0)),
                &ledger_file::encode(blocks),
            )?;
        }
    }
    let t = &r.totals;
    let _ = writeln!(
        out,
        "status {:?} at {} ms: {} submitted, {} committed, {} blocks, p50 {} ms, p95 {} ms",
        r.status,
        r.end_time_ms,
        t.submitted,
        t.committed,
        t.blocks,
        t.p50_latency_ms,
        t.p95_latency_ms
    );
    for v in &r.verdicts {
        let tag = match v.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "SKIP",
        };
        let _ = writeln!(out, "{tag} {}: {}", v.name, v.detail);
    }
    Ok(if r.passed() { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_verify(ledger: &Path, keys: &Path, out: &mut dyn Write) -> CmdResult {
    let keys = KeysFile::load(keys).map_err(|e| e.to_string())?;
    let public = keys.decode().map_err(|e| e.to_string())?;
    let fm = FaultModel::new(keys.parties, keys.faults).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(ledger).map_err(|e| format!("{}: {e}", ledger.display()))?;
    match ledger_file::verify_bytes(&bytes, &public, fm) {
        Ok(n) => {
            let _ = writeln!(out, "ok: {n} blocks verified");
            Ok(EXIT_OK)
        }
        Err(e) => {
            let _ = writeln!(out, "invalid: {e}");
            Ok(EXIT_FAIL)
        }
    }
}

fn cmd_sample_size(alpha: f64, p_fail: f64, out: &mut dyn Write) -> CmdResult {
    let k = required_sample_size(alpha, p_fail).map_err(|e| e.to_string())?;
    let _ = writeln!(
        out,
        "K = {k} (miss probability {:.3e})",
        alpha.powi(k as i32)
    );
    Ok(EXIT_OK)
}

fn cmd_stats(path: &Path, out: &mut dyn Write) -> CmdResult {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let r = RunReport::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let t = &r.totals;
    let _ = writeln!(out, "submitted      {}", t.submitted);
    let _ = writeln!(out, "acked          {}", t.acked);
    let _ = writeln!(out, "committed      {}", t.committed);
    let _ = writeln!(out, "duplicated     {}", t.duplicated);
    let _ = writeln!(out, "term changes   {}", r.term_changes.len());
    let _ = writeln!(out, "blocks         {}", t.blocks);
    let _ = writeln!(out, "throughput     {:.1} tx/s", t.throughput_tps);
    let _ = writeln!(
        out,
        "latency ms     mean {:.1}  p50 {}  p95 {}  p99 {}  max {}",
        t.mean_latency_ms, t.p50_latency_ms, t.p95_latency_ms, t.p99_latency_ms, t.max_latency_ms
    );
    let mut shards: BTreeMap<u32, (usize, Vec<u64>)> = (0..r.scenario.shards)
        .map(|s| (s, (0, Vec::new())))
        .collect();
    for tx in &r.txs {
        let e = shards.entry(tx.shard).or_default();
        e.0 += 1;
        if let Some(c) = tx.commit_ms {
            e.1.push(c - tx.submit_ms);
        }
    }
    let _ = writeln!(out, "shard  submitted  committed  p50_ms  p95_ms");
    for (s, (n, mut lat)) in shards {
        lat.sort_unstable();
        let _ = writeln!(
            out,
            "{s:>5}  {n:>9}  {:>9}  {:>6}  {:>6}",
            lat.len(),
            percentile(&lat, 0.5),
            percentile(&lat, 0.95)
        );
    }
    Ok(EXIT_OK)
}
