//! The discrete-event world: every party's router, batchers, consensus node
//! and assembler, the ordering service, and the clients.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use arma_core::assembler::{
    Assembler, AssemblerAction, AssemblerConfig, FetchResponse, MemoryStore,
};
use arma_core::batcher::{Batcher, BatcherAction, BatcherConfig, InsertOutcome};
use arma_core::consensus::{
    ConsensusAction, ConsensusConfig, ConsensusEvent, ConsensusNode, Evidence, Sequencer,
    TotalOrderBroadcast,
};
use arma_core::router::{
    map_to_shard, BatcherGateway, ClientDirectory, Router, RouterConfig, SubmitOutcome,
    Unavailable, DEFAULT_MAX_TX_SIZE,
};
use arma_core::{
    BatchAttestationShare, Block, ClientId, ComplaintVote, FaultModel, KeyPair, PartyId, PublicKey,
    ShardId, Timestamp, Transaction, TxId,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::hooks_for;
use crate::config::{Behavior, ConfigError, ScenarioConfig};
use crate::keys;
use crate::net::{Addr, Msg, Network};
use crate::report::{self, RunReport};

struct Party {
    id: PartyId,
    key: KeyPair,
    router: Router,
    batchers: Vec<Batcher>,
    consensus: ConsensusNode,
    assembler: Assembler<MemoryStore>,
    behavior: Option<Behavior>,
    crashed: bool,
    sent_shares: Vec<BatchAttestationShare>,
}

struct Client {
    id: ClientId,
    key: KeyPair,
    rng: ChaCha8Rng,
    sent: u64,
}

/// Per-transaction observations.
#[derive(Debug, Clone)]
pub(crate) struct TxTrack {
    pub id: TxId,
    pub client: u32,
    pub shard: u32,
    pub submit_ms: u64,
    pub acks: BTreeSet<PartyId>,
    pub acked_ms: Option<u64>,
    /// Correct party to (first commit time, copies committed).
    pub commits: BTreeMap<PartyId, (u64, u32)>,
}

#[derive(Debug, Default)]
pub(crate) struct Metrics {
    pub txs: Vec<TxTrack>,
    pub index: BTreeMap<TxId, usize>,
    pub term_changes: BTreeMap<(u32, u64), u64>,
    pub pending_by_bucket: BTreeMap<u64, usize>,
    pub pending_by_epoch: BTreeMap<u64, usize>,
    pub equivocations: u64,
    pub conflicting_shares: u64,
    pub invalid_shares: u64,
    pub rejected_headers: u64,
    pub router_rejections: u64,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub ledgers: Vec<(PartyId, Vec<Block>)>,
    pub public_keys: Vec<PublicKey>,
    pub clients: Arc<ClientDirectory>,
}

struct Gateway<'a> {
    batchers: &'a mut [Batcher],
    now: Timestamp,
    out: &'a mut Vec<(ShardId, Vec<BatcherAction>)>,
}

impl BatcherGateway for Gateway<'_> {
    fn enqueue(&mut self, shard: ShardId, tx: Transaction) -> Result<InsertOutcome, Unavailable> {
        let b = self.batchers.get_mut(shard.index()).ok_or(Unavailable)?;
        let mut out = Vec::new();
        let outcome = b.enqueue(tx, self.now, &mut out);
        self.out.push((shard, out));
        Ok(outcome)
    }
}

pub struct World {
    cfg: ScenarioConfig,
    fm: FaultModel,
    net: Network,
    parties: Vec<Party>,
    sequencer: Sequencer,
    clients: Vec<Client>,
    client_dir: Arc<ClientDirectory>,
    public_keys: Arc<Vec<PublicKey>>,
    armed: BTreeMap<Addr, Timestamp>,
    now: Timestamp,
    reference: PartyId,
    workload_end: u64,
    metrics: Metrics,
}

fn sub_rng(seed: u64, domain: &[u8], a: u64, b: u64) -> ChaCha8Rng {
    let digest = arma_core::crypto::sha256(&[
        b"arma-sim/rng",
        domain,
        &seed.to_be_bytes(),
        &a.to_be_bytes(),
        &b.to_be_bytes(),
    ]);
    ChaCha8Rng::from_seed(digest)
}

impl World {
    pub fn new(cfg: ScenarioConfig) -> Result<World, ConfigError> {
        cfg.validate()?;
        let scheme = cfg.scheme()?;
        let k = cfg.sample_size()?;
        let n = cfg.system.parties;
        let fm = FaultModel::new(n, cfg.system.faults).map_err(|_| ConfigError::FaultModel {
            n,
            f: cfg.system.faults,
        })?;
        let party_keys = keys::party_keys(cfg.seed, n, scheme);
        let public_keys: Arc<Vec<PublicKey>> =
            Arc::new(party_keys.iter().map(|k| k.public.clone()).collect());
        let client_keys = keys::client_keys(cfg.seed, cfg.workload.clients, scheme);
        let client_dir: Arc<ClientDirectory> = Arc::new(
            client_keys
                .iter()
                .enumerate()
                .map(|(i, k)| (ClientId(i as u64), k.public.clone()))
                .collect(),
        );
        let p = &cfg.protocol;
        let mut parties = Vec::with_capacity(n);
        for (i, key) in party_keys.into_iter().enumerate() {
            let id = PartyId(i as u32);
            let behavior = cfg.behavior_of(id).cloned();
            let batchers = (0..cfg.system.shards)
                .map(|s| {
                    let mut bc = BatcherConfig::new(id, ShardId(s), fm);
                    bc.max_batch_size = p.max_batch_size;
                    bc.max_batch_latency_ms = p.max_batch_latency_ms;
                    bc.dispatch_interval_ms = p.dispatch_interval_ms;
                    bc.bucket_period_ms = p.bucket_period_ms;
                    bc.t_forward_ms = p.t_forward_ms;
                    bc.t_complain_ms = p.t_complain_ms;
                    bc.epoch_length_ms = p.epoch_length_ms;
                    bc.sample_size = k;
                    bc.pool_capacity = p.pool_capacity;
                    bc.max_orphan_refs = p.max_orphan_refs;
                    bc.max_pull_batches = p.max_pull_batches;
                    bc.seed = cfg.seed;
                    let hooks = hooks_for(
                        behavior.as_ref(),
                        id,
                        scheme,
                        sub_rng(cfg.seed, b"hooks", i as u64, s as u64),
                    );
                    Batcher::new(bc, key.clone(), client_dir.clone(), hooks)
                })
                .collect();
            let mut cc = ConsensusConfig::new(id, fm, cfg.system.shards);
            cc.epoch_length_ms = p.epoch_length_ms;
            cc.epoch_window = p.epoch_window;
            let consensus = ConsensusNode::new(cc, key.clone(), public_keys.clone());
            let assembler = Assembler::new(
                AssemblerConfig {
                    party: id,
                    faults: fm,
                    fetch_timeout_ms: p.fetch_timeout_ms,
                },
                public_keys.clone(),
                MemoryStore::new(),
            );
            let router = Router::new(RouterConfig {
                party: id,
                shard_count: cfg.system.shards,
                max_tx_size: DEFAULT_MAX_TX_SIZE,
                clients: client_dir.clone(),
            });
            parties.push(Party {
                id,
                key,
                router,
                batchers,
                consensus,
                assembler,
                behavior,
                crashed: false,
                sent_shares: Vec::new(),
            });
        }
        let clients = client_keys
            .into_iter()
            .enumerate()
            .map(|(i, key)| Client {
                id: ClientId(i as u64),
                key,
                rng: sub_rng(cfg.seed, b"client", i as u64, 0),
                sent: 0,
            })
            .collect();
        let reference = (0..n as u32)
            .map(PartyId)
            .find(|p| cfg.is_correct(*p))
            .expect("fewer adversaries than parties");
        let w = &cfg.workload;
        let workload_end = w.start_ms + w.txs_per_client.saturating_sub(1) * w.interval_ms;
        let net = Network::new(cfg.network.clone(), sub_rng(cfg.seed, b"net", 0, 0));
        Ok(World {
            sequencer: Sequencer::new(p.round_interval_ms),
            fm,
            net,
            parties,
            clients,
            client_dir,
            public_keys,
            armed: BTreeMap::new(),
            now: Timestamp(0),
            reference,
            workload_end,
            metrics: Metrics::default(),
            cfg,
        })
    }

    fn broadcast_consensus(&mut self, from: Addr, event: ConsensusEvent) {
        for q in 0..self.parties.len() {
            let to = Addr::Consensus(PartyId(q as u32));
            self.net
                .send(self.now, from, to, Msg::ToConsensus(event.clone()));
        }
    }

    fn arm(&mut self, addr: Addr, deadline: Option<Timestamp>) {
        let Some(d) = deadline else {
            return;
        };
        let d = d.max(self.now.plus_ms(1));
        if self.armed.get(&addr).is_some_and(|&t| t <= d) {
            return;
        }
        self.armed.insert(addr, d);
        self.net.schedule(d, addr, addr, Msg::Timer);
    }

    fn arm_batcher(&mut self, p: PartyId, s: ShardId) {
        let d = self.parties[p.index()].batchers[s.index()].next_deadline();
        self.arm(Addr::Batcher(p, s), d);
    }

    fn arm_assembler(&mut self, p: PartyId) {
        let d = self.parties[p.index()].assembler.next_deadline();
        self.arm(Addr::Assembler(p), d);
    }

    fn start(&mut self) {
        let now = self.now;
        for p in 0..self.parties.len() {
            let pid = PartyId(p as u32);
            for s in 0..self.cfg.system.shards {
                let mut out = Vec::new();
                self.parties[p].batchers[s as usize].start(now, &mut out);
                self.batcher_actions(pid, ShardId(s), out);
            }
            let adv = Addr::Adversary(pid);
            match self.parties[p].behavior.clone() {
                Some(Behavior::Crash { at_ms }) => {
                    self.net
                        .schedule(Timestamp(at_ms), adv, Addr::Router(pid), Msg::Crash)
                }
                Some(Behavior::SpuriousComplaint { .. }) => {
                    self.net
                        .schedule(Timestamp(self.cfg.workload.start_ms), adv, adv, Msg::Timer)
                }
                Some(Behavior::ReplayBas { at_ms }) => {
                    self.net.schedule(Timestamp(at_ms), adv, adv, Msg::Replay)
                }
                _ => {}
            }
        }
        if self.cfg.workload.txs_per_client > 0 {
            for c in 0..self.clients.len() as u32 {
                let at = Timestamp(self.cfg.workload.start_ms);
                self.net
                    .schedule(at, Addr::Client(c), Addr::Client(c), Msg::Timer);
            }
        }
    }

    /// Runs to quiescence or to the virtual-time budget.
    pub fn run(mut self) -> RunOutput {
        self.start();
        let limit = Timestamp(self.cfg.run.max_time_ms);
        let mut complete = true;
        while let Some(t) = self.net.peek_time() {
            if t > limit {
                complete = false;
                break;
            }
            let ev = self.net.pop().expect("peeked");
            self.now = ev.at;
            self.dispatch(ev.from, ev.to, ev.msg);
        }
        self.finish(complete)
    }

    fn dispatch(&mut self, from: Addr, to: Addr, msg: Msg) {
        if let Msg::Timer = msg {
            if self.armed.get(&to) == Some(&self.now) {
                self.armed.remove(&to);
            } else if !matches!(to, Addr::Client(_) | Addr::Adversary(_)) {
                return;
            }
        }
        let party = match to {
            Addr::Router(p)
            | Addr::Batcher(p, _)
            | Addr::Consensus(p)
            | Addr::Assembler(p)
            | Addr::Adversary(p) => Some(p),
            Addr::Client(_) | Addr::Sequencer => None,
        };
        if party.is_some_and(|p| self.parties[p.index()].crashed) {
            return;
        }
        match to {
            Addr::Client(c) => self.client_tick(c),
            Addr::Router(p) => self.on_router(p, from, msg),
            Addr::Batcher(p, s) => self.on_batcher(p, s, from, msg),
            Addr::Consensus(p) => self.on_consensus(p, msg),
            Addr::Assembler(p) => self.on_assembler(p, from, msg),
            Addr::Sequencer => self.on_sequencer(msg),
            Addr::Adversary(p) => self.on_adversary(p, msg),
        }
    }

    fn client_tick(&mut self, c: u32) {
        let w = &self.cfg.workload;
        let (size, interval, total) = (w.tx_size, w.interval_ms, w.txs_per_client);
        let client = &mut self.clients[c as usize];
        let mut payload = vec![0u8; size];
        payload[..4].copy_from_slice(&c.to_be_bytes());
        payload[4..12].copy_from_slice(&client.sent.to_be_bytes());
        client.rng.fill_bytes(&mut payload[12..]);
        let tx = Transaction::new_signed(client.id, payload, &client.key);
        client.sent += 1;
        let more = client.sent < total;
        let id = tx.id();
        let shard = map_to_shard(&id, self.cfg.system.shards).0;
        if !self.metrics.index.contains_key(&id) {
            self.metrics.index.insert(id, self.metrics.txs.len());
            self.metrics.txs.push(TxTrack {
                id,
                client: c,
                shard,
                submit_ms: self.now.0,
                acks: BTreeSet::new(),
                acked_ms: None,
                commits: BTreeMap::new(),
            });
        }
        for p in 0..self.parties.len() {
            let to = Addr::Router(PartyId(p as u32));
            self.net
                .send(self.now, Addr::Client(c), to, Msg::Submit(tx.clone()));
        }
        if more {
            let at = self.now.plus_ms(interval.max(1));
            self.net
                .schedule(at, Addr::Client(c), Addr::Client(c), Msg::Timer);
        }
    }

    fn on_router(&mut self, p: PartyId, from: Addr, msg: Msg) {
        let txs = match msg {
            Msg::Crash => {
                self.parties[p.index()].crashed = true;
                return;
            }
            Msg::Submit(tx) => vec![tx],
            Msg::Forward(txs) => txs,
            _ => return,
        };
        let from_client = matches!(from, Addr::Client(_));
        let mut outs = Vec::new();
        let now = self.now;
        for tx in txs {
            let id = tx.id();
            let party = &mut self.parties[p.index()];
            let mut gw = Gateway {
                batchers: &mut party.batchers,
                now,
                out: &mut outs,
            };
            let outcome = party.router.handle_submission(tx, &mut gw);
            match outcome {
                SubmitOutcome::Ack if from_client => self.record_ack(id, p),
                SubmitOutcome::Rejected(_) => self.metrics.router_rejections += 1,
                _ => {}
            }
        }
        let mut touched = BTreeSet::new();
        for (s, out) in outs {
            touched.insert(s);
            self.batcher_actions(p, s, out);
        }
        for s in touched {
            self.arm_batcher(p, s);
        }
    }

    fn record_ack(&mut self, id: TxId, p: PartyId) {
        let quorum = self.fm.n() - self.fm.f();
        if let Some(&i) = self.metrics.index.get(&id) {
            let t = &mut self.metrics.txs[i];
            if t.acks.insert(p) && t.acks.len() == quorum {
                t.acked_ms = Some(self.now.0);
            }
        }
    }

    fn on_batcher(&mut self, p: PartyId, s: ShardId, from: Addr, msg: Msg) {
        let now = self.now;
        let mut out = Vec::new();
        let party = &mut self.parties[p.index()];
        let silent_party = matches!(party.behavior, Some(Behavior::SilentSecondary));
        let b = &mut party.batchers[s.index()];
        match msg {
            Msg::Timer => b.on_timer(now, &mut out),
            Msg::Pull(req) => {
                if let Addr::Batcher(q, _) = from {
                    b.on_pull_request(q, req, now, &mut out);
                }
            }
            Msg::Serve(resp) => {
                if let Addr::Batcher(q, _) = from {
                    b.on_pull_response(q, resp, now, &mut out);
                }
            }
            Msg::Update(u) => b.on_ordered_update((*u).clone(), now, &mut out),
            Msg::Fetch(req) => {
                let silent = silent_party && !b.is_primary();
                let batch = b.batch_by_digest(&req.digest);
                if !silent {
                    let resp = FetchResponse {
                        req_id: req.req_id,
                        batch,
                    };
                    self.net
                        .send(now, Addr::Batcher(p, s), from, Msg::FetchReply(resp));
                }
            }
            _ => {}
        }
        self.batcher_actions(p, s, out);
        self.arm_batcher(p, s);
    }

    fn batcher_actions(&mut self, p: PartyId, s: ShardId, out: Vec<BatcherAction>) {
        let me = Addr::Batcher(p, s);
        let party = &self.parties[p.index()];
        let primary = party.batchers[s.index()].is_primary();
        let behavior = party.behavior.clone();
        if matches!(behavior, Some(Behavior::SilentSecondary)) && !primary {
            return;
        }
        for a in out {
            match a {
                BatcherAction::Pull { to, request } => {
                    self.net
                        .send(self.now, me, Addr::Batcher(to, s), Msg::Pull(request))
                }
                BatcherAction::Serve { to, response } => {
                    if let Some(Behavior::StallPrimary { serve_to }) = &behavior {
                        if !serve_to.contains(&to.0) {
                            continue;
                        }
                    }
                    self.net
                        .send(self.now, me, Addr::Batcher(to, s), Msg::Serve(response));
                }
                BatcherAction::SubmitBas(bas) => match &behavior {
                    Some(Behavior::WithholdBas | Behavior::StallPrimary { .. }) => {}
                    _ => {
                        if matches!(behavior, Some(Behavior::ReplayBas { .. })) {
                            self.parties[p.index()].sent_shares.push(bas.clone());
                        }
                        self.broadcast_consensus(me, ConsensusEvent::Bas(bas));
                    }
                },
                BatcherAction::Complain(c) => {
                    self.broadcast_consensus(me, ConsensusEvent::Complaint(c))
                }
                BatcherAction::Forward { to, txs } => {
                    self.net
                        .send(self.now, me, Addr::Router(to), Msg::Forward(txs))
                }
                BatcherAction::Persisted(_) => {}
            }
        }
    }

    fn on_consensus(&mut self, p: PartyId, msg: Msg) {
        let now = self.now;
        let mut out = Vec::new();
        let node = &mut self.parties[p.index()].consensus;
        match msg {
            Msg::ToConsensus(e) => {
                let _ = node.on_submission(e, now, &mut out);
            }
            Msg::Round(r) => node.on_round((*r).clone(), &mut out),
            Msg::Share(s) => node.on_share(s, &mut out),
            _ => {}
        }
        self.consensus_actions(p, out);
    }

    fn consensus_actions(&mut self, p: PartyId, out: Vec<ConsensusAction>) {
        let me = Addr::Consensus(p);
        let correct = self.parties[p.index()].behavior.is_none();
        for a in out {
            match a {
                ConsensusAction::Order(e) => {
                    self.net.send(self.now, me, Addr::Sequencer, Msg::Order(e))
                }
                ConsensusAction::Share(share) => {
                    for q in 0..self.parties.len() as u32 {
                        if q != p.0 {
                            let to = Addr::Consensus(PartyId(q));
                            self.net.send(self.now, me, to, Msg::Share(share.clone()));
                        }
                    }
                }
                ConsensusAction::Publish(h) => {
                    self.net
                        .send(self.now, me, Addr::Assembler(p), Msg::Header(h))
                }
                ConsensusAction::Update(u) => {
                    if correct {
                        for &(shard, term) in &u.term_changes {
                            self.metrics
                                .term_changes
                                .entry((shard.0, term.0))
                                .or_insert(self.now.0);
                        }
                    }
                    if p == self.reference {
                        let size = self.parties[p.index()].consensus.pending().len();
                        let bucket = self.now.0 / self.cfg.run.series_interval_ms;
                        let epoch = self.now.0 / self.cfg.protocol.epoch_length_ms;
                        let b = self.metrics.pending_by_bucket.entry(bucket).or_insert(0);
                        *b = (*b).max(size);
                        let e = self.metrics.pending_by_epoch.entry(epoch).or_insert(0);
                        *e = (*e).max(size);
                    }
                    let u = Arc::new(u);
                    for s in 0..self.cfg.system.shards {
                        let to = Addr::Batcher(p, ShardId(s));
                        self.net.send(self.now, me, to, Msg::Update(u.clone()));
                    }
                }
                ConsensusAction::Evidence(e) => match e {
                    Evidence::Equivocation { .. } => self.metrics.equivocations += 1,
                    Evidence::ConflictingShare { .. } => self.metrics.conflicting_shares += 1,
                    Evidence::InvalidShare { .. } => self.metrics.invalid_shares += 1,
                },
            }
        }
    }

    fn on_sequencer(&mut self, msg: Msg) {
        match msg {
            Msg::Order(e) => self.sequencer.submit(e, self.now),
            Msg::Timer => {
                if let Some(round) = self.sequencer.poll(self.now) {
                    let round = Arc::new(round);
                    for q in 0..self.parties.len() as u32 {
                        let to = Addr::Consensus(PartyId(q));
                        self.net
                            .send(self.now, Addr::Sequencer, to, Msg::Round(round.clone()));
                    }
                }
            }
            _ => {}
        }
        let d = self.sequencer.next_deadline();
        self.arm(Addr::Sequencer, d);
    }

    fn on_assembler(&mut self, p: PartyId, from: Addr, msg: Msg) {
        let now = self.now;
        let mut out = Vec::new();
        let a = &mut self.parties[p.index()].assembler;
        match msg {
            Msg::Header(h) => a.on_header(h, now, &mut out),
            Msg::FetchReply(resp) => {
                if let Addr::Batcher(q, _) = from {
                    a.on_fetch_response(q, resp, now, &mut out);
                }
            }
            Msg::Timer => a.on_timer(now, &mut out),
            _ => {}
        }
        let me = Addr::Assembler(p);
        let correct = self.parties[p.index()].behavior.is_none();
        for action in out {
            match action {
                AssemblerAction::Fetch { to, shard, request } => {
                    self.net
                        .send(now, me, Addr::Batcher(to, shard), Msg::Fetch(request))
                }
                AssemblerAction::Appended(seq) if correct => {
                    let block = &self.parties[p.index()].assembler.ledger()[seq as usize];
                    for batch in &block.batches {
                        for tx in &batch.txs {
                            if let Some(&i) = self.metrics.index.get(&tx.id()) {
                                let e = self.metrics.txs[i].commits.entry(p).or_insert((now.0, 0));
                                e.1 += 1;
                            }
                        }
                    }
                }
                AssemblerAction::Appended(_) => {}
                AssemblerAction::Rejected { .. } => self.metrics.rejected_headers += 1,
            }
        }
        self.arm_assembler(p);
    }

    fn on_adversary(&mut self, p: PartyId, msg: Msg) {
        let me = Addr::Adversary(p);
        match msg {
            Msg::Timer => {
                let interval = match &self.parties[p.index()].behavior {
                    Some(Behavior::SpuriousComplaint { interval_ms }) => interval_ms
                        .unwrap_or(self.cfg.protocol.t_complain_ms)
                        .max(1),
                    _ => return,
                };
                for s in 0..self.cfg.system.shards {
                    let party = &self.parties[p.index()];
                    let term = party.batchers[s as usize].term();
                    let vote = ComplaintVote::new_signed(p, term, ShardId(s), &party.key);
                    self.broadcast_consensus(me, ConsensusEvent::Complaint(vote));
                }
                let proto = &self.cfg.protocol;
                let horizon = self.workload_end + 2 * (proto.t_forward_ms + proto.t_complain_ms);
                if self.now.0 < horizon {
                    self.net
                        .schedule(self.now.plus_ms(interval), me, me, Msg::Timer);
                }
            }
            Msg::Replay => {
                let shares = self.parties[p.index()].sent_shares.clone();
                for bas in shares {
                    self.net.send(
                        self.now,
                        me,
                        Addr::Sequencer,
                        Msg::Order(ConsensusEvent::Bas(bas)),
                    );
                }
            }
            _ => {}
        }
    }

    fn finish(self, complete: bool) -> RunOutput {
        let correct: Vec<PartyId> = self
            .parties
            .iter()
            .filter(|p| p.behavior.is_none())
            .map(|p| p.id)
            .collect();
        let ledgers: Vec<(PartyId, Vec<Block>)> = correct
            .iter()
            .map(|p| (*p, self.parties[p.index()].assembler.ledger().to_vec()))
            .collect();
        let mut stats = report::ProtocolStats::default();
        for p in self.parties.iter().filter(|p| p.behavior.is_none()) {
            for b in &p.batchers {
                let s = b.stats();
                stats.batches_cut += s.batches_cut;
                stats.complaints += s.complaints;
                stats.forwarded_txs += s.forwarded_txs;
                stats.rebases += s.rebases;
                stats.reproposed_txs += s.reproposed_txs;
            }
            let c = p.consensus.stats();
            stats.rounds = stats.rounds.max(c.rounds);
            stats.orphans += c.orphans;
            stats.purged += c.purged;
            stats.dropped_shares += c.dropped_pre_order + c.dropped_post_order;
            stats.fetches += p.assembler.fetches_sent();
        }
        stats.equivocations = self.metrics.equivocations;
        stats.conflicting_shares = self.metrics.conflicting_shares;
        stats.invalid_shares = self.metrics.invalid_shares;
        stats.rejected_headers = self.metrics.rejected_headers;
        stats.router_rejections = self.metrics.router_rejections;
        stats.messages_sent = self.net.sent;
        stats.messages_dropped = self.net.dropped;
        let report = report::build(
            &self.cfg,
            complete,
            self.now.0,
            &correct,
            &self.metrics,
            &ledgers,
            stats,
        );
        RunOutput {
            report,
            ledgers,
            public_keys: (*self.public_keys).clone(),
            clients: self.client_dir,
        }
    }
}

/// Builds, runs and checks one scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    let world = World::new(cfg.clone())?;
    let mut out = world.run();
    let verdicts = crate::checks::evaluate(cfg, &out);
    out.report.verdicts = verdicts;
    Ok(out)
}
