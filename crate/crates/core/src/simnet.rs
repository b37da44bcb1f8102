//! Deterministic in-process cluster simulation.
//!
//! Logical nodes exchange coordinator messages over FIFO channels with a
//! configurable round-trip time, driven by a single-threaded discrete-event
//! loop over a virtual clock. Node worker parallelism is modeled in virtual
//! time through the schedule planner; durable state is real files under a
//! per-node directory, so a crash is volatile-state disposal and nothing
//! else. Identical seeds and configs reproduce identical runs, byte for
//! byte.
//!
//! Epoch pipeline per node: resolution (decompose, split, build graphs, send
//! subgraphs) happens at admission; the local phase executes immediately;
//! the distributed phase executes once every peer's subgraph (or empty
//! marker) arrived and merged; one group flush per epoch makes everything
//! durable before any commit is reported. Epoch k+1's resolution overlaps
//! epoch k's execution, bounded by the in-flight window.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::coordinator::{merge_subgraphs, partition_graph, resolve_batch, Subgraph, WireMessage};
use crate::depgraph::{derive_schedules, DependencyGraph, EdgeKind};
use crate::durability::{
    emit_aries_records, emit_coarse_records, emit_fine_records, transform_to_txn_graph,
    ActiveTxnTable, FlushReceipt, LogMode, LogRecord, NodeStorage, TxnLogInfo, VertexLogInfo,
};
use crate::error::{EngineError, Result};
use crate::executor::{apply_plan, plan_schedule_times, seam_edges, ExecutionPlan};
use crate::proc::ProcedureRegistry;
use crate::recovery::{
    dependency_closure, load_and_prune, load_node_logs, rebuild_replay_graph, PhaseReport,
    ReplayGraph,
};
use crate::store::{ActionEffect, Store};
use crate::txn::{EpochId, KeyOwnership, NodeId, Transaction, TxnId};
use crate::workload::Workload;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub nodes: u32,
    /// Round-trip network latency in virtual units; one-way delivery takes
    /// rtt/2 plus the per-message overhead.
    pub rtt: u64,
    pub msg_overhead: u64,
    pub seed: u64,
    /// Execution workers per node.
    pub workers: usize,
    /// Graph constructors per node (key shards during resolution).
    pub constructors: usize,
    /// Epochs allowed in flight (resolution of k+1 overlaps execution of k).
    pub pipeline_window: u64,
    /// Virtual cost of executing one record action.
    pub per_action_cost: u64,
    /// Virtual delay between execution completion and durability.
    pub flush_latency: u64,
    /// Recovery costs per snapshot record / log record / replayed vertex.
    pub data_load_cost: u64,
    pub log_load_cost: u64,
    pub replay_cost: u64,
    pub ticks_per_second: u64,
    pub logging: LogMode,
    /// Write a checkpoint every this many epochs (0 = only the initial one).
    pub checkpoint_every: u64,
    /// Interval between on-demand transactions injected at a recovering
    /// node (0 = none).
    pub on_demand_interval: u64,
    /// Record a store digest at every flush (transcript oracles; costs a full
    /// store hash per epoch).
    pub record_flush_digests: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            nodes: 1,
            rtt: 100,
            msg_overhead: 0,
            seed: 1,
            workers: 4,
            constructors: 4,
            pipeline_window: 2,
            per_action_cost: 1,
            flush_latency: 5,
            data_load_cost: 1,
            log_load_cost: 1,
            replay_cost: 1,
            ticks_per_second: 1000,
            logging: LogMode::Fine,
            checkpoint_every: 0,
            on_demand_interval: 0,
            record_flush_digests: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Event {
    AdmitEpoch { epoch: EpochId },
    LocalExecDone { node: NodeId, inc: u64, epoch: EpochId },
    DistExecDone { node: NodeId, inc: u64, epoch: EpochId },
    FlushDone { node: NodeId, inc: u64, epoch: EpochId },
    Deliver { dest: NodeId, origin: NodeId, bytes: Vec<u8> },
    DeliverFailed { origin: NodeId, dest: NodeId, epoch: EpochId },
    Crash { node: NodeId, restart: bool },
    Restart { node: NodeId },
    ReplayStart { node: NodeId, inc: u64 },
    ReplayTick { node: NodeId, inc: u64 },
    OnDemandArrive { node: NodeId, inc: u64, index: u64 },
}

impl Event {
    fn tag(&self) -> u8 {
        match self {
            Event::AdmitEpoch { .. } => 0,
            Event::LocalExecDone { .. } => 1,
            Event::DistExecDone { .. } => 2,
            Event::FlushDone { .. } => 3,
            Event::Deliver { .. } => 4,
            Event::DeliverFailed { .. } => 5,
            Event::Crash { .. } => 6,
            Event::Restart { .. } => 7,
            Event::ReplayStart { .. } => 8,
            Event::ReplayTick { .. } => 9,
            Event::OnDemandArrive { .. } => 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    time: u64,
    seq: u64,
    event: Event,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    Resolved,
    LocalRunning,
    LocalDone,
    DistRunning,
    DistDone,
    Flushed,
}

struct NodeEpoch {
    admit_at: u64,
    local_graph: DependencyGraph,
    local_plan: ExecutionPlan,
    kept: Subgraph,
    pending_subgraphs: BTreeSet<NodeId>,
    remotes: Vec<Subgraph>,
    merged: Option<MergedPhase>,
    phase: Phase,
    local_effects: Vec<(usize, ActionEffect)>,
    dist_effects: Vec<(usize, ActionEffect)>,
    /// Peers we sent non-empty subgraphs to; their EPOCH_DONE gates this
    /// epoch's distributed commits.
    participants: BTreeSet<NodeId>,
    /// Whether any non-empty subgraph was sent or received this epoch.
    dist_involved: bool,
    done_from: BTreeSet<NodeId>,
    settled: bool,
    parked: bool,
    local_txns: Vec<Transaction>,
    dist_txns: Vec<Transaction>,
}

struct MergedPhase {
    graph: DependencyGraph,
    seams: Vec<(usize, usize)>,
    plan: ExecutionPlan,
}

/// Size-one-batch transactions admitted during recovery.
const ON_DEMAND_SEQ: u32 = 0;

struct PendingOnDemand {
    txn: Transaction,
    epoch_id: EpochId,
    arrived_at: u64,
    closure: BTreeSet<usize>,
}

struct RecoveryRun {
    snapshot_len: usize,
    graph: Option<ReplayGraph>,
    aries_records: Vec<crate::durability::AriesLogRecord>,
    aries_pos: usize,
    done: Vec<bool>,
    claimed: Vec<bool>,
    ready_claimed: BTreeSet<usize>,
    ready_normal: BTreeSet<usize>,
    indeg: Vec<usize>,
    store: Store,
    replayed: usize,
    total: usize,
    started_at: u64,
    replay_started_at: u64,
    data_wall: std::time::Duration,
    log_wall: std::time::Duration,
    replay_wall_start: std::time::Instant,
    pending: Vec<PendingOnDemand>,
    max_durable_lsn: u64,
    log_records: usize,
}

struct SimNode {
    alive: bool,
    inc: u64,
    store: Store,
    storage: NodeStorage,
    lsn: u64,
    table: ActiveTxnTable,
    epochs: BTreeMap<EpochId, NodeEpoch>,
    free_at: u64,
    recovery: Option<RecoveryRun>,
    queued_on_demand: VecDeque<(Transaction, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommitRecord {
    pub txn: TxnId,
    pub at: u64,
    pub latency: u64,
    pub distributed: bool,
    pub on_demand: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RecoveryReport {
    pub node: NodeId,
    pub started: u64,
    pub finished: u64,
    pub phases: Vec<PhaseReport>,
    pub replayed: usize,
    pub on_demand_commits: usize,
}

impl RecoveryReport {
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for p in &self.phases {
            out.push_str(&p.to_json_line());
            out.push('\n');
        }
        out
    }
}

#[derive(Default)]
pub struct RunStats {
    pub commits: Vec<CommitRecord>,
    pub flushed_epochs: BTreeMap<NodeId, Vec<EpochId>>,
    pub flush_digests: BTreeMap<NodeId, Vec<(EpochId, [u8; 32])>>,
    pub flush_receipts: Vec<(NodeId, FlushReceipt)>,
    /// SUBGRAPH messages sent, per (epoch, origin node).
    pub subgraph_msgs: BTreeMap<(EpochId, NodeId), u32>,
    pub messages_sent: u64,
    pub dropped_messages: u64,
    /// Sum of message flight times per epoch, across all coordinator
    /// messages of that epoch.
    pub epoch_flight: BTreeMap<EpochId, u64>,
    pub epoch_dist_txns: BTreeMap<EpochId, u64>,
    pub admit_times: BTreeMap<EpochId, u64>,
    pub recovery: Vec<RecoveryReport>,
    pub on_demand_txns: BTreeMap<EpochId, Transaction>,
    pub settled_epochs: u64,
}

impl RunStats {
    /// Mean amortized messaging latency per distributed transaction: for each
    /// epoch with distributed work, the summed flight time of its coordinator
    /// messages divided by its distributed transaction count.
    pub fn amortized_messaging_latency(&self) -> Option<f64> {
        let mut total = 0.0;
        let mut epochs = 0usize;
        for (epoch, &flight) in &self.epoch_flight {
            let n = self.epoch_dist_txns.get(epoch).copied().unwrap_or(0);
            if n > 0 {
                total += flight as f64 / n as f64;
                epochs += 1;
            }
        }
        (epochs > 0).then(|| total / epochs as f64)
    }
}

pub struct Sim {
    cfg: SimConfig,
    workload: Box<dyn Workload>,
    ownership: crate::workload::Ownership,
    registry: Arc<ProcedureRegistry>,
    clock: u64,
    seq: u64,
    events: BinaryHeap<Reverse<Entry>>,
    nodes: Vec<SimNode>,
    next_admit: EpochId,
    target_epochs: EpochId,
    settle_counts: BTreeMap<EpochId, u32>,
    settled_watermark: EpochId,
    paused: BTreeSet<NodeId>,
    pending_boundary_crash: Option<(NodeId, u64, bool)>,
    on_demand_index: u64,
    stats: RunStats,
    trace: Sha256,
}

impl Sim {
    /// Build the cluster: seed every node's store from the workload and write
    /// the initial snapshot (watermark 0) so recovery always has a baseline.
    pub fn new(cfg: SimConfig, workload: Box<dyn Workload>, data_root: PathBuf) -> Result<Sim> {
        if cfg.nodes == 0 || cfg.workers == 0 {
            return Err(EngineError::InvalidConfig("nodes and workers must be >= 1".into()));
        }
        let mut registry = ProcedureRegistry::new();
        workload.register_procedures(&mut registry)?;
        let ownership = workload.ownership();
        let mut nodes = Vec::with_capacity(cfg.nodes as usize);
        for id in 0..cfg.nodes {
            let storage = NodeStorage::new(data_root.join(format!("node{id}")), id)?;
            let store = workload.seed_store(id);
            storage.write_checkpoint(&store, 0)?;
            nodes.push(SimNode {
                alive: true,
                inc: 0,
                store,
                storage,
                lsn: 1,
                table: ActiveTxnTable::default(),
                epochs: BTreeMap::new(),
                free_at: 0,
                recovery: None,
                queued_on_demand: VecDeque::new(),
            });
        }
        Ok(Sim {
            cfg,
            workload,
            ownership,
            registry: Arc::new(registry),
            clock: 0,
            seq: 0,
            events: BinaryHeap::new(),
            nodes,
            next_admit: 0,
            target_epochs: 0,
            settle_counts: BTreeMap::new(),
            settled_watermark: 0,
            paused: BTreeSet::new(),
            pending_boundary_crash: None,
            on_demand_index: 0,
            stats: RunStats::default(),
            trace: Sha256::new(),
        })
    }

    pub fn now(&self) -> u64 {
        self.clock
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &ProcedureRegistry {
        &self.registry
    }

    pub fn node_store(&self, node: NodeId) -> &Store {
        &self.nodes[node as usize].store
    }

    pub fn node_storage(&self, node: NodeId) -> &NodeStorage {
        &self.nodes[node as usize].storage
    }

    pub fn node_alive(&self, node: NodeId) -> bool {
        self.nodes[node as usize].alive
    }

    pub fn trace_digest(&self) -> [u8; 32] {
        self.trace.clone().finalize().into()
    }

    pub fn workload(&self) -> &dyn Workload {
        self.workload.as_ref()
    }

    pub fn settled_epochs(&self) -> u64 {
        self.settled_watermark
    }

    fn push(&mut self, time: u64, event: Event) {
        self.seq += 1;
        self.events.push(Reverse(Entry { time, seq: self.seq, event }));
    }

    /// Schedule a crash at an exact tick. With `restart` the node begins
    /// recovery immediately after failing.
    pub fn inject_crash_at(&mut self, tick: u64, node: NodeId, restart: bool) {
        self.push(tick.max(self.clock), Event::Crash { node, restart });
    }

    /// Schedule a crash at the first fully-settled epoch boundary at or after
    /// `tick` (no epochs in flight anywhere in the cluster).
    pub fn inject_crash_at_boundary(&mut self, tick: u64, node: NodeId, restart: bool) {
        self.pending_boundary_crash = Some((node, tick, restart));
        self.maybe_boundary_crash();
    }

    /// Run until `epochs` epochs are settled cluster-wide (or no progress is
    /// possible, e.g. after an unrecovered crash).
    pub fn run_to_settled(&mut self, epochs: u64) -> Result<()> {
        self.target_epochs = self.target_epochs.max(epochs);
        self.schedule_admissions();
        while self.settled_watermark < self.target_epochs {
            if !self.step()? {
                break;
            }
        }
        Ok(())
    }

    /// Run until the virtual clock passes `until`, admitting epochs as the
    /// pipeline window frees.
    pub fn run_until(&mut self, until: u64) -> Result<()> {
        self.target_epochs = EpochId::MAX;
        self.schedule_admissions();
        loop {
            match self.events.peek() {
                Some(Reverse(e)) if e.time <= until => {
                    self.step()?;
                }
                _ => break,
            }
        }
        self.clock = self.clock.max(until);
        Ok(())
    }

    /// Drain every scheduled event (admissions stop at the current target).
    pub fn drain(&mut self) -> Result<()> {
        while self.step()? {}
        Ok(())
    }

    fn step(&mut self) -> Result<bool> {
        let Some(Reverse(entry)) = self.events.pop() else {
            return Ok(false);
        };
        debug_assert!(entry.time >= self.clock, "virtual time must not run backwards");
        self.clock = entry.time;
        self.trace_event(&entry);
        match entry.event {
            Event::AdmitEpoch { epoch } => self.on_admit(epoch)?,
            Event::LocalExecDone { node, inc, epoch } => {
                if self.live(node, inc) {
                    self.on_local_done(node, epoch)?;
                }
            }
            Event::DistExecDone { node, inc, epoch } => {
                if self.live(node, inc) {
                    self.on_dist_done(node, epoch)?;
                }
            }
            Event::FlushDone { node, inc, epoch } => {
                if self.live(node, inc) {
                    self.on_flush(node, epoch)?;
                }
            }
            Event::Deliver { dest, origin, bytes } => self.on_deliver(dest, origin, bytes)?,
            Event::DeliverFailed { origin, dest, epoch } => {
                self.stats.dropped_messages += 1;
                let node = &mut self.nodes[origin as usize];
                if let Some(ep) = node.epochs.get_mut(&epoch) {
                    ep.parked = true;
                    ep.pending_subgraphs.remove(&dest);
                }
            }
            Event::Crash { node, restart } => self.on_crash(node, restart),
            Event::Restart { node } => self.on_restart(node)?,
            Event::ReplayStart { node, inc } => {
                if self.recovering(node, inc) {
                    self.on_replay_start(node)?;
                }
            }
            Event::ReplayTick { node, inc } => {
                if self.recovering(node, inc) {
                    self.on_replay_tick(node)?;
                }
            }
            Event::OnDemandArrive { node, inc, index } => {
                if self.recovering(node, inc) {
                    self.on_on_demand(node, index)?;
                }
            }
        }
        Ok(true)
    }

    fn live(&self, node: NodeId, inc: u64) -> bool {
        let n = &self.nodes[node as usize];
        n.alive && n.inc == inc
    }

    fn recovering(&self, node: NodeId, inc: u64) -> bool {
        let n = &self.nodes[node as usize];
        !n.alive && n.inc == inc && n.recovery.is_some()
    }

    fn trace_event(&mut self, entry: &Entry) {
        self.trace.update(entry.time.to_le_bytes());
        self.trace.update([entry.event.tag()]);
        if let Event::Deliver { bytes, origin, dest } = &entry.event {
            self.trace.update(origin.to_le_bytes());
            self.trace.update(dest.to_le_bytes());
            self.trace.update((bytes.len() as u64).to_le_bytes());
            self.trace.update(bytes);
        }
    }

    // ------------------------------------------------------------------
    // Admission and resolution
    // ------------------------------------------------------------------

    fn schedule_admissions(&mut self) {
        if !self.paused.is_empty() {
            return;
        }
        while self.next_admit < self.target_epochs
            && self.next_admit < self.settled_watermark + self.cfg.pipeline_window
        {
            let epoch = self.next_admit;
            self.next_admit += 1;
            self.push(self.clock, Event::AdmitEpoch { epoch });
        }
    }

    fn on_admit(&mut self, epoch_id: EpochId) -> Result<()> {
        let batch = self.workload.epoch(epoch_id)?;
        let dist_count = {
            let mut n = 0u64;
            for t in &batch.txns {
                if !t.is_local(&self.ownership)? {
                    n += 1;
                }
            }
            n
        };
        self.stats.admit_times.insert(epoch_id, self.clock);
        self.stats.epoch_dist_txns.insert(epoch_id, dist_count);
        for node_id in 0..self.cfg.nodes {
            if self.nodes[node_id as usize].alive {
                self.admit_on_node(node_id, &batch)?;
            }
        }
        Ok(())
    }

    fn admit_on_node(&mut self, node_id: NodeId, batch: &crate::txn::BatchEpoch) -> Result<()> {
        let resolved: crate::coordinator::ResolvedBatch = resolve_batch(
            batch,
            node_id,
            &self.registry,
            &self.ownership,
            self.cfg.constructors,
        )?;
        let local_schedules = derive_schedules(&resolved.local_graph, self.cfg.workers)?;
        let local_plan =
            plan_schedule_times(&resolved.local_graph, &local_schedules, self.cfg.per_action_cost);

        let mut parts = partition_graph(node_id, &resolved.dist_graph);
        let kept = parts.remove(&node_id).unwrap_or_else(|| Subgraph {
            origin: node_id,
            dest: node_id,
            epoch: batch.id,
            vertices: Vec::new(),
            edges: Vec::new(),
            cross_edges: Vec::new(),
        });
        let mut participants = BTreeSet::new();
        let mut dist_involved = !kept.is_empty();
        for peer in 0..self.cfg.nodes {
            if peer == node_id {
                continue;
            }
            let msg = match parts.remove(&peer) {
                Some(sub) if !sub.is_empty() => {
                    participants.insert(peer);
                    dist_involved = true;
                    *self.stats.subgraph_msgs.entry((batch.id, node_id)).or_default() += 1;
                    WireMessage::Subgraph(sub)
                }
                _ => WireMessage::EpochEmpty { epoch: batch.id, origin: node_id },
            };
            self.send(node_id, peer, msg, batch.id);
        }

        let pending_subgraphs: BTreeSet<NodeId> =
            (0..self.cfg.nodes).filter(|&p| p != node_id).collect();
        let epoch = NodeEpoch {
            admit_at: self.clock,
            local_graph: resolved.local_graph,
            local_plan,
            kept,
            pending_subgraphs,
            remotes: Vec::new(),
            merged: None,
            phase: Phase::Resolved,
            local_effects: Vec::new(),
            dist_effects: Vec::new(),
            participants,
            dist_involved,
            done_from: BTreeSet::new(),
            settled: false,
            parked: false,
            local_txns: resolved.local_txns,
            dist_txns: resolved.dist_txns,
        };
        self.nodes[node_id as usize].epochs.insert(batch.id, epoch);
        self.try_merge(node_id, batch.id)?;
        self.try_advance(node_id)?;
        Ok(())
    }

    fn send(&mut self, origin: NodeId, dest: NodeId, msg: WireMessage, epoch: EpochId) {
        let flight = self.cfg.rtt / 2 + self.cfg.msg_overhead;
        *self.stats.epoch_flight.entry(epoch).or_default() += flight;
        self.stats.messages_sent += 1;
        let bytes = msg.encode();
        self.push(self.clock + flight, Event::Deliver { dest, origin, bytes });
    }

    fn on_deliver(&mut self, dest: NodeId, origin: NodeId, bytes: Vec<u8>) -> Result<()> {
        let msg = WireMessage::decode(&bytes)?;
        let epoch = msg.epoch();
        if !self.nodes[dest as usize].alive {
            // Dropped; the origin learns after a timeout.
            self.push(
                self.clock + self.cfg.rtt / 2,
                Event::DeliverFailed { origin, dest, epoch },
            );
            return Ok(());
        }
        let node = &mut self.nodes[dest as usize];
        let Some(ep) = node.epochs.get_mut(&epoch) else {
            return Ok(());
        };
        match msg {
            WireMessage::Subgraph(sub) => {
                ep.pending_subgraphs.remove(&origin);
                ep.dist_involved = true;
                ep.remotes.push(sub);
                self.try_merge(dest, epoch)?;
                self.try_advance(dest)?;
            }
            WireMessage::EpochEmpty { origin: o, .. } => {
                ep.pending_subgraphs.remove(&o);
                self.try_merge(dest, epoch)?;
                self.try_advance(dest)?;
            }
            WireMessage::EpochDone { origin: o, .. } => {
                ep.done_from.insert(o);
                self.check_settle(dest, epoch)?;
            }
        }
        Ok(())
    }

    fn try_merge(&mut self, node_id: NodeId, epoch: EpochId) -> Result<()> {
        let workers = self.cfg.workers;
        let cost = self.cfg.per_action_cost;
        let node = &mut self.nodes[node_id as usize];
        let Some(ep) = node.epochs.get_mut(&epoch) else {
            return Ok(());
        };
        if ep.merged.is_some() || !ep.pending_subgraphs.is_empty() {
            return Ok(());
        }
        let graph = merge_subgraphs(&ep.kept, &ep.remotes)?;
        let seams = seam_edges(&ep.local_graph, &graph);
        let schedules = derive_schedules(&graph, workers)?;
        let plan = plan_schedule_times(&graph, &schedules, cost);
        ep.merged = Some(MergedPhase { graph, seams, plan });
        Ok(())
    }

    /// Advance the strictly epoch-ordered execution pipeline of one node.
    fn try_advance(&mut self, node_id: NodeId) -> Result<()> {
        let now = self.clock;
        let node = &mut self.nodes[node_id as usize];
        if !node.alive {
            return Ok(());
        }
        let inc = node.inc;
        // The lowest not-fully-executed epoch is the only one allowed to run.
        let Some((&epoch, ep)) = node.epochs.iter_mut().find(|(_, e)| e.phase < Phase::DistDone)
        else {
            return Ok(());
        };
        match ep.phase {
            Phase::Resolved => {
                let start = now.max(node.free_at);
                let finish = start + ep.local_plan.makespan;
                node.free_at = finish;
                ep.phase = Phase::LocalRunning;
                self.push(finish, Event::LocalExecDone { node: node_id, inc, epoch });
            }
            Phase::LocalDone => {
                if let Some(merged) = &ep.merged {
                    let start = now.max(node.free_at);
                    let finish = start + merged.plan.makespan;
                    node.free_at = finish;
                    ep.phase = Phase::DistRunning;
                    self.push(finish, Event::DistExecDone { node: node_id, inc, epoch });
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn on_local_done(&mut self, node_id: NodeId, epoch: EpochId) -> Result<()> {
        let node = &mut self.nodes[node_id as usize];
        let ep = node.epochs.get_mut(&epoch).expect("epoch state present");
        debug_assert_eq!(ep.phase, Phase::LocalRunning);
        ep.local_effects = apply_plan(&mut node.store, &ep.local_graph, &ep.local_plan)?;
        ep.phase = Phase::LocalDone;
        self.try_merge(node_id, epoch)?;
        self.try_advance(node_id)
    }

    fn on_dist_done(&mut self, node_id: NodeId, epoch: EpochId) -> Result<()> {
        let inc;
        {
            let node = &mut self.nodes[node_id as usize];
            inc = node.inc;
            let ep = node.epochs.get_mut(&epoch).expect("epoch state present");
            debug_assert_eq!(ep.phase, Phase::DistRunning);
            let merged = ep.merged.as_ref().expect("merged phase present");
            ep.dist_effects = apply_plan(&mut node.store, &merged.graph, &merged.plan)?;
            ep.phase = Phase::DistDone;
        }
        self.push(
            self.clock + self.cfg.flush_latency,
            Event::FlushDone { node: node_id, inc, epoch },
        );
        // The next epoch's execution may begin while this one flushes.
        self.try_advance(node_id)
    }

    // ------------------------------------------------------------------
    // Durability and commit reporting
    // ------------------------------------------------------------------

    fn on_flush(&mut self, node_id: NodeId, epoch: EpochId) -> Result<()> {
        let workers = self.cfg.workers;
        let mode = self.cfg.logging;
        let now = self.clock;

        let node = &mut self.nodes[node_id as usize];
        let ep = node.epochs.get_mut(&epoch).expect("epoch state present");
        debug_assert_eq!(ep.phase, Phase::DistDone);

        if mode != LogMode::None {
            let (vertices, txns, txn_events) = build_log_inputs(node_id, ep);
            let mut buffers: Vec<Vec<LogRecord>> = vec![Vec::new(); workers];
            match mode {
                LogMode::Fine => {
                    for (worker, rec) in emit_fine_records(&vertices, workers, &mut node.lsn) {
                        buffers[worker].push(LogRecord::Fine(rec));
                    }
                }
                LogMode::Coarse => {
                    let txn_ids = txns.iter().map(|t| t.id);
                    let graph = transform_to_txn_graph(txn_ids, txn_events);
                    for (worker, rec) in
                        emit_coarse_records(&txns, &graph, &vertices, &mut node.lsn)
                    {
                        buffers[worker].push(LogRecord::Coarse(rec));
                    }
                }
                LogMode::Aries => {
                    for (worker, rec) in emit_aries_records(&vertices, workers, &mut node.lsn) {
                        buffers[worker].push(LogRecord::Aries(rec));
                    }
                }
                LogMode::None => unreachable!(),
            }
            let receipt = node.storage.flush_epoch(epoch, mode, &buffers, &mut node.table)?;
            self.stats.flush_receipts.push((node_id, receipt));
        }
        ep.phase = Phase::Flushed;
        self.stats.flushed_epochs.entry(node_id).or_default().push(epoch);
        if self.cfg.record_flush_digests {
            let digest = node.store.digest();
            self.stats.flush_digests.entry(node_id).or_default().push((epoch, digest));
        }

        // Durable: local commits report now; distributed work is announced.
        let admit = ep.admit_at;
        let mut commits = Vec::new();
        for t in &ep.local_txns {
            commits.push(CommitRecord {
                txn: t.id,
                at: now,
                latency: now - admit,
                distributed: false,
                on_demand: false,
            });
        }
        let dist_involved = ep.dist_involved;
        self.stats.commits.extend(commits);

        if dist_involved {
            for peer in 0..self.cfg.nodes {
                if peer != node_id {
                    self.send(
                        node_id,
                        peer,
                        WireMessage::EpochDone { epoch, origin: node_id },
                        epoch,
                    );
                }
            }
        }

        if self.cfg.checkpoint_every > 0 && (epoch + 1) % self.cfg.checkpoint_every == 0 {
            let node = &self.nodes[node_id as usize];
            node.storage.write_checkpoint(&node.store, epoch + 1)?;
        }

        self.check_settle(node_id, epoch)
    }

    fn check_settle(&mut self, node_id: NodeId, epoch: EpochId) -> Result<()> {
        let now = self.clock;
        let node = &mut self.nodes[node_id as usize];
        let Some(ep) = node.epochs.get_mut(&epoch) else {
            return Ok(());
        };
        if ep.settled || ep.phase != Phase::Flushed {
            return Ok(());
        }
        if !ep.participants.is_subset(&ep.done_from) {
            return Ok(());
        }
        ep.settled = true;
        let admit = ep.admit_at;
        for t in &ep.dist_txns {
            self.stats.commits.push(CommitRecord {
                txn: t.id,
                at: now,
                latency: now - admit,
                distributed: true,
                on_demand: false,
            });
        }
        // Epoch state can be retired; durable artifacts carry it from here.
        node.epochs.remove(&epoch);
        self.note_settled(epoch);
        Ok(())
    }

    fn note_settled(&mut self, epoch: EpochId) {
        let count = self.settle_counts.entry(epoch).or_default();
        *count += 1;
        if *count == self.cfg.nodes {
            self.stats.settled_epochs += 1;
            while self
                .settle_counts
                .get(&self.settled_watermark)
                .map(|&c| c == self.cfg.nodes)
                .unwrap_or(false)
            {
                self.settle_counts.remove(&self.settled_watermark);
                self.settled_watermark += 1;
            }
            self.maybe_boundary_crash();
            self.schedule_admissions();
        }
    }

    /// Fire a pending boundary crash synchronously, so admissions scheduled
    /// in the same instant already see the pause.
    fn maybe_boundary_crash(&mut self) {
        let Some((node, not_before, restart)) = self.pending_boundary_crash else {
            return;
        };
        if self.clock >= not_before && self.settled_watermark == self.next_admit {
            self.pending_boundary_crash = None;
            self.on_crash(node, restart);
        }
    }

    // ------------------------------------------------------------------
    // Failure and recovery
    // ------------------------------------------------------------------

    fn on_crash(&mut self, node_id: NodeId, restart: bool) {
        let node = &mut self.nodes[node_id as usize];
        if !node.alive && node.recovery.is_none() && !restart {
            return;
        }
        node.alive = false;
        node.inc += 1;
        node.store = Store::new();
        node.epochs.clear();
        node.table = ActiveTxnTable::default();
        node.recovery = None;
        node.free_at = 0;
        self.paused.insert(node_id);
        if restart {
            self.push(self.clock, Event::Restart { node: node_id });
        }
    }

    pub fn crash_now(&mut self, node_id: NodeId, restart: bool) {
        self.on_crash(node_id, restart);
    }

    fn on_restart(&mut self, node_id: NodeId) -> Result<()> {
        let mode = self.cfg.logging;
        let now = self.clock;
        let node = &mut self.nodes[node_id as usize];
        if node.alive {
            return Ok(());
        }
        let inc = node.inc;

        let t0 = std::time::Instant::now();
        let (snapshot, watermark) = node.storage.load_checkpoint()?;
        let data_wall = t0.elapsed();
        let snapshot_len = snapshot.len();

        let t1 = std::time::Instant::now();
        let (graph, aries_records, max_lsn, log_records) = if mode == LogMode::None {
            (None, Vec::new(), 0, 0)
        } else {
            let loaded = load_node_logs(&node.storage, mode)?;
            let max_lsn = loaded.records.iter().map(|r| r.lsn()).max().unwrap_or(0);
            let committed = load_and_prune(loaded, mode, watermark)?;
            let count = committed.records.len();
            match mode {
                LogMode::Aries => {
                    let mut records: Vec<crate::durability::AriesLogRecord> = committed
                        .records
                        .into_iter()
                        .filter_map(|r| match r {
                            LogRecord::Aries(a) => Some(a),
                            _ => None,
                        })
                        .collect();
                    records.sort_by_key(|r| r.lsn);
                    (None, records, max_lsn, count)
                }
                _ => {
                    let graph = rebuild_replay_graph(&committed, &self.registry, node_id)?;
                    (Some(graph), Vec::new(), max_lsn, count)
                }
            }
        };
        let log_wall = t1.elapsed();

        let (done, claimed, indeg, ready_normal, total) = match &graph {
            Some(g) => {
                let n = g.vertex_count();
                let indeg: Vec<usize> = (0..n).map(|v| g.preds[v].len()).collect();
                let ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
                (vec![false; n], vec![false; n], indeg, ready, n)
            }
            None => (Vec::new(), Vec::new(), Vec::new(), BTreeSet::new(), aries_records.len()),
        };

        node.recovery = Some(RecoveryRun {
            snapshot_len,
            graph,
            aries_records,
            aries_pos: 0,
            done,
            claimed,
            ready_claimed: BTreeSet::new(),
            ready_normal,
            indeg,
            store: snapshot,
            replayed: 0,
            total,
            started_at: now,
            replay_started_at: 0,
            data_wall,
            log_wall,
            replay_wall_start: std::time::Instant::now(),
            pending: Vec::new(),
            max_durable_lsn: max_lsn,
            log_records,
        });

        let load_units = snapshot_len as u64 * self.cfg.data_load_cost
            + log_records as u64 * self.cfg.log_load_cost;
        self.push(now + load_units, Event::ReplayStart { node: node_id, inc });
        if self.cfg.on_demand_interval > 0 {
            self.push(
                now + self.cfg.on_demand_interval,
                Event::OnDemandArrive { node: node_id, inc, index: self.on_demand_index },
            );
            self.on_demand_index += 1;
        }
        Ok(())
    }

    fn on_replay_start(&mut self, node_id: NodeId) -> Result<()> {
        let node = &mut self.nodes[node_id as usize];
        let run = node.recovery.as_mut().expect("recovery in progress");
        run.replay_started_at = self.clock;
        run.replay_wall_start = std::time::Instant::now();
        if run.total == 0 {
            self.complete_recovery(node_id)
        } else {
            let inc = node.inc;
            self.push(self.clock + self.cfg.replay_cost, Event::ReplayTick { node: node_id, inc });
            Ok(())
        }
    }

    fn on_replay_tick(&mut self, node_id: NodeId) -> Result<()> {
        let workers = self.cfg.workers;
        let mode = self.cfg.logging;
        let registry = Arc::clone(&self.registry);
        let now = self.clock;

        let node = &mut self.nodes[node_id as usize];
        let inc = node.inc;
        let run = node.recovery.as_mut().expect("recovery in progress");

        if mode == LogMode::Aries {
            // Deliberately serial baseline: one record per tick.
            if run.aries_pos < run.aries_records.len() {
                let r = &run.aries_records[run.aries_pos];
                let created = run.store.get(&r.target).is_none();
                run.store.install_image(&r.target, &r.after, created)?;
                run.aries_pos += 1;
                run.replayed += 1;
            }
            if run.aries_pos == run.aries_records.len() {
                return self.complete_recovery(node_id);
            }
            self.push(now + self.cfg.replay_cost, Event::ReplayTick { node: node_id, inc });
            return Ok(());
        }

        let graph = run.graph.as_ref().expect("replay graph present");
        for _ in 0..workers {
            let v = match run.ready_claimed.pop_first() {
                Some(v) => v,
                None => match run.ready_normal.pop_first() {
                    Some(v) => v,
                    None => break,
                },
            };
            crate::recovery::apply_replay_record(
                &mut run.store,
                &graph.vertices[v].record,
                &registry,
            )?;
            run.done[v] = true;
            run.replayed += 1;
            for &s in &graph.succs[v] {
                run.indeg[s] -= 1;
                if run.indeg[s] == 0 {
                    if run.claimed[s] {
                        run.ready_claimed.insert(s);
                    } else {
                        run.ready_normal.insert(s);
                    }
                }
            }
        }

        // Release any on-demand transaction whose dependency closure has
        // fully replayed.
        let mut released = Vec::new();
        let mut i = 0;
        while i < run.pending.len() {
            let done = &run.done;
            run.pending[i].closure.retain(|&v| !done[v]);
            if run.pending[i].closure.is_empty() {
                released.push(run.pending.remove(i));
            } else {
                i += 1;
            }
        }
        for pending in released {
            self.execute_on_demand(node_id, pending, now)?;
        }

        let node = &mut self.nodes[node_id as usize];
        let run = node.recovery.as_mut().expect("recovery in progress");
        if run.replayed == run.total {
            self.complete_recovery(node_id)
        } else {
            self.push(now + self.cfg.replay_cost, Event::ReplayTick { node: node_id, inc });
            Ok(())
        }
    }

    fn on_on_demand(&mut self, node_id: NodeId, index: u64) -> Result<()> {
        let now = self.clock;
        let interval = self.cfg.on_demand_interval;
        // Keep the stream flowing while recovery continues.
        {
            let node = &self.nodes[node_id as usize];
            let inc = node.inc;
            self.push(
                now + interval,
                Event::OnDemandArrive { node: node_id, inc, index: self.on_demand_index },
            );
            self.on_demand_index += 1;
        }
        let mut txn = self.workload.on_demand_txn(node_id, index)?;
        // Recovery enforces batch size one: the transaction forms its own
        // epoch in the global sequence.
        let epoch_id = self.next_admit;
        self.next_admit += 1;
        self.target_epochs = self.target_epochs.max(self.next_admit);
        txn.id = TxnId { node: node_id, epoch: epoch_id, seq: ON_DEMAND_SEQ };
        self.stats.on_demand_txns.insert(epoch_id, txn.clone());
        self.stats.admit_times.insert(epoch_id, now);

        let node = &mut self.nodes[node_id as usize];
        let run = node.recovery.as_mut().expect("recovery in progress");
        if self.cfg.logging == LogMode::Aries {
            node.queued_on_demand.push_back((txn, now));
            // The settle bookkeeping happens when it finally executes.
            return Ok(());
        }
        let graph = run.graph.as_ref().expect("replay graph present");
        let targets: Vec<_> = txn.access.iter().map(|d| d.target.clone()).collect();
        let closure = dependency_closure(graph, &run.done, &targets);
        if closure.is_empty() {
            let pending = PendingOnDemand {
                txn,
                epoch_id,
                arrived_at: now,
                closure: BTreeSet::new(),
            };
            self.execute_on_demand(node_id, pending, now)?;
        } else {
            for &v in &closure {
                run.claimed[v] = true;
                if run.ready_normal.remove(&v) {
                    run.ready_claimed.insert(v);
                }
            }
            run.pending.push(PendingOnDemand {
                txn,
                epoch_id,
                arrived_at: now,
                closure: closure.into_iter().collect(),
            });
        }
        Ok(())
    }

    /// Execute one on-demand transaction against the recovering store, log it
    /// through the normal single-batch path, and report its commit.
    fn execute_on_demand(
        &mut self,
        node_id: NodeId,
        pending: PendingOnDemand,
        now: u64,
    ) -> Result<()> {
        let workers = self.cfg.workers;
        let mode = self.cfg.logging;
        let node = &mut self.nodes[node_id as usize];

        let actions = self.registry.decompose(&pending.txn)?;
        let action_count = actions.len() as u64;
        let decomposed = crate::depgraph::DecomposedTxn {
            id: pending.txn.id,
            distributed: false,
            actions,
        };
        let graph = crate::depgraph::build_graph(
            pending.epoch_id,
            &[decomposed],
            |t| self.ownership.owner(t),
            1,
        )?;
        let schedules = derive_schedules(&graph, 1)?;
        let plan = plan_schedule_times(&graph, &schedules, self.cfg.per_action_cost);

        let store = match node.recovery.as_mut() {
            Some(run) => &mut run.store,
            None => &mut node.store,
        };
        let effects = apply_plan(store, &graph, &plan)?;

        if mode != LogMode::None {
            let vertices: Vec<VertexLogInfo> = effects
                .iter()
                .map(|(v, effect)| VertexLogInfo {
                    action: graph.vertices[*v].action.clone(),
                    effect: effect.clone(),
                    remote: false,
                    worker: 0,
                    out_edges: Vec::new(),
                })
                .collect();
            let mut buffers: Vec<Vec<LogRecord>> = vec![Vec::new(); workers];
            match mode {
                LogMode::Fine => {
                    for (w, rec) in emit_fine_records(&vertices, 1, &mut node.lsn) {
                        buffers[w].push(LogRecord::Fine(rec));
                    }
                }
                LogMode::Coarse => {
                    let info = TxnLogInfo {
                        id: pending.txn.id,
                        procedure: pending.txn.procedure.clone(),
                        params: pending.txn.params.clone(),
                        distributed: false,
                        worker: 0,
                    };
                    let graph = transform_to_txn_graph([pending.txn.id], []);
                    for (w, rec) in
                        emit_coarse_records(&[info], &graph, &vertices, &mut node.lsn)
                    {
                        buffers[w].push(LogRecord::Coarse(rec));
                    }
                }
                LogMode::Aries => {
                    for (w, rec) in emit_aries_records(&vertices, 1, &mut node.lsn) {
                        buffers[w].push(LogRecord::Aries(rec));
                    }
                }
                LogMode::None => unreachable!(),
            }
            let receipt =
                node.storage.flush_epoch(pending.epoch_id, mode, &buffers, &mut node.table)?;
            self.stats.flush_receipts.push((node_id, receipt));
            self.stats.flushed_epochs.entry(node_id).or_default().push(pending.epoch_id);
            if self.cfg.record_flush_digests {
                let store = match node.recovery.as_ref() {
                    Some(run) => &run.store,
                    None => &node.store,
                };
                let digest = store.digest();
                self.stats
                    .flush_digests
                    .entry(node_id)
                    .or_default()
                    .push((pending.epoch_id, digest));
            }
        }

        let commit_at = now + action_count * self.cfg.per_action_cost + self.cfg.flush_latency;
        self.stats.commits.push(CommitRecord {
            txn: pending.txn.id,
            at: commit_at,
            latency: commit_at - pending.arrived_at,
            distributed: false,
            on_demand: true,
        });
        // A size-one local batch settles by itself, on every node's books.
        let count = self.settle_counts.entry(pending.epoch_id).or_default();
        *count = self.cfg.nodes;
        self.stats.settled_epochs += 1;
        while self
            .settle_counts
            .get(&self.settled_watermark)
            .map(|&c| c == self.cfg.nodes)
            .unwrap_or(false)
        {
            self.settle_counts.remove(&self.settled_watermark);
            self.settled_watermark += 1;
        }
        Ok(())
    }

    fn complete_recovery(&mut self, node_id: NodeId) -> Result<()> {
        let now = self.clock;
        let node = &mut self.nodes[node_id as usize];
        let run = node.recovery.take().expect("recovery in progress");
        let report = RecoveryReport {
            node: node_id,
            started: run.started_at,
            finished: now,
            replayed: run.replayed,
            on_demand_commits: 0,
            phases: vec![
                PhaseReport {
                    phase: "data_loading",
                    sim_units: run.snapshot_len as u64 * self.cfg.data_load_cost,
                    wall: run.data_wall,
                    records: run.snapshot_len,
                    workers: 1,
                },
                PhaseReport {
                    phase: "log_loading",
                    sim_units: run.log_records as u64 * self.cfg.log_load_cost,
                    wall: run.log_wall,
                    records: run.log_records,
                    workers: 1,
                },
                PhaseReport {
                    phase: "replaying",
                    sim_units: now.saturating_sub(run.replay_started_at),
                    wall: run.replay_wall_start.elapsed(),
                    records: run.replayed,
                    workers: if self.cfg.logging == LogMode::Aries { 1 } else { self.cfg.workers },
                },
            ],
        };
        self.stats.recovery.push(report);

        node.store = run.store;
        node.lsn = run.max_durable_lsn + 1;
        node.alive = true;
        node.free_at = 0;
        node.inc += 1;

        // Transactions that queued while an ARIES-mode node was down execute
        // now, sequentially, before normal admission resumes.
        let queued: Vec<(Transaction, u64)> = node.queued_on_demand.drain(..).collect();
        let mut at = now;
        for (mut txn, arrived) in queued {
            let epoch_id = txn.id.epoch;
            at += self.cfg.per_action_cost;
            let pending = PendingOnDemand {
                txn: {
                    txn.id = TxnId { node: node_id, epoch: epoch_id, seq: ON_DEMAND_SEQ };
                    txn
                },
                epoch_id,
                arrived_at: arrived,
                closure: BTreeSet::new(),
            };
            self.execute_on_demand(node_id, pending, at)?;
        }

        self.paused.remove(&node_id);
        // Full batch size resumes in one step.
        self.schedule_admissions();
        Ok(())
    }
}

/// Assemble the per-vertex and per-transaction logging inputs for one epoch
/// on one node: local-graph vertices first, merged distributed vertices
/// after, with outgoing temporal and seam edges expressed in combined
/// indices.
fn build_log_inputs(
    node_id: NodeId,
    ep: &NodeEpoch,
) -> (Vec<VertexLogInfo>, Vec<TxnLogInfo>, Vec<(TxnId, TxnId)>) {
    let offset = ep.local_graph.vertex_count();
    let merged = ep.merged.as_ref();
    let total = offset + merged.map(|m| m.graph.vertex_count()).unwrap_or(0);

    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); total];
    let mut txn_events: Vec<(TxnId, TxnId)> = Vec::new();
    for e in &ep.local_graph.edges {
        if e.kind == EdgeKind::Temporal {
            out_edges[e.from].push(e.to);
            txn_events.push((
                ep.local_graph.vertices[e.from].action.id.txn,
                ep.local_graph.vertices[e.to].action.id.txn,
            ));
        }
    }
    if let Some(m) = merged {
        for e in &m.graph.edges {
            if e.kind == EdgeKind::Temporal {
                out_edges[offset + e.from].push(offset + e.to);
                txn_events.push((
                    m.graph.vertices[e.from].action.id.txn,
                    m.graph.vertices[e.to].action.id.txn,
                ));
            }
        }
        for &(from, to) in &m.seams {
            out_edges[from].push(offset + to);
            txn_events.push((
                ep.local_graph.vertices[from].action.id.txn,
                m.graph.vertices[to].action.id.txn,
            ));
        }
    }

    let mut vertices: Vec<VertexLogInfo> = Vec::with_capacity(total);
    let mut effect_of: BTreeMap<usize, &ActionEffect> = BTreeMap::new();
    for (v, eff) in &ep.local_effects {
        effect_of.insert(*v, eff);
    }
    for (i, vx) in ep.local_graph.vertices.iter().enumerate() {
        vertices.push(VertexLogInfo {
            action: vx.action.clone(),
            effect: (*effect_of.get(&i).expect("local effect recorded")).clone(),
            remote: false,
            worker: ep.local_plan.worker[i],
            out_edges: std::mem::take(&mut out_edges[i]),
        });
    }
    if let Some(m) = merged {
        let mut effect_of: BTreeMap<usize, &ActionEffect> = BTreeMap::new();
        for (v, eff) in &ep.dist_effects {
            effect_of.insert(*v, eff);
        }
        for (i, vx) in m.graph.vertices.iter().enumerate() {
            vertices.push(VertexLogInfo {
                action: vx.action.clone(),
                effect: (*effect_of.get(&i).expect("dist effect recorded")).clone(),
                remote: vx.action.id.txn.node != node_id,
                worker: m.plan.worker[i],
                out_edges: std::mem::take(&mut out_edges[offset + i]),
            });
        }
    }

    // One coarse record per transaction participating on this node, keyed to
    // the worker of its first vertex.
    let mut txns: Vec<TxnLogInfo> = Vec::new();
    let mut seen: BTreeMap<TxnId, usize> = BTreeMap::new();
    for v in &vertices {
        let txn = v.action.id.txn;
        if seen.contains_key(&txn) {
            continue;
        }
        seen.insert(txn, txns.len());
        let known = ep
            .local_txns
            .iter()
            .chain(ep.dist_txns.iter())
            .find(|t| t.id == txn)
            .cloned();
        let (procedure, params, distributed) = match known {
            Some(t) => {
                let dist = ep.dist_txns.iter().any(|d| d.id == txn);
                (t.procedure, t.params, dist)
            }
            None => {
                // Remote-origin transaction: procedure identity rides in the
                // subgraph's action ops only; coarse logging stores images
                // for it, so procedure and params are informational.
                (String::new(), Vec::new(), true)
            }
        };
        txns.push(TxnLogInfo { id: txn, procedure, params, distributed, worker: v.worker });
    }

    (vertices, txns, txn_events)
}
