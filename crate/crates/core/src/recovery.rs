//! Crash recovery: snapshot reload, log load with torn-tail truncation,
//! incomplete-transaction pruning, replay-graph reconstruction from stored
//! outgoing edges, and parallel replay.
//!
//! Replay is graph-driven: any topological-order replay of the rebuilt graph
//! yields the identical store, so workers only need per-vertex completion
//! tracking, never locks. The ARIES baseline deliberately replays serially in
//! lsn order.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use dashmap::DashMap;

use crate::durability::{AriesLogRecord, LogMode, LogRecord, NodeStorage};
use crate::error::{EngineError, Result};
use crate::proc::ProcedureRegistry;
use crate::store::{apply_ops_to_record, set_column, Record, RecordId, Store};
use crate::txn::{ActionId, EpochId, NodeId, RecordAction, TxnId};

/// One replayable unit: a decoded committed log record plus the keys it
/// touches on this node (for cross-epoch bridging and on-demand closures).
#[derive(Debug, Clone)]
pub struct ReplayVertex {
    pub record: LogRecord,
    pub keys: Vec<RecordId>,
    pub writes: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayGraph {
    pub vertices: Vec<ReplayVertex>,
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
}

impl ReplayGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.preds[v].is_empty()).collect()
    }

    pub fn is_acyclic(&self) -> bool {
        kahn_levels(self).is_some()
    }

    /// Vertices grouped into waves: every vertex's predecessors sit in
    /// strictly earlier waves, so each wave is internally conflict-free.
    pub fn waves(&self) -> Vec<Vec<usize>> {
        kahn_levels(self).expect("replay graph must be acyclic")
    }
}

fn kahn_levels(graph: &ReplayGraph) -> Option<Vec<Vec<usize>>> {
    let n = graph.vertices.len();
    let mut indeg: Vec<usize> = (0..n).map(|v| graph.preds[v].len()).collect();
    let mut level: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    let mut out = Vec::new();
    while !level.is_empty() {
        seen += level.len();
        let mut next = Vec::new();
        for &v in &level {
            for &s in &graph.succs[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    next.push(s);
                }
            }
        }
        out.push(level);
        level = next;
    }
    (seen == n).then_some(out)
}

/// Result of loading one node's log files for a mode.
#[derive(Debug, Default)]
pub struct LoadedLog {
    pub records: Vec<LogRecord>,
    /// Files whose tail was truncated by a torn write.
    pub torn_files: usize,
    pub files: usize,
}

/// Read and decode every worker log file of `mode`. A decode failure at the
/// end of a file is a torn tail and truncates that file's contribution; a
/// decode failure with decodable frames after it is mid-file corruption and
/// makes the log unrecoverable.
pub fn load_node_logs(storage: &NodeStorage, mode: LogMode) -> Result<LoadedLog> {
    let mut out = LoadedLog::default();
    for path in storage.existing_log_paths(mode)? {
        out.files += 1;
        let bytes = std::fs::read(&path)?;
        let mut offset = 0usize;
        while offset < bytes.len() {
            match crate::codec::read_frame(&bytes, offset) {
                Ok(frame) => {
                    // A frame whose crc checks out but whose payload does not
                    // decode was written corrupt; no truncation explains it.
                    let record = LogRecord::decode_frame_payload(frame.kind, frame.payload)
                        .map_err(|_| EngineError::UnrecoverableLog {
                            node: storage.node(),
                            reason: format!(
                                "undecodable payload at offset {offset} in {}",
                                path.display()
                            ),
                        })?;
                    out.records.push(record);
                    offset = frame.end;
                }
                Err(EngineError::Decode { .. }) => {
                    match decide_tail_or_corrupt(&bytes, offset, storage.node(), &path) {
                        EngineError::Decode { .. } => {
                            out.torn_files += 1;
                        }
                        fault => return Err(fault),
                    }
                    break;
                }
                Err(other) => return Err(other),
            }
        }
    }
    Ok(out)
}

/// Distinguish a torn tail from mid-file corruption: if any byte offset past
/// the failure parses as a valid frame, the file carries valid records after
/// a corrupt one and cannot be trusted.
fn decide_tail_or_corrupt(
    bytes: &[u8],
    failed_at: usize,
    node: NodeId,
    path: &std::path::Path,
) -> EngineError {
    for probe in failed_at + 1..bytes.len() {
        if crate::codec::read_frame(bytes, probe).is_ok() {
            return EngineError::UnrecoverableLog {
                node,
                reason: format!(
                    "valid frame after corrupt bytes at offset {failed_at} in {}",
                    path.display()
                ),
            };
        }
    }
    EngineError::decode(failed_at, "torn tail")
}

/// Committed records surviving the prune, plus what was dropped.
#[derive(Debug, Default)]
pub struct CommittedSet {
    pub records: Vec<LogRecord>,
    pub pruned_txns: Vec<TxnId>,
    pub pruned_lsns: BTreeSet<u64>,
    pub skipped_below_watermark: usize,
    pub torn_files: usize,
}

/// Drop records of incomplete transactions and records at or below the
/// snapshot watermark.
///
/// Fine and ARIES transactions are complete when a durable record carries
/// their end-of-txn marker; coarse records are atomic (one record per
/// transaction per node), so every decodable coarse record is committed.
pub fn load_and_prune(
    loaded: LoadedLog,
    mode: LogMode,
    watermark: EpochId,
) -> Result<CommittedSet> {
    let mut out = CommittedSet { torn_files: loaded.torn_files, ..Default::default() };
    let mut records = Vec::new();
    for record in loaded.records {
        if watermark > 0 && record.txn().epoch <= watermark {
            out.skipped_below_watermark += 1;
            continue;
        }
        records.push(record);
    }

    if mode == LogMode::Coarse {
        out.records = records;
        return Ok(out);
    }

    let mut complete: BTreeMap<TxnId, bool> = BTreeMap::new();
    for record in &records {
        let marker = match record {
            LogRecord::Fine(r) => r.end_of_txn,
            LogRecord::Aries(r) => r.end_of_txn,
            LogRecord::Coarse(_) => true,
        };
        *complete.entry(record.txn()).or_insert(false) |= marker;
    }
    for record in records {
        let txn = record.txn();
        if complete[&txn] {
            out.records.push(record);
        } else {
            out.pruned_lsns.insert(record.lsn());
            if !out.pruned_txns.contains(&txn) {
                out.pruned_txns.push(txn);
            }
        }
    }
    Ok(out)
}

fn fine_action(r: &crate::durability::FineLogRecord) -> RecordAction {
    RecordAction {
        id: ActionId { txn: r.txn, index: r.action_index },
        target: r.target.clone(),
        kind: r.kind,
        ops: r.ops.clone(),
    }
}

/// Keys a committed record touches on this node. Local coarse records derive
/// their touch set by re-decomposing the procedure; distributed coarse
/// records use their embedded image targets.
fn vertex_keys(record: &LogRecord, registry: &ProcedureRegistry) -> Result<Vec<RecordId>> {
    Ok(match record {
        LogRecord::Fine(r) => vec![r.target.clone()],
        LogRecord::Aries(r) => vec![r.target.clone()],
        LogRecord::Coarse(r) => {
            if r.distributed {
                r.after.iter().map(|(t, _)| t.clone()).collect()
            } else {
                registry
                    .declared_access(&r.procedure, &r.params)?
                    .into_iter()
                    .map(|d| d.target)
                    .collect()
            }
        }
    })
}

fn vertex_writes(record: &LogRecord) -> bool {
    match record {
        LogRecord::Fine(r) => r.kind.writes(),
        LogRecord::Aries(_) => true,
        LogRecord::Coarse(_) => true,
    }
}

/// Rebuild the replay graph: edges come from stored outgoing lists within an
/// epoch, plus per-key bridges between consecutive epochs so that replay is
/// safe across the whole log. An edge to a pruned or torn-away record is
/// dropped (the dependent side is gone, which is safe in arrival-order
/// direction); an unexplained dangling reference is a log fault.
pub fn rebuild_replay_graph(
    committed: &CommittedSet,
    registry: &ProcedureRegistry,
    node: NodeId,
) -> Result<ReplayGraph> {
    let n = committed.records.len();
    let mut graph = ReplayGraph {
        vertices: Vec::with_capacity(n),
        preds: vec![Vec::new(); n],
        succs: vec![Vec::new(); n],
    };
    let mut by_lsn: BTreeMap<u64, usize> = BTreeMap::new();
    let mut by_txn: BTreeMap<TxnId, usize> = BTreeMap::new();
    for (i, record) in committed.records.iter().enumerate() {
        by_lsn.insert(record.lsn(), i);
        by_txn.insert(record.txn(), i);
        graph.vertices.push(ReplayVertex {
            keys: vertex_keys(record, registry)?,
            writes: vertex_writes(record),
            record: record.clone(),
        });
    }

    fn add_edge(graph: &mut ReplayGraph, from: usize, to: usize) {
        if from != to && !graph.succs[from].contains(&to) {
            graph.succs[from].push(to);
            graph.preds[to].push(from);
        }
    }

    let strict = committed.torn_files == 0 && committed.pruned_lsns.is_empty();
    for i in 0..n {
        match &committed.records[i] {
            LogRecord::Fine(r) => {
                for &succ in &r.outgoing {
                    match by_lsn.get(&succ) {
                        Some(&j) => add_edge(&mut graph, i, j),
                        None if committed.pruned_lsns.contains(&succ) => {}
                        None if !strict => {}
                        None => {
                            return Err(EngineError::UnrecoverableLog {
                                node,
                                reason: format!(
                                    "record lsn {} references missing lsn {succ}",
                                    r.lsn
                                ),
                            })
                        }
                    }
                }
            }
            LogRecord::Coarse(r) => {
                let outgoing = r.outgoing.clone();
                for succ in outgoing {
                    if let Some(&j) = by_txn.get(&succ) {
                        add_edge(&mut graph, i, j);
                    }
                }
            }
            LogRecord::Aries(_) => {}
        }
    }

    // Cross-epoch per-key bridges: logged edges give the per-key order inside
    // an epoch; the tails of each key's chain feed the heads of the key's
    // next epoch.
    let mut key_epochs: BTreeMap<RecordId, BTreeMap<EpochId, Vec<usize>>> = BTreeMap::new();
    for (i, v) in graph.vertices.iter().enumerate() {
        for key in &v.keys {
            key_epochs
                .entry(key.clone())
                .or_default()
                .entry(v.record.txn().epoch)
                .or_default()
                .push(i);
        }
    }
    let mut bridges: Vec<(usize, usize)> = Vec::new();
    for (key, epochs) in &key_epochs {
        let mut prev_tails: Option<Vec<usize>> = None;
        for group in epochs.values() {
            let members: BTreeSet<usize> = group.iter().copied().collect();
            let on_key = |graph: &ReplayGraph, v: usize| graph.vertices[v].keys.contains(key);
            let heads: Vec<usize> = group
                .iter()
                .copied()
                .filter(|&v| {
                    !graph.preds[v]
                        .iter()
                        .any(|&p| members.contains(&p) && on_key(&graph, p))
                })
                .collect();
            if let Some(tails) = &prev_tails {
                for &t in tails {
                    for &h in &heads {
                        bridges.push((t, h));
                    }
                }
            }
            let tails: Vec<usize> = group
                .iter()
                .copied()
                .filter(|&v| {
                    !graph.succs[v]
                        .iter()
                        .any(|&s| members.contains(&s) && on_key(&graph, s))
                })
                .collect();
            prev_tails = Some(tails);
        }
    }
    for (from, to) in bridges {
        add_edge(&mut graph, from, to);
    }

    if !graph.is_acyclic() {
        return Err(EngineError::UnrecoverableLog {
            node,
            reason: "rebuilt replay graph contains a cycle".into(),
        });
    }
    Ok(graph)
}

/// Store abstraction replay runs against: the plain single-threaded store or
/// the sharded concurrent one used by parallel replay workers.
pub trait ReplayTarget {
    fn apply(&mut self, action: &RecordAction) -> Result<()>;
    fn install(&mut self, target: &RecordId, after: &[(String, Vec<u8>)]) -> Result<()>;
}

impl ReplayTarget for Store {
    fn apply(&mut self, action: &RecordAction) -> Result<()> {
        self.apply_action(action).map(|_| ())
    }

    fn install(&mut self, target: &RecordId, after: &[(String, Vec<u8>)]) -> Result<()> {
        let created = self.get(target).is_none();
        self.install_image(target, after, created)
    }
}

/// Apply one committed record to a store view during replay.
///
/// Fine local records re-execute their operation fragment; fine remote
/// records install the stored after-image (the embedded images are what make
/// replay node-independent — no wire messages, ever). Local coarse records
/// re-execute the whole procedure; distributed coarse records install their
/// locally-updated after-images.
pub fn apply_replay_record<S: ReplayTarget>(
    store: &mut S,
    record: &LogRecord,
    registry: &ProcedureRegistry,
) -> Result<()> {
    match record {
        LogRecord::Fine(r) => {
            if r.remote {
                if r.kind.writes() {
                    store.install(&r.target, &r.after)?;
                }
            } else {
                store.apply(&fine_action(r))?;
            }
        }
        LogRecord::Coarse(r) => {
            if r.distributed {
                for (target, image) in &r.after {
                    store.install(target, image)?;
                }
            } else {
                let txn = crate::txn::Transaction {
                    id: r.txn,
                    procedure: r.procedure.clone(),
                    params: r.params.clone(),
                    home: r.txn.node,
                    access: Vec::new(),
                };
                for action in registry.decompose(&txn)? {
                    store.apply(&action)?;
                }
            }
        }
        LogRecord::Aries(r) => {
            store.install(&r.target, &r.after)?;
        }
    }
    Ok(())
}

/// Concurrent store for parallel replay. The replay graph orders every pair
/// of conflicting vertices, so workers never mutate one record concurrently;
/// the sharded map only guards the map structure itself.
pub struct ConcurrentStore {
    map: DashMap<RecordId, Record>,
}

impl ConcurrentStore {
    pub fn from_store(store: &Store) -> Self {
        let map = DashMap::new();
        for (id, record) in store.iter() {
            map.insert(id.clone(), record.clone());
        }
        ConcurrentStore { map }
    }

    pub fn into_store(self) -> Store {
        let mut out = Store::new();
        for (id, record) in self.map.into_iter() {
            out.put_record(id, record);
        }
        out
    }
}

impl ReplayTarget for &ConcurrentStore {
    fn apply(&mut self, action: &RecordAction) -> Result<()> {
        let creates =
            action.ops.iter().any(|op| matches!(op, crate::proc::OpKind::Insert { .. }));
        if creates {
            if self.map.contains_key(&action.target) {
                return Err(EngineError::RecordExists(action.target.to_string()));
            }
            self.map.insert(action.target.clone(), Record::default());
        }
        let mut entry = self
            .map
            .get_mut(&action.target)
            .ok_or_else(|| EngineError::RecordNotFound(action.target.to_string()))?;
        apply_ops_to_record(entry.value_mut(), &action.ops);
        Ok(())
    }

    fn install(&mut self, target: &RecordId, after: &[(String, Vec<u8>)]) -> Result<()> {
        if !self.map.contains_key(target) {
            self.map.insert(target.clone(), Record::default());
        }
        let mut entry = self.map.get_mut(target).unwrap();
        let record = entry.value_mut();
        for (col, value) in after {
            set_column(record, col, value.clone());
        }
        record.version += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayStats {
    pub replayed: usize,
    pub waves: usize,
    pub workers: usize,
    pub wall: std::time::Duration,
}

/// Graph-driven replay on real threads: vertices are processed wave by wave,
/// each wave split across `workers`. The final store is identical for every
/// worker count.
pub fn parallel_replay(
    graph: &ReplayGraph,
    snapshot: &Store,
    workers: usize,
    registry: &ProcedureRegistry,
) -> Result<(Store, ReplayStats)> {
    let workers = workers.max(1);
    let started = Instant::now();
    let waves = graph.waves();
    let shared = ConcurrentStore::from_store(snapshot);
    let failures = AtomicUsize::new(0);
    for wave in &waves {
        if workers == 1 || wave.len() < 2 {
            let mut target = &shared;
            for &v in wave {
                apply_replay_record(&mut target, &graph.vertices[v].record, registry)?;
            }
            continue;
        }
        let chunk = wave.len().div_ceil(workers);
        std::thread::scope(|scope| {
            for part in wave.chunks(chunk) {
                let shared = &shared;
                let failures = &failures;
                scope.spawn(move || {
                    let mut target = shared;
                    for &v in part {
                        if apply_replay_record(&mut target, &graph.vertices[v].record, registry)
                            .is_err()
                        {
                            failures.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                });
            }
        });
        if failures.load(Ordering::Relaxed) > 0 {
            return Err(EngineError::RecoveryFault(
                "replay re-execution failed; log and procedures disagree".into(),
            ));
        }
    }
    let stats = ReplayStats {
        replayed: graph.vertex_count(),
        waves: waves.len(),
        workers,
        wall: started.elapsed(),
    };
    Ok((shared.into_store(), stats))
}

/// Baseline recovery: install images strictly in lsn order.
pub fn serial_replay_aries(
    records: &[AriesLogRecord],
    snapshot: &Store,
) -> Result<(Store, ReplayStats)> {
    let started = Instant::now();
    let mut store = snapshot.clone();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].lsn);
    for i in order {
        let r = &records[i];
        let created = store.get(&r.target).is_none();
        store.install_image(&r.target, &r.after, created)?;
    }
    let stats = ReplayStats {
        replayed: records.len(),
        waves: records.len(),
        workers: 1,
        wall: started.elapsed(),
    };
    Ok((store, stats))
}

/// The transitive predecessor closure of every pending vertex touching one of
/// `targets`, in a replay-safe topological order. This is what an on-demand
/// transaction must replay before it can execute.
pub fn dependency_closure(graph: &ReplayGraph, done: &[bool], targets: &[RecordId]) -> Vec<usize> {
    let mut in_closure = vec![false; graph.vertex_count()];
    let mut stack: Vec<usize> = Vec::new();
    for (v, vertex) in graph.vertices.iter().enumerate() {
        if !done[v] && vertex.keys.iter().any(|k| targets.contains(k)) {
            stack.push(v);
        }
    }
    while let Some(v) = stack.pop() {
        if in_closure[v] || done[v] {
            continue;
        }
        in_closure[v] = true;
        for &p in &graph.preds[v] {
            if !done[p] && !in_closure[p] {
                stack.push(p);
            }
        }
    }
    let mut indeg: Vec<usize> = (0..graph.vertex_count())
        .map(|v| {
            if in_closure[v] {
                graph.preds[v].iter().filter(|&&p| in_closure[p]).count()
            } else {
                usize::MAX
            }
        })
        .collect();
    let mut ready: Vec<usize> =
        (0..graph.vertex_count()).filter(|&v| in_closure[v] && indeg[v] == 0).collect();
    ready.sort_unstable();
    let mut order = Vec::new();
    while let Some(v) = ready.pop() {
        order.push(v);
        for &s in &graph.succs[v] {
            if in_closure[s] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(s);
                }
            }
        }
    }
    order
}

/// Recovery phase timing for the report (JSON lines).
#[derive(Debug, Clone)]
pub struct PhaseReport {
    pub phase: &'static str,
    pub sim_units: u64,
    pub wall: std::time::Duration,
    pub records: usize,
    pub workers: usize,
}

impl PhaseReport {
    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"phase\":\"{}\",\"sim_units\":{},\"wall_ms\":{:.3},\"records\":{},\"workers\":{}}}",
            self.phase,
            self.sim_units,
            self.wall.as_secs_f64() * 1e3,
            self.records,
            self.workers
        )
    }
}

pub struct RecoveryOutcome {
    pub store: Store,
    pub report: Vec<PhaseReport>,
    pub replayed: usize,
    pub pruned_txns: usize,
}

/// Full off-line recovery of one node from its durable files: reload the
/// snapshot, load and prune the logs, rebuild the replay graph, replay.
pub fn recover_store(
    storage: &NodeStorage,
    mode: LogMode,
    registry: &ProcedureRegistry,
    workers: usize,
) -> Result<RecoveryOutcome> {
    let mut report = Vec::new();

    let t0 = Instant::now();
    let (snapshot, watermark) = storage.load_checkpoint()?;
    report.push(PhaseReport {
        phase: "data_loading",
        sim_units: snapshot.len() as u64,
        wall: t0.elapsed(),
        records: snapshot.len(),
        workers: 1,
    });

    if mode == LogMode::None {
        return Ok(RecoveryOutcome { store: snapshot, report, replayed: 0, pruned_txns: 0 });
    }

    let t1 = Instant::now();
    let loaded = load_node_logs(storage, mode)?;
    let committed = load_and_prune(loaded, mode, watermark)?;
    report.push(PhaseReport {
        phase: "log_loading",
        sim_units: committed.records.len() as u64,
        wall: t1.elapsed(),
        records: committed.records.len(),
        workers: 1,
    });

    let t2 = Instant::now();
    let pruned_txns = committed.pruned_txns.len();
    let (store, stats) = match mode {
        LogMode::Aries => {
            let records: Vec<AriesLogRecord> = committed
                .records
                .iter()
                .filter_map(|r| match r {
                    LogRecord::Aries(a) => Some(a.clone()),
                    _ => None,
                })
                .collect();
            serial_replay_aries(&records, &snapshot)?
        }
        _ => {
            let graph = rebuild_replay_graph(&committed, registry, storage.node())?;
            parallel_replay(&graph, &snapshot, workers, registry)?
        }
    };
    report.push(PhaseReport {
        phase: "replaying",
        sim_units: stats.replayed as u64,
        wall: t2.elapsed(),
        records: stats.replayed,
        workers: stats.workers,
    });

    Ok(RecoveryOutcome { store, report, replayed: stats.replayed, pruned_txns })
}
