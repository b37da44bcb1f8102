//! Dependency logging: record emission from executed graphs, per-worker
//! group flush, the active transaction table, and checkpoints.
//!
//! Log records are produced once per epoch from structures the concurrency
//! control already built. Each execution worker owns a private buffer; the
//! flush stage drains every buffer into that worker's own log file in one
//! append, so the number of disk writes per epoch scales with the worker
//! count rather than the transaction count.

mod format;

pub use format::{AriesLogRecord, CoarseLogRecord, FineLogRecord, LogMode, LogRecord};

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::codec::{self, read_frame, write_frame, FrameKind, Reader, Writer};
use crate::error::{EngineError, Result};
use crate::store::{ActionEffect, Record, Store};
use crate::txn::{EpochId, NodeId, RecordAction, TxnId};

/// Everything the logger needs to know about one executed vertex.
#[derive(Debug, Clone)]
pub struct VertexLogInfo {
    pub action: RecordAction,
    pub effect: ActionEffect,
    /// True when the owning transaction is distributed and coordinated by a
    /// different node.
    pub remote: bool,
    /// Worker whose buffer receives the record.
    pub worker: usize,
    /// Same-node successor vertices (temporal and seam edges), as indices
    /// into the epoch's combined vertex list.
    pub out_edges: Vec<usize>,
}

/// Per-transaction information for coarse records.
#[derive(Debug, Clone)]
pub struct TxnLogInfo {
    pub id: TxnId,
    pub procedure: String,
    pub params: Vec<u64>,
    pub distributed: bool,
    /// Worker whose buffer receives the record.
    pub worker: usize,
}

/// Transaction-level dependency graph: the record-level graph with temporal
/// edges projected onto transactions and deduplicated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TxnDependencyGraph {
    pub vertices: Vec<TxnId>,
    pub edges: Vec<(TxnId, TxnId)>,
}

impl TxnDependencyGraph {
    pub fn successors(&self, txn: TxnId) -> impl Iterator<Item = TxnId> + '_ {
        self.edges.iter().filter(move |(f, _)| *f == txn).map(|&(_, t)| t)
    }

    pub fn is_acyclic(&self) -> bool {
        let index: BTreeMap<TxnId, usize> =
            self.vertices.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let n = self.vertices.len();
        let mut succs = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for &(f, t) in &self.edges {
            let (f, t) = (index[&f], index[&t]);
            succs[f].push(t);
            indeg[t] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &s in &succs[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    queue.push(s);
                }
            }
        }
        seen == n
    }
}

/// Project temporal-edge events onto transactions. Emitted online during
/// graph construction and merge; this just deduplicates the stream.
pub fn transform_to_txn_graph(
    txns: impl IntoIterator<Item = TxnId>,
    events: impl IntoIterator<Item = (TxnId, TxnId)>,
) -> TxnDependencyGraph {
    let mut vertices: Vec<TxnId> = txns.into_iter().collect();
    vertices.sort_unstable();
    vertices.dedup();
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for (from, to) in events {
        if from != to && seen.insert((from, to)) {
            edges.push((from, to));
        }
    }
    edges.sort_unstable();
    TxnDependencyGraph { vertices, edges }
}

/// Emit one fine-grained record per executed vertex. Lsns are assigned in
/// worker-major order from `next_lsn`; outgoing edges are resolved through
/// the epoch's vertex-to-lsn map (forward references within the epoch are
/// fine because whole epochs flush atomically per worker). The last record
/// of each transaction on this node carries the end-of-txn marker.
pub fn emit_fine_records(
    vertices: &[VertexLogInfo],
    workers: usize,
    next_lsn: &mut u64,
) -> Vec<(usize, FineLogRecord)> {
    let mut lsn_of = vec![0u64; vertices.len()];
    let mut order: Vec<usize> = Vec::with_capacity(vertices.len());
    for w in 0..workers.max(1) {
        for (i, v) in vertices.iter().enumerate() {
            if v.worker == w {
                lsn_of[i] = *next_lsn;
                *next_lsn += 1;
                order.push(i);
            }
        }
    }
    // Highest lsn per transaction gets the commit marker.
    let mut last_of_txn: BTreeMap<TxnId, u64> = BTreeMap::new();
    for (i, v) in vertices.iter().enumerate() {
        let e = last_of_txn.entry(v.action.id.txn).or_insert(0);
        *e = (*e).max(lsn_of[i]);
    }
    order
        .into_iter()
        .map(|i| {
            let v = &vertices[i];
            let mut outgoing: Vec<u64> = v.out_edges.iter().map(|&t| lsn_of[t]).collect();
            outgoing.sort_unstable();
            let record = FineLogRecord {
                lsn: lsn_of[i],
                txn: v.action.id.txn,
                target: v.action.target.clone(),
                action_index: v.action.id.index,
                kind: v.action.kind,
                ops: v.action.ops.clone(),
                outgoing,
                remote: v.remote,
                before: if v.remote { v.effect.before.clone() } else { Vec::new() },
                after: if v.remote { v.effect.after.clone() } else { Vec::new() },
                end_of_txn: last_of_txn[&v.action.id.txn] == lsn_of[i],
            };
            (v.worker, record)
        })
        .collect()
}

/// Emit one coarse record per transaction participating on this node.
/// Outgoing edges come from the transaction dependency graph; distributed
/// transactions additionally carry before/after images of the columns they
/// updated locally.
pub fn emit_coarse_records(
    txns: &[TxnLogInfo],
    txn_graph: &TxnDependencyGraph,
    vertices: &[VertexLogInfo],
    next_lsn: &mut u64,
) -> Vec<(usize, CoarseLogRecord)> {
    let mut by_txn: BTreeMap<TxnId, Vec<&VertexLogInfo>> = BTreeMap::new();
    for v in vertices {
        by_txn.entry(v.action.id.txn).or_default().push(v);
    }
    let mut out = Vec::with_capacity(txns.len());
    for info in txns {
        let mut outgoing: Vec<TxnId> = txn_graph.successors(info.id).collect();
        outgoing.sort_unstable();
        outgoing.dedup();
        let (mut before, mut after) = (Vec::new(), Vec::new());
        if info.distributed {
            for v in by_txn.get(&info.id).map(|v| v.as_slice()).unwrap_or(&[]) {
                if v.effect.wrote {
                    before.push((v.action.target.clone(), v.effect.before.clone()));
                    after.push((v.action.target.clone(), v.effect.after.clone()));
                }
            }
        }
        let record = CoarseLogRecord {
            lsn: *next_lsn,
            txn: info.id,
            procedure: info.procedure.clone(),
            params: info.params.clone(),
            outgoing,
            distributed: info.distributed,
            before,
            after,
        };
        *next_lsn += 1;
        out.push((info.worker, record));
    }
    out
}

/// Emit the ARIES-style baseline: one record per updated data record per
/// transaction, carrying both images. Read-only vertices produce nothing.
///
/// Unlike the dependency modes, ARIES replay is driven purely by lsn order,
/// so lsns follow the epoch's serialization order (the input slice order,
/// which respects every per-key conflict chain) — the same order a shared
/// update-time lsn counter would produce.
pub fn emit_aries_records(
    vertices: &[VertexLogInfo],
    _workers: usize,
    next_lsn: &mut u64,
) -> Vec<(usize, AriesLogRecord)> {
    let mut lsn_of: Vec<Option<u64>> = vec![None; vertices.len()];
    let mut order = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        if v.effect.wrote {
            lsn_of[i] = Some(*next_lsn);
            *next_lsn += 1;
            order.push(i);
        }
    }
    let mut last_of_txn: BTreeMap<TxnId, u64> = BTreeMap::new();
    for (i, v) in vertices.iter().enumerate() {
        if let Some(lsn) = lsn_of[i] {
            let e = last_of_txn.entry(v.action.id.txn).or_insert(0);
            *e = (*e).max(lsn);
        }
    }
    order
        .into_iter()
        .map(|i| {
            let v = &vertices[i];
            let lsn = lsn_of[i].unwrap();
            let record = AriesLogRecord {
                lsn,
                txn: v.action.id.txn,
                target: v.action.target.clone(),
                before: v.effect.before.clone(),
                after: v.effect.after.clone(),
                end_of_txn: last_of_txn[&v.action.id.txn] == lsn,
            };
            (v.worker, record)
        })
        .collect()
}

/// Tracks the lsn of the last flushed record per transaction; entries are
/// removed once the transaction's end-of-txn record is durable (coarse
/// records are atomic and complete immediately).
#[derive(Debug, Default, Clone)]
pub struct ActiveTxnTable {
    entries: BTreeMap<TxnId, u64>,
}

impl ActiveTxnTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_lsn(&self, txn: TxnId) -> Option<u64> {
        self.entries.get(&txn).copied()
    }

    pub fn observe(&mut self, record: &LogRecord) {
        let txn = record.txn();
        let complete = match record {
            LogRecord::Fine(r) => r.end_of_txn,
            LogRecord::Aries(r) => r.end_of_txn,
            LogRecord::Coarse(_) => true,
        };
        if complete {
            self.entries.remove(&txn);
        } else {
            self.entries.insert(txn, record.lsn());
        }
    }
}

/// Receipt for one epoch's group flush.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlushReceipt {
    pub epoch: EpochId,
    pub mode: LogMode,
    /// Number of non-empty per-worker buffer appends.
    pub flushes: usize,
    pub records: usize,
    pub bytes: u64,
}

/// A node's durable file layout: per-worker log files plus the snapshot.
/// Log files are named `node<id>.w<worker>.<mode>.log`.
#[derive(Debug, Clone)]
pub struct NodeStorage {
    root: PathBuf,
    node: NodeId,
}

impl NodeStorage {
    pub fn new(root: impl Into<PathBuf>, node: NodeId) -> Result<NodeStorage> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(NodeStorage { root, node })
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log_path(&self, worker: usize, mode: LogMode) -> PathBuf {
        self.root.join(format!("node{}.w{}.{}.log", self.node, worker, mode))
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.root.join(format!("node{}.snap", self.node))
    }

    /// Paths of the worker log files present on disk for `mode`.
    pub fn existing_log_paths(&self, mode: LogMode) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        let mut worker = 0usize;
        loop {
            let p = self.log_path(worker, mode);
            if p.exists() {
                out.push(p);
                worker += 1;
            } else {
                break;
            }
        }
        Ok(out)
    }

    /// Append every worker's buffered records to that worker's own log file
    /// and make them durable before returning. One append per non-empty
    /// buffer.
    pub fn flush_epoch(
        &self,
        epoch: EpochId,
        mode: LogMode,
        buffers: &[Vec<LogRecord>],
        table: &mut ActiveTxnTable,
    ) -> Result<FlushReceipt> {
        let mut receipt = FlushReceipt { epoch, mode, flushes: 0, records: 0, bytes: 0 };
        for (worker, buffer) in buffers.iter().enumerate() {
            if buffer.is_empty() {
                continue;
            }
            let mut bytes = Vec::new();
            for record in buffer {
                write_frame(&mut bytes, record.frame_kind(), &record.encode_payload());
            }
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.log_path(worker, mode))?;
            file.write_all(&bytes)?;
            file.flush()?;
            receipt.flushes += 1;
            receipt.records += buffer.len();
            receipt.bytes += bytes.len() as u64;
        }
        let mut all: Vec<&LogRecord> = buffers.iter().flatten().collect();
        all.sort_by_key(|r| r.lsn());
        for record in all {
            table.observe(record);
        }
        Ok(receipt)
    }

    /// Write a snapshot of the store at an epoch-boundary watermark. The file
    /// is written to a temporary path and renamed, so a failed checkpoint
    /// leaves the previous snapshot intact.
    pub fn write_checkpoint(&self, store: &Store, watermark: EpochId) -> Result<PathBuf> {
        let tmp = self.root.join(format!("node{}.snap.tmp", self.node));
        let out = self.snapshot_path();
        let mut bytes = Vec::new();
        let mut header = Writer::new();
        header.u64(watermark);
        header.u64(store.len() as u64);
        write_frame(&mut bytes, FrameKind::SnapshotHeader, &header.into_vec());
        for (id, record) in store.iter() {
            let mut w = Writer::new();
            codec::write_record_id(&mut w, id);
            w.u64(record.version);
            codec::write_image(&mut w, &record.columns);
            write_frame(&mut bytes, FrameKind::SnapshotRecord, &w.into_vec());
        }
        std::fs::write(&tmp, &bytes)
            .map_err(|e| EngineError::CheckpointAborted(e.to_string()))?;
        std::fs::rename(&tmp, &out)
            .map_err(|e| EngineError::CheckpointAborted(e.to_string()))?;
        Ok(out)
    }

    /// Load the latest snapshot. A missing file is an empty store at
    /// watermark 0 (nothing was ever checkpointed).
    pub fn load_checkpoint(&self) -> Result<(Store, EpochId)> {
        let path = self.snapshot_path();
        if !path.exists() {
            return Ok((Store::new(), 0));
        }
        let bytes = std::fs::read(&path)?;
        let header = read_frame(&bytes, 0)?;
        if header.kind != FrameKind::SnapshotHeader {
            return Err(EngineError::decode(0, "snapshot missing header frame"));
        }
        let mut r = Reader::new(header.payload);
        let watermark = r.u64()?;
        let count = r.u64()?;
        r.finish()?;
        let mut store = Store::new();
        let mut offset = header.end;
        for _ in 0..count {
            let frame = read_frame(&bytes, offset)?;
            if frame.kind != FrameKind::SnapshotRecord {
                return Err(EngineError::decode(offset, "expected snapshot record"));
            }
            let mut r = Reader::new(frame.payload);
            let id = codec::read_record_id(&mut r)?;
            let version = r.u64()?;
            let columns = codec::read_image(&mut r)?;
            r.finish()?;
            store.put_record(id, Record { columns, version });
            offset = frame.end;
        }
        if offset != bytes.len() {
            return Err(EngineError::decode(offset, "trailing bytes in snapshot"));
        }
        Ok((store, watermark))
    }

    /// Total log bytes on disk for `mode`.
    pub fn log_bytes(&self, mode: LogMode) -> Result<u64> {
        let mut total = 0;
        for p in self.existing_log_paths(mode)? {
            total += std::fs::metadata(p)?.len();
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proc::OpKind;
    use crate::store::RecordId;
    use crate::txn::{ActionId, ActionKind};

    fn vertex(
        txn: TxnId,
        index: u32,
        key: u64,
        worker: usize,
        out_edges: Vec<usize>,
    ) -> VertexLogInfo {
        let target = RecordId::new("t", key.to_le_bytes().to_vec());
        VertexLogInfo {
            action: RecordAction {
                id: ActionId { txn, index },
                target: target.clone(),
                kind: ActionKind::Write,
                ops: vec![OpKind::Put { column: "v".into(), value: vec![1] }],
            },
            effect: ActionEffect {
                action: ActionId { txn, index },
                target,
                before: vec![("v".into(), vec![0])],
                after: vec![("v".into(), vec![1])],
                created: false,
                version_before: 1,
                wrote: true,
            },
            remote: false,
            worker,
            out_edges,
        }
    }

    #[test]
    fn fine_emit_marks_last_record_and_resolves_edges() {
        let t = TxnId { node: 0, epoch: 0, seq: 0 };
        let u = TxnId { node: 0, epoch: 0, seq: 1 };
        let vertices = vec![
            vertex(t, 0, 1, 0, vec![2]),
            vertex(t, 1, 2, 1, vec![]),
            vertex(u, 0, 1, 0, vec![]),
        ];
        let mut lsn = 10;
        let records = emit_fine_records(&vertices, 2, &mut lsn);
        assert_eq!(records.len(), 3);
        assert_eq!(lsn, 13);
        // Worker-major lsn order: v0 -> 10, v2 -> 11, v1 -> 12.
        let by_vertex: Vec<u64> = vec![records[0].1.lsn, records[2].1.lsn, records[1].1.lsn];
        assert_eq!(by_vertex, vec![10, 12, 11]);
        assert_eq!(records[0].1.outgoing, vec![11]); // edge 0 -> 2 resolved to lsn 11
        // t's last record is lsn 12 (vertex 1); u's single record is its last.
        assert!(!records[0].1.end_of_txn);
        assert!(records[2].1.end_of_txn);
        assert!(records[1].1.end_of_txn);
        // Local records carry no images.
        assert!(records[0].1.before.is_empty() && records[0].1.after.is_empty());
    }

    #[test]
    fn coarse_images_empty_for_local_transactions() {
        let t = TxnId { node: 0, epoch: 0, seq: 0 };
        let vertices = vec![vertex(t, 0, 1, 0, vec![])];
        let txns = vec![TxnLogInfo {
            id: t,
            procedure: "p".into(),
            params: vec![1, 2],
            distributed: false,
            worker: 0,
        }];
        let graph = transform_to_txn_graph([t], []);
        let mut lsn = 0;
        let records = emit_coarse_records(&txns, &graph, &vertices, &mut lsn);
        assert_eq!(records.len(), 1);
        assert!(records[0].1.before.is_empty() && records[0].1.after.is_empty());
    }

    #[test]
    fn coarse_images_cover_local_updates_of_distributed_txn() {
        let t = TxnId { node: 1, epoch: 0, seq: 0 };
        let vertices = vec![vertex(t, 0, 1, 0, vec![]), vertex(t, 1, 2, 0, vec![])];
        let txns = vec![TxnLogInfo {
            id: t,
            procedure: "p".into(),
            params: vec![],
            distributed: true,
            worker: 0,
        }];
        let graph = transform_to_txn_graph([t], []);
        let mut lsn = 0;
        let records = emit_coarse_records(&txns, &graph, &vertices, &mut lsn);
        assert_eq!(records[0].1.after.len(), 2);
        assert_eq!(records[0].1.before.len(), 2);
    }

    #[test]
    fn txn_graph_transform_deduplicates() {
        let a = TxnId { node: 0, epoch: 0, seq: 0 };
        let b = TxnId { node: 0, epoch: 0, seq: 1 };
        let g = transform_to_txn_graph([a, b], [(a, b), (a, b), (a, b)]);
        assert_eq!(g.edges, vec![(a, b)]);
        assert!(g.is_acyclic());
    }

    #[test]
    fn active_txn_table_drains_on_markers() {
        let t = TxnId { node: 0, epoch: 0, seq: 0 };
        let mut table = ActiveTxnTable::default();
        let r1 = LogRecord::Fine(FineLogRecord {
            lsn: 1,
            txn: t,
            target: RecordId::new("t", vec![1]),
            action_index: 0,
            kind: ActionKind::Write,
            ops: vec![],
            outgoing: vec![],
            remote: false,
            before: vec![],
            after: vec![],
            end_of_txn: false,
        });
        table.observe(&r1);
        assert_eq!(table.last_lsn(t), Some(1));
        let mut r2 = r1.clone();
        if let LogRecord::Fine(f) = &mut r2 {
            f.lsn = 2;
            f.end_of_txn = true;
        }
        table.observe(&r2);
        assert!(table.is_empty());
    }
}
