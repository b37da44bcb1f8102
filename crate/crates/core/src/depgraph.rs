//! Dependency graph construction and schedule derivation.
//!
//! Vertices are record actions. Logical edges chain the actions of one
//! transaction in program order; temporal edges order conflicting actions of
//! different transactions (any pair involving a write on the same record) in
//! canonical batch order; node edges are logical edges whose endpoints
//! execute on different nodes.
//!
//! Acyclicity is by construction: every edge strictly increases the
//! (canonical transaction rank, program index) pair, so derived schedules can
//! wait on edges without deadlocking.

use std::collections::BTreeMap;

use crate::codec::crc32;
use crate::error::{EngineError, Result};
use crate::store::RecordId;
use crate::txn::{ActionId, EpochId, NodeId, RecordAction, TxnId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Logical,
    Temporal,
    Node,
}

impl std::fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EdgeKind::Logical => "logical",
            EdgeKind::Temporal => "temporal",
            EdgeKind::Node => "node",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone)]
pub struct GraphVertex {
    pub action: RecordAction,
    /// Node owning the target record; where the action executes.
    pub owner: NodeId,
    /// Whether the vertex belongs to a distributed transaction.
    pub distributed: bool,
}

impl GraphVertex {
    /// Canonical rank of the owning transaction within its epoch.
    pub fn txn_rank(&self) -> (u8, u32, u32) {
        txn_rank(self.action.id.txn, self.distributed)
    }
}

pub fn txn_rank(id: TxnId, distributed: bool) -> (u8, u32, u32) {
    if distributed {
        (1, id.seq, id.node)
    } else {
        (0, id.node, id.seq)
    }
}

/// A transaction ready for graph construction: its decomposed actions plus
/// the locality verdict from the batch split.
#[derive(Debug, Clone)]
pub struct DecomposedTxn {
    pub id: TxnId,
    pub distributed: bool,
    pub actions: Vec<RecordAction>,
}

#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    pub epoch: EpochId,
    pub vertices: Vec<GraphVertex>,
    pub edges: Vec<Edge>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

/// Per-key chain state for temporal edge construction. Writes link from the
/// preceding read-run (or the previous write when the run is empty); reads
/// link from the last write. Read-read pairs get no edge.
#[derive(Debug, Clone, Default)]
pub struct ChainState {
    pub last_write: Option<usize>,
    pub reads_since: Vec<usize>,
}

impl ChainState {
    /// Advance the chain with vertex `v`, appending the temporal edges it
    /// induces to `edges`.
    pub fn advance(&mut self, v: usize, writes: bool, edges: &mut Vec<Edge>) {
        if writes {
            if self.reads_since.is_empty() {
                if let Some(w) = self.last_write {
                    edges.push(Edge { from: w, to: v, kind: EdgeKind::Temporal });
                }
            } else {
                for &r in &self.reads_since {
                    edges.push(Edge { from: r, to: v, kind: EdgeKind::Temporal });
                }
            }
            self.last_write = Some(v);
            self.reads_since.clear();
        } else {
            if let Some(w) = self.last_write {
                edges.push(Edge { from: w, to: v, kind: EdgeKind::Temporal });
            }
            self.reads_since.push(v);
        }
    }
}

impl DependencyGraph {
    pub fn new(epoch: EpochId) -> Self {
        DependencyGraph { epoch, ..Default::default() }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn preds(&self, v: usize) -> &[usize] {
        &self.preds[v]
    }

    pub fn succs(&self, v: usize) -> &[usize] {
        &self.succs[v]
    }

    pub fn find_vertex(&self, id: ActionId) -> Option<usize> {
        self.vertices.iter().position(|v| v.action.id == id)
    }

    /// Rebuild adjacency lists and canonicalize edge order. Call after any
    /// direct edge manipulation.
    pub fn finalize(&mut self) {
        self.edges.sort_unstable();
        self.edges.dedup();
        self.preds = vec![Vec::new(); self.vertices.len()];
        self.succs = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            self.succs[e.from].push(e.to);
            self.preds[e.to].push(e.from);
        }
    }

    /// Text edge-list dump for golden-file tests:
    /// `epoch <id>` then one `<from> -> <to> [kind]` line per edge.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "epoch {}", self.epoch).unwrap();
        for e in &self.edges {
            writeln!(
                out,
                "{} -> {} [{}]",
                self.vertices[e.from].action.id, self.vertices[e.to].action.id, e.kind
            )
            .unwrap();
        }
        out
    }

    /// Temporal edges projected onto transaction pairs, in edge order. Feed of
    /// the coarse-grained transaction dependency graph.
    pub fn temporal_txn_events(&self) -> impl Iterator<Item = (TxnId, TxnId)> + '_ {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Temporal).map(|e| {
            (
                self.vertices[e.from].action.id.txn,
                self.vertices[e.to].action.id.txn,
            )
        })
    }

    /// Per-key chain end states, used to seam this graph's chains into a
    /// later execution phase on the same node.
    pub fn chain_tails(&self) -> BTreeMap<RecordId, ChainState> {
        let mut chains: BTreeMap<RecordId, ChainState> = BTreeMap::new();
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by_key(|&v| (self.vertices[v].txn_rank(), self.vertices[v].action.id.index));
        let mut scratch = Vec::new();
        for v in order {
            let vx = &self.vertices[v];
            chains
                .entry(vx.action.target.clone())
                .or_default()
                .advance(v, vx.action.kind.writes(), &mut scratch);
        }
        chains
    }
}

/// Shard a key across graph constructors. Each key's temporal chain is built
/// by exactly one constructor, so parallel construction needs no shared
/// state until the final merge.
fn constructor_for(target: &RecordId, constructors: usize) -> usize {
    let mut h = crc32(target.table.as_bytes());
    h = h.wrapping_mul(0x9E37_79B9).wrapping_add(crc32(&target.key));
    (h as usize) % constructors
}

/// Build the dependency graph for one batch partition. `txns` must already be
/// in canonical epoch order; `owner_of` reports the owning node per vertex
/// (used to distinguish logical from node edges).
pub fn build_graph(
    epoch: EpochId,
    txns: &[DecomposedTxn],
    owner_of: impl Fn(&RecordId) -> Result<NodeId>,
    constructors: usize,
) -> Result<DependencyGraph> {
    let constructors = constructors.max(1);
    let mut graph = DependencyGraph::new(epoch);

    // Vertices in canonical order: transaction order, program order within.
    for txn in txns {
        for action in &txn.actions {
            let owner = owner_of(&action.target)?;
            graph.vertices.push(GraphVertex {
                action: action.clone(),
                owner,
                distributed: txn.distributed,
            });
        }
    }

    // Logical / node edges: program-order chain per transaction.
    let mut base = 0usize;
    for txn in txns {
        for i in 1..txn.actions.len() {
            let from = base + i - 1;
            let to = base + i;
            let kind = if graph.vertices[from].owner != graph.vertices[to].owner {
                EdgeKind::Node
            } else {
                EdgeKind::Logical
            };
            graph.edges.push(Edge { from, to, kind });
        }
        base += txn.actions.len();
    }

    // Temporal edges, one constructor per key shard. Output is independent of
    // the shard count; the shards only bound what parallel constructors
    // would each own.
    for shard in 0..constructors {
        let mut chains: BTreeMap<&RecordId, ChainState> = BTreeMap::new();
        for (v, vx) in graph.vertices.iter().enumerate() {
            if constructor_for(&vx.action.target, constructors) != shard {
                continue;
            }
            chains
                .entry(&vx.action.target)
                .or_default()
                .advance(v, vx.action.kind.writes(), &mut graph.edges);
        }
    }

    graph.finalize();
    debug_assert!(check_acyclic(&graph));
    Ok(graph)
}

/// True iff the graph has no directed cycle (Kahn pass).
pub fn check_acyclic(graph: &DependencyGraph) -> bool {
    let n = graph.vertex_count();
    let mut indeg: Vec<usize> = (0..n).map(|v| graph.preds(v).len()).collect();
    let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for &s in graph.succs(v) {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                queue.push(s);
            }
        }
    }
    seen == n
}

/// One worker's execution order. Every in-edge of a vertex originates either
/// earlier in the same schedule or in a vertex another worker signals
/// complete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub worker: usize,
    pub vertices: Vec<usize>,
}

/// Kahn-style leveling with round-robin assignment of ready vertices to
/// workers; ties broken by action id. The union of schedules covers the graph
/// exactly once.
pub fn derive_schedules(graph: &DependencyGraph, workers: usize) -> Result<Vec<Schedule>> {
    if workers == 0 {
        return Err(EngineError::InvalidConfig("worker count must be >= 1".into()));
    }
    let n = graph.vertex_count();
    let mut schedules: Vec<Schedule> = (0..workers)
        .map(|worker| Schedule { worker, vertices: Vec::new() })
        .collect();
    let mut indeg: Vec<usize> = (0..n).map(|v| graph.preds(v).len()).collect();
    let mut level: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut next_worker = 0usize;
    while !level.is_empty() {
        level.sort_by_key(|&v| graph.vertices[v].action.id);
        let mut next_level = Vec::new();
        for &v in &level {
            schedules[next_worker].vertices.push(v);
            next_worker = (next_worker + 1) % workers;
            for &s in graph.succs(v) {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    next_level.push(s);
                }
            }
        }
        level = next_level;
    }
    let assigned: usize = schedules.iter().map(|s| s.vertices.len()).sum();
    debug_assert_eq!(assigned, n, "schedules must cover the graph (acyclic input)");
    Ok(schedules)
}
