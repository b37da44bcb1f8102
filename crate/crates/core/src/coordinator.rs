//! Distributed Graph Coordinator.
//!
//! Separates local from distributed transactions, partitions the distributed
//! dependency graph along node-dependency edges, exchanges the resulting
//! subgraphs in one batched message per peer, and merges received subgraphs
//! into a per-node global graph with cross-origin temporal edges inserted in
//! canonical order. Merging is deterministic: every node derives the same
//! order from the subgraph metadata alone, with no negotiation.

use std::collections::BTreeMap;

use crate::codec::{
    self, read_frame, write_frame, FrameKind, Reader, Writer,
};
use crate::depgraph::{
    build_graph, ChainState, DecomposedTxn, DependencyGraph, Edge, EdgeKind, GraphVertex,
};
use crate::error::{EngineError, Result};
use crate::txn::{
    ActionId, BatchEpoch, EpochId, KeyOwnership, NodeId, RecordAction, Transaction,
};

/// The slice of a distributed dependency graph destined for one node: every
/// vertex targets a key owned by `dest`. Metadata (origin, per-vertex
/// transaction sequence numbers inside the action ids) suffices to order
/// merged vertices deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub origin: NodeId,
    pub dest: NodeId,
    pub epoch: EpochId,
    pub vertices: Vec<RecordAction>,
    /// Logical/temporal edges with both endpoints in `vertices` (indices).
    pub edges: Vec<(u32, u32, EdgeKind)>,
    /// Node-dependency edges with exactly one endpoint in this subgraph,
    /// carried as completion metadata.
    pub cross_edges: Vec<(ActionId, ActionId)>,
}

impl Subgraph {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Wire messages exchanged between Distributed Graph Coordinators.
#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    /// Batched vertex+edge payload for one (origin, dest, epoch).
    Subgraph(Subgraph),
    /// Mandatory marker: origin has nothing for us this epoch. Absence of a
    /// subgraph is thereby distinguishable from message loss.
    EpochEmpty { epoch: EpochId, origin: NodeId },
    /// Origin finished executing and flushing its share of the epoch's
    /// distributed work; doubles as the aggregated result acknowledgment.
    EpochDone { epoch: EpochId, origin: NodeId },
}

impl WireMessage {
    pub fn epoch(&self) -> EpochId {
        match self {
            WireMessage::Subgraph(s) => s.epoch,
            WireMessage::EpochEmpty { epoch, .. } => *epoch,
            WireMessage::EpochDone { epoch, .. } => *epoch,
        }
    }

    pub fn origin(&self) -> NodeId {
        match self {
            WireMessage::Subgraph(s) => s.origin,
            WireMessage::EpochEmpty { origin, .. } => *origin,
            WireMessage::EpochDone { origin, .. } => *origin,
        }
    }

    /// Encode with the same binary framing as the log formats.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            WireMessage::Subgraph(s) => {
                w.u64(s.epoch);
                w.u32(s.origin);
                w.u32(s.dest);
                w.u32(s.vertices.len() as u32);
                for v in &s.vertices {
                    codec::write_action_id(&mut w, v.id);
                    codec::write_record_id(&mut w, &v.target);
                    w.u8(action_kind_tag(v.kind));
                    codec::write_ops(&mut w, &v.ops);
                }
                w.u32(s.edges.len() as u32);
                for &(from, to, kind) in &s.edges {
                    w.u32(from);
                    w.u32(to);
                    w.u8(edge_kind_tag(kind));
                }
                w.u32(s.cross_edges.len() as u32);
                for &(from, to) in &s.cross_edges {
                    codec::write_action_id(&mut w, from);
                    codec::write_action_id(&mut w, to);
                }
                let mut out = Vec::new();
                write_frame(&mut out, FrameKind::Subgraph, &w.into_vec());
                out
            }
            WireMessage::EpochEmpty { epoch, origin } => {
                w.u64(*epoch);
                w.u32(*origin);
                let mut out = Vec::new();
                write_frame(&mut out, FrameKind::EpochEmpty, &w.into_vec());
                out
            }
            WireMessage::EpochDone { epoch, origin } => {
                w.u64(*epoch);
                w.u32(*origin);
                let mut out = Vec::new();
                write_frame(&mut out, FrameKind::EpochDone, &w.into_vec());
                out
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<WireMessage> {
        let frame = read_frame(bytes, 0)?;
        let mut r = Reader::new(frame.payload);
        let msg = match frame.kind {
            FrameKind::Subgraph => {
                let epoch = r.u64()?;
                let origin = r.u32()?;
                let dest = r.u32()?;
                let nv = r.u32()? as usize;
                let mut vertices = Vec::with_capacity(nv.min(65536));
                for _ in 0..nv {
                    let id = codec::read_action_id(&mut r)?;
                    let target = codec::read_record_id(&mut r)?;
                    let kind = action_kind_from(r.u8()?)?;
                    let ops = codec::read_ops(&mut r)?;
                    vertices.push(RecordAction { id, target, kind, ops });
                }
                let ne = r.u32()? as usize;
                let mut edges = Vec::with_capacity(ne.min(65536));
                for _ in 0..ne {
                    let from = r.u32()?;
                    let to = r.u32()?;
                    let kind = edge_kind_from(r.u8()?)?;
                    if from as usize >= vertices.len() || to as usize >= vertices.len() {
                        return Err(EngineError::decode(0, "subgraph edge index out of range"));
                    }
                    edges.push((from, to, kind));
                }
                let nc = r.u32()? as usize;
                let mut cross_edges = Vec::with_capacity(nc.min(65536));
                for _ in 0..nc {
                    let from = codec::read_action_id(&mut r)?;
                    let to = codec::read_action_id(&mut r)?;
                    cross_edges.push((from, to));
                }
                WireMessage::Subgraph(Subgraph { origin, dest, epoch, vertices, edges, cross_edges })
            }
            FrameKind::EpochEmpty => WireMessage::EpochEmpty { epoch: r.u64()?, origin: r.u32()? },
            FrameKind::EpochDone => WireMessage::EpochDone { epoch: r.u64()?, origin: r.u32()? },
            other => {
                return Err(EngineError::decode(0, format!("unexpected frame {other:?}")));
            }
        };
        r.finish()?;
        Ok(msg)
    }
}

fn action_kind_tag(kind: crate::txn::ActionKind) -> u8 {
    match kind {
        crate::txn::ActionKind::Read => 0,
        crate::txn::ActionKind::Write => 1,
        crate::txn::ActionKind::ReadWrite => 2,
    }
}

fn action_kind_from(tag: u8) -> Result<crate::txn::ActionKind> {
    Ok(match tag {
        0 => crate::txn::ActionKind::Read,
        1 => crate::txn::ActionKind::Write,
        2 => crate::txn::ActionKind::ReadWrite,
        _ => return Err(EngineError::decode(0, format!("unknown action kind {tag}"))),
    })
}

fn edge_kind_tag(kind: EdgeKind) -> u8 {
    match kind {
        EdgeKind::Logical => 0,
        EdgeKind::Temporal => 1,
        EdgeKind::Node => 2,
    }
}

fn edge_kind_from(tag: u8) -> Result<EdgeKind> {
    Ok(match tag {
        0 => EdgeKind::Logical,
        1 => EdgeKind::Temporal,
        2 => EdgeKind::Node,
        _ => return Err(EngineError::decode(0, format!("unknown edge kind {tag}"))),
    })
}

/// Partition one node's share of an epoch into local and distributed
/// transactions. A transaction is local iff all its targets are owned by its
/// home node; the partition is exact and disjoint.
pub fn split_batch(
    epoch: &BatchEpoch,
    node: NodeId,
    ownership: &dyn KeyOwnership,
) -> Result<(Vec<Transaction>, Vec<Transaction>)> {
    let mut local = Vec::new();
    let mut dist = Vec::new();
    for txn in epoch.for_node(node) {
        if txn.is_local(ownership)? {
            local.push(txn.clone());
        } else {
            dist.push(txn.clone());
        }
    }
    Ok((local, dist))
}

/// Partition a distributed dependency graph along node-dependency edges: each
/// vertex goes to the subgraph of the node owning its key; node edges become
/// cross-subgraph completion dependencies carried in metadata. Destinations
/// with no vertices are absent from the map.
pub fn partition_graph(
    origin: NodeId,
    dist_graph: &DependencyGraph,
) -> BTreeMap<NodeId, Subgraph> {
    let mut out: BTreeMap<NodeId, Subgraph> = BTreeMap::new();
    let mut vertex_slot: Vec<(NodeId, u32)> = Vec::with_capacity(dist_graph.vertex_count());

    for v in &dist_graph.vertices {
        let sub = out.entry(v.owner).or_insert_with(|| Subgraph {
            origin,
            dest: v.owner,
            epoch: dist_graph.epoch,
            vertices: Vec::new(),
            edges: Vec::new(),
            cross_edges: Vec::new(),
        });
        vertex_slot.push((v.owner, sub.vertices.len() as u32));
        sub.vertices.push(v.action.clone());
    }

    for e in &dist_graph.edges {
        let (from_dest, from_idx) = vertex_slot[e.from];
        let (to_dest, to_idx) = vertex_slot[e.to];
        if from_dest == to_dest {
            out.get_mut(&from_dest)
                .expect("slot exists")
                .edges
                .push((from_idx, to_idx, e.kind));
        } else {
            // Node edges by construction; the waiting side carries the meta.
            let from_id = dist_graph.vertices[e.from].action.id;
            let to_id = dist_graph.vertices[e.to].action.id;
            out.get_mut(&to_dest)
                .expect("slot exists")
                .cross_edges
                .push((from_id, to_id));
        }
    }
    out
}

/// Merge this node's own kept subgraph with the subgraphs received from every
/// peer into the global dependency graph of distributed work on this node.
///
/// Vertices are ordered by the canonical cross-origin rule — (epoch, txn
/// sequence number, origin node) — and temporal edges are rebuilt over the
/// union per key, so the merged edge set equals a centralized build over the
/// union of distributed transactions restricted to this node's keys, and is
/// identical regardless of subgraph arrival order.
pub fn merge_subgraphs(local: &Subgraph, remotes: &[Subgraph]) -> Result<DependencyGraph> {
    let epoch = local.epoch;
    for r in remotes {
        if r.epoch != epoch {
            return Err(EngineError::EpochIncomplete(epoch, r.origin));
        }
    }

    // Txn-major canonical order, program order within a transaction.
    let mut txns: BTreeMap<(u8, u32, u32), BTreeMap<u32, RecordAction>> = BTreeMap::new();
    let mut carried: Vec<(ActionId, ActionId, EdgeKind)> = Vec::new();
    for sub in std::iter::once(local).chain(remotes.iter()) {
        for v in &sub.vertices {
            let rank = crate::depgraph::txn_rank(v.id.txn, true);
            txns.entry(rank).or_default().insert(v.id.index, v.clone());
        }
        for &(from, to, kind) in &sub.edges {
            let from_id = sub.vertices[from as usize].id;
            let to_id = sub.vertices[to as usize].id;
            carried.push((from_id, to_id, kind));
        }
    }

    let mut graph = DependencyGraph::new(epoch);
    let mut index: BTreeMap<ActionId, usize> = BTreeMap::new();
    for actions in txns.values() {
        for action in actions.values() {
            index.insert(action.id, graph.vertices.len());
            graph.vertices.push(GraphVertex {
                owner: local.dest,
                distributed: true,
                action: action.clone(),
            });
        }
    }

    // Logical edges carried in the subgraphs (same-origin, both ends here).
    for (from_id, to_id, kind) in carried {
        if kind != EdgeKind::Logical {
            continue;
        }
        let (&from, &to) = match (index.get(&from_id), index.get(&to_id)) {
            (Some(f), Some(t)) => (f, t),
            _ => return Err(EngineError::decode(0, "subgraph edge references missing vertex")),
        };
        graph.edges.push(Edge { from, to, kind });
    }

    // Temporal chains rebuilt over the union in canonical order.
    let mut chains: BTreeMap<crate::store::RecordId, ChainState> = BTreeMap::new();
    for (v, vx) in graph.vertices.iter().enumerate() {
        chains
            .entry(vx.action.target.clone())
            .or_default()
            .advance(v, vx.action.kind.writes(), &mut graph.edges);
    }

    graph.finalize();
    Ok(graph)
}

/// Convenience: decompose and split one node's batch, then build its local
/// and distributed graphs in canonical order.
pub struct ResolvedBatch {
    pub local_graph: DependencyGraph,
    pub dist_graph: DependencyGraph,
    pub local_txns: Vec<Transaction>,
    pub dist_txns: Vec<Transaction>,
}

pub fn resolve_batch(
    epoch: &BatchEpoch,
    node: NodeId,
    registry: &crate::proc::ProcedureRegistry,
    ownership: &dyn KeyOwnership,
    constructors: usize,
) -> Result<ResolvedBatch> {
    let (local_txns, dist_txns) = split_batch(epoch, node, ownership)?;
    let decompose = |txns: &[Transaction], distributed: bool| -> Result<Vec<DecomposedTxn>> {
        let mut out = Vec::with_capacity(txns.len());
        for t in txns {
            out.push(DecomposedTxn {
                id: t.id,
                distributed,
                actions: registry.decompose(t)?,
            });
        }
        Ok(out)
    };
    let local_dec = decompose(&local_txns, false)?;
    let dist_dec = decompose(&dist_txns, true)?;
    let local_graph = build_graph(epoch.id, &local_dec, |t| ownership.owner(t), constructors)?;
    let dist_graph = build_graph(epoch.id, &dist_dec, |t| ownership.owner(t), constructors)?;
    Ok(ResolvedBatch { local_graph, dist_graph, local_txns, dist_txns })
}
