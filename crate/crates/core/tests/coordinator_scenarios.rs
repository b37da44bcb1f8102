//! Distributed Graph Coordinator behavior on the two-node running example
//! plus randomized partition/merge oracles.
//!
//! The running example: node 1 admits a batch t11..t15. t11 and t12 are
//! local; t13 reads record B and updates records C and F; t14 and t15 are
//! also distributed. Keys A..D live on node 1, E..H on node 2.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use depdb_core::coordinator::{
    merge_subgraphs, partition_graph, resolve_batch, split_batch, Subgraph, WireMessage,
};
use depdb_core::depgraph::{build_graph, check_acyclic, DecomposedTxn, EdgeKind};
use depdb_core::proc::{OpKind, ProcedureRegistry, RecordOp};
use depdb_core::store::RecordId;
use depdb_core::txn::{
    BatchEpoch, KeyOwnership, NodeId, Transaction, TxnId,
};

// Keys A..H by letter; A..D owned by node 1's id 0, E..H by node 2's id 1.
fn key(letter: u8) -> RecordId {
    RecordId::new("t", vec![letter])
}

struct LetterOwnership;

impl KeyOwnership for LetterOwnership {
    fn owner(&self, target: &RecordId) -> depdb_core::Result<NodeId> {
        Ok(if target.key[0] < b'E' { 0 } else { 1 })
    }
}

/// params: [n, (letter, write_flag) * n]
fn letter_body(params: &[u64]) -> depdb_core::Result<Vec<RecordOp>> {
    let n = params[0] as usize;
    let mut ops = Vec::new();
    for i in 0..n {
        let letter = params[1 + 2 * i] as u8;
        let write = params[2 + 2 * i] != 0;
        let op = if write {
            OpKind::Put { column: "v".into(), value: vec![1] }
        } else {
            OpKind::Read
        };
        ops.push(RecordOp { target: key(letter), op });
    }
    Ok(ops)
}

fn registry() -> ProcedureRegistry {
    let mut r = ProcedureRegistry::new();
    r.register("letters", letter_body).unwrap();
    r
}

fn txn(reg: &ProcedureRegistry, seq: u32, accesses: &[(u8, bool)]) -> Transaction {
    let mut params = vec![accesses.len() as u64];
    for &(letter, write) in accesses {
        params.push(letter as u64);
        params.push(write as u64);
    }
    let access = reg.declared_access("letters", &params).unwrap();
    Transaction {
        id: TxnId { node: 0, epoch: 0, seq },
        procedure: "letters".into(),
        params,
        home: 0,
        access,
    }
}

/// The running-example batch on node 1 (node id 0): two locals then three
/// distributed transactions, t13 = read B, update C, update F.
fn running_example(reg: &ProcedureRegistry) -> BatchEpoch {
    let txns = vec![
        txn(reg, 0, &[(b'A', true), (b'B', true)]),                 // t11 local
        txn(reg, 1, &[(b'B', false), (b'D', true)]),                // t12 local
        txn(reg, 2, &[(b'B', false), (b'C', true), (b'F', true)]),  // t13
        txn(reg, 3, &[(b'D', false), (b'E', true)]),                // t14
        txn(reg, 4, &[(b'F', true), (b'G', true)]),                 // t15
    ];
    BatchEpoch { id: 0, txns }
}

#[test]
fn split_separates_local_from_distributed() {
    let reg = registry();
    let epoch = running_example(&reg);
    let (local, dist) = split_batch(&epoch, 0, &LetterOwnership).unwrap();
    let seqs = |v: &[Transaction]| v.iter().map(|t| t.id.seq).collect::<Vec<_>>();
    assert_eq!(seqs(&local), vec![0, 1]);
    assert_eq!(seqs(&dist), vec![2, 3, 4]);
}

#[test]
fn t13_decomposes_into_three_actions() {
    let reg = registry();
    let epoch = running_example(&reg);
    let actions = reg.decompose(&epoch.txns[2]).unwrap();
    assert_eq!(actions.len(), 3);
    assert_eq!(actions[0].target, key(b'B'));
    assert!(!actions[0].kind.writes());
    assert_eq!(actions[1].target, key(b'C'));
    assert!(actions[1].kind.writes());
    assert_eq!(actions[2].target, key(b'F'));
    assert!(actions[2].kind.writes());
}

#[test]
fn partition_sends_node2_vertices_with_node_edges_in_meta() {
    let reg = registry();
    let epoch = running_example(&reg);
    let resolved = resolve_batch(&epoch, 0, &reg, &LetterOwnership, 2).unwrap();
    let parts = partition_graph(0, &resolved.dist_graph);

    // Node 2 receives exactly the vertices targeting E..H: t13's F write,
    // t14's E write, t15's F and G writes.
    let to_node2 = &parts[&1];
    let mut targets: Vec<u8> = to_node2.vertices.iter().map(|v| v.target.key[0]).collect();
    targets.sort_unstable();
    assert_eq!(targets, vec![b'E', b'F', b'F', b'G']);
    // Every vertex appears in exactly one subgraph.
    let total: usize = parts.values().map(|s| s.vertices.len()).sum();
    assert_eq!(total, resolved.dist_graph.vertex_count());
    // Node dependencies (B->C->F program order crossing nodes, D->E) ride in
    // the destination's metadata.
    assert!(!to_node2.cross_edges.is_empty());
    for (from, to) in &to_node2.cross_edges {
        assert!(to_node2.vertices.iter().any(|v| v.id == *to || v.id == *from));
    }
}

#[test]
fn merge_with_no_remotes_is_identity_on_local_subgraph() {
    let reg = registry();
    let epoch = running_example(&reg);
    let resolved = resolve_batch(&epoch, 0, &reg, &LetterOwnership, 1).unwrap();
    let mut parts = partition_graph(0, &resolved.dist_graph);
    let kept = parts.remove(&0).unwrap();
    let merged = merge_subgraphs(&kept, &[]).unwrap();
    assert_eq!(merged.vertex_count(), kept.vertices.len());
    assert!(check_acyclic(&merged));
}

#[test]
fn empty_dist_graph_partitions_to_empty_map() {
    let graph = build_graph(0, &[], |_| Ok(0), 1).unwrap();
    assert!(partition_graph(0, &graph).is_empty());
}

#[test]
fn wire_messages_round_trip() {
    let reg = registry();
    let epoch = running_example(&reg);
    let resolved = resolve_batch(&epoch, 0, &reg, &LetterOwnership, 1).unwrap();
    let parts = partition_graph(0, &resolved.dist_graph);
    let msg = WireMessage::Subgraph(parts[&1].clone());
    assert_eq!(WireMessage::decode(&msg.encode()).unwrap(), msg);
    let empty = WireMessage::EpochEmpty { epoch: 7, origin: 3 };
    assert_eq!(WireMessage::decode(&empty.encode()).unwrap(), empty);
    let done = WireMessage::EpochDone { epoch: 9, origin: 2 };
    assert_eq!(WireMessage::decode(&done.encode()).unwrap(), done);
}

// ---------------------------------------------------------------------------
// Randomized oracles
// ---------------------------------------------------------------------------

fn random_dist_txns(
    rng: &mut impl rand::Rng,
    reg: &ProcedureRegistry,
    nodes: u32,
    count: usize,
) -> Vec<(NodeId, Transaction)> {
    // Keys 'A' + 4*node .. 'A' + 4*node + 3 belong to each node.
    let mut out = Vec::new();
    for i in 0..count {
        let home = rng.gen_range(0..nodes);
        let remote = (home + 1 + rng.gen_range(0..nodes - 1)) % nodes;
        let n_ops = rng.gen_range(2..5usize);
        let mut accesses = Vec::new();
        for j in 0..n_ops {
            let node = if j == 0 { remote } else if rng.gen_bool(0.5) { home } else { remote };
            let letter = b'A' + (4 * node as u8) + rng.gen_range(0..4u8);
            accesses.push((letter, rng.gen_bool(0.7)));
        }
        let mut t = txn(reg, i as u32, &accesses);
        t.id.node = home;
        t.home = home;
        out.push((home, t));
    }
    out
}

struct FourNodeOwnership;

impl KeyOwnership for FourNodeOwnership {
    fn owner(&self, target: &RecordId) -> depdb_core::Result<NodeId> {
        Ok(((target.key[0] - b'A') / 4) as NodeId)
    }
}

/// Merged edge sets must equal a centralized build over the union of
/// distributed transactions, restricted to the destination's keys.
#[test]
fn merge_equals_centralized_build() {
    use rand::SeedableRng;
    let reg = registry();
    let nodes = 4u32;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
    for _round in 0..30 {
        let txns = random_dist_txns(&mut rng, &reg, nodes, 20);

        // Each home node builds its dist graph and partitions it.
        let mut inboxes: BTreeMap<NodeId, Vec<Subgraph>> = BTreeMap::new();
        let mut kept: BTreeMap<NodeId, Subgraph> = BTreeMap::new();
        for home in 0..nodes {
            let mut decomposed: Vec<DecomposedTxn> = Vec::new();
            let mut mine: Vec<&Transaction> =
                txns.iter().filter(|(h, _)| *h == home).map(|(_, t)| t).collect();
            mine.sort_by_key(|t| (t.id.seq, t.home));
            for t in mine {
                decomposed.push(DecomposedTxn {
                    id: t.id,
                    distributed: true,
                    actions: reg.decompose(t).unwrap(),
                });
            }
            let graph =
                build_graph(0, &decomposed, |t| FourNodeOwnership.owner(t), 1).unwrap();
            let mut parts = partition_graph(home, &graph);
            kept.insert(
                home,
                parts.remove(&home).unwrap_or_else(|| Subgraph {
                    origin: home,
                    dest: home,
                    epoch: 0,
                    vertices: Vec::new(),
                    edges: Vec::new(),
                    cross_edges: Vec::new(),
                }),
            );
            for (dest, sub) in parts {
                inboxes.entry(dest).or_default().push(sub);
            }
        }

        // Union-of-vertices check: exactly-once placement.
        let mut placed = 0usize;
        let mut expected_vertices = 0usize;
        for (_, t) in &txns {
            expected_vertices += reg.decompose(t).unwrap().len();
        }
        for node in 0..nodes {
            placed += kept[&node].vertices.len();
            placed += inboxes
                .get(&node)
                .map(|v| v.iter().map(|s| s.vertices.len()).sum::<usize>())
                .unwrap_or(0);
        }
        assert_eq!(placed, expected_vertices);

        // Centralized build over the union, in canonical distributed order.
        let mut all: Vec<&Transaction> = txns.iter().map(|(_, t)| t).collect();
        all.sort_by_key(|t| (t.id.seq, t.home));
        let decomposed: Vec<DecomposedTxn> = all
            .iter()
            .map(|t| DecomposedTxn {
                id: t.id,
                distributed: true,
                actions: reg.decompose(t).unwrap(),
            })
            .collect();
        let central =
            build_graph(0, &decomposed, |t| FourNodeOwnership.owner(t), 1).unwrap();

        for node in 0..nodes {
            let mut remotes = inboxes.remove(&node).unwrap_or_default();
            // Merge determinism: arrival order must not matter.
            let merged_a = merge_subgraphs(&kept[&node], &remotes).unwrap();
            remotes.reverse();
            let merged_b = merge_subgraphs(&kept[&node], &remotes).unwrap();
            assert_eq!(merged_a.dump(), merged_b.dump(), "merge must be order-insensitive");
            assert!(check_acyclic(&merged_a));

            // Compare edge sets restricted to this node's keys.
            let expected: BTreeSet<(String, String, EdgeKind)> = central
                .edges
                .iter()
                .filter(|e| {
                    let vf = &central.vertices[e.from];
                    let vt = &central.vertices[e.to];
                    FourNodeOwnership.owner(&vf.action.target).unwrap() == node
                        && FourNodeOwnership.owner(&vt.action.target).unwrap() == node
                })
                .map(|e| {
                    (
                        central.vertices[e.from].action.id.to_string(),
                        central.vertices[e.to].action.id.to_string(),
                        e.kind,
                    )
                })
                .collect();
            let actual: BTreeSet<(String, String, EdgeKind)> = merged_a
                .edges
                .iter()
                .map(|e| {
                    (
                        merged_a.vertices[e.from].action.id.to_string(),
                        merged_a.vertices[e.to].action.id.to_string(),
                        e.kind,
                    )
                })
                .collect();
            assert_eq!(actual, expected, "node {node} merged graph diverges from centralized");
        }
    }
}

/// Golden dump of the running example's local graph.
#[test]
fn running_example_local_graph_dump() {
    let reg = registry();
    let epoch = running_example(&reg);
    let resolved = resolve_batch(&epoch, 0, &reg, &LetterOwnership, 1).unwrap();
    // t11 writes A, B; t12 reads B then writes D. One logical edge per txn,
    // one temporal edge B(write) -> B(read).
    let expected = "epoch 0\n\
                    t0.0.0#0 -> t0.0.0#1 [logical]\n\
                    t0.0.0#1 -> t0.0.1#0 [temporal]\n\
                    t0.0.1#0 -> t0.0.1#1 [logical]\n";
    assert_eq!(resolved.local_graph.dump(), expected);
}
