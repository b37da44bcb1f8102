//! End-to-end correctness of the cluster pipeline: the final per-node stores
//! of a simulated run must be byte-identical to serial execution of every
//! epoch in canonical arrival order on the reference engine.

use depdb_core::durability::LogMode;
use depdb_core::reference::{execute_epochs_serially, ClusterState};
use depdb_core::simnet::{Sim, SimConfig};
use depdb_core::workload::{build_workload, WorkloadConfig, WorkloadKind};

fn run_and_compare(wl: WorkloadConfig, sim_cfg: SimConfig, epochs: u64) {
    let data = tempfile::tempdir().unwrap();
    let workload = build_workload(&wl).unwrap();
    let mut sim = Sim::new(sim_cfg, workload, data.path().to_path_buf()).unwrap();
    sim.run_to_settled(epochs).unwrap();
    assert_eq!(sim.settled_epochs(), epochs, "run must settle every epoch");

    // Independent route: serial re-execution of the same generated epochs.
    let oracle_wl = build_workload(&wl).unwrap();
    let mut expected = ClusterState::default();
    for node in 0..wl.nodes {
        expected.stores.insert(node, oracle_wl.seed_store(node));
    }
    let batches: Vec<_> = (0..epochs).map(|e| oracle_wl.epoch(e).unwrap()).collect();
    execute_epochs_serially(
        &mut expected,
        &batches,
        oracle_wl.registry(),
        &oracle_wl.ownership(),
    )
    .unwrap();

    for node in 0..wl.nodes {
        assert_eq!(
            sim.node_store(node).digest(),
            expected.stores[&node].digest(),
            "node {node} diverged from serial execution"
        );
        assert_eq!(sim.node_store(node), &expected.stores[&node]);
    }

    // No conflict aborts: every submitted transaction committed.
    let submitted: usize = batches.iter().map(|b| b.len()).sum();
    assert_eq!(sim.stats().commits.len(), submitted);
}

#[test]
fn single_node_ycsb_matches_serial_oracle() {
    let wl = WorkloadConfig {
        nodes: 1,
        batch_size: 40,
        keys_per_node: 64,
        theta: 0.8,
        seed: 11,
        ..Default::default()
    };
    let sim = SimConfig { nodes: 1, logging: LogMode::Fine, ..Default::default() };
    run_and_compare(wl, sim, 6);
}

#[test]
fn multi_node_local_only_matches_serial_oracle() {
    let wl = WorkloadConfig {
        nodes: 4,
        batch_size: 24,
        keys_per_node: 128,
        dist_pct: 0,
        seed: 5,
        ..Default::default()
    };
    let sim = SimConfig { nodes: 4, logging: LogMode::Coarse, ..Default::default() };
    run_and_compare(wl, sim, 5);
}

#[test]
fn multi_node_distributed_matches_serial_oracle() {
    for dist_pct in [10, 50, 100] {
        let wl = WorkloadConfig {
            nodes: 4,
            batch_size: 24,
            keys_per_node: 64,
            theta: 0.8,
            dist_pct,
            seed: 100 + dist_pct as u64,
            ..Default::default()
        };
        let sim = SimConfig { nodes: 4, logging: LogMode::Fine, ..Default::default() };
        run_and_compare(wl, sim, 5);
    }
}

#[test]
fn tpcc_distributed_matches_serial_oracle() {
    let wl = WorkloadConfig {
        kind: WorkloadKind::Tpcc,
        nodes: 2,
        warehouses: 4,
        batch_size: 30,
        dist_pct: 20,
        customers_per_district: 12,
        districts_per_warehouse: 4,
        items_per_warehouse: 40,
        seed: 77,
        ..Default::default()
    };
    let sim = SimConfig { nodes: 2, logging: LogMode::Coarse, ..Default::default() };
    run_and_compare(wl, sim, 6);
}

#[test]
fn local_only_epochs_send_no_subgraph_messages() {
    let wl = WorkloadConfig {
        nodes: 3,
        batch_size: 10,
        keys_per_node: 64,
        dist_pct: 0,
        seed: 9,
        ..Default::default()
    };
    let data = tempfile::tempdir().unwrap();
    let workload = build_workload(&wl).unwrap();
    let mut sim =
        Sim::new(SimConfig { nodes: 3, ..Default::default() }, workload, data.path().into())
            .unwrap();
    sim.run_to_settled(3).unwrap();
    // Only empty markers crossed the wire: zero SUBGRAPH messages, and no
    // EPOCH_DONE either since nothing distributed executed anywhere.
    assert!(sim.stats().subgraph_msgs.is_empty());
    // 3 epochs x 3 nodes x 2 peers worth of empty markers.
    assert_eq!(sim.stats().messages_sent, 18);
}

#[test]
fn identical_seeds_reproduce_identical_traces() {
    let wl = WorkloadConfig {
        nodes: 2,
        batch_size: 16,
        keys_per_node: 64,
        dist_pct: 30,
        seed: 42,
        ..Default::default()
    };
    let mut digests = Vec::new();
    for _ in 0..2 {
        let data = tempfile::tempdir().unwrap();
        let workload = build_workload(&wl).unwrap();
        let mut sim = Sim::new(
            SimConfig { nodes: 2, logging: LogMode::Fine, ..Default::default() },
            workload,
            data.path().into(),
        )
        .unwrap();
        sim.run_to_settled(4).unwrap();
        digests.push((sim.trace_digest(), sim.node_store(0).digest(), sim.node_store(1).digest()));
    }
    assert_eq!(digests[0], digests[1]);
}
