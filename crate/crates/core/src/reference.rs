//! Serial reference engine: the independent correctness oracle.
//!
//! Executes transactions one at a time in canonical epoch order against plain
//! stores, touching none of the graph, coordinator, or logging machinery. A
//! correct cluster run must leave every node's store byte-identical to this.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::proc::ProcedureRegistry;
use crate::store::Store;
use crate::txn::{BatchEpoch, KeyOwnership, NodeId, Transaction};

/// Per-node stores holding the cluster state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterState {
    pub stores: BTreeMap<NodeId, Store>,
}

impl ClusterState {
    pub fn new(stores: BTreeMap<NodeId, Store>) -> ClusterState {
        ClusterState { stores }
    }

    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (node, store) in &self.stores {
            hasher.update(node.to_le_bytes());
            hasher.update(store.digest());
        }
        hasher.finalize().into()
    }
}

/// Execute one transaction serially: every action applies to the store of the
/// node owning its key.
pub fn apply_serial(
    state: &mut ClusterState,
    txn: &Transaction,
    registry: &ProcedureRegistry,
    ownership: &dyn KeyOwnership,
) -> Result<()> {
    for action in registry.decompose(txn)? {
        let node = ownership.owner(&action.target)?;
        let store = state.stores.entry(node).or_default();
        store.apply_action(&action)?;
    }
    Ok(())
}

/// Execute whole epochs serially in their canonical arrival order.
pub fn execute_epochs_serially(
    state: &mut ClusterState,
    epochs: &[BatchEpoch],
    registry: &ProcedureRegistry,
    ownership: &dyn KeyOwnership,
) -> Result<()> {
    for epoch in epochs {
        for txn in &epoch.txns {
            apply_serial(state, txn, registry, ownership)?;
        }
    }
    Ok(())
}

/// Replay one node's share of a transaction sequence: only the actions whose
/// targets the node owns are applied. This is the per-node transcript oracle
/// used by crash tests — the recovered store of a node must equal replaying
/// exactly the transactions it durably flushed.
pub fn replay_transcript_for_node<'a>(
    store: &mut Store,
    txns: impl Iterator<Item = &'a Transaction>,
    registry: &ProcedureRegistry,
    ownership: &dyn KeyOwnership,
    node: NodeId,
) -> Result<()> {
    for txn in txns {
        for action in registry.decompose(txn)? {
            if ownership.owner(&action.target)? == node {
                store.apply_action(&action)?;
            }
        }
    }
    Ok(())
}
