//! Transaction and batch model.
//!
//! Transactions are grouped into discrete batch epochs. Within an epoch the
//! canonical order — local transactions first, then distributed ones in
//! (sequence, home-node) order — is both the tie-breaking order for temporal
//! dependency edges and the equivalent serial order the whole engine is
//! checked against.

use crate::proc::OpKind;
use crate::store::RecordId;

pub type NodeId = u32;
pub type EpochId = u64;

/// Globally unique transaction identifier, totally ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxnId {
    pub node: NodeId,
    pub epoch: EpochId,
    pub seq: u32,
}

impl std::fmt::Display for TxnId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t{}.{}.{}", self.node, self.epoch, self.seq)
    }
}

/// Identifies one record action: all operations of one transaction on one
/// record, collapsed into a single dependency-graph vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId {
    pub txn: TxnId,
    /// Position in the transaction's program order after collapsing.
    pub index: u32,
}

impl std::fmt::Display for ActionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.txn, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Read,
    Write,
    ReadWrite,
}

impl ActionKind {
    pub fn writes(self) -> bool {
        !matches!(self, ActionKind::Read)
    }

    pub fn reads(self) -> bool {
        !matches!(self, ActionKind::Write)
    }
}

/// Dependency-graph vertex: the collapsed operations of one transaction on
/// one record, carrying the fragment needed to replay just this action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordAction {
    pub id: ActionId,
    pub target: RecordId,
    pub kind: ActionKind,
    /// Operation fragment in program order.
    pub ops: Vec<OpKind>,
}

/// Declared access to one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessDecl {
    pub target: RecordId,
    pub kind: ActionKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxnId,
    pub procedure: String,
    pub params: Vec<u64>,
    pub home: NodeId,
    /// Result of the procedure's declared-access function; a superset of the
    /// accesses actually performed, one entry per distinct record.
    pub access: Vec<AccessDecl>,
}

impl Transaction {
    /// A transaction is local iff every target it touches is owned by its
    /// home node.
    pub fn is_local(&self, ownership: &dyn KeyOwnership) -> crate::Result<bool> {
        for a in &self.access {
            if ownership.owner(&a.target)? != self.home {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Maps every record to the single node that owns (stores and executes) it.
pub trait KeyOwnership: Send + Sync {
    fn owner(&self, target: &RecordId) -> crate::Result<NodeId>;
}

/// Canonical within-epoch ordering key. Local transactions order before
/// distributed ones; locals by (home, seq) — they never conflict across
/// nodes — and distributed ones by (seq, home) so every node derives the
/// same cross-origin order from subgraph metadata alone.
pub fn canonical_rank(txn: &Transaction, distributed: bool) -> (u8, u32, u32) {
    if distributed {
        (1, txn.id.seq, txn.home)
    } else {
        (0, txn.home, txn.id.seq)
    }
}

/// One discrete batch of transactions flowing through the
/// resolution -> execution -> flush pipeline, cluster-wide.
#[derive(Debug, Clone)]
pub struct BatchEpoch {
    pub id: EpochId,
    /// Ordered by [`canonical_rank`]; this is the epoch's arrival order.
    pub txns: Vec<Transaction>,
}

impl BatchEpoch {
    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    /// Transactions homed at `node`, in epoch order.
    pub fn for_node(&self, node: NodeId) -> impl Iterator<Item = &Transaction> {
        self.txns.iter().filter(move |t| t.home == node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn txn_id_orders_lexicographically() {
        let a = TxnId { node: 0, epoch: 1, seq: 5 };
        let b = TxnId { node: 0, epoch: 2, seq: 0 };
        let c = TxnId { node: 1, epoch: 0, seq: 0 };
        assert!(a < b && b < c);
    }

    #[test]
    fn locals_rank_before_distributed() {
        let t = Transaction {
            id: TxnId { node: 3, epoch: 0, seq: 9 },
            procedure: "p".into(),
            params: vec![],
            home: 3,
            access: vec![],
        };
        assert!(canonical_rank(&t, false) < canonical_rank(&t, true));
    }
}
