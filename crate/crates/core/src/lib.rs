//! An in-memory, multi-partition transactional engine built around batched
//! dependency-graph concurrency control, with dependency logging (fine- and
//! coarse-grained), an ARIES-style baseline logger, parallel graph-driven
//! crash recovery, and a deterministic simulated cluster for experiments.
//!
//! Transactions are processed in discrete batch epochs. Each epoch flows
//! through a resolution phase (decompose transactions into record actions,
//! build dependency graphs, exchange subgraphs for distributed work) and an
//! execution phase (run serializable per-worker schedules derived from the
//! graphs), followed by a group flush of per-worker log buffers. The same
//! graphs double as the logging structure, which is what makes replay
//! parallel and on-demand recovery possible.

pub mod codec;
pub mod coordinator;
pub mod depgraph;
pub mod durability;
pub mod error;
pub mod executor;
pub mod proc;
pub mod recovery;
pub mod reference;
pub mod simnet;
pub mod store;
pub mod txn;
pub mod workload;

pub use error::{EngineError, Result};
pub use store::{ActionEffect, Record, RecordId, Store};
pub use txn::{ActionId, ActionKind, BatchEpoch, NodeId, RecordAction, Transaction, TxnId};
