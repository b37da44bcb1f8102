//! Stored procedures and transaction decomposition.
//!
//! A procedure is a deterministic function of its parameters producing a flat
//! stream of record operations. Keys never depend on data read at execution
//! time, which is what lets the engine declare full access sets before
//! execution and build dependency graphs ahead of any data access.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{EngineError, Result};
use crate::store::{RecordId, Store};
use crate::txn::{AccessDecl, ActionId, ActionKind, RecordAction, Transaction};

/// One operation on one record. `Add` treats the column as a little-endian
/// signed integer; `Insert` creates the record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    Read,
    Put { column: String, value: Vec<u8> },
    Add { column: String, delta: i64 },
    Insert { columns: Vec<(String, Vec<u8>)> },
}

impl OpKind {
    pub fn writes(&self) -> bool {
        !matches!(self, OpKind::Read)
    }
}

/// An operation addressed to a record, as emitted by a procedure body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordOp {
    pub target: RecordId,
    pub op: OpKind,
}

/// Deterministic procedure body: parameters in, operation stream out. Bodies
/// must be pure functions of their parameters.
pub type ProcBody = Arc<dyn Fn(&[u64]) -> Result<Vec<RecordOp>> + Send + Sync>;

pub struct ProcedureDef {
    pub name: String,
    body: ProcBody,
}

impl ProcedureDef {
    pub fn ops(&self, params: &[u64]) -> Result<Vec<RecordOp>> {
        (self.body)(params)
    }
}

/// Write-once-at-startup registry of stored procedures; read-only afterwards.
#[derive(Default, Clone)]
pub struct ProcedureRegistry {
    procs: BTreeMap<String, Arc<ProcedureDef>>,
}

impl ProcedureRegistry {
    pub fn new() -> Self {
        ProcedureRegistry::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        body: impl Fn(&[u64]) -> Result<Vec<RecordOp>> + Send + Sync + 'static,
    ) -> Result<()> {
        if self.procs.contains_key(name) {
            return Err(EngineError::DuplicateProcedure(name.to_string()));
        }
        self.procs.insert(
            name.to_string(),
            Arc::new(ProcedureDef { name: name.to_string(), body: Arc::new(body) }),
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Arc<ProcedureDef>> {
        self.procs
            .get(name)
            .ok_or_else(|| EngineError::ProcedureNotFound(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.procs.keys().map(|s| s.as_str())
    }

    /// Declared access set: one entry per distinct record the procedure
    /// touches, with the merged access kind.
    pub fn declared_access(&self, name: &str, params: &[u64]) -> Result<Vec<AccessDecl>> {
        let ops = self.get(name)?.ops(params)?;
        let mut out: Vec<AccessDecl> = Vec::new();
        for op in &ops {
            let kind = if op.op.writes() { ActionKind::Write } else { ActionKind::Read };
            match out.iter_mut().find(|d| d.target == op.target) {
                Some(d) => d.kind = merge_kind(d.kind, kind),
                None => out.push(AccessDecl { target: op.target.clone(), kind }),
            }
        }
        Ok(out)
    }

    /// Decompose a transaction into record actions: all operations on one
    /// record collapse into exactly one action, ordered by first touch.
    pub fn decompose(&self, txn: &Transaction) -> Result<Vec<RecordAction>> {
        let ops = self.get(&txn.procedure)?.ops(&txn.params)?;
        let mut actions: Vec<RecordAction> = Vec::new();
        for op in ops {
            let kind = if op.op.writes() { ActionKind::Write } else { ActionKind::Read };
            match actions.iter_mut().find(|a| a.target == op.target) {
                Some(a) => {
                    a.kind = merge_kind(a.kind, kind);
                    a.ops.push(op.op);
                }
                None => actions.push(RecordAction {
                    id: ActionId { txn: txn.id, index: actions.len() as u32 },
                    target: op.target,
                    kind,
                    ops: vec![op.op],
                }),
            }
        }
        Ok(actions)
    }
}

fn merge_kind(a: ActionKind, b: ActionKind) -> ActionKind {
    use ActionKind::*;
    match (a, b) {
        (Read, Read) => Read,
        (Write, Write) => Write,
        _ => ReadWrite,
    }
}

/// Execute a transaction's operations directly against a store, recording the
/// set of records actually touched. Used as the independent oracle for
/// decomposition and declared-access checks.
pub fn instrumented_touch_set(
    registry: &ProcedureRegistry,
    txn: &Transaction,
    store: &mut Store,
) -> Result<Vec<(RecordId, ActionKind)>> {
    let actions = registry.decompose(txn)?;
    let mut touched = Vec::new();
    for action in &actions {
        store.apply_action(action)?;
        touched.push((action.target.clone(), action.kind));
    }
    Ok(touched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txn::TxnId;

    fn key(k: u64) -> Vec<u8> {
        k.to_le_bytes().to_vec()
    }

    // params: [n, key_0, write_0, key_1, write_1, ...]; write!=0 puts the key
    // value back into column "v".
    fn toy_body(params: &[u64]) -> Result<Vec<RecordOp>> {
        let n = *params.first().ok_or_else(|| EngineError::MalformedParams {
            proc: "toy".into(),
            reason: "missing op count".into(),
        })? as usize;
        if params.len() != 1 + 2 * n {
            return Err(EngineError::MalformedParams {
                proc: "toy".into(),
                reason: format!("expected {} params, got {}", 1 + 2 * n, params.len()),
            });
        }
        let mut ops = Vec::new();
        for i in 0..n {
            let k = params[1 + 2 * i];
            let write = params[2 + 2 * i] != 0;
            let target = RecordId::new("toy", key(k));
            let op = if write {
                OpKind::Put { column: "v".into(), value: k.to_le_bytes().to_vec() }
            } else {
                OpKind::Read
            };
            ops.push(RecordOp { target, op });
        }
        Ok(ops)
    }

    fn txn(registry: &ProcedureRegistry, params: Vec<u64>) -> Transaction {
        let access = registry.declared_access("toy", &params).unwrap();
        Transaction {
            id: TxnId { node: 0, epoch: 0, seq: 0 },
            procedure: "toy".into(),
            params,
            home: 0,
            access,
        }
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut r = ProcedureRegistry::new();
        r.register("toy", toy_body).unwrap();
        assert!(matches!(
            r.register("toy", toy_body),
            Err(EngineError::DuplicateProcedure(_))
        ));
    }

    #[test]
    fn unknown_procedure_is_an_error() {
        let r = ProcedureRegistry::new();
        let t = Transaction {
            id: TxnId { node: 0, epoch: 0, seq: 0 },
            procedure: "nope".into(),
            params: vec![],
            home: 0,
            access: vec![],
        };
        assert!(matches!(r.decompose(&t), Err(EngineError::ProcedureNotFound(_))));
    }

    #[test]
    fn malformed_params_reported() {
        let mut r = ProcedureRegistry::new();
        r.register("toy", toy_body).unwrap();
        let t = Transaction {
            id: TxnId { node: 0, epoch: 0, seq: 0 },
            procedure: "toy".into(),
            params: vec![3, 1],
            home: 0,
            access: vec![],
        };
        assert!(matches!(r.decompose(&t), Err(EngineError::MalformedParams { .. })));
    }

    #[test]
    fn read_then_write_on_one_record_collapses() {
        let mut r = ProcedureRegistry::new();
        r.register("toy", toy_body).unwrap();
        let t = txn(&r, vec![2, 7, 0, 7, 1]);
        let actions = r.decompose(&t).unwrap();
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].kind, ActionKind::ReadWrite);
        assert_eq!(actions[0].ops.len(), 2);
    }

    #[test]
    fn one_action_per_distinct_record_in_program_order() {
        let mut r = ProcedureRegistry::new();
        r.register("toy", toy_body).unwrap();
        // read 5, write 9, read 5 again: still two actions, 5 before 9.
        let t = txn(&r, vec![3, 5, 0, 9, 1, 5, 0]);
        let actions = r.decompose(&t).unwrap();
        assert_eq!(actions.len(), 2);
        assert_eq!(actions[0].target, RecordId::new("toy", key(5)));
        assert_eq!(actions[1].target, RecordId::new("toy", key(9)));
        assert_eq!(actions[0].ops.len(), 2);
        let targets: Vec<_> = actions.iter().map(|a| a.target.clone()).collect();
        let declared: Vec<_> = t.access.iter().map(|d| d.target.clone()).collect();
        assert_eq!(targets, declared);
    }
}
