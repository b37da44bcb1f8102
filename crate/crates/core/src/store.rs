//! Single-version in-memory record store.
//!
//! A record is addressed by its (table-name, primary-key) pair and holds an
//! ordered list of named columns plus a version counter that strictly
//! increases on every applied write. Values are opaque byte strings; typed
//! interpretation happens at the stored-procedure layer.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{EngineError, Result};
use crate::proc::OpKind;
use crate::txn::{ActionId, ActionKind, RecordAction};

/// Identifies one record: the unit of conflict.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId {
    pub table: String,
    pub key: Vec<u8>,
}

impl RecordId {
    pub fn new(table: impl Into<String>, key: impl Into<Vec<u8>>) -> Self {
        RecordId {
            table: table.into(),
            key: key.into(),
        }
    }
}

impl std::fmt::Display for RecordId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[", self.table)?;
        for b in &self.key {
            write!(f, "{b:02x}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Record {
    /// Ordered columns; names unique within the record.
    pub columns: Vec<(String, Vec<u8>)>,
    /// Bumped exactly once per applied write action.
    pub version: u64,
}

impl Record {
    pub fn get(&self, column: &str) -> Option<&[u8]> {
        self.columns
            .iter()
            .find(|(n, _)| n == column)
            .map(|(_, v)| v.as_slice())
    }

    /// Signed integer view of a column: first 8 bytes little-endian, missing
    /// or short columns read as zero-extended.
    pub fn get_i64(&self, column: &str) -> i64 {
        let mut raw = [0u8; 8];
        if let Some(v) = self.get(column) {
            let n = v.len().min(8);
            raw[..n].copy_from_slice(&v[..n]);
        }
        i64::from_le_bytes(raw)
    }

    fn set(&mut self, column: &str, value: Vec<u8>) {
        if let Some(slot) = self.columns.iter_mut().find(|(n, _)| n == column) {
            slot.1 = value;
        } else {
            self.columns.push((column.to_string(), value));
        }
    }
}

/// Apply an operation fragment to a record without image bookkeeping. This is
/// the replay-side twin of [`Store::apply_action`]: identical mutations,
/// identical single version bump per writing fragment.
pub fn apply_ops_to_record(record: &mut Record, ops: &[OpKind]) {
    let mut wrote = false;
    for op in ops {
        match op {
            OpKind::Read => {}
            OpKind::Put { column, value } => {
                record.set(column, value.clone());
                wrote = true;
            }
            OpKind::Add { column, delta } => {
                let v = record.get_i64(column).wrapping_add(*delta);
                record.set(column, v.to_le_bytes().to_vec());
                wrote = true;
            }
            OpKind::Insert { columns } => {
                for (col, value) in columns {
                    record.set(col, value.clone());
                }
                wrote = true;
            }
        }
    }
    if wrote {
        record.version += 1;
    }
}

pub fn set_column(record: &mut Record, column: &str, value: Vec<u8>) {
    record.set(column, value);
}

/// Before/after images of the columns changed by one record action, plus the
/// bookkeeping needed to invert it. Images cover exactly the changed columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionEffect {
    pub action: ActionId,
    pub target: RecordId,
    /// Changed columns prior to the action. Empty for pure reads and inserts.
    pub before: Vec<(String, Vec<u8>)>,
    /// Changed columns after the action. Empty for pure reads.
    pub after: Vec<(String, Vec<u8>)>,
    /// The action created the record (insert).
    pub created: bool,
    /// Version before the action; writes bump it by one.
    pub version_before: u64,
    /// Whether the action wrote (and therefore bumped the version).
    pub wrote: bool,
}

/// One node's partition of the database.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Store {
    records: BTreeMap<RecordId, Record>,
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &RecordId) -> Option<&Record> {
        self.records.get(id)
    }

    /// Direct insertion used by workload seeding and snapshot load.
    pub fn put_record(&mut self, id: RecordId, record: Record) {
        self.records.insert(id, record);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RecordId, &Record)> {
        self.records.iter()
    }

    /// Apply one record action: run its operation fragment against the target
    /// record and return the effect with before/after images of exactly the
    /// changed columns. A write bumps the record version once, no matter how
    /// many operations the fragment collapsed.
    pub fn apply_action(&mut self, action: &RecordAction) -> Result<ActionEffect> {
        let mut effect = ActionEffect {
            action: action.id,
            target: action.target.clone(),
            before: Vec::new(),
            after: Vec::new(),
            created: false,
            version_before: 0,
            wrote: false,
        };

        let creates = action.ops.iter().any(|op| matches!(op, OpKind::Insert { .. }));
        if creates {
            if self.records.contains_key(&action.target) {
                return Err(EngineError::RecordExists(action.target.to_string()));
            }
            self.records.insert(action.target.clone(), Record::default());
            effect.created = true;
        }

        let record = self.records.get_mut(&action.target).ok_or_else(|| {
            EngineError::RecordNotFound(format!(
                "{} (action {} of {})",
                action.target, action.id.index, action.id.txn
            ))
        })?;
        effect.version_before = record.version;

        let mut touched: Vec<String> = Vec::new();
        let mut touch = |effect: &mut ActionEffect, record: &Record, col: &str| {
            if !touched.iter().any(|c| c == col) {
                touched.push(col.to_string());
                if let Some(v) = record.get(col) {
                    effect.before.push((col.to_string(), v.to_vec()));
                }
            }
        };

        for op in &action.ops {
            match op {
                OpKind::Read => {}
                OpKind::Put { column, value } => {
                    touch(&mut effect, record, column);
                    record.set(column, value.clone());
                    effect.wrote = true;
                }
                OpKind::Add { column, delta } => {
                    touch(&mut effect, record, column);
                    let v = record.get_i64(column).wrapping_add(*delta);
                    record.set(column, v.to_le_bytes().to_vec());
                    effect.wrote = true;
                }
                OpKind::Insert { columns } => {
                    for (col, value) in columns {
                        touch(&mut effect, record, col);
                        record.set(col, value.clone());
                    }
                    effect.wrote = true;
                }
            }
        }

        if effect.wrote {
            record.version += 1;
            for col in &touched {
                if let Some(v) = record.get(col) {
                    effect.after.push((col.clone(), v.to_vec()));
                }
            }
        }
        debug_assert!(
            effect.wrote || matches!(action.kind, ActionKind::Read),
            "read-only fragment must come from a read action"
        );
        Ok(effect)
    }

    /// Install the after-image of an effect-like update: overwrite the listed
    /// columns and bump the version once. This is the physical replay path
    /// used for ARIES records and remote-flagged dependency records.
    pub fn install_image(
        &mut self,
        target: &RecordId,
        after: &[(String, Vec<u8>)],
        created: bool,
    ) -> Result<()> {
        if created {
            if self.records.contains_key(target) {
                return Err(EngineError::RecordExists(target.to_string()));
            }
            self.records.insert(target.clone(), Record::default());
        }
        let record = self
            .records
            .get_mut(target)
            .ok_or_else(|| EngineError::RecordNotFound(target.to_string()))?;
        for (col, value) in after {
            record.set(col, value.clone());
        }
        record.version += 1;
        Ok(())
    }

    /// Undo one effect: restore before-image columns and the prior version.
    /// Inverting the effects of an action right after applying it restores
    /// the record exactly.
    pub fn invert_effect(&mut self, effect: &ActionEffect) -> Result<()> {
        if effect.created {
            self.records.remove(&effect.target);
            return Ok(());
        }
        if !effect.wrote {
            return Ok(());
        }
        let record = self
            .records
            .get_mut(&effect.target)
            .ok_or_else(|| EngineError::RecordNotFound(effect.target.to_string()))?;
        for (col, _) in &effect.after {
            if let Some(pos) = record.columns.iter().position(|(n, _)| n == col) {
                match effect.before.iter().find(|(n, _)| n == col) {
                    Some((_, old)) => record.columns[pos].1 = old.clone(),
                    None => {
                        record.columns.remove(pos);
                    }
                }
            }
        }
        record.version = effect.version_before;
        Ok(())
    }

    /// Canonical byte serialization: records in key order, columns in their
    /// stored order. Two stores are byte-identical iff this output matches.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (id, record) in &self.records {
            out.extend_from_slice(&(id.table.len() as u32).to_le_bytes());
            out.extend_from_slice(id.table.as_bytes());
            out.extend_from_slice(&(id.key.len() as u32).to_le_bytes());
            out.extend_from_slice(&id.key);
            out.extend_from_slice(&record.version.to_le_bytes());
            out.extend_from_slice(&(record.columns.len() as u32).to_le_bytes());
            for (name, value) in &record.columns {
                out.extend_from_slice(&(name.len() as u32).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(&(value.len() as u32).to_le_bytes());
                out.extend_from_slice(value);
            }
        }
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_bytes());
        hasher.finalize().into()
    }
}
