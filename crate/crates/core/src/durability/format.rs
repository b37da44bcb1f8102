//! On-disk log record structures and their binary payloads.
//!
//! Compression choices baked into the format: incoming edge lists are never
//! stored (reconstructed from outgoing lists at recovery), and images carry
//! only the changed columns. Remote records additionally carry before/after
//! images so a node can replay distributed work without contacting peers.

use crate::codec::{self, Reader, Writer};
use crate::error::Result;
use crate::store::RecordId;
use crate::txn::{ActionKind, TxnId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogMode {
    None,
    Fine,
    Coarse,
    Aries,
}

impl LogMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LogMode::None => "none",
            LogMode::Fine => "fine",
            LogMode::Coarse => "coarse",
            LogMode::Aries => "aries",
        }
    }

    pub fn parse(s: &str) -> Option<LogMode> {
        Some(match s {
            "none" => LogMode::None,
            "fine" => LogMode::Fine,
            "coarse" => LogMode::Coarse,
            "aries" => LogMode::Aries,
            _ => return None,
        })
    }
}

impl std::fmt::Display for LogMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One log record per record action (fine-grained dependency logging).
#[derive(Debug, Clone, PartialEq)]
pub struct FineLogRecord {
    pub lsn: u64,
    pub txn: TxnId,
    pub target: RecordId,
    /// Program-order index of the action within its transaction.
    pub action_index: u32,
    pub kind: ActionKind,
    /// Replay fragment: the operations of this action.
    pub ops: Vec<crate::proc::OpKind>,
    /// Same-node successors as lsn references. Incoming lists are never
    /// stored.
    pub outgoing: Vec<u64>,
    /// Dist-flag: true for records of a distributed transaction written on a
    /// non-coordinating node.
    pub remote: bool,
    /// Changed-column images; populated only when `remote`.
    pub before: Vec<(String, Vec<u8>)>,
    pub after: Vec<(String, Vec<u8>)>,
    /// Commit marker on the transaction's last record on this node.
    pub end_of_txn: bool,
}

/// One log record per transaction per participating node (coarse-grained
/// dependency logging).
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseLogRecord {
    pub lsn: u64,
    pub txn: TxnId,
    pub procedure: String,
    pub params: Vec<u64>,
    /// Successor transactions in the transaction dependency graph.
    pub outgoing: Vec<TxnId>,
    /// Dist-flag: whether the transaction is distributed.
    pub distributed: bool,
    /// Per-record changed-column images of locally updated columns; empty
    /// for local transactions.
    pub before: Vec<(RecordId, Vec<(String, Vec<u8>)>)>,
    pub after: Vec<(RecordId, Vec<(String, Vec<u8>)>)>,
}

/// Baseline: one record per updated data record per transaction, carrying
/// both images; replayed strictly in lsn order.
#[derive(Debug, Clone, PartialEq)]
pub struct AriesLogRecord {
    pub lsn: u64,
    pub txn: TxnId,
    pub target: RecordId,
    pub before: Vec<(String, Vec<u8>)>,
    pub after: Vec<(String, Vec<u8>)>,
    pub end_of_txn: bool,
}

fn kind_tag(kind: ActionKind) -> u8 {
    match kind {
        ActionKind::Read => 0,
        ActionKind::Write => 1,
        ActionKind::ReadWrite => 2,
    }
}

fn kind_from(tag: u8) -> Result<ActionKind> {
    Ok(match tag {
        0 => ActionKind::Read,
        1 => ActionKind::Write,
        2 => ActionKind::ReadWrite,
        _ => return Err(crate::error::EngineError::decode(0, format!("bad action kind {tag}"))),
    })
}

fn write_record_images(w: &mut Writer, images: &[(RecordId, Vec<(String, Vec<u8>)>)]) {
    w.u16(images.len() as u16);
    for (target, image) in images {
        codec::write_record_id(w, target);
        codec::write_image(w, image);
    }
}

fn read_record_images(r: &mut Reader) -> Result<Vec<(RecordId, Vec<(String, Vec<u8>)>)>> {
    let n = r.u16()? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let target = codec::read_record_id(r)?;
        let image = codec::read_image(r)?;
        out.push((target, image));
    }
    Ok(out)
}

impl FineLogRecord {
    pub fn encode_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.lsn);
        codec::write_txn_id(&mut w, self.txn);
        codec::write_record_id(&mut w, &self.target);
        w.u32(self.action_index);
        w.u8(kind_tag(self.kind));
        codec::write_ops(&mut w, &self.ops);
        w.u32(self.outgoing.len() as u32);
        for &lsn in &self.outgoing {
            w.u64(lsn);
        }
        w.u8(self.remote as u8);
        if self.remote {
            codec::write_image(&mut w, &self.before);
            codec::write_image(&mut w, &self.after);
        }
        w.u8(self.end_of_txn as u8);
        w.into_vec()
    }

    pub fn decode_payload(payload: &[u8]) -> Result<FineLogRecord> {
        let mut r = Reader::new(payload);
        let lsn = r.u64()?;
        let txn = codec::read_txn_id(&mut r)?;
        let target = codec::read_record_id(&mut r)?;
        let action_index = r.u32()?;
        let kind = kind_from(r.u8()?)?;
        let ops = codec::read_ops(&mut r)?;
        let n = r.u32()? as usize;
        let mut outgoing = Vec::with_capacity(n.min(65536));
        for _ in 0..n {
            outgoing.push(r.u64()?);
        }
        let remote = r.u8()? != 0;
        let (before, after) = if remote {
            (codec::read_image(&mut r)?, codec::read_image(&mut r)?)
        } else {
            (Vec::new(), Vec::new())
        };
        let end_of_txn = r.u8()? != 0;
        r.finish()?;
        Ok(FineLogRecord {
            lsn,
            txn,
            target,
            action_index,
            kind,
            ops,
            outgoing,
            remote,
            before,
            after,
            end_of_txn,
        })
    }
}

impl CoarseLogRecord {
    pub fn encode_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.lsn);
        codec::write_txn_id(&mut w, self.txn);
        w.short_str(&self.procedure);
        w.u32(self.params.len() as u32);
        for &p in &self.params {
            w.u64(p);
        }
        w.u32(self.outgoing.len() as u32);
        for &t in &self.outgoing {
            codec::write_txn_id(&mut w, t);
        }
        w.u8(self.distributed as u8);
        if self.distributed {
            write_record_images(&mut w, &self.before);
            write_record_images(&mut w, &self.after);
        }
        w.into_vec()
    }

    pub fn decode_payload(payload: &[u8]) -> Result<CoarseLogRecord> {
        let mut r = Reader::new(payload);
        let lsn = r.u64()?;
        let txn = codec::read_txn_id(&mut r)?;
        let procedure = r.short_str()?;
        let np = r.u32()? as usize;
        let mut params = Vec::with_capacity(np.min(65536));
        for _ in 0..np {
            params.push(r.u64()?);
        }
        let ne = r.u32()? as usize;
        let mut outgoing = Vec::with_capacity(ne.min(65536));
        for _ in 0..ne {
            outgoing.push(codec::read_txn_id(&mut r)?);
        }
        let distributed = r.u8()? != 0;
        let (before, after) = if distributed {
            (read_record_images(&mut r)?, read_record_images(&mut r)?)
        } else {
            (Vec::new(), Vec::new())
        };
        r.finish()?;
        Ok(CoarseLogRecord {
            lsn,
            txn,
            procedure,
            params,
            outgoing,
            distributed,
            before,
            after,
        })
    }
}

impl AriesLogRecord {
    pub fn encode_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.lsn);
        codec::write_txn_id(&mut w, self.txn);
        codec::write_record_id(&mut w, &self.target);
        codec::write_image(&mut w, &self.before);
        codec::write_image(&mut w, &self.after);
        w.u8(self.end_of_txn as u8);
        w.into_vec()
    }

    pub fn decode_payload(payload: &[u8]) -> Result<AriesLogRecord> {
        let mut r = Reader::new(payload);
        let lsn = r.u64()?;
        let txn = codec::read_txn_id(&mut r)?;
        let target = codec::read_record_id(&mut r)?;
        let before = codec::read_image(&mut r)?;
        let after = codec::read_image(&mut r)?;
        let end_of_txn = r.u8()? != 0;
        r.finish()?;
        Ok(AriesLogRecord { lsn, txn, target, before, after, end_of_txn })
    }
}

/// Union of the three record types, tagged with its frame kind.
#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Fine(FineLogRecord),
    Coarse(CoarseLogRecord),
    Aries(AriesLogRecord),
}

impl LogRecord {
    pub fn lsn(&self) -> u64 {
        match self {
            LogRecord::Fine(r) => r.lsn,
            LogRecord::Coarse(r) => r.lsn,
            LogRecord::Aries(r) => r.lsn,
        }
    }

    pub fn txn(&self) -> TxnId {
        match self {
            LogRecord::Fine(r) => r.txn,
            LogRecord::Coarse(r) => r.txn,
            LogRecord::Aries(r) => r.txn,
        }
    }

    pub fn frame_kind(&self) -> crate::codec::FrameKind {
        match self {
            LogRecord::Fine(_) => crate::codec::FrameKind::FineRecord,
            LogRecord::Coarse(_) => crate::codec::FrameKind::CoarseRecord,
            LogRecord::Aries(_) => crate::codec::FrameKind::AriesRecord,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        match self {
            LogRecord::Fine(r) => r.encode_payload(),
            LogRecord::Coarse(r) => r.encode_payload(),
            LogRecord::Aries(r) => r.encode_payload(),
        }
    }

    pub fn encode_framed(&self) -> Vec<u8> {
        let mut out = Vec::new();
        crate::codec::write_frame(&mut out, self.frame_kind(), &self.encode_payload());
        out
    }

    pub fn decode_frame_payload(kind: crate::codec::FrameKind, payload: &[u8]) -> Result<LogRecord> {
        Ok(match kind {
            crate::codec::FrameKind::FineRecord => {
                LogRecord::Fine(FineLogRecord::decode_payload(payload)?)
            }
            crate::codec::FrameKind::CoarseRecord => {
                LogRecord::Coarse(CoarseLogRecord::decode_payload(payload)?)
            }
            crate::codec::FrameKind::AriesRecord => {
                LogRecord::Aries(AriesLogRecord::decode_payload(payload)?)
            }
            other => {
                return Err(crate::error::EngineError::decode(
                    0,
                    format!("not a log record frame: {other:?}"),
                ))
            }
        })
    }
}
