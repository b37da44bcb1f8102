//! Binary framing shared by the log files, snapshot files and wire messages.
//!
//! Every durable or transmitted unit is a frame:
//!
//! ```text
//! [record-type: 1 byte][payload-length: 4 bytes LE][crc32(payload): 4 bytes LE][payload]
//! ```
//!
//! The crc lets the reader distinguish a torn tail (truncated frame at end of
//! file) from corruption in the middle of a file. All integers are
//! little-endian fixed width; variable-length fields are length-prefixed.

use crate::error::{EngineError, Result};

pub const FRAME_HEADER_LEN: usize = 9;

/// Frame type tags. Stable on disk; do not renumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    FineRecord = 1,
    CoarseRecord = 2,
    AriesRecord = 3,
    SnapshotHeader = 4,
    SnapshotRecord = 5,
    Subgraph = 6,
    EpochEmpty = 7,
    EpochDone = 8,
}

impl FrameKind {
    pub fn from_u8(v: u8) -> Option<FrameKind> {
        Some(match v {
            1 => FrameKind::FineRecord,
            2 => FrameKind::CoarseRecord,
            3 => FrameKind::AriesRecord,
            4 => FrameKind::SnapshotHeader,
            5 => FrameKind::SnapshotRecord,
            6 => FrameKind::Subgraph,
            7 => FrameKind::EpochEmpty,
            8 => FrameKind::EpochDone,
            _ => return None,
        })
    }
}

/// CRC-32 (IEEE 802.3 polynomial, reflected). Table-driven, no dependencies.
pub fn crc32(data: &[u8]) -> u32 {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, entry) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *entry = c;
        }
        t
    });
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

pub fn write_frame(out: &mut Vec<u8>, kind: FrameKind, payload: &[u8]) {
    out.push(kind as u8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32(payload).to_le_bytes());
    out.extend_from_slice(payload);
}

/// A decoded frame referencing the payload bytes in place.
#[derive(Debug)]
pub struct Frame<'a> {
    pub kind: FrameKind,
    pub payload: &'a [u8],
    /// Offset of the byte just past this frame.
    pub end: usize,
}

/// Decode the frame starting at `offset`. Any shortfall or checksum mismatch
/// is a decode error carrying the offset; the caller decides whether that
/// means a torn tail or mid-file corruption.
pub fn read_frame(buf: &[u8], offset: usize) -> Result<Frame<'_>> {
    let rest = &buf[offset.min(buf.len())..];
    if rest.len() < FRAME_HEADER_LEN {
        return Err(EngineError::decode(offset, "truncated frame header"));
    }
    let kind = FrameKind::from_u8(rest[0])
        .ok_or_else(|| EngineError::decode(offset, format!("unknown frame type {}", rest[0])))?;
    let len = u32::from_le_bytes(rest[1..5].try_into().unwrap()) as usize;
    let crc = u32::from_le_bytes(rest[5..9].try_into().unwrap());
    if rest.len() < FRAME_HEADER_LEN + len {
        return Err(EngineError::decode(offset, "truncated frame payload"));
    }
    let payload = &rest[FRAME_HEADER_LEN..FRAME_HEADER_LEN + len];
    if crc32(payload) != crc {
        return Err(EngineError::decode(offset, "crc mismatch"));
    }
    Ok(Frame {
        kind,
        payload,
        end: offset + FRAME_HEADER_LEN + len,
    })
}

/// Bounds-checked little-endian reader used by all payload decoders. Never
/// panics on malformed input; every read returns a decode error instead.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(EngineError::decode(self.pos, "unexpected end of payload"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// u16 length-prefixed byte string (names, table identifiers).
    pub fn short_bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u16()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    /// u32 length-prefixed byte string (keys, values).
    pub fn long_bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        if n > self.remaining() {
            return Err(EngineError::decode(self.pos, "length prefix exceeds payload"));
        }
        Ok(self.take(n)?.to_vec())
    }

    pub fn short_str(&mut self) -> Result<String> {
        String::from_utf8(self.short_bytes()?)
            .map_err(|_| EngineError::decode(self.pos, "invalid utf-8"))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(EngineError::decode(self.pos, "trailing bytes in payload"));
        }
        Ok(())
    }
}

/// Little-endian writer mirroring [`Reader`].
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn short_bytes(&mut self, v: &[u8]) {
        debug_assert!(v.len() <= u16::MAX as usize);
        self.u16(v.len() as u16);
        self.buf.extend_from_slice(v);
    }

    pub fn long_bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }

    pub fn short_str(&mut self, v: &str) {
        self.short_bytes(v.as_bytes());
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.buf
    }
}

// ---------------------------------------------------------------------------
// Domain codecs shared by the log formats and the wire messages.
// ---------------------------------------------------------------------------

use crate::proc::OpKind;
use crate::store::RecordId;
use crate::txn::{ActionId, TxnId};

pub fn write_txn_id(w: &mut Writer, id: TxnId) {
    w.u32(id.node);
    w.u64(id.epoch);
    w.u32(id.seq);
}

pub fn read_txn_id(r: &mut Reader) -> Result<TxnId> {
    Ok(TxnId { node: r.u32()?, epoch: r.u64()?, seq: r.u32()? })
}

pub fn write_action_id(w: &mut Writer, id: ActionId) {
    write_txn_id(w, id.txn);
    w.u32(id.index);
}

pub fn read_action_id(r: &mut Reader) -> Result<ActionId> {
    Ok(ActionId { txn: read_txn_id(r)?, index: r.u32()? })
}

pub fn write_record_id(w: &mut Writer, id: &RecordId) {
    w.short_str(&id.table);
    w.long_bytes(&id.key);
}

pub fn read_record_id(r: &mut Reader) -> Result<RecordId> {
    Ok(RecordId { table: r.short_str()?, key: r.long_bytes()? })
}

/// Changed-column image: count then (name-length, name, value-length, value)
/// tuples. Only changed columns are ever stored.
pub fn write_image(w: &mut Writer, image: &[(String, Vec<u8>)]) {
    w.u16(image.len() as u16);
    for (name, value) in image {
        w.short_str(name);
        w.long_bytes(value);
    }
}

pub fn read_image(r: &mut Reader) -> Result<Vec<(String, Vec<u8>)>> {
    let n = r.u16()? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let name = r.short_str()?;
        let value = r.long_bytes()?;
        out.push((name, value));
    }
    Ok(out)
}

const OP_READ: u8 = 0;
const OP_PUT: u8 = 1;
const OP_ADD: u8 = 2;
const OP_INSERT: u8 = 3;

pub fn write_ops(w: &mut Writer, ops: &[OpKind]) {
    w.u16(ops.len() as u16);
    for op in ops {
        match op {
            OpKind::Read => w.u8(OP_READ),
            OpKind::Put { column, value } => {
                w.u8(OP_PUT);
                w.short_str(column);
                w.long_bytes(value);
            }
            OpKind::Add { column, delta } => {
                w.u8(OP_ADD);
                w.short_str(column);
                w.i64(*delta);
            }
            OpKind::Insert { columns } => {
                w.u8(OP_INSERT);
                write_image(w, columns);
            }
        }
    }
}

pub fn read_ops(r: &mut Reader) -> Result<Vec<OpKind>> {
    let n = r.u16()? as usize;
    let mut ops = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let tag = r.u8()?;
        ops.push(match tag {
            OP_READ => OpKind::Read,
            OP_PUT => OpKind::Put { column: r.short_str()?, value: r.long_bytes()? },
            OP_ADD => OpKind::Add { column: r.short_str()?, delta: r.i64()? },
            OP_INSERT => OpKind::Insert { columns: read_image(r)? },
            _ => return Err(EngineError::decode(0, format!("unknown op tag {tag}"))),
        });
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_check_value() {
        // Standard CRC-32/IEEE check value.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn frame_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, FrameKind::FineRecord, b"hello");
        write_frame(&mut buf, FrameKind::EpochDone, b"");
        let f1 = read_frame(&buf, 0).unwrap();
        assert_eq!(f1.kind, FrameKind::FineRecord);
        assert_eq!(f1.payload, b"hello");
        let f2 = read_frame(&buf, f1.end).unwrap();
        assert_eq!(f2.kind, FrameKind::EpochDone);
        assert!(f2.payload.is_empty());
        assert_eq!(f2.end, buf.len());
    }

    #[test]
    fn torn_tail_is_decode_error_at_every_cut() {
        let mut buf = Vec::new();
        write_frame(&mut buf, FrameKind::CoarseRecord, b"payload bytes");
        for cut in 0..buf.len() {
            let err = read_frame(&buf[..cut], 0).unwrap_err();
            assert!(err.is_decode(), "cut at {cut} must be a decode error");
        }
        assert!(read_frame(&buf, 0).is_ok());
    }

    #[test]
    fn corrupt_byte_detected() {
        let mut buf = Vec::new();
        write_frame(&mut buf, FrameKind::AriesRecord, b"abcdef");
        for i in FRAME_HEADER_LEN..buf.len() {
            let mut bad = buf.clone();
            bad[i] ^= 0x40;
            assert!(read_frame(&bad, 0).is_err(), "flip at {i} undetected");
        }
    }
}
