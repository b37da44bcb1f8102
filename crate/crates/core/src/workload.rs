//! Deterministic workload generators: YCSB-style keyed read/write
//! transactions with Zipfian key popularity, and a reduced TPC-C with the
//! five standard transaction types over a six-table schema.
//!
//! Generators are deterministic per (config, epoch): the simulator, the
//! serial reference oracle and any re-run all see byte-identical batches.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{EngineError, Result};
use crate::proc::{OpKind, ProcedureRegistry, RecordOp};
use crate::store::{Record, RecordId, Store};
use crate::txn::{
    canonical_rank, BatchEpoch, EpochId, KeyOwnership, NodeId, Transaction, TxnId,
};

pub const YCSB_TABLE: &str = "usertable";
pub const YCSB_PROC: &str = "ycsb_txn";

/// Zipfian rank sampler over 1..=n with exponent theta:
/// P(rank = k) = k^-theta / H(n, theta). theta = 0 degenerates to uniform.
#[derive(Debug, Clone)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(n: usize, theta: f64) -> ZipfSampler {
        assert!(n >= 1, "zipf needs at least one rank");
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 1..=n {
            acc += (k as f64).powf(-theta);
            cdf.push(acc);
        }
        let h = acc;
        for c in &mut cdf {
            *c /= h;
        }
        ZipfSampler { cdf }
    }

    /// Analytic probability of a rank, for test oracles.
    pub fn pmf(&self, rank: usize) -> f64 {
        let prev = if rank >= 2 { self.cdf[rank - 2] } else { 0.0 };
        self.cdf[rank - 1] - prev
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c < u) + 1
    }
}

/// Maps records to owning nodes.
#[derive(Debug, Clone, Copy)]
pub enum Ownership {
    /// Contiguous key ranges: key k belongs to node k / keys_per_node.
    KeyRange { nodes: u32, keys_per_node: u64 },
    /// First key component is a 1-based warehouse id; warehouses are spread
    /// round-robin across nodes.
    Warehouse { nodes: u32 },
}

impl KeyOwnership for Ownership {
    fn owner(&self, target: &RecordId) -> Result<NodeId> {
        let head = |key: &[u8]| -> Result<u64> {
            if key.len() < 8 {
                return Err(EngineError::OwnershipGap(target.to_string()));
            }
            Ok(u64::from_le_bytes(key[..8].try_into().unwrap()))
        };
        match self {
            Ownership::KeyRange { nodes, keys_per_node } => {
                let key = head(&target.key)?;
                let node = (key / keys_per_node) as u32;
                if node >= *nodes {
                    return Err(EngineError::OwnershipGap(target.to_string()));
                }
                Ok(node)
            }
            Ownership::Warehouse { nodes } => {
                let w = head(&target.key)?;
                if w == 0 {
                    return Err(EngineError::OwnershipGap(target.to_string()));
                }
                Ok(((w - 1) % *nodes as u64) as u32)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    Ycsb,
    Tpcc,
}

impl WorkloadKind {
    pub fn parse(s: &str) -> Option<WorkloadKind> {
        Some(match s {
            "ycsb" => WorkloadKind::Ycsb,
            "tpcc" => WorkloadKind::Tpcc,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadKind::Ycsb => "ycsb",
            WorkloadKind::Tpcc => "tpcc",
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadConfig {
    pub kind: WorkloadKind,
    pub nodes: u32,
    pub batch_size: usize,
    pub seed: u64,
    /// Percentage of transactions that touch a second node.
    pub dist_pct: u32,
    // YCSB knobs.
    pub theta: f64,
    pub keys_per_node: u64,
    pub ops_per_txn: usize,
    /// Percentage of operations that are reads (the mix default is 50/50).
    pub read_pct: u32,
    pub value_size: usize,
    // TPC-C knobs.
    pub warehouses: u32,
    pub districts_per_warehouse: u32,
    pub customers_per_district: u32,
    pub items_per_warehouse: u32,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            kind: WorkloadKind::Ycsb,
            nodes: 1,
            batch_size: 64,
            seed: 1,
            dist_pct: 0,
            theta: 0.6,
            keys_per_node: 1 << 14,
            ops_per_txn: 10,
            read_pct: 50,
            value_size: 64,
            warehouses: 1,
            districts_per_warehouse: 10,
            customers_per_district: 30,
            items_per_warehouse: 100,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(EngineError::InvalidConfig("nodes must be >= 1".into()));
        }
        if self.dist_pct > 100 || self.read_pct > 100 {
            return Err(EngineError::InvalidConfig("percentages must be <= 100".into()));
        }
        if self.theta < 0.0 {
            return Err(EngineError::InvalidConfig("theta must be >= 0".into()));
        }
        match self.kind {
            WorkloadKind::Ycsb => {
                if self.keys_per_node == 0 || self.ops_per_txn == 0 {
                    return Err(EngineError::InvalidConfig(
                        "ycsb needs keys_per_node and ops_per_txn >= 1".into(),
                    ));
                }
            }
            WorkloadKind::Tpcc => {
                if self.warehouses < self.nodes {
                    return Err(EngineError::InvalidConfig(
                        "tpcc needs at least one warehouse per node".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A deterministic transaction source plus the schema it runs against.
pub trait Workload: Send + Sync {
    fn epoch(&self, epoch: EpochId) -> Result<BatchEpoch>;
    fn register_procedures(&self, registry: &mut ProcedureRegistry) -> Result<()>;
    fn seed_store(&self, node: NodeId) -> Store;
    fn ownership(&self) -> Ownership;
    fn registry(&self) -> &ProcedureRegistry;
    /// A single local transaction for `node`, used for size-one batches
    /// admitted while the node recovers. The caller assigns the final id.
    fn on_demand_txn(&self, node: NodeId, index: u64) -> Result<Transaction>;
}

pub fn build_workload(cfg: &WorkloadConfig) -> Result<Box<dyn Workload>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        WorkloadKind::Ycsb => Box::new(YcsbWorkload::new(cfg.clone())?),
        WorkloadKind::Tpcc => Box::new(TpccWorkload::new(cfg.clone())?),
    })
}

/// Deterministic value payload derived from a seed.
pub fn value_bytes(seed: u64, size: usize) -> Vec<u8> {
    let base = seed.to_le_bytes();
    (0..size).map(|i| base[i % 8] ^ (i as u8)).collect()
}

fn epoch_rng(seed: u64, epoch: EpochId, node: NodeId) -> ChaCha12Rng {
    let mix = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(epoch.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(node as u64 + 1);
    ChaCha12Rng::seed_from_u64(mix)
}

/// Assemble a cluster-wide epoch from per-node raw batches: each node's
/// transactions are admitted locals-first (that ordering is the epoch's
/// arrival order), sequence numbers assigned, and the cluster list sorted by
/// canonical rank.
fn assemble_epoch(
    epoch_id: EpochId,
    per_node: Vec<Vec<(String, Vec<u64>)>>,
    registry: &ProcedureRegistry,
    ownership: &Ownership,
) -> Result<BatchEpoch> {
    let mut txns = Vec::new();
    for (node, raw) in per_node.into_iter().enumerate() {
        let node = node as NodeId;
        let mut locals = Vec::new();
        let mut dists = Vec::new();
        for (procedure, params) in raw {
            let access = registry.declared_access(&procedure, &params)?;
            if access.is_empty() {
                return Err(EngineError::InvalidConfig(format!(
                    "generated transaction with empty access set ({procedure})"
                )));
            }
            let mut distributed = false;
            for decl in &access {
                if ownership.owner(&decl.target)? != node {
                    distributed = true;
                    break;
                }
            }
            if distributed {
                dists.push((procedure, params, access));
            } else {
                locals.push((procedure, params, access));
            }
        }
        for (seq, (procedure, params, access)) in
            locals.into_iter().chain(dists.into_iter()).enumerate()
        {
            txns.push(Transaction {
                id: TxnId { node, epoch: epoch_id, seq: seq as u32 },
                procedure,
                params,
                home: node,
                access,
            });
        }
    }
    let mut ranked: Vec<((u8, u32, u32), Transaction)> = Vec::with_capacity(txns.len());
    for t in txns {
        let distributed = {
            let mut dist = false;
            for d in &t.access {
                if ownership.owner(&d.target)? != t.home {
                    dist = true;
                    break;
                }
            }
            dist
        };
        ranked.push((canonical_rank(&t, distributed), t));
    }
    ranked.sort_by_key(|(rank, _)| *rank);
    Ok(BatchEpoch { id: epoch_id, txns: ranked.into_iter().map(|(_, t)| t).collect() })
}

// ---------------------------------------------------------------------------
// YCSB
// ---------------------------------------------------------------------------

pub struct YcsbWorkload {
    cfg: WorkloadConfig,
    zipf: ZipfSampler,
    registry: ProcedureRegistry,
}

fn ycsb_key(key: u64) -> RecordId {
    RecordId::new(YCSB_TABLE, key.to_le_bytes().to_vec())
}

/// params: [n, (key, write_flag, value_seed) * n]
fn ycsb_body(params: &[u64], value_size: usize) -> Result<Vec<RecordOp>> {
    let malformed = |reason: &str| EngineError::MalformedParams {
        proc: YCSB_PROC.into(),
        reason: reason.into(),
    };
    let n = *params.first().ok_or_else(|| malformed("missing op count"))? as usize;
    if params.len() != 1 + 3 * n {
        return Err(malformed("op count does not match parameter length"));
    }
    let mut ops = Vec::with_capacity(n);
    for i in 0..n {
        let key = params[1 + 3 * i];
        let write = params[2 + 3 * i] != 0;
        let seed = params[3 + 3 * i];
        let op = if write {
            OpKind::Put { column: "f0".into(), value: value_bytes(seed, value_size) }
        } else {
            OpKind::Read
        };
        ops.push(RecordOp { target: ycsb_key(key), op });
    }
    Ok(ops)
}

impl YcsbWorkload {
    pub fn new(cfg: WorkloadConfig) -> Result<YcsbWorkload> {
        let zipf = ZipfSampler::new(cfg.keys_per_node as usize, cfg.theta);
        let mut registry = ProcedureRegistry::new();
        let value_size = cfg.value_size;
        registry.register(YCSB_PROC, move |p| ycsb_body(p, value_size))?;
        Ok(YcsbWorkload { cfg, zipf, registry })
    }

    fn gen_txn(&self, rng: &mut ChaCha12Rng, node: NodeId) -> (String, Vec<u64>) {
        let cfg = &self.cfg;
        let make_distributed =
            cfg.nodes > 1 && cfg.dist_pct > 0 && rng.gen_range(0..100) < cfg.dist_pct;
        let remote = if make_distributed {
            let mut r = rng.gen_range(0..cfg.nodes - 1);
            if r >= node {
                r += 1;
            }
            Some(r)
        } else {
            None
        };
        let mut params = Vec::with_capacity(1 + 3 * cfg.ops_per_txn);
        params.push(cfg.ops_per_txn as u64);
        for j in 0..cfg.ops_per_txn {
            // A distributed transaction redirects a fixed two of its
            // operations to the chosen remote node.
            let target_node = match remote {
                Some(r) if j < 2.min(cfg.ops_per_txn) => r,
                _ => node,
            };
            let rank = self.zipf.sample(rng) as u64;
            let key = target_node as u64 * cfg.keys_per_node + (rank - 1);
            let write = rng.gen_range(0..100) >= cfg.read_pct;
            params.push(key);
            params.push(write as u64);
            params.push(rng.gen::<u64>());
        }
        (YCSB_PROC.to_string(), params)
    }
}

impl Workload for YcsbWorkload {
    fn epoch(&self, epoch: EpochId) -> Result<BatchEpoch> {
        let ownership = self.ownership();
        let per_node: Vec<Vec<(String, Vec<u64>)>> = (0..self.cfg.nodes)
            .map(|node| {
                let mut rng = epoch_rng(self.cfg.seed, epoch, node);
                (0..self.cfg.batch_size).map(|_| self.gen_txn(&mut rng, node)).collect()
            })
            .collect();
        assemble_epoch(epoch, per_node, &self.registry, &ownership)
    }

    fn register_procedures(&self, registry: &mut ProcedureRegistry) -> Result<()> {
        let value_size = self.cfg.value_size;
        registry.register(YCSB_PROC, move |p| ycsb_body(p, value_size))
    }

    fn seed_store(&self, node: NodeId) -> Store {
        let mut store = Store::new();
        let base = node as u64 * self.cfg.keys_per_node;
        for k in base..base + self.cfg.keys_per_node {
            let mut record = Record::default();
            record.columns.push(("f0".into(), value_bytes(k, self.cfg.value_size)));
            record.version = 1;
            store.put_record(ycsb_key(k), record);
        }
        store
    }

    fn ownership(&self) -> Ownership {
        Ownership::KeyRange { nodes: self.cfg.nodes, keys_per_node: self.cfg.keys_per_node }
    }

    fn registry(&self) -> &ProcedureRegistry {
        &self.registry
    }

    fn on_demand_txn(&self, node: NodeId, index: u64) -> Result<Transaction> {
        let cfg = &self.cfg;
        let mut rng = epoch_rng(cfg.seed ^ 0x0DDC_0DE5, index, node);
        let mut params = Vec::with_capacity(1 + 3 * cfg.ops_per_txn);
        params.push(cfg.ops_per_txn as u64);
        for _ in 0..cfg.ops_per_txn {
            let rank = self.zipf.sample(&mut rng) as u64;
            let key = node as u64 * cfg.keys_per_node + (rank - 1);
            let write = rng.gen_range(0..100) >= cfg.read_pct;
            params.push(key);
            params.push(write as u64);
            params.push(rng.gen::<u64>());
        }
        let access = self.registry.declared_access(YCSB_PROC, &params)?;
        Ok(Transaction {
            id: TxnId { node, epoch: 0, seq: 0 },
            procedure: YCSB_PROC.to_string(),
            params,
            home: node,
            access,
        })
    }
}

// ---------------------------------------------------------------------------
// Reduced TPC-C
// ---------------------------------------------------------------------------

pub const TPCC_PROCS: [&str; 5] =
    ["new_order", "payment", "delivery", "order_status", "stock_level"];

fn k1(a: u64) -> Vec<u8> {
    a.to_le_bytes().to_vec()
}

fn k2(a: u64, b: u64) -> Vec<u8> {
    let mut v = a.to_le_bytes().to_vec();
    v.extend_from_slice(&b.to_le_bytes());
    v
}

fn k3(a: u64, b: u64, c: u64) -> Vec<u8> {
    let mut v = k2(a, b);
    v.extend_from_slice(&c.to_le_bytes());
    v
}

fn item_price(item: u64) -> i64 {
    (item % 100) as i64 + 1
}

pub struct Tables;

impl Tables {
    pub fn warehouse(w: u64) -> RecordId {
        RecordId::new("warehouse", k1(w))
    }
    pub fn district(w: u64, d: u64) -> RecordId {
        RecordId::new("district", k2(w, d))
    }
    pub fn customer(w: u64, d: u64, c: u64) -> RecordId {
        RecordId::new("customer", k3(w, d, c))
    }
    pub fn stock(w: u64, i: u64) -> RecordId {
        RecordId::new("stock", k2(w, i))
    }
    pub fn orders(w: u64, d: u64, o: u64) -> RecordId {
        RecordId::new("orders", k3(w, d, o))
    }
    pub fn history(w: u64, d: u64, seq: u64) -> RecordId {
        RecordId::new("history", k3(w, d, seq))
    }
}

fn malformed(proc: &str, reason: &str) -> EngineError {
    EngineError::MalformedParams { proc: proc.into(), reason: reason.into() }
}

/// params: [w, d, c, o_id, n, (supply_w, item, qty) * n]
fn new_order_body(params: &[u64]) -> Result<Vec<RecordOp>> {
    if params.len() < 5 {
        return Err(malformed("new_order", "too few parameters"));
    }
    let (w, d, c, o_id, n) = (params[0], params[1], params[2], params[3], params[4] as usize);
    if params.len() != 5 + 3 * n || n == 0 {
        return Err(malformed("new_order", "item list length mismatch"));
    }
    let mut ops = vec![
        RecordOp {
            target: Tables::warehouse(w),
            op: OpKind::Add { column: "o_cnt".into(), delta: 1 },
        },
        RecordOp {
            target: Tables::district(w, d),
            op: OpKind::Add { column: "next_o".into(), delta: 1 },
        },
        RecordOp { target: Tables::customer(w, d, c), op: OpKind::Read },
    ];
    let mut total = 0i64;
    for i in 0..n {
        let (supply_w, item, qty) = (params[5 + 3 * i], params[6 + 3 * i], params[7 + 3 * i]);
        total += item_price(item) * qty as i64;
        ops.push(RecordOp {
            target: Tables::stock(supply_w, item),
            op: OpKind::Add { column: "qty".into(), delta: -(qty as i64) },
        });
    }
    ops.push(RecordOp {
        target: Tables::orders(w, d, o_id),
        op: OpKind::Insert {
            columns: vec![
                ("c".into(), c.to_le_bytes().to_vec()),
                ("lines".into(), (n as u64).to_le_bytes().to_vec()),
                ("total".into(), total.to_le_bytes().to_vec()),
                ("delivered".into(), 0u64.to_le_bytes().to_vec()),
            ],
        },
    });
    Ok(ops)
}

/// params: [w, d, c_w, c_d, c, amount, history_seq]
fn payment_body(params: &[u64]) -> Result<Vec<RecordOp>> {
    if params.len() != 7 {
        return Err(malformed("payment", "expected 7 parameters"));
    }
    let (w, d, c_w, c_d, c, amount, hseq) =
        (params[0], params[1], params[2], params[3], params[4], params[5] as i64, params[6]);
    Ok(vec![
        RecordOp {
            target: Tables::warehouse(w),
            op: OpKind::Add { column: "ytd".into(), delta: amount },
        },
        RecordOp {
            target: Tables::district(w, d),
            op: OpKind::Add { column: "ytd".into(), delta: amount },
        },
        RecordOp {
            target: Tables::customer(c_w, c_d, c),
            op: OpKind::Add { column: "balance".into(), delta: -amount },
        },
        RecordOp {
            target: Tables::history(w, d, hseq),
            op: OpKind::Insert { columns: vec![("amount".into(), amount.to_le_bytes().to_vec())] },
        },
    ])
}

/// params: [w, n, (d, o_id, c, amount) * n]; delivers the oldest undelivered
/// orders as picked by the generator's per-district queues.
fn delivery_body(params: &[u64]) -> Result<Vec<RecordOp>> {
    if params.len() < 2 {
        return Err(malformed("delivery", "too few parameters"));
    }
    let (w, n) = (params[0], params[1] as usize);
    if params.len() != 2 + 4 * n {
        return Err(malformed("delivery", "order list length mismatch"));
    }
    let mut ops = vec![RecordOp { target: Tables::warehouse(w), op: OpKind::Read }];
    for i in 0..n {
        let (d, o_id, c, amount) = (
            params[2 + 4 * i],
            params[3 + 4 * i],
            params[4 + 4 * i],
            params[5 + 4 * i] as i64,
        );
        ops.push(RecordOp {
            target: Tables::orders(w, d, o_id),
            op: OpKind::Put { column: "delivered".into(), value: 1u64.to_le_bytes().to_vec() },
        });
        ops.push(RecordOp {
            target: Tables::customer(w, d, c),
            op: OpKind::Add { column: "balance".into(), delta: amount },
        });
    }
    Ok(ops)
}

/// params: [w, d, c, o_id]
fn order_status_body(params: &[u64]) -> Result<Vec<RecordOp>> {
    if params.len() != 4 {
        return Err(malformed("order_status", "expected 4 parameters"));
    }
    let (w, d, c, o_id) = (params[0], params[1], params[2], params[3]);
    Ok(vec![
        RecordOp { target: Tables::customer(w, d, c), op: OpKind::Read },
        RecordOp { target: Tables::orders(w, d, o_id), op: OpKind::Read },
    ])
}

/// params: [w, d, n, item * n]
fn stock_level_body(params: &[u64]) -> Result<Vec<RecordOp>> {
    if params.len() < 3 {
        return Err(malformed("stock_level", "too few parameters"));
    }
    let (w, d, n) = (params[0], params[1], params[2] as usize);
    if params.len() != 3 + n {
        return Err(malformed("stock_level", "item list length mismatch"));
    }
    let mut ops = vec![RecordOp { target: Tables::district(w, d), op: OpKind::Read }];
    for i in 0..n {
        ops.push(RecordOp { target: Tables::stock(w, params[3 + i]), op: OpKind::Read });
    }
    Ok(ops)
}

pub fn register_tpcc_procedures(registry: &mut ProcedureRegistry) -> Result<()> {
    registry.register("new_order", new_order_body)?;
    registry.register("payment", payment_body)?;
    registry.register("delivery", delivery_body)?;
    registry.register("order_status", order_status_body)?;
    registry.register("stock_level", stock_level_body)?;
    Ok(())
}

/// Sequential generator state: order counters and the undelivered-order
/// queues that make Delivery's access set declarable up front.
#[derive(Debug, Clone, Default)]
struct TpccState {
    next_o: BTreeMap<(u64, u64), u64>,
    /// (order, customer, total, deliverable_from_epoch). Orders created by a
    /// distributed NewOrder become deliverable one epoch later: the canonical
    /// execution order runs locals before distributed transactions, so a
    /// same-epoch local Delivery must not reference them.
    undelivered: BTreeMap<(u64, u64), VecDeque<(u64, u64, i64, u64)>>,
    history_seq: u64,
}

/// Frozen view of the rows existing when an epoch starts; reads may only
/// reference these.
struct EpochStartView {
    next_o: BTreeMap<(u64, u64), u64>,
}

pub struct TpccWorkload {
    cfg: WorkloadConfig,
    registry: ProcedureRegistry,
    /// Epochs are generated in order; the cache keeps produced epochs and the
    /// state they left behind, so `epoch(e)` stays deterministic and callable
    /// from any stage.
    cache: Mutex<(Vec<BatchEpoch>, TpccState)>,
}

impl TpccWorkload {
    pub fn new(cfg: WorkloadConfig) -> Result<TpccWorkload> {
        let mut registry = ProcedureRegistry::new();
        register_tpcc_procedures(&mut registry)?;
        let state = Self::initial_state(&cfg);
        Ok(TpccWorkload { cfg, registry, cache: Mutex::new((Vec::new(), state)) })
    }

    fn initial_state(cfg: &WorkloadConfig) -> TpccState {
        let mut state = TpccState::default();
        for w in 1..=cfg.warehouses as u64 {
            for d in 1..=cfg.districts_per_warehouse as u64 {
                let seeded = cfg.customers_per_district as u64;
                state.next_o.insert((w, d), seeded + 1);
                let queue: VecDeque<(u64, u64, i64, u64)> =
                    (seeded * 2 / 3 + 1..=seeded).map(|o| (o, o, item_price(o), 0)).collect();
                state.undelivered.insert((w, d), queue);
            }
        }
        state
    }

    fn node_warehouses(&self, node: NodeId) -> Vec<u64> {
        (1..=self.cfg.warehouses as u64)
            .filter(|w| ((w - 1) % self.cfg.nodes as u64) as u32 == node)
            .collect()
    }

    fn gen_txn(
        &self,
        rng: &mut ChaCha12Rng,
        node: NodeId,
        epoch: EpochId,
        state: &mut TpccState,
        start: &EpochStartView,
    ) -> (String, Vec<u64>) {
        let cfg = &self.cfg;
        let homes = self.node_warehouses(node);
        let w = homes[rng.gen_range(0..homes.len())];
        let d = rng.gen_range(1..=cfg.districts_per_warehouse as u64);
        let c = rng.gen_range(1..=cfg.customers_per_district as u64);
        let make_distributed =
            cfg.nodes > 1 && cfg.dist_pct > 0 && rng.gen_range(0..100) < cfg.dist_pct;
        let remote_warehouse = |rng: &mut ChaCha12Rng| -> Option<u64> {
            let candidates: Vec<u64> = (1..=cfg.warehouses as u64)
                .filter(|rw| ((rw - 1) % cfg.nodes as u64) as u32 != node)
                .collect();
            if candidates.is_empty() {
                None
            } else {
                Some(candidates[rng.gen_range(0..candidates.len())])
            }
        };

        let mix = rng.gen_range(0..100u32);
        if mix < 44 {
            // NewOrder; a distributed one sources one item from a remote
            // warehouse.
            let o_id = *state.next_o.get(&(w, d)).unwrap();
            state.next_o.insert((w, d), o_id + 1);
            let n = rng.gen_range(5..=10usize);
            let mut params = vec![w, d, c, o_id, n as u64];
            let remote = if make_distributed { remote_warehouse(rng) } else { None };
            let mut total = 0i64;
            for i in 0..n {
                let supply_w = match remote {
                    Some(rw) if i == 0 => rw,
                    _ => w,
                };
                let item = rng.gen_range(1..=cfg.items_per_warehouse as u64);
                let qty = rng.gen_range(1..=5u64);
                total += item_price(item) * qty as i64;
                params.extend_from_slice(&[supply_w, item, qty]);
            }
            let deliverable_from = if remote.is_some() { epoch + 1 } else { epoch };
            state
                .undelivered
                .get_mut(&(w, d))
                .unwrap()
                .push_back((o_id, c, total, deliverable_from));
            ("new_order".to_string(), params)
        } else if mix < 89 {
            // Payment; a distributed one pays for a remote customer.
            let (c_w, c_d) = match if make_distributed { remote_warehouse(rng) } else { None } {
                Some(rw) => (rw, rng.gen_range(1..=cfg.districts_per_warehouse as u64)),
                None => (w, d),
            };
            let amount = rng.gen_range(1..=5000u64);
            state.history_seq += 1;
            ("payment".to_string(), vec![w, d, c_w, c_d, c, amount, state.history_seq])
        } else if mix < 93 {
            // Delivery: pop the oldest deliverable undelivered order per
            // district.
            let mut orders = Vec::new();
            for dd in 1..=cfg.districts_per_warehouse as u64 {
                let queue = state.undelivered.get_mut(&(w, dd)).unwrap();
                if queue.front().map(|&(_, _, _, from)| from <= epoch).unwrap_or(false) {
                    let (o, oc, total, _) = queue.pop_front().unwrap();
                    orders.push((dd, o, oc, total));
                }
            }
            if orders.is_empty() {
                // Nothing deliverable yet: degrade to a stock read.
                return ("stock_level".to_string(), vec![w, d, 1, 1]);
            }
            let mut params = vec![w, orders.len() as u64];
            for (dd, o, oc, total) in orders {
                params.extend_from_slice(&[dd, o, oc, total as u64]);
            }
            ("delivery".to_string(), params)
        } else if mix < 97 {
            let max_o = start.next_o[&(w, d)] - 1;
            let o_id = rng.gen_range(1..=max_o);
            ("order_status".to_string(), vec![w, d, c, o_id])
        } else {
            let n = rng.gen_range(3..=8usize);
            let mut params = vec![w, d, n as u64];
            for _ in 0..n {
                params.push(rng.gen_range(1..=cfg.items_per_warehouse as u64));
            }
            ("stock_level".to_string(), params)
        }
    }
}

impl Workload for TpccWorkload {
    fn epoch(&self, epoch: EpochId) -> Result<BatchEpoch> {
        let ownership = self.ownership();
        let mut cache = self.cache.lock().expect("tpcc cache poisoned");
        while (cache.0.len() as u64) <= epoch {
            let next = cache.0.len() as u64;
            let start = EpochStartView { next_o: cache.1.next_o.clone() };
            let mut per_node = Vec::with_capacity(self.cfg.nodes as usize);
            for node in 0..self.cfg.nodes {
                let mut rng = epoch_rng(self.cfg.seed, next, node);
                let mut raw = Vec::with_capacity(self.cfg.batch_size);
                for _ in 0..self.cfg.batch_size {
                    raw.push(self.gen_txn(&mut rng, node, next, &mut cache.1, &start));
                }
                per_node.push(raw);
            }
            let batch = assemble_epoch(next, per_node, &self.registry, &ownership)?;
            cache.0.push(batch);
        }
        Ok(cache.0[epoch as usize].clone())
    }

    fn register_procedures(&self, registry: &mut ProcedureRegistry) -> Result<()> {
        register_tpcc_procedures(registry)
    }

    fn seed_store(&self, node: NodeId) -> Store {
        let cfg = &self.cfg;
        let mut store = Store::new();
        let put = |store: &mut Store, id: RecordId, columns: Vec<(&str, i64)>| {
            let mut record = Record::default();
            for (name, v) in columns {
                record.columns.push((name.to_string(), v.to_le_bytes().to_vec()));
            }
            record.version = 1;
            store.put_record(id, record);
        };
        for w in self.node_warehouses(node) {
            put(&mut store, Tables::warehouse(w), vec![("ytd", 0), ("o_cnt", 0)]);
            for d in 1..=cfg.districts_per_warehouse as u64 {
                let seeded_orders = cfg.customers_per_district as u64;
                put(
                    &mut store,
                    Tables::district(w, d),
                    vec![("ytd", 0), ("next_o", seeded_orders as i64 + 1)],
                );
                for c in 1..=cfg.customers_per_district as u64 {
                    put(&mut store, Tables::customer(w, d, c), vec![("balance", 0)]);
                }
                for o in 1..=seeded_orders {
                    let delivered = (o <= seeded_orders * 2 / 3) as u64;
                    let mut record = Record::default();
                    record.columns.push(("c".into(), o.to_le_bytes().to_vec()));
                    record.columns.push(("lines".into(), 1u64.to_le_bytes().to_vec()));
                    record.columns.push(("total".into(), item_price(o).to_le_bytes().to_vec()));
                    record.columns.push(("delivered".into(), delivered.to_le_bytes().to_vec()));
                    record.version = 1;
                    store.put_record(Tables::orders(w, d, o), record);
                }
            }
            for i in 1..=cfg.items_per_warehouse as u64 {
                put(&mut store, Tables::stock(w, i), vec![("qty", 100)]);
            }
        }
        store
    }

    fn ownership(&self) -> Ownership {
        Ownership::Warehouse { nodes: self.cfg.nodes }
    }

    fn registry(&self) -> &ProcedureRegistry {
        &self.registry
    }

    fn on_demand_txn(&self, node: NodeId, index: u64) -> Result<Transaction> {
        // A local Payment against the node's first warehouse; history rows
        // come from a reserved sequence so they never collide with the
        // generator's.
        let cfg = &self.cfg;
        let mut rng = epoch_rng(cfg.seed ^ 0x0DDC_0DE5, index, node);
        let w = self.node_warehouses(node)[0];
        let d = rng.gen_range(1..=cfg.districts_per_warehouse as u64);
        let c = rng.gen_range(1..=cfg.customers_per_district as u64);
        let amount = rng.gen_range(1..=5000u64);
        let hseq = (1u64 << 40) + index;
        let params = vec![w, d, w, d, c, amount, hseq];
        let access = self.registry.declared_access("payment", &params)?;
        Ok(Transaction {
            id: TxnId { node, epoch: 0, seq: 0 },
            procedure: "payment".to_string(),
            params,
            home: node,
            access,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zipf_theta_zero_is_uniform() {
        let z = ZipfSampler::new(4, 0.0);
        for k in 1..=4 {
            assert!((z.pmf(k) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn zipf_rank_ratio_matches_analytic() {
        let z = ZipfSampler::new(1000, 0.8);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut counts = [0u64; 2];
        let samples = 1_000_000;
        for _ in 0..samples {
            match z.sample(&mut rng) {
                1 => counts[0] += 1,
                2 => counts[1] += 1,
                _ => {}
            }
        }
        let ratio = counts[0] as f64 / counts[1] as f64;
        let expect = 2f64.powf(0.8);
        assert!(
            (ratio / expect - 1.0).abs() < 0.02,
            "P(1)/P(2) = {ratio}, expected about {expect}"
        );
    }

    #[test]
    fn hotter_theta_concentrates_on_rank_one() {
        let cold = ZipfSampler::new(1000, 0.6);
        let hot = ZipfSampler::new(1000, 0.8);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut draw = |z: &ZipfSampler, rng: &mut ChaCha12Rng| {
            (0..200_000).filter(|_| z.sample(rng) == 1).count()
        };
        let cold_hits = draw(&cold, &mut rng);
        let hot_hits = draw(&hot, &mut rng);
        assert!(hot_hits > cold_hits);
    }

    #[test]
    fn ycsb_access_sets_stay_within_ops_per_txn() {
        let cfg = WorkloadConfig {
            keys_per_node: 16,
            batch_size: 200,
            theta: 0.99,
            ..Default::default()
        };
        let w = YcsbWorkload::new(cfg).unwrap();
        let epoch = w.epoch(0).unwrap();
        for txn in &epoch.txns {
            assert!(txn.access.len() <= 10);
            assert!(!txn.access.is_empty());
        }
    }

    #[test]
    fn ycsb_dist_pct_zero_is_all_local() {
        let cfg = WorkloadConfig { nodes: 4, batch_size: 50, ..Default::default() };
        let w = YcsbWorkload::new(cfg).unwrap();
        let ownership = w.ownership();
        let epoch = w.epoch(3).unwrap();
        for txn in &epoch.txns {
            assert!(txn.is_local(&ownership).unwrap());
        }
    }

    #[test]
    fn ycsb_dist_fraction_close_to_knob() {
        let cfg =
            WorkloadConfig { nodes: 4, batch_size: 2500, dist_pct: 10, ..Default::default() };
        let w = YcsbWorkload::new(cfg).unwrap();
        let ownership = w.ownership();
        let epoch = w.epoch(0).unwrap();
        let total = epoch.txns.len();
        let dist = epoch.txns.iter().filter(|t| !t.is_local(&ownership).unwrap()).count();
        let pct = 100.0 * dist as f64 / total as f64;
        assert!((pct - 10.0).abs() <= 1.0, "measured {pct}%");
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = WorkloadConfig { nodes: 2, batch_size: 32, dist_pct: 20, ..Default::default() };
        let a = YcsbWorkload::new(cfg.clone()).unwrap();
        let b = YcsbWorkload::new(cfg).unwrap();
        for e in 0..3 {
            assert_eq!(a.epoch(e).unwrap().txns, b.epoch(e).unwrap().txns);
        }
    }

    #[test]
    fn tpcc_mix_close_to_spec() {
        let cfg = WorkloadConfig {
            kind: WorkloadKind::Tpcc,
            batch_size: 10_000,
            warehouses: 2,
            ..Default::default()
        };
        let w = TpccWorkload::new(cfg).unwrap();
        let epoch = w.epoch(0).unwrap();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in &epoch.txns {
            *counts.entry(t.procedure.clone()).or_default() += 1;
        }
        let total = epoch.txns.len() as f64;
        let pct = |name: &str| 100.0 * *counts.get(name).unwrap_or(&0) as f64 / total;
        assert!((pct("new_order") - 44.0).abs() <= 1.0);
        assert!((pct("payment") - 45.0).abs() <= 1.0);
        assert!((pct("delivery") - 4.0).abs() <= 1.0);
        assert!((pct("order_status") - 4.0).abs() <= 1.0);
        assert!((pct("stock_level") - 3.0).abs() <= 1.0);
    }

    #[test]
    fn tpcc_epochs_execute_against_seeded_schema() {
        let cfg = WorkloadConfig {
            kind: WorkloadKind::Tpcc,
            batch_size: 300,
            warehouses: 2,
            nodes: 2,
            dist_pct: 10,
            ..Default::default()
        };
        let w = TpccWorkload::new(cfg.clone()).unwrap();
        let mut store = Store::new();
        for node in 0..cfg.nodes {
            for (id, record) in w.seed_store(node).iter() {
                store.put_record(id.clone(), record.clone());
            }
        }
        // Every access must resolve: reads hit seeded or created rows,
        // inserts create fresh rows.
        for e in 0..2 {
            let epoch = w.epoch(e).unwrap();
            for txn in &epoch.txns {
                for action in w.registry().decompose(txn).unwrap() {
                    store.apply_action(&action).unwrap();
                }
            }
        }
    }

    #[test]
    fn tpcc_single_warehouse_hammers_warehouse_row() {
        let cfg = WorkloadConfig {
            kind: WorkloadKind::Tpcc,
            batch_size: 100,
            warehouses: 1,
            ..Default::default()
        };
        let w = TpccWorkload::new(cfg).unwrap();
        let epoch = w.epoch(0).unwrap();
        let hot = Tables::warehouse(1);
        let writers = epoch
            .txns
            .iter()
            .filter(|t| {
                matches!(t.procedure.as_str(), "new_order" | "payment")
                    && t.access.iter().any(|d| d.target == hot && d.kind.writes())
            })
            .count();
        let intents = epoch
            .txns
            .iter()
            .filter(|t| matches!(t.procedure.as_str(), "new_order" | "payment"))
            .count();
        assert_eq!(writers, intents, "every NewOrder and Payment updates the warehouse row");
    }

    #[test]
    fn five_tpcc_procedures_resolvable() {
        let mut registry = ProcedureRegistry::new();
        register_tpcc_procedures(&mut registry).unwrap();
        for name in TPCC_PROCS {
            assert!(registry.get(name).is_ok());
        }
    }
}
