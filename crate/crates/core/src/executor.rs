//! Schedule execution with completion-wait semantics.
//!
//! Each schedule is processed by a single logical worker; a vertex starts
//! only after every in-edge's source has completed, either earlier in the
//! same schedule or signaled from another worker. The engine models worker
//! parallelism in virtual time: execution is simulated deterministically and
//! effects are applied in completion order, which is always a topological
//! order of the graph, so the resulting state is identical to any other
//! legal interleaving.

use crate::depgraph::{ChainState, DependencyGraph, Schedule};
use crate::error::Result;
use crate::store::{ActionEffect, Store};

/// Outcome of executing one graph's schedules.
#[derive(Debug, Clone)]
pub struct ExecutionOutcome {
    /// (vertex, effect) in completion order.
    pub effects: Vec<(usize, ActionEffect)>,
    /// Virtual start time per vertex, relative to phase start.
    pub start: Vec<u64>,
    /// Virtual completion time per vertex.
    pub finish: Vec<u64>,
    /// Executing worker per vertex.
    pub worker: Vec<usize>,
    /// Completion time of the last vertex (0 for an empty graph).
    pub makespan: u64,
}

/// Deterministic wait simulation: per-vertex start/finish times and the
/// phase makespan, without touching any store. Workers run their schedules in
/// order; a vertex starts when its worker is free and all in-edges have
/// completed; ties break by worker id.
#[derive(Debug, Clone, Default)]
pub struct ExecutionPlan {
    pub start: Vec<u64>,
    pub finish: Vec<u64>,
    pub worker: Vec<usize>,
    /// Vertices sorted by (completion time, vertex id): the order effects are
    /// applied in.
    pub completion_order: Vec<usize>,
    pub makespan: u64,
}

pub fn plan_schedule_times(
    graph: &DependencyGraph,
    schedules: &[Schedule],
    per_action_cost: u64,
) -> ExecutionPlan {
    let n = graph.vertex_count();
    let mut finish: Vec<Option<u64>> = vec![None; n];
    let mut start = vec![0u64; n];
    let mut worker_of = vec![0usize; n];
    let mut worker_clock = vec![0u64; schedules.len()];
    let mut position = vec![0usize; schedules.len()];
    let mut order: Vec<usize> = Vec::with_capacity(n);

    let mut remaining = n;
    while remaining > 0 {
        let mut best: Option<(u64, usize, usize)> = None;
        for (w, sched) in schedules.iter().enumerate() {
            if position[w] >= sched.vertices.len() {
                continue;
            }
            let v = sched.vertices[position[w]];
            let mut ready_at = worker_clock[w];
            let mut ready = true;
            for &p in graph.preds(v) {
                match finish[p] {
                    Some(t) => ready_at = ready_at.max(t),
                    None => {
                        ready = false;
                        break;
                    }
                }
            }
            if !ready {
                continue;
            }
            if best.map(|(t, bw, _)| (ready_at, w) < (t, bw)).unwrap_or(true) {
                best = Some((ready_at, w, v));
            }
        }
        let (t, w, v) = best.expect("acyclic graph with covering schedules cannot stall");
        start[v] = t;
        finish[v] = Some(t + per_action_cost);
        worker_of[v] = w;
        worker_clock[w] = t + per_action_cost;
        position[w] += 1;
        order.push(v);
        remaining -= 1;
    }

    order.sort_by_key(|&v| (finish[v].unwrap(), v));
    let makespan = order.last().map(|&v| finish[v].unwrap()).unwrap_or(0);
    ExecutionPlan {
        start,
        finish: finish.into_iter().map(|f| f.unwrap_or(0)).collect(),
        worker: worker_of,
        completion_order: order,
        makespan,
    }
}

/// Apply a plan's vertices to the store in completion order, collecting the
/// effects. Completion order is a topological order of the graph, so the
/// result equals any other legal interleaving.
pub fn apply_plan(
    store: &mut Store,
    graph: &DependencyGraph,
    plan: &ExecutionPlan,
) -> Result<Vec<(usize, ActionEffect)>> {
    let mut effects = Vec::with_capacity(plan.completion_order.len());
    for &v in &plan.completion_order {
        let effect = store.apply_action(&graph.vertices[v].action)?;
        effects.push((v, effect));
    }
    Ok(effects)
}

/// Execute `schedules` over `graph` against `store`, charging
/// `per_action_cost` virtual units per vertex.
pub fn execute_schedules(
    store: &mut Store,
    graph: &DependencyGraph,
    schedules: &[Schedule],
    per_action_cost: u64,
) -> Result<ExecutionOutcome> {
    let plan = plan_schedule_times(graph, schedules, per_action_cost);
    let effects = apply_plan(store, graph, &plan)?;
    Ok(ExecutionOutcome {
        effects,
        start: plan.start,
        finish: plan.finish,
        worker: plan.worker,
        makespan: plan.makespan,
    })
}

/// Temporal seam edges from a node's local-phase graph into its merged
/// distributed graph: per key, the distributed chain continues where the
/// local chain ended. Returned as (local vertex, merged vertex) pairs. The
/// phase barrier satisfies them at runtime; the log must still carry them so
/// replay reconstructs the full per-key order.
pub fn seam_edges(local: &DependencyGraph, merged: &DependencyGraph) -> Vec<(usize, usize)> {
    let offset = local.vertex_count();
    let mut chains = local.chain_tails();
    let mut emitted = Vec::new();
    for (v, vx) in merged.vertices.iter().enumerate() {
        if let Some(state) = chains.get_mut(&vx.action.target) {
            // Continue the chain; only edges crossing the phase boundary are
            // new (merged-internal ones already exist in the merged graph).
            let mut edges = Vec::new();
            shift_advance(state, offset + v, vx.action.kind.writes(), &mut edges);
            for e in edges {
                if e.0 < offset && e.1 >= offset {
                    emitted.push((e.0, e.1 - offset));
                }
            }
        }
    }
    emitted
}

fn shift_advance(state: &mut ChainState, v: usize, writes: bool, out: &mut Vec<(usize, usize)>) {
    let mut edges = Vec::new();
    state.advance(v, writes, &mut edges);
    for e in edges {
        out.push((e.from, e.to));
    }
}
