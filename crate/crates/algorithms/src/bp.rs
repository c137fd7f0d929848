//! Residual loopy belief propagation (sum-product).
//!
//! Vertices hold node potentials and beliefs; every directed edge `u -> v`
//! holds the message `m_{u->v}` over the labels of `v` and the pair
//! potential oriented as `card(u) x card(v)`. The update runs under edge
//! consistency: it reads incoming messages, writes its own belief, and
//! commits each outgoing message that moved by more than the termination
//! bound, scheduling its target with the L1 change as priority.

use std::sync::Arc;

use graphlab_core::{
    ConsistencyModel, DataGraph, Engine, EngineConfig, EngineStats, FunctionId, SchedulerSpec, ScopeData,
    SharedDataTable, Task, UpdateContext, UpdateResult, VertexId,
};

use crate::mrf::{Matrix, PairwiseMrf};
use crate::AlgoError;

/// SDT key of the per-axis smoothing parameters (`[f64; 3]`).
pub const LAMBDA_KEY: &str = "lambda";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpConfig {
    /// Messages that move less than this (L1) do not reschedule.
    pub bound: f64,
    /// Weight of the old message in `new = (1 - d) * computed + d * old`.
    pub damping: f64,
    /// Raise pair potentials to `1 / lambda[axis]` read from the SDT, and
    /// record the edge statistics parameter learning folds over.
    pub learning: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig { bound: 1e-5, damping: 0.0, learning: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpVertex {
    pub potential: Vec<f64>,
    pub belief: Vec<f64>,
    /// Expected `|x_u - x_v|` under the pairwise beliefs of the edges to
    /// higher-numbered neighbors, summed per axis. Only kept in learning
    /// mode.
    pub stats: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpEdge {
    pub message: Vec<f64>,
    /// Rows index the source label, columns the target label.
    pub potential: Arc<Matrix>,
    pub axis: u8,
}

pub type BpGraph = DataGraph<BpVertex, BpEdge>;

/// Frozen BP graph with uniform messages and beliefs set to the normalized
/// node potentials.
pub fn build_graph(mrf: &PairwiseMrf) -> Result<BpGraph, AlgoError> {
    mrf.validate()?;
    let mut g = DataGraph::new();
    for p in &mrf.node_potentials {
        let mut belief = p.clone();
        normalize(&mut belief);
        g.add_vertex(BpVertex { potential: p.clone(), belief, stats: [0.0; 3] })?;
    }
    for e in &mrf.edges {
        let fwd = Arc::new(e.potential.clone());
        let rev = Arc::new(e.potential.transpose());
        let (u, v) = (VertexId::from(e.u), VertexId::from(e.v));
        g.add_edge(u, v, BpEdge { message: uniform(mrf.cards[e.v]), potential: fwd, axis: e.axis })?;
        g.add_edge(v, u, BpEdge { message: uniform(mrf.cards[e.u]), potential: rev, axis: e.axis })?;
    }
    g.freeze();
    Ok(g)
}

pub fn register(engine: &mut Engine<BpVertex, BpEdge>, cfg: BpConfig) -> FunctionId {
    engine.register("bp", move |scope, ctx| update(scope, ctx, &cfg))
}

/// One task per vertex.
pub fn seeds(graph: &BpGraph, f: FunctionId) -> Vec<Task> {
    graph.vertex_ids().map(|v| Task::with_priority(v, f, 1.0)).collect()
}

/// Runs BP to quiescence (or until the scheduler's sweeps run out).
pub fn run(
    graph: &mut BpGraph,
    sdt: &SharedDataTable,
    config: EngineConfig,
    spec: &SchedulerSpec,
    cfg: BpConfig,
) -> Result<EngineStats, AlgoError> {
    let mut engine = Engine::new(config);
    let f = register(&mut engine, cfg);
    let seeds = seeds(graph, f);
    Ok(engine.run(graph, sdt, spec, &seeds)?)
}

pub fn beliefs(graph: &BpGraph) -> Vec<Vec<f64>> {
    graph.vertex_payloads().map(|v| v.belief.clone()).collect()
}

/// Default engine settings for BP: edge consistency.
pub fn engine_config(workers: usize) -> EngineConfig {
    EngineConfig::new(workers, ConsistencyModel::Edge)
}

pub fn update(
    scope: &mut ScopeData<'_, BpVertex, BpEdge>,
    ctx: &mut UpdateContext<'_>,
    cfg: &BpConfig,
) -> UpdateResult {
    let v = scope.center();
    let f = ctx.task().function;
    let lambda = match cfg.learning {
        true => Some(ctx.sdt().get_cloned::<[f64; 3]>(LAMBDA_KEY)?),
        false => None,
    };
    let psi = scope.vertex().potential.clone();
    let k = psi.len();

    let ins = scope.in_edges();
    let mut sources = Vec::with_capacity(ins.len());
    let mut in_msgs = Vec::with_capacity(ins.len() * k);
    for &e in ins {
        sources.push(scope.source(e));
        in_msgs.extend_from_slice(&scope.edge(e).message);
    }

    let mut belief = Vec::with_capacity(k);
    cavity(&psi, &sources, &in_msgs, None, &mut belief);
    if !normalize(&mut belief) {
        return Err(Box::new(AlgoError::NumericalUnderflow { vertex: v }));
    }

    let mut stats = [0.0; 3];
    let mut cav = Vec::with_capacity(k);
    let mut msg = Vec::new();
    for &e in scope.out_edges() {
        let t = scope.target(e);
        let (potential, axis, old) = {
            let d = scope.edge(e);
            (d.potential.clone(), d.axis, d.message.clone())
        };
        let exponent = lambda.map(|l| 1.0 / l[axis as usize]);
        cavity(&psi, &sources, &in_msgs, Some(t), &mut cav);
        if !normalize(&mut cav) {
            return Err(Box::new(AlgoError::NumericalUnderflow { vertex: v }));
        }
        send(&potential, exponent, &cav, &mut msg);
        if !normalize(&mut msg) {
            return Err(Box::new(AlgoError::NumericalUnderflow { vertex: v }));
        }
        if cfg.damping > 0.0 {
            for (m, o) in msg.iter_mut().zip(&old) {
                *m = (1.0 - cfg.damping) * *m + cfg.damping * o;
            }
            normalize(&mut msg);
        }
        let residual: f64 = msg.iter().zip(&old).map(|(a, b)| (a - b).abs()).sum();

        if cfg.learning && t > v {
            let bt = &scope.neighbor(t).belief;
            stats[axis as usize] += expected_abs_diff(&potential, exponent, &cav, bt, &msg);
        }

        // small changes are not committed, so they cannot pile up unseen
        // on a target that never gets rescheduled
        if residual > cfg.bound {
            scope.edge_mut(e).message.clone_from(&msg);
            ctx.schedule(t, f, residual)?;
        }
    }
    let me = scope.vertex_mut();
    me.belief = belief;
    me.stats = stats;
    Ok(())
}

/// Largest L1 change any message would see if every vertex were updated
/// once more against the current state. Zero change means a fixed point.
pub fn max_residual(graph: &BpGraph, lambda: Option<[f64; 3]>) -> Result<f64, AlgoError> {
    let topo = graph.topology()?;
    let mut worst: f64 = 0.0;
    let (mut cav, mut msg) = (Vec::new(), Vec::new());
    for v in graph.vertex_ids() {
        let psi = &graph.vertex_data(v).potential;
        let sources: Vec<VertexId> = topo.in_edges(v).iter().map(|&e| topo.source(e)).collect();
        let in_msgs: Vec<f64> =
            topo.in_edges(v).iter().flat_map(|&e| graph.edge_data(e).message.iter().copied()).collect();
        for &e in topo.out_edges(v) {
            let d = graph.edge_data(e);
            cavity(psi, &sources, &in_msgs, Some(topo.target(e)), &mut cav);
            if !normalize(&mut cav) {
                return Err(AlgoError::NumericalUnderflow { vertex: v });
            }
            send(&d.potential, lambda.map(|l| 1.0 / l[d.axis as usize]), &cav, &mut msg);
            if !normalize(&mut msg) {
                return Err(AlgoError::NumericalUnderflow { vertex: v });
            }
            worst = worst.max(msg.iter().zip(&d.message).map(|(a, b)| (a - b).abs()).sum());
        }
    }
    Ok(worst)
}

/// `psi(x) * prod m_{u->v}(x)` over incoming messages, skipping the one
/// from `exclude`.
fn cavity(psi: &[f64], sources: &[VertexId], in_msgs: &[f64], exclude: Option<VertexId>, out: &mut Vec<f64>) {
    let k = psi.len();
    out.clear();
    out.extend_from_slice(psi);
    for (i, &u) in sources.iter().enumerate() {
        if Some(u) == exclude {
            continue;
        }
        for (o, m) in out.iter_mut().zip(&in_msgs[i * k..(i + 1) * k]) {
            *o *= m;
        }
    }
}

/// `out(x_t) = sum_{x_v} psi(x_v, x_t)^exponent * cav(x_v)`.
fn send(potential: &Matrix, exponent: Option<f64>, cav: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.resize(potential.cols(), 0.0);
    for (xv, &c) in cav.iter().enumerate() {
        for (xt, o) in out.iter_mut().enumerate() {
            *o += pow(potential.get(xv, xt), exponent) * c;
        }
    }
}

/// `E|x_v - x_t|` under the pairwise belief
/// `psi^exponent(x_v, x_t) * cav_v(x_v) * b_t(x_t) / m_{v->t}(x_t)`.
fn expected_abs_diff(potential: &Matrix, exponent: Option<f64>, cav: &[f64], bt: &[f64], msg: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (xv, &c) in cav.iter().enumerate() {
        for xt in 0..potential.cols() {
            if msg[xt] <= 0.0 {
                continue;
            }
            let p = pow(potential.get(xv, xt), exponent) * c * bt[xt] / msg[xt];
            num += p * xv.abs_diff(xt) as f64;
            den += p;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[inline]
fn pow(x: f64, exponent: Option<f64>) -> f64 {
    match exponent {
        Some(a) => x.powf(a),
        None => x,
    }
}

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Scales `x` to sum to one; false if the sum is zero or not finite.
fn normalize(x: &mut [f64]) -> bool {
    let s: f64 = x.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return false;
    }
    for p in x.iter_mut() {
        *p /= s;
    }
    true
}
