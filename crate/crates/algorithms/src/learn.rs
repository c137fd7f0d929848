//! Online smoothing-parameter learning for Laplace grid models.
//!
//! BP runs in learning mode, where each pair potential is raised to
//! `1 / lambda[axis]` and every vertex records `E|x_u - x_v|` for its
//! edges. A sync folds those statistics per axis and takes one projected
//! gradient step on the negative log-likelihood:
//!
//! `lambda <- max(lambda_min, lambda - eta * (E - T) / lambda^2)`
//!
//! where `T` is the same statistic computed once from the hidden labels.
//! The sync either alternates with full BP convergence or runs in the
//! background while BP is still converging.

use std::time::Duration;

use graphlab_core::{Engine, EngineConfig, FunctionId, SchedulerSpec, SdtView, SharedDataTable, SyncSpec};

use crate::bp::{self, BpConfig, BpEdge, BpGraph, BpVertex, LAMBDA_KEY};
use crate::mrf::PairwiseMrf;
use crate::AlgoError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnConfig {
    pub eta: f64,
    pub lambda_min: f64,
    /// Data statistic per axis.
    pub target: [f64; 3],
}

impl LearnConfig {
    /// Step size `0.1 / |V|` and floor `1e-3`.
    pub fn new(n_vertices: usize, target: [f64; 3]) -> Self {
        LearnConfig { eta: 0.1 / n_vertices.max(1) as f64, lambda_min: 1e-3, target }
    }
}

/// Sum of `|x_u - x_v|` over the edges of each axis.
pub fn target_statistics(mrf: &PairwiseMrf, labels: &[usize]) -> [f64; 3] {
    let mut t = [0.0; 3];
    for e in &mrf.edges {
        t[e.axis as usize] += labels[e.u].abs_diff(labels[e.v]) as f64;
    }
    t
}

pub fn gradient_step(lambda: [f64; 3], expected: [f64; 3], cfg: &LearnConfig) -> [f64; 3] {
    let mut next = lambda;
    for a in 0..3 {
        let grad = (expected[a] - cfg.target[a]) / (lambda[a] * lambda[a]);
        next[a] = (lambda[a] - cfg.eta * grad).max(cfg.lambda_min);
    }
    next
}

/// The learning sync: fold vertex statistics, step `lambda` in the SDT.
pub fn sync_spec(cfg: LearnConfig) -> SyncSpec<BpVertex, [f64; 3], [f64; 3]> {
    SyncSpec::new(
        LAMBDA_KEY,
        [0.0; 3],
        |v: &BpVertex, mut acc: [f64; 3]| {
            for (a, s) in acc.iter_mut().zip(&v.stats) {
                *a += s;
            }
            acc
        },
        move |acc, sdt: &SdtView| {
            let lambda = sdt.get_cloned::<[f64; 3]>(LAMBDA_KEY).unwrap_or([1.0; 3]);
            gradient_step(lambda, acc, &cfg)
        },
    )
    .with_merge(|a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
}

/// BP engine in learning mode; the caller adds the sync.
pub fn learning_engine(config: EngineConfig, bp_cfg: BpConfig) -> (Engine<BpVertex, BpEdge>, FunctionId) {
    let mut engine = Engine::new(config);
    let f = bp::register(&mut engine, BpConfig { learning: true, ..bp_cfg });
    (engine, f)
}

/// Alternates BP to quiescence with one gradient step, `steps` times.
/// `lambda` must already be in the SDT. Returns the value after each step.
pub fn alternating(
    graph: &mut BpGraph,
    sdt: &SharedDataTable,
    config: EngineConfig,
    spec: &SchedulerSpec,
    bp_cfg: BpConfig,
    cfg: LearnConfig,
    steps: usize,
) -> Result<Vec<[f64; 3]>, AlgoError> {
    let (mut engine, f) = learning_engine(config, bp_cfg);
    engine.add_sync(sync_spec(cfg));
    let seeds = bp::seeds(graph, f);
    let mut path = Vec::with_capacity(steps);
    for _ in 0..steps {
        engine.run(graph, sdt, spec, &seeds)?;
        engine.run_sync_now(graph, sdt, LAMBDA_KEY)?;
        path.push(sdt.get_cloned::<[f64; 3]>(LAMBDA_KEY).expect("sync wrote lambda"));
    }
    Ok(path)
}

/// Runs the gradient step as a background sync every `period` while BP
/// runs, restarting BP `rounds` times so inference catches up with the
/// latest `lambda`. Returns `lambda` after each round.
#[allow(clippy::too_many_arguments)]
pub fn background(
    graph: &mut BpGraph,
    sdt: &SharedDataTable,
    config: EngineConfig,
    spec: &SchedulerSpec,
    bp_cfg: BpConfig,
    cfg: LearnConfig,
    period: Duration,
    rounds: usize,
) -> Result<Vec<[f64; 3]>, AlgoError> {
    let (mut engine, f) = learning_engine(config, bp_cfg);
    engine.add_sync(sync_spec(cfg).with_period(period));
    let seeds = bp::seeds(graph, f);
    let mut path = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        engine.run(graph, sdt, spec, &seeds)?;
        path.push(sdt.get_cloned::<[f64; 3]>(LAMBDA_KEY).expect("sync wrote lambda"));
    }
    Ok(path)
}
