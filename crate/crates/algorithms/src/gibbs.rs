//! Chromatic Gibbs sampling on the set scheduler.
//!
//! Stages are the color classes of a proper coloring, so vertices in a stage
//! have no common edge and can be resampled at once. The plan is compiled
//! against edge-consistency exclusion sets, which is what orders a vertex
//! after the neighbors it reads; dispatch then only needs vertex
//! consistency. One plan round is one full sweep.
//!
//! Each update draws from the update RNG stream (seed, vertex, update
//! count), so the samples do not depend on the worker count.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;

use graphlab_core::scheduling::compile_plan;
use graphlab_core::{
    ConsistencyModel, DataGraph, Engine, EngineConfig, EngineStats, FunctionId, SchedulerSpec, ScopeData,
    SharedDataTable, UpdateContext, UpdateResult, VertexId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coloring::Coloring;
use crate::mrf::{sample_index, Matrix, PairwiseMrf};
use crate::AlgoError;

pub struct GibbsVertex {
    pub potential: Vec<f64>,
    pub state: AtomicU32,
    /// Post-burn-in visits per label.
    pub counts: Vec<AtomicU64>,
}

impl Clone for GibbsVertex {
    fn clone(&self) -> Self {
        GibbsVertex {
            potential: self.potential.clone(),
            state: AtomicU32::new(self.state.load(Ordering::Relaxed)),
            counts: self.counts.iter().map(|c| AtomicU64::new(c.load(Ordering::Relaxed))).collect(),
        }
    }
}

impl std::fmt::Debug for GibbsVertex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GibbsVertex").field("state", &self.state.load(Ordering::Relaxed)).finish()
    }
}

/// Pair potential of `u -> v`, rows indexing the label of `u`.
#[derive(Clone, Debug)]
pub struct GibbsEdge {
    pub potential: Arc<Matrix>,
}

pub type GibbsGraph = DataGraph<GibbsVertex, GibbsEdge>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GibbsConfig {
    /// Sweeps whose samples are counted.
    pub samples: u64,
    /// Sweeps discarded first; `None` means 10% of `samples`.
    pub burn_in: Option<u64>,
    pub seed: u64,
}

impl GibbsConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        GibbsConfig { samples, burn_in: None, seed }
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in.unwrap_or(self.samples / 10)
    }
}

/// Frozen sampler graph with initial states drawn uniformly from `seed`.
pub fn build_graph(mrf: &PairwiseMrf, seed: u64) -> Result<GibbsGraph, AlgoError> {
    mrf.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DataGraph::new();
    for p in &mrf.node_potentials {
        let k = p.len();
        g.add_vertex(GibbsVertex {
            potential: p.clone(),
            state: AtomicU32::new(rng.gen_range(0..k) as u32),
            counts: (0..k).map(|_| AtomicU64::new(0)).collect(),
        })?;
    }
    for e in &mrf.edges {
        let (u, v) = (VertexId::from(e.u), VertexId::from(e.v));
        g.add_edge(u, v, GibbsEdge { potential: Arc::new(e.potential.clone()) })?;
        g.add_edge(v, u, GibbsEdge { potential: Arc::new(e.potential.transpose()) })?;
    }
    g.freeze();
    Ok(g)
}

/// Registers the resampling update; draws are counted once the vertex has
/// been updated `burn_in` times in the current run.
pub fn register(engine: &mut Engine<GibbsVertex, GibbsEdge>, burn_in: u64) -> FunctionId {
    engine.register("gibbs", move |scope, ctx| update(scope, ctx, burn_in))
}

pub fn update(
    scope: &mut ScopeData<'_, GibbsVertex, GibbsEdge>,
    ctx: &mut UpdateContext<'_>,
    burn_in: u64,
) -> UpdateResult {
    let me = scope.vertex();
    let mut q = me.potential.clone();
    for &e in scope.in_edges() {
        let xu = scope.neighbor(scope.source(e)).state.load(Ordering::Acquire) as usize;
        let pot = &scope.edge(e).potential;
        for (x, w) in q.iter_mut().enumerate() {
            *w *= pot.get(xu, x);
        }
    }
    let x = sample_index(&q, ctx.update_rng().gen::<f64>());
    me.state.store(x as u32, Ordering::Release);
    if ctx.vertex_update_count() >= burn_in {
        me.counts[x].fetch_add(1, Ordering::Relaxed);
    }
    Ok(())
}

#[derive(Debug)]
pub struct GibbsRun {
    pub marginals: Vec<Vec<f64>>,
    pub stats: EngineStats,
    pub n_colors: u32,
    /// Nodes and edges of the compiled plan.
    pub plan_size: (usize, usize),
}

/// Samples `mrf` with the chromatic schedule given by `coloring`.
pub fn run(mrf: &PairwiseMrf, coloring: &Coloring, workers: usize, cfg: &GibbsConfig) -> Result<GibbsRun, AlgoError> {
    let mut graph = build_graph(mrf, cfg.seed)?;
    let topo = graph.topology()?;
    coloring.check(topo)?;
    let burn_in = cfg.burn_in();
    let config = EngineConfig::new(workers, ConsistencyModel::Vertex).with_seed(cfg.seed);
    let mut engine = Engine::new(config);
    let f = register(&mut engine, burn_in);
    let plan = compile_plan(&coloring.stages(f), topo, ConsistencyModel::Edge)?;
    let plan_size = (plan.len(), plan.n_edges());
    let rounds = usize::try_from(burn_in + cfg.samples).expect("sweep count fits usize");
    let spec = SchedulerSpec::Set { plan: Arc::new(plan), rounds };
    let stats = engine.run(&mut graph, &SharedDataTable::new(), &spec, &[])?;
    Ok(GibbsRun { marginals: marginals(&graph), stats, n_colors: coloring.n_colors, plan_size })
}

/// Per-vertex empirical label frequencies; all zero before any counted
/// sample.
pub fn marginals(graph: &GibbsGraph) -> Vec<Vec<f64>> {
    graph
        .vertex_payloads()
        .map(|v| {
            let counts: Vec<u64> = v.counts.iter().map(|c| c.load(Ordering::Relaxed)).collect();
            let total = counts.iter().sum::<u64>().max(1) as f64;
            counts.iter().map(|&c| c as f64 / total).collect()
        })
        .collect()
}

/// Largest absolute difference between two sets of marginals.
pub fn max_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coloring;

    fn coloring_of(mrf: &PairwiseMrf) -> Coloring {
        let g = build_graph(mrf, 0).unwrap();
        let topo = g.topology().unwrap();
        coloring::sequential(topo, topo.vertices())
    }

    #[test]
    fn single_vertex_matches_potential() {
        let mut m = PairwiseMrf::new();
        m.add_variable(vec![0.3, 0.7]);
        let run = run(&m, &coloring_of(&m), 1, &GibbsConfig::new(100_000, 5)).unwrap();
        assert!((run.marginals[0][1] - 0.7).abs() < 0.01, "{:?}", run.marginals);
        assert_eq!(run.stats.updates_applied, 110_000);
    }

    #[test]
    fn samples_do_not_depend_on_worker_count() {
        let m = PairwiseMrf::random_tree(9, 3, 7);
        let c = coloring_of(&m);
        let cfg = GibbsConfig::new(300, 11);
        let a = run(&m, &c, 1, &cfg).unwrap();
        let b = run(&m, &c, 4, &cfg).unwrap();
        assert_eq!(a.marginals, b.marginals);
    }

    #[test]
    fn improper_coloring_is_rejected() {
        let m = PairwiseMrf::random_tree(3, 2, 1);
        let bad = Coloring::from_colors(vec![0, 0, 0]);
        assert!(matches!(run(&m, &bad, 1, &GibbsConfig::new(10, 0)), Err(AlgoError::ImproperColoring(..))));
    }

    #[test]
    fn burn_in_sweeps_are_not_counted() {
        let m = PairwiseMrf::random_tree(4, 2, 3);
        let cfg = GibbsConfig { samples: 50, burn_in: Some(20), seed: 1 };
        let mut graph = build_graph(&m, 1).unwrap();
        let c = coloring_of(&m);
        let mut engine = Engine::new(EngineConfig::new(2, ConsistencyModel::Vertex));
        let f = register(&mut engine, cfg.burn_in());
        let plan = compile_plan(&c.stages(f), graph.topology().unwrap(), ConsistencyModel::Edge).unwrap();
        let spec = SchedulerSpec::Set { plan: Arc::new(plan), rounds: 70 };
        engine.run(&mut graph, &SharedDataTable::new(), &spec, &[]).unwrap();
        for v in graph.vertex_payloads() {
            assert_eq!(v.counts.iter().map(|c| c.load(Ordering::Relaxed)).sum::<u64>(), 50);
        }
    }
}
