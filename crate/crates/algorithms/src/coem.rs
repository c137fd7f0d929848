//! CoEM label propagation on a noun-phrase / context bipartite graph.
//!
//! Each vertex belief becomes the co-occurrence-weighted average of its
//! neighbors' beliefs. Seed vertices are clamped to their labels. When a
//! belief has moved by more than the threshold (max norm) since neighbors
//! were last rescheduled, every neighbor is rescheduled again. Measuring
//! against the last announced belief rather than the previous update keeps
//! a run of small changes from drifting unannounced.

use graphlab_core::{
    ConsistencyModel, DataGraph, Engine, EngineConfig, EngineStats, FunctionId, SchedulerSpec, ScopeData,
    SharedDataTable, Task, UpdateContext, UpdateResult, VertexId,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::AlgoError;

pub const THRESHOLD: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    NounPhrase,
    Context,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoemVertex {
    pub side: Side,
    pub belief: Vec<f64>,
    /// Belief as of the last time neighbors were rescheduled.
    pub announced: Vec<f64>,
    pub clamped: bool,
}

pub type CoemGraph = DataGraph<CoemVertex, f64>;

/// Vertices `0..n_np` are noun phrases and `n_np..n_np + n_ct` contexts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoemProblem {
    pub n_np: usize,
    pub n_ct: usize,
    pub n_classes: usize,
    /// `(noun phrase, context, weight)`, with the context numbered from 0.
    pub edges: Vec<(usize, usize, f64)>,
    /// `(vertex, class)` labels; seeds are clamped to one-hot beliefs.
    pub seeds: Vec<(usize, usize)>,
}

impl CoemProblem {
    pub fn n_vertices(&self) -> usize {
        self.n_np + self.n_ct
    }

    pub fn validate(&self) -> Result<(), AlgoError> {
        if self.n_classes == 0 {
            return Err(AlgoError::InvalidModel("need at least one class".into()));
        }
        for &(np, ct, w) in &self.edges {
            if np >= self.n_np || ct >= self.n_ct {
                return Err(AlgoError::InvalidModel(format!("edge {np} - {ct} out of range")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(AlgoError::InvalidModel(format!("edge {np} - {ct} has bad weight {w}")));
            }
        }
        for &(v, c) in &self.seeds {
            if v >= self.n_vertices() || c >= self.n_classes {
                return Err(AlgoError::InvalidModel(format!("seed ({v}, {c}) out of range")));
            }
        }
        Ok(())
    }

    /// Initial beliefs: one-hot for seeds, uniform otherwise.
    pub fn initial_beliefs(&self) -> (Vec<Vec<f64>>, Vec<bool>) {
        let k = self.n_classes;
        let mut beliefs = vec![vec![1.0 / k as f64; k]; self.n_vertices()];
        let mut clamped = vec![false; self.n_vertices()];
        for &(v, c) in &self.seeds {
            beliefs[v] = vec![0.0; k];
            beliefs[v][c] = 1.0;
            clamped[v] = true;
        }
        (beliefs, clamped)
    }

    /// Connected random instance: a random spanning tree across the two
    /// sides, then extra distinct edges up to `n_edges`. Weights are integer
    /// counts in `1..=10`. About `seed_frac` of the noun phrases are seeds.
    pub fn random(n_np: usize, n_ct: usize, n_edges: usize, n_classes: usize, seed_frac: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut present = std::collections::HashSet::new();
        let mut edges = Vec::new();
        let mut push = |np: usize, ct: usize, rng: &mut ChaCha8Rng, edges: &mut Vec<_>| {
            if present.insert((np, ct)) {
                edges.push((np, ct, rng.gen_range(1..=10) as f64));
            }
        };
        if n_np > 0 && n_ct > 0 {
            let mut order: Vec<usize> = (1..n_np).chain(n_np + 1..n_np + n_ct).collect();
            order.shuffle(&mut rng);
            let (mut nps, mut cts) = (vec![0], vec![0]);
            push(0, 0, &mut rng, &mut edges);
            for v in order {
                if v < n_np {
                    let ct = *cts.choose(&mut rng).expect("nonempty");
                    push(v, ct, &mut rng, &mut edges);
                    nps.push(v);
                } else {
                    let np = *nps.choose(&mut rng).expect("nonempty");
                    push(np, v - n_np, &mut rng, &mut edges);
                    cts.push(v - n_np);
                }
            }
            let cap = n_edges.min(n_np * n_ct);
            while edges.len() < cap {
                let (np, ct) = (rng.gen_range(0..n_np), rng.gen_range(0..n_ct));
                push(np, ct, &mut rng, &mut edges);
            }
        }
        let n_seeds = ((n_np as f64 * seed_frac).round() as usize).clamp(n_classes.min(n_np), n_np);
        let mut nps: Vec<usize> = (0..n_np).collect();
        nps.shuffle(&mut rng);
        let seeds = nps[..n_seeds].iter().enumerate().map(|(i, &v)| (v, i % n_classes.max(1))).collect();
        CoemProblem { n_np, n_ct, n_classes, edges, seeds }
    }
}

pub fn build_graph(p: &CoemProblem) -> Result<CoemGraph, AlgoError> {
    p.validate()?;
    let (beliefs, clamped) = p.initial_beliefs();
    let mut g = DataGraph::new();
    for (i, (belief, clamped)) in beliefs.into_iter().zip(clamped).enumerate() {
        let side = if i < p.n_np { Side::NounPhrase } else { Side::Context };
        g.add_vertex(CoemVertex { side, announced: belief.clone(), belief, clamped })?;
    }
    for &(np, ct, w) in &p.edges {
        g.add_edge(VertexId::from(np), VertexId::from(p.n_np + ct), w)?;
    }
    g.freeze();
    Ok(g)
}

pub fn register(engine: &mut Engine<CoemVertex, f64>, threshold: f64) -> FunctionId {
    engine.register("coem", move |scope, ctx| update(scope, ctx, threshold))
}

/// A vertex with zero total weight keeps its belief and emits nothing.
pub fn update(scope: &mut ScopeData<'_, CoemVertex, f64>, ctx: &mut UpdateContext<'_>, threshold: f64) -> UpdateResult {
    if scope.vertex().clamped {
        return Ok(());
    }
    let v = scope.center();
    let mut acc = vec![0.0; scope.vertex().belief.len()];
    let mut total = 0.0;
    for &e in scope.in_edges().iter().chain(scope.out_edges()) {
        let w = *scope.edge(e);
        let u = scope.topology().opposite(e, v);
        for (a, b) in acc.iter_mut().zip(&scope.neighbor(u).belief) {
            *a += w * b;
        }
        total += w;
    }
    if total <= 0.0 {
        return Ok(());
    }
    for a in &mut acc {
        *a /= total;
    }
    let change = acc.iter().zip(&scope.vertex().announced).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let me = scope.vertex_mut();
    if change > threshold {
        me.announced.clone_from(&acc);
    }
    me.belief = acc;
    if change > threshold {
        let f = ctx.task().function;
        for &u in scope.neighbors() {
            ctx.schedule(u, f, change)?;
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct CoemRun {
    pub beliefs: Vec<Vec<f64>>,
    pub stats: EngineStats,
}

/// Runs CoEM from the problem's initial beliefs with one seed task per
/// vertex.
pub fn run(p: &CoemProblem, workers: usize, spec: &SchedulerSpec, threshold: f64) -> Result<CoemRun, AlgoError> {
    let mut g = build_graph(p)?;
    let mut engine = Engine::new(EngineConfig::new(workers, ConsistencyModel::Edge));
    let f = register(&mut engine, threshold);
    let seeds: Vec<Task> = g.vertex_ids().map(|v| Task::new(v, f)).collect();
    let stats = engine.run(&mut g, &SharedDataTable::new(), spec, &seeds)?;
    Ok(CoemRun { beliefs: beliefs(&g), stats })
}

pub fn beliefs(g: &CoemGraph) -> Vec<Vec<f64>> {
    g.vertex_payloads().map(|v| v.belief.clone()).collect()
}

/// One Jacobi application of the averaging operator to `beliefs`.
pub fn jacobi_step(p: &CoemProblem, beliefs: &[Vec<f64>], clamped: &[bool]) -> Vec<Vec<f64>> {
    let k = p.n_classes;
    let mut acc = vec![vec![0.0; k]; p.n_vertices()];
    let mut total = vec![0.0; p.n_vertices()];
    for &(np, ct, w) in &p.edges {
        let ct = p.n_np + ct;
        for c in 0..k {
            acc[np][c] += w * beliefs[ct][c];
            acc[ct][c] += w * beliefs[np][c];
        }
        total[np] += w;
        total[ct] += w;
    }
    (0..p.n_vertices())
        .map(|v| {
            if clamped[v] || total[v] <= 0.0 {
                beliefs[v].clone()
            } else {
                acc[v].iter().map(|a| a / total[v]).collect()
            }
        })
        .collect()
}

/// Dense fixed-point iteration run until no entry moves more than `tol`.
pub fn jacobi_oracle(p: &CoemProblem, tol: f64, max_iters: usize) -> Vec<Vec<f64>> {
    let (mut b, clamped) = p.initial_beliefs();
    for _ in 0..max_iters {
        let next = jacobi_step(p, &b, &clamped);
        let delta = max_abs_diff(&next, &b);
        b = next;
        if delta <= tol {
            break;
        }
    }
    b
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

/// Largest change one more full sweep over `beliefs` would make.
pub fn extra_sweep_change(p: &CoemProblem, beliefs: &[Vec<f64>]) -> f64 {
    let (_, clamped) = p.initial_beliefs();
    max_abs_diff(&jacobi_step(p, beliefs, &clamped), beliefs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphlab_core::SchedulerKind;

    fn fifo() -> SchedulerSpec {
        SchedulerSpec::dynamic(SchedulerKind::FifoSingle).unwrap()
    }

    #[test]
    fn weighted_average_of_two_contexts() {
        let p = CoemProblem {
            n_np: 1,
            n_ct: 2,
            n_classes: 2,
            edges: vec![(0, 0, 3.0), (0, 1, 1.0)],
            seeds: vec![(1, 0), (2, 1)],
        };
        let r = run(&p, 1, &fifo(), THRESHOLD).unwrap();
        assert_eq!(r.beliefs[0], vec![0.75, 0.25]);
    }

    #[test]
    fn uniform_neighbors_are_a_fixed_point() {
        let p = CoemProblem {
            n_np: 2,
            n_ct: 2,
            n_classes: 3,
            edges: vec![(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)],
            seeds: vec![],
        };
        let r = run(&p, 1, &fifo(), THRESHOLD).unwrap();
        assert_eq!(r.stats.updates_applied, 4);
        assert!(r.beliefs.iter().all(|b| b.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15)));
    }

    #[test]
    fn isolated_vertex_keeps_its_prior() {
        let p = CoemProblem { n_np: 2, n_ct: 1, n_classes: 2, edges: vec![(0, 0, 1.0)], seeds: vec![(0, 1)] };
        let r = run(&p, 1, &fifo(), THRESHOLD).unwrap();
        assert_eq!(r.beliefs[1], vec![0.5, 0.5]);
        assert_eq!(r.beliefs[2], vec![0.0, 1.0]);
    }

    #[test]
    fn random_instances_are_connected_bipartite() {
        let p = CoemProblem::random(30, 20, 120, 3, 0.1, 4);
        p.validate().unwrap();
        assert_eq!(p.edges.len(), 120);
        assert_eq!(p.seeds.len(), 3);
        let g = build_graph(&p).unwrap();
        let topo = g.topology().unwrap();
        let mut seen = vec![false; p.n_vertices()];
        let mut stack = vec![VertexId(0)];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in topo.neighbors(v) {
                assert_ne!(g.vertex_data(u).side, g.vertex_data(v).side);
                if !seen[u.index()] {
                    seen[u.index()] = true;
                    stack.push(u);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(p, CoemProblem::random(30, 20, 120, 3, 0.1, 4));
    }
}
