//! Shooting (coordinate descent) Lasso on a weight / observation bipartite
//! graph.
//!
//! Minimizes `L(w) = sum_j (w . x_j - y_j)^2 + lambda * |w|_1`. Weight
//! vertices `0..d` hold `w_i`; observation vertices `d..d + n` cache the
//! residual `r_j = y_j - sum_i X_ij w_i`. Edge `w_i -> y_j` carries `X_ij`
//! for nonzero entries only.
//!
//! An update minimizes `L` exactly in `w_i`, adjusts the cached residuals
//! of its observations, and reschedules every other weight that shares an
//! observation. Under full consistency this is serializable; under vertex
//! consistency overlapping updates may read residuals mid-change. Values
//! are atomics so both models are memory safe.

use graphlab_core::{
    ConsistencyModel, DataGraph, Engine, EngineConfig, EngineStats, FunctionId, SchedulerSpec, ScopeData,
    SharedDataTable, Task, UpdateContext, UpdateResult, VertexId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{AlgoError, AtomicF64};

/// SDT key of the regularization weight (`f64`).
pub const LAMBDA_KEY: &str = "lasso.lambda";

#[derive(Clone, Debug, PartialEq)]
pub struct LassoProblem {
    pub n_features: usize,
    pub n_obs: usize,
    pub y: Vec<f64>,
    /// `(feature i, observation j, X_ij)`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl LassoProblem {
    pub fn validate(&self) -> Result<(), AlgoError> {
        if self.y.len() != self.n_obs {
            return Err(AlgoError::InvalidModel(format!("{} targets for {} observations", self.y.len(), self.n_obs)));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, j, x) in &self.entries {
            if i >= self.n_features || j >= self.n_obs {
                return Err(AlgoError::InvalidModel(format!("entry ({i}, {j}) out of range")));
            }
            if !x.is_finite() {
                return Err(AlgoError::InvalidModel(format!("entry ({i}, {j}) is not finite")));
            }
            if !seen.insert((i, j)) {
                return Err(AlgoError::InvalidModel(format!("duplicate entry ({i}, {j})")));
            }
        }
        if !self.y.iter().all(|v| v.is_finite()) {
            return Err(AlgoError::InvalidModel("non-finite target".into()));
        }
        Ok(())
    }

    /// Nonzero entries grouped by feature: `(observation, X_ij)`.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.n_features];
        for &(i, j, x) in &self.entries {
            if x != 0.0 {
                cols[i].push((j, x));
            }
        }
        cols
    }

    pub fn residuals(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.y.clone();
        for &(i, j, x) in &self.entries {
            r[j] -= x * w[i];
        }
        r
    }

    pub fn objective(&self, w: &[f64], lambda: f64) -> f64 {
        let loss: f64 = self.residuals(w).iter().map(|r| r * r).sum();
        loss + lambda * w.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// Random sparse design with each entry present with probability
    /// `density` and drawn from N(0, 1); about a tenth of the true weights
    /// are nonzero, and targets carry N(0, 0.1^2) noise.
    pub fn random(n_obs: usize, n_features: usize, density: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for i in 0..n_features {
            for j in 0..n_obs {
                if rng.gen_bool(density.clamp(0.0, 1.0)) {
                    entries.push((i, j, StandardNormal.sample(&mut rng)));
                }
            }
        }
        let w_true: Vec<f64> = (0..n_features)
            .map(|_| if rng.gen_bool(0.1) { rng.gen_range(1.0..3.0) * if rng.gen() { 1.0 } else { -1.0 } } else { 0.0 })
            .collect();
        let mut y: Vec<f64> = (0..n_obs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.1 * z
            })
            .collect();
        for &(i, j, x) in &entries {
            y[j] += x * w_true[i];
        }
        LassoProblem { n_features, n_obs, y, entries }
    }
}

pub fn soft_threshold(c: f64, lambda: f64) -> f64 {
    c.signum() * (c.abs() - lambda).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Weight,
    Observation,
}

#[derive(Clone, Debug)]
pub struct LassoVertex {
    pub role: Role,
    /// `w_i` on weight vertices, cached `r_j` on observations.
    pub value: AtomicF64,
    /// `2 * sum_j X_ij^2` on weight vertices, zero on observations.
    pub a: f64,
}

pub type LassoGraph = DataGraph<LassoVertex, f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoConfig {
    pub lambda: f64,
    /// Changes at or below this do not propagate.
    pub epsilon: f64,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        LassoConfig { lambda, epsilon: 1e-6 }
    }
}

/// Graph at `w = 0`, so every residual starts at `y_j`.
pub fn build_graph(p: &LassoProblem) -> Result<LassoGraph, AlgoError> {
    p.validate()?;
    let mut g = DataGraph::new();
    for col in p.columns() {
        let a = 2.0 * col.iter().map(|(_, x)| x * x).sum::<f64>();
        g.add_vertex(LassoVertex { role: Role::Weight, value: AtomicF64::new(0.0), a })?;
    }
    for &y in &p.y {
        g.add_vertex(LassoVertex { role: Role::Observation, value: AtomicF64::new(y), a: 0.0 })?;
    }
    for (i, col) in p.columns().into_iter().enumerate() {
        for (j, x) in col {
            g.add_edge(VertexId::from(i), VertexId::from(p.n_features + j), x)?;
        }
    }
    g.freeze();
    Ok(g)
}

pub fn register(engine: &mut Engine<LassoVertex, f64>, epsilon: f64) -> FunctionId {
    engine.register("shooting", move |scope, ctx| update(scope, ctx, epsilon))
}

/// Observation vertices are ignored. A weight with an empty column is set
/// to zero without touching any residual.
pub fn update(scope: &mut ScopeData<'_, LassoVertex, f64>, ctx: &mut UpdateContext<'_>, epsilon: f64) -> UpdateResult {
    let me = scope.vertex();
    if me.role != Role::Weight {
        return Ok(());
    }
    if me.a == 0.0 {
        me.value.store(0.0);
        return Ok(());
    }
    let lambda = ctx.sdt().get_cloned::<f64>(LAMBDA_KEY)?;
    let w = me.value.load();
    let mut c = 0.0;
    for &e in scope.out_edges() {
        let x = *scope.edge(e);
        let r = scope.neighbor(scope.target(e)).value.load();
        c += 2.0 * x * (r + x * w);
    }
    let next = soft_threshold(c, lambda) / me.a;
    let delta = next - w;
    if delta.abs() <= epsilon {
        return Ok(());
    }
    for &e in scope.out_edges() {
        let x = *scope.edge(e);
        scope.neighbor(scope.target(e)).value.fetch_add(-x * delta);
    }
    me.value.store(next);

    let v = scope.center();
    let f = ctx.task().function;
    let topo = scope.topology();
    for &e in scope.out_edges() {
        for &back in topo.in_edges(topo.target(e)) {
            let k = topo.source(back);
            if k != v {
                ctx.schedule(k, f, delta.abs())?;
            }
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct LassoRun {
    pub weights: Vec<f64>,
    /// Cached residuals as left on the observation vertices.
    pub residuals: Vec<f64>,
    pub objective: f64,
    pub stats: EngineStats,
}

/// Runs shooting to quiescence from `w = 0` with one task per weight.
pub fn run(
    p: &LassoProblem,
    cfg: &LassoConfig,
    config: EngineConfig,
    spec: &SchedulerSpec,
) -> Result<LassoRun, AlgoError> {
    let mut g = build_graph(p)?;
    let sdt = SharedDataTable::new();
    sdt.set(LAMBDA_KEY, cfg.lambda);
    let mut engine = Engine::new(config);
    let f = register(&mut engine, cfg.epsilon);
    let seeds: Vec<Task> = (0..p.n_features).map(|i| Task::new(VertexId::from(i), f)).collect();
    let stats = engine.run(&mut g, &sdt, spec, &seeds)?;
    let values: Vec<f64> = g.vertex_payloads().map(|v| v.value.load()).collect();
    let weights = values[..p.n_features].to_vec();
    let residuals = values[p.n_features..].to_vec();
    let objective = p.objective(&weights, cfg.lambda);
    Ok(LassoRun { weights, residuals, objective, stats })
}

/// Default engine settings for shooting: full consistency.
pub fn engine_config(workers: usize) -> EngineConfig {
    EngineConfig::new(workers, ConsistencyModel::Full)
}

/// Sequential cyclic coordinate descent from `w = 0` until a sweep moves
/// no coordinate by more than `tol`.
pub fn coordinate_descent(p: &LassoProblem, lambda: f64, tol: f64, max_sweeps: usize) -> Vec<f64> {
    let cols = p.columns();
    let mut w = vec![0.0; p.n_features];
    let mut r = p.y.clone();
    for _ in 0..max_sweeps {
        let mut moved: f64 = 0.0;
        for (i, col) in cols.iter().enumerate() {
            let a = 2.0 * col.iter().map(|(_, x)| x * x).sum::<f64>();
            if a == 0.0 {
                continue;
            }
            let c: f64 = col.iter().map(|&(j, x)| 2.0 * x * (r[j] + x * w[i])).sum();
            let next = soft_threshold(c, lambda) / a;
            let delta = next - w[i];
            for &(j, x) in col {
                r[j] -= x * delta;
            }
            w[i] = next;
            moved = moved.max(delta.abs());
        }
        if moved <= tol {
            break;
        }
    }
    w
}

/// Worst optimality-condition violations at `w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kkt {
    /// Max over `w_i != 0` of `|dL/dw_i + lambda sign(w_i)| / a_i`.
    pub nonzero: f64,
    /// Max over `w_i = 0` of `|c_i| - lambda` (at most zero when optimal).
    pub zero: f64,
}

pub fn kkt(p: &LassoProblem, w: &[f64], lambda: f64) -> Kkt {
    let r = p.residuals(w);
    let mut out = Kkt { nonzero: 0.0, zero: f64::NEG_INFINITY };
    for (i, col) in p.columns().iter().enumerate() {
        let a = 2.0 * col.iter().map(|(_, x)| x * x).sum::<f64>();
        // dL/dw_i of the smooth part
        let grad: f64 = col.iter().map(|&(j, x)| -2.0 * x * r[j]).sum();
        if w[i] != 0.0 {
            out.nonzero = out.nonzero.max((grad + lambda * w[i].signum()).abs() / a);
        } else {
            // c_i = a_i w_i - grad with w_i = 0
            out.zero = out.zero.max(grad.abs() - lambda);
        }
    }
    out
}

pub fn support(w: &[f64]) -> Vec<usize> {
    w.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect()
}
