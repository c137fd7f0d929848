//! Runs one algorithm over a problem at several worker counts.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{DefaultHasher, Hasher};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use graphlab_algorithms::coem::{self, CoemProblem};
use graphlab_algorithms::gibbs::{self, GibbsConfig};
use graphlab_algorithms::lasso::{self, LassoConfig, LassoProblem};
use graphlab_algorithms::{bp, coloring, learn, AlgoError, PairwiseMrf};
use graphlab_core::consistency::{check_sequential_consistency, ExecutionTrace, TraceError, Verdict};
use graphlab_core::scheduling::{compile_plan, SchedulerError};
use graphlab_core::{
    ConsistencyModel, Engine, EngineConfig, EngineStats, FunctionId, SchedulerKind, SchedulerSpec, SharedDataTable,
    TerminationReason, Topology, VertexId,
};
use thiserror::Error;

use crate::formats::{Format, FormatError, Problem};
use crate::report::{BenchRecord, BenchReport};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Format { path: String, source: FormatError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{algo} needs a {needed} problem, got {got}")]
    WrongProblem { algo: Algo, needed: &'static str, got: &'static str },
    #[error("{0}")]
    Usage(String),
}

macro_rules! via_algo {
    ($($t:ty),*) => {$(
        impl From<$t> for BenchError {
            fn from(e: $t) -> Self {
                BenchError::Algo(e.into())
            }
        }
    )*};
}

via_algo!(graphlab_core::EngineError, graphlab_core::GraphError, graphlab_core::scheduling::PlanError);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Bp,
    Learn,
    Coloring,
    Gibbs,
    Coem,
    Lasso,
}

impl Algo {
    pub const ALL: [Algo; 6] = [Algo::Bp, Algo::Learn, Algo::Coloring, Algo::Gibbs, Algo::Coem, Algo::Lasso];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Bp => "bp",
            Algo::Learn => "learn",
            Algo::Coloring => "coloring",
            Algo::Gibbs => "gibbs",
            Algo::Coem => "coem",
            Algo::Lasso => "lasso",
        }
    }

    pub fn default_model(self) -> ConsistencyModel {
        match self {
            Algo::Gibbs => ConsistencyModel::Vertex,
            Algo::Lasso => ConsistencyModel::Full,
            _ => ConsistencyModel::Edge,
        }
    }

    pub fn default_scheduler(self) -> SchedulerKind {
        match self {
            Algo::Bp | Algo::Learn => SchedulerKind::PriorityApprox,
            Algo::Gibbs => SchedulerKind::Set,
            _ => SchedulerKind::FifoMultiQueue,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        Algo::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            BenchError::Usage(format!("unknown algorithm {s:?} (bp, learn, coloring, gibbs, coem, lasso)"))
        })
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub algo: Algo,
    pub workers: Vec<usize>,
    pub scheduler: Option<SchedulerKind>,
    pub consistency: Option<ConsistencyModel>,
    pub seed: u64,
    /// BP bound, CoEM threshold or shooting epsilon.
    pub tol: Option<f64>,
    /// Counted Gibbs sweeps.
    pub samples: u64,
    /// Sweeps for the synchronous and round-robin schedulers.
    pub sweeps: usize,
    /// Learning: gradient steps, or restarts with a background sync.
    pub steps: usize,
    /// Run the learning sync in the background at this period.
    pub sync_period: Option<Duration>,
    /// Lasso penalty.
    pub lambda: f64,
    /// Keep the trace of the run with the most workers.
    pub record_trace: bool,
}

impl BenchConfig {
    pub fn new(algo: Algo) -> Self {
        BenchConfig {
            algo,
            workers: vec![1],
            scheduler: None,
            consistency: None,
            seed: 0,
            tol: None,
            samples: 10_000,
            sweeps: 10,
            steps: 10,
            sync_period: None,
            lambda: 0.1,
            record_trace: false,
        }
    }

    pub fn model(&self) -> ConsistencyModel {
        self.consistency.unwrap_or(self.algo.default_model())
    }

    pub fn scheduler(&self) -> SchedulerKind {
        self.scheduler.unwrap_or(self.algo.default_scheduler())
    }
}

#[derive(Debug)]
pub struct BenchOutput {
    pub report: BenchReport,
    pub trace: Option<ExecutionTrace>,
}

pub fn load_problem(path: &Path) -> Result<Problem, BenchError> {
    let text = std::fs::read_to_string(path)?;
    Problem::parse(&text).map_err(|source| BenchError::Format { path: path.display().to_string(), source })
}

/// One record per entry of `cfg.workers`, in order.
pub fn run_bench(problem: &Problem, cfg: &BenchConfig) -> Result<BenchOutput, BenchError> {
    if cfg.workers.is_empty() || cfg.workers.contains(&0) {
        return Err(BenchError::Usage("worker counts must be positive".into()));
    }
    let traced = cfg.workers.iter().copied().max().filter(|_| cfg.record_trace);
    let mut report = BenchReport::default();
    let mut trace = None;
    for &w in &cfg.workers {
        let want = traced == Some(w) && trace.is_none();
        let (record, t) = run_one(problem, cfg, w, want)?;
        if want {
            trace = t;
        }
        report.records.push(record);
    }
    Ok(BenchOutput { report, trace })
}

/// Checks a recorded trace against the structure `algo` builds for
/// `problem`.
pub fn check_trace(
    problem: &Problem,
    algo: Algo,
    model: ConsistencyModel,
    trace: &ExecutionTrace,
) -> Result<Verdict, BenchError> {
    let topo = topology_for(problem, algo)?;
    Ok(check_sequential_consistency(trace, model, &topo)?)
}

pub fn topology_for(problem: &Problem, algo: Algo) -> Result<Topology, BenchError> {
    Ok(match algo {
        Algo::Bp | Algo::Learn => bp::build_graph(as_mrf(problem, algo)?)?.topology()?.clone(),
        Algo::Gibbs => gibbs::build_graph(as_mrf(problem, algo)?, 0)?.topology()?.clone(),
        Algo::Coloring => color_graph(problem)?.topology()?.clone(),
        Algo::Coem => coem::build_graph(as_coem(problem, algo)?)?.topology()?.clone(),
        Algo::Lasso => lasso::build_graph(as_lasso(problem, algo)?)?.topology()?.clone(),
    })
}

fn as_mrf(p: &Problem, algo: Algo) -> Result<&PairwiseMrf, BenchError> {
    match p {
        Problem::Mrf(m) => Ok(m),
        other => Err(BenchError::WrongProblem { algo, needed: "mrf", got: other.format().tag() }),
    }
}

fn as_coem(p: &Problem, algo: Algo) -> Result<&CoemProblem, BenchError> {
    match p {
        Problem::Bipartite(c) => Ok(c),
        other => Err(BenchError::WrongProblem { algo, needed: "bipartite", got: other.format().tag() }),
    }
}

fn as_lasso(p: &Problem, algo: Algo) -> Result<&LassoProblem, BenchError> {
    match p {
        Problem::Lasso(l) => Ok(l),
        other => Err(BenchError::WrongProblem { algo, needed: "lasso", got: other.format().tag() }),
    }
}

/// Coloring works on the undirected structure of any problem.
fn color_graph(p: &Problem) -> Result<coloring::ColorGraph, BenchError> {
    let (n, pairs): (usize, Vec<(usize, usize)>) = match p {
        Problem::Mrf(m) => (m.num_vertices(), m.edges.iter().map(|e| (e.u, e.v)).collect()),
        Problem::Bipartite(c) => (c.n_vertices(), c.edges.iter().map(|&(a, b, _)| (a, c.n_np + b)).collect()),
        Problem::Lasso(l) => {
            (l.n_features + l.n_obs, l.entries.iter().map(|&(i, j, _)| (i, l.n_features + j)).collect())
        }
    };
    Ok(coloring::build_graph(n, &pairs)?)
}

fn scheduler_spec(kind: SchedulerKind, sweeps: usize, f: FunctionId) -> Result<SchedulerSpec, BenchError> {
    match kind {
        SchedulerKind::Synchronous => Ok(SchedulerSpec::Synchronous { sweeps, function: f }),
        SchedulerKind::RoundRobin => Ok(SchedulerSpec::RoundRobin { sweeps, function: f }),
        SchedulerKind::Set => Err(BenchError::Usage("the set scheduler is only available to gibbs".into())),
        k => Ok(SchedulerSpec::dynamic(k)?),
    }
}

/// Order-sensitive hash of the bit patterns of `values`.
pub fn digest(values: impl IntoIterator<Item = f64>) -> String {
    let mut h = DefaultHasher::new();
    for x in values {
        h.write_u64(x.to_bits());
    }
    format!("{:016x}", h.finish())
}

struct Outcome {
    stats: EngineStats,
    converged: bool,
    objective: Option<f64>,
    residual: Option<f64>,
    digest: String,
    extra: BTreeMap<String, f64>,
}

fn run_one(
    problem: &Problem,
    cfg: &BenchConfig,
    workers: usize,
    trace: bool,
) -> Result<(BenchRecord, Option<ExecutionTrace>), BenchError> {
    let model = cfg.model();
    let kind = cfg.scheduler();
    let config = EngineConfig::new(workers, model).with_seed(cfg.seed).with_trace(trace);
    let mut out = match cfg.algo {
        Algo::Bp => run_bp(as_mrf(problem, cfg.algo)?, cfg, config, kind)?,
        Algo::Learn => run_learn(as_mrf(problem, cfg.algo)?, cfg, config, kind)?,
        Algo::Coloring => run_coloring(problem, cfg, config, kind)?,
        Algo::Gibbs => run_gibbs(as_mrf(problem, cfg.algo)?, cfg, config, kind)?,
        Algo::Coem => run_coem(as_coem(problem, cfg.algo)?, cfg, config, kind)?,
        Algo::Lasso => run_lasso(as_lasso(problem, cfg.algo)?, cfg, config, kind)?,
    };
    out.extra.insert("dropped_tasks".into(), out.stats.dropped_tasks as f64);
    let record = BenchRecord {
        algorithm: cfg.algo.name().into(),
        scheduler: kind.name().into(),
        model: model.name().into(),
        workers,
        seed: cfg.seed,
        wall_time_s: out.stats.wall_time.as_secs_f64(),
        updates: out.stats.updates_applied,
        converged: out.converged,
        objective: out.objective,
        residual: out.residual,
        digest: out.digest,
        extra: out.extra,
    };
    Ok((record, out.stats.trace.take()))
}

fn run_bp(
    mrf: &PairwiseMrf,
    cfg: &BenchConfig,
    config: EngineConfig,
    kind: SchedulerKind,
) -> Result<Outcome, BenchError> {
    let bp_cfg = bp::BpConfig { bound: cfg.tol.unwrap_or(1e-5), ..bp::BpConfig::default() };
    let mut g = bp::build_graph(mrf)?;
    let mut engine = Engine::new(config);
    let f = bp::register(&mut engine, bp_cfg);
    let spec = scheduler_spec(kind, cfg.sweeps, f)?;
    let seeds = bp::seeds(&g, f);
    let stats = engine.run(&mut g, &SharedDataTable::new(), &spec, &seeds)?;
    let residual = bp::max_residual(&g, None)?;
    let digest =
        digest(bp::beliefs(&g).into_iter().flatten().chain(g.edge_ids().flat_map(|e| g.edge_data(e).message.clone())));
    Ok(Outcome {
        stats,
        converged: residual <= bp_cfg.bound,
        objective: None,
        residual: Some(residual),
        digest,
        extra: BTreeMap::new(),
    })
}

/// Learns the per-axis smoothing from the labels the node potentials
/// favor, which is all a problem file says about the data.
fn run_learn(
    mrf: &PairwiseMrf,
    cfg: &BenchConfig,
    config: EngineConfig,
    kind: SchedulerKind,
) -> Result<Outcome, BenchError> {
    let labels: Vec<usize> =
        mrf.node_potentials.iter().map(|p| (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0)).collect();
    let lcfg = learn::LearnConfig::new(mrf.num_vertices(), learn::target_statistics(mrf, &labels));
    let bp_cfg = bp::BpConfig { bound: cfg.tol.unwrap_or(1e-5), ..bp::BpConfig::default() };
    let mut g = bp::build_graph(mrf)?;
    let sdt = SharedDataTable::new();
    sdt.set(bp::LAMBDA_KEY, [1.0f64; 3]);
    let (mut engine, f) = learn::learning_engine(config, bp_cfg);
    let sync = learn::sync_spec(lcfg);
    engine.add_sync(match cfg.sync_period {
        Some(p) => sync.with_period(p),
        None => sync,
    });
    let spec = scheduler_spec(kind, cfg.sweeps, f)?;
    let seeds = bp::seeds(&g, f);
    let mut total: Option<EngineStats> = None;
    for _ in 0..cfg.steps.max(1) {
        let s = engine.run(&mut g, &sdt, &spec, &seeds)?;
        if cfg.sync_period.is_none() {
            engine.run_sync_now(&g, &sdt, bp::LAMBDA_KEY)?;
        }
        total = Some(match total {
            None => s,
            Some(mut t) => {
                t.updates_applied += s.updates_applied;
                t.wall_time += s.wall_time;
                t.dropped_tasks += s.dropped_tasks;
                t.reason = s.reason;
                t.trace = s.trace.or(t.trace);
                t
            }
        });
    }
    let stats = total.expect("at least one step");
    let lambda: [f64; 3] = sdt.get_cloned(bp::LAMBDA_KEY).map_err(|e| BenchError::Usage(e.to_string()))?;
    let mut extra = BTreeMap::new();
    for (a, l) in lambda.iter().enumerate() {
        extra.insert(format!("lambda_{a}"), *l);
    }
    Ok(Outcome {
        converged: stats.reason == TerminationReason::Quiescent,
        stats,
        objective: None,
        residual: Some(bp::max_residual(&g, Some(lambda))?),
        digest: digest(lambda.into_iter().chain(bp::beliefs(&g).into_iter().flatten())),
        extra,
    })
}

fn run_coloring(
    problem: &Problem,
    cfg: &BenchConfig,
    config: EngineConfig,
    kind: SchedulerKind,
) -> Result<Outcome, BenchError> {
    let mut g = color_graph(problem)?;
    let mut engine = Engine::new(config);
    let f = coloring::register(&mut engine);
    let spec = scheduler_spec(kind, cfg.sweeps, f)?;
    let seeds: Vec<_> = g.vertex_ids().map(|v| graphlab_core::Task::new(v, f)).collect();
    let stats = engine.run(&mut g, &SharedDataTable::new(), &spec, &seeds)?;
    let c = coloring::Coloring::from_colors(g.vertex_payloads().copied().collect());
    let proper = c.check(g.topology()?).is_ok();
    let mut extra = BTreeMap::new();
    extra.insert("colors".into(), f64::from(c.n_colors));
    Ok(Outcome {
        stats,
        converged: proper,
        objective: Some(f64::from(c.n_colors)),
        residual: None,
        digest: digest(c.colors.iter().map(|&x| f64::from(x))),
        extra,
    })
}

/// Colors sequentially in vertex order, then runs the chromatic sampler.
/// The marginal error is reported when the model is small enough to
/// enumerate.
fn run_gibbs(
    mrf: &PairwiseMrf,
    cfg: &BenchConfig,
    config: EngineConfig,
    kind: SchedulerKind,
) -> Result<Outcome, BenchError> {
    if kind != SchedulerKind::Set {
        return Err(BenchError::Usage(format!("gibbs runs on the set scheduler, not {kind}")));
    }
    let gcfg = GibbsConfig::new(cfg.samples, cfg.seed);
    let mut g = gibbs::build_graph(mrf, cfg.seed)?;
    let topo = g.topology()?;
    let c = coloring::sequential(topo, topo.vertices());
    let burn_in = gcfg.burn_in();
    let mut engine = Engine::new(config);
    let f = gibbs::register(&mut engine, burn_in);
    let plan = compile_plan(&c.stages(f), topo, ConsistencyModel::Edge)?;
    let rounds = usize::try_from(burn_in + gcfg.samples).map_err(|_| BenchError::Usage("too many samples".into()))?;
    let spec = SchedulerSpec::Set { plan: Arc::new(plan), rounds };
    let stats = engine.run(&mut g, &SharedDataTable::new(), &spec, &[])?;
    let marginals = gibbs::marginals(&g);
    let mut extra = BTreeMap::new();
    extra.insert("colors".into(), f64::from(c.n_colors));
    let small = mrf.cards.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k)).is_some_and(|s| s <= 1 << 22);
    if small {
        let exact = mrf.enumerate_marginals()?;
        extra.insert("marginal_error".into(), gibbs::max_error(&marginals, &exact));
    }
    Ok(Outcome {
        converged: stats.reason == TerminationReason::Quiescent,
        stats,
        objective: None,
        residual: None,
        digest: digest(marginals.into_iter().flatten()),
        extra,
    })
}

fn run_coem(
    p: &CoemProblem,
    cfg: &BenchConfig,
    config: EngineConfig,
    kind: SchedulerKind,
) -> Result<Outcome, BenchError> {
    let threshold = cfg.tol.unwrap_or(coem::THRESHOLD);
    let mut g = coem::build_graph(p)?;
    let mut engine = Engine::new(config);
    let f = coem::register(&mut engine, threshold);
    let spec = scheduler_spec(kind, cfg.sweeps, f)?;
    let seeds: Vec<_> = g.vertex_ids().map(|v| graphlab_core::Task::new(v, f)).collect();
    let stats = engine.run(&mut g, &SharedDataTable::new(), &spec, &seeds)?;
    let beliefs = coem::beliefs(&g);
    let residual = coem::extra_sweep_change(p, &beliefs);
    Ok(Outcome {
        stats,
        converged: residual <= threshold,
        objective: None,
        residual: Some(residual),
        digest: digest(beliefs.into_iter().flatten()),
        extra: BTreeMap::new(),
    })
}

fn run_lasso(
    p: &LassoProblem,
    cfg: &BenchConfig,
    config: EngineConfig,
    kind: SchedulerKind,
) -> Result<Outcome, BenchError> {
    let lcfg = LassoConfig { lambda: cfg.lambda, epsilon: cfg.tol.unwrap_or(LassoConfig::new(cfg.lambda).epsilon) };
    let mut g = lasso::build_graph(p)?;
    let sdt = SharedDataTable::new();
    sdt.set(lasso::LAMBDA_KEY, lcfg.lambda);
    let mut engine = Engine::new(config);
    let f = lasso::register(&mut engine, lcfg.epsilon);
    let seeds: Vec<_> = (0..p.n_features).map(|i| graphlab_core::Task::new(VertexId::from(i), f)).collect();
    let spec = scheduler_spec(kind, cfg.sweeps, f)?;
    let stats = engine.run(&mut g, &sdt, &spec, &seeds)?;
    let values: Vec<f64> = g.vertex_payloads().map(|v| v.value.load()).collect();
    let w = &values[..p.n_features];
    let k = lasso::kkt(p, w, lcfg.lambda);
    let mut extra = BTreeMap::new();
    extra.insert("nonzeros".into(), lasso::support(w).len() as f64);
    Ok(Outcome {
        converged: stats.reason == TerminationReason::Quiescent,
        stats,
        objective: Some(p.objective(w, lcfg.lambda)),
        residual: Some(k.nonzero.max(k.zero)),
        digest: digest(values.iter().copied()),
        extra,
    })
}

/// Problem format an algorithm reads.
pub fn format_for(algo: Algo) -> Option<Format> {
    match algo {
        Algo::Bp | Algo::Learn | Algo::Gibbs => Some(Format::Mrf),
        Algo::Coem => Some(Format::Bipartite),
        Algo::Lasso => Some(Format::Lasso),
        Algo::Coloring => None,
    }
}
