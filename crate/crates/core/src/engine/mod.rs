//! Parallel execution of update functions under a scheduler and a
//! consistency model, plus the sync mechanism and termination checks.

mod scope;
mod sync;

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Barrier, Condvar};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{ConsistencyModel, ExecutionTrace, LockTable, TraceRecord};
use crate::graph::{DataGraph, GraphError, Payload, VertexId};
use crate::scheduling::{FunctionId, Pop, Scheduler, SchedulerError, SchedulerKind, SchedulerSpec, Task};
use crate::sdt::{SdtView, SharedDataTable};

pub use scope::ScopeData;
pub use sync::SyncSpec;

use scope::Snapshot;
use sync::ErasedSync;

pub type UpdateError = Box<dyn StdError + Send + Sync>;
pub type UpdateResult = Result<(), UpdateError>;

type UpdateFn<V, E> = dyn Fn(&mut ScopeData<'_, V, E>, &mut UpdateContext<'_>) -> UpdateResult + Send + Sync;
pub type TerminationFn = dyn Fn(&SdtView<'_>) -> bool + Send + Sync;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine needs at least one worker")]
    ZeroWorkers,
    #[error("function {0:?} is not registered")]
    UnknownFunction(FunctionId),
    #[error("no sync registered under key {0:?}")]
    UnknownSyncKey(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("update {function:?} on {vertex} failed: {message}")]
    UpdateFailed { vertex: VertexId, function: FunctionId, message: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EngineConfig {
    pub workers: usize,
    pub consistency: ConsistencyModel,
    pub seed: u64,
    /// Termination functions are evaluated once per this many completed
    /// updates on each worker.
    pub termination_check_period: u64,
    pub record_trace: bool,
    /// Hard cap on applied updates.
    pub max_updates: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 1,
            consistency: ConsistencyModel::Edge,
            seed: 0,
            termination_check_period: 256,
            record_trace: false,
            max_updates: None,
        }
    }
}

impl EngineConfig {
    pub fn new(workers: usize, consistency: ConsistencyModel) -> Self {
        EngineConfig { workers, consistency, ..Default::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub fn with_max_updates(mut self, max: u64) -> Self {
        self.max_updates = Some(max);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    /// No pending and no in-flight tasks.
    Quiescent,
    TerminationFunction,
    UpdateLimit,
}

#[derive(Debug, Clone)]
pub struct EngineStats {
    pub updates_applied: u64,
    pub wall_time: Duration,
    pub per_worker: Vec<u64>,
    pub trace: Option<ExecutionTrace>,
    /// Tasks emitted towards a scheduler that does not take dynamic tasks.
    pub dropped_tasks: u64,
    pub sync_runs: BTreeMap<String, u64>,
    pub reason: TerminationReason,
}

/// Task emitter, SDT view, and randomness handed to an update function.
pub struct UpdateContext<'a> {
    worker: usize,
    task: Task,
    vertex_updates: u64,
    seed: u64,
    scheduler: &'a dyn Scheduler,
    sdt: SdtView<'a>,
    rng: &'a mut ChaCha8Rng,
    dropped: &'a mut u64,
    sync_keys: &'a [String],
    requests: &'a SyncRequests,
}

impl<'a> UpdateContext<'a> {
    pub fn worker(&self) -> usize {
        self.worker
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn sdt(&self) -> SdtView<'a> {
        self.sdt
    }

    /// Schedules a task. On static schedulers the task is dropped and
    /// counted in [`EngineStats::dropped_tasks`].
    pub fn add_task(&mut self, task: Task) -> Result<(), SchedulerError> {
        match self.scheduler.add_task(task, self.worker) {
            Ok(_) => Ok(()),
            Err(SchedulerError::StaticScheduler(_)) => {
                *self.dropped += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    pub fn schedule(&mut self, vertex: VertexId, function: FunctionId, priority: f64) -> Result<(), SchedulerError> {
        self.add_task(Task::with_priority(vertex, function, priority))
    }

    /// The worker's generator, seeded from (engine seed, worker id).
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    /// How many updates ran on this vertex before this one.
    pub fn vertex_update_count(&self) -> u64 {
        self.vertex_updates
    }

    /// Generator seeded from (engine seed, vertex, vertex update count), so
    /// its draws do not depend on which worker runs the update.
    pub fn update_rng(&self) -> ChaCha8Rng {
        let mut x = mix(self.seed ^ mix(self.task.vertex.0 as u64 + 1));
        x = mix(x ^ self.vertex_updates.wrapping_mul(0xA24B_AED4_963E_E407));
        ChaCha8Rng::seed_from_u64(x)
    }

    /// Asks the background sync agent to run the sync for `key` soon.
    pub fn request_sync(&self, key: &str) -> Result<(), EngineError> {
        if !self.sync_keys.iter().any(|k| k == key) {
            return Err(EngineError::UnknownSyncKey(key.to_string()));
        }
        self.requests.push(key);
        Ok(())
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Default)]
struct SyncRequests {
    queue: std::sync::Mutex<(Vec<String>, bool)>,
    wake: Condvar,
}

impl SyncRequests {
    fn push(&self, key: &str) {
        let mut q = self.queue.lock().unwrap();
        if !q.0.iter().any(|k| k == key) {
            q.0.push(key.to_string());
        }
        self.wake.notify_all();
    }

    fn shutdown(&self) {
        self.queue.lock().unwrap().1 = true;
        self.wake.notify_all();
    }
}

/// Check termination functions: true iff any returns true.
pub fn check_termination(terms: &[Box<TerminationFn>], sdt: &SharedDataTable) -> bool {
    let view = sdt.view();
    terms.iter().any(|t| t(&view))
}

pub struct Engine<V, E> {
    config: EngineConfig,
    functions: Vec<(String, Box<UpdateFn<V, E>>)>,
    syncs: Vec<Box<dyn ErasedSync<V, E>>>,
    terminations: Vec<Box<TerminationFn>>,
}

struct Shared<'a, V, E> {
    graph: &'a DataGraph<V, E>,
    sdt: &'a SharedDataTable,
    sched: &'a dyn Scheduler,
    locks: &'a LockTable,
    snapshot: Option<&'a Snapshot<V, E>>,
    barrier: &'a Barrier,
    stop: AtomicBool,
    reason: Mutex<Option<TerminationReason>>,
    failure: Mutex<Option<EngineError>>,
    applied: AtomicU64,
    tick: AtomicU64,
    vertex_counts: Vec<AtomicU64>,
    requests: SyncRequests,
    sync_keys: Vec<String>,
}

impl<V, E> Shared<'_, V, E> {
    fn halt(&self, reason: TerminationReason) {
        let mut r = self.reason.lock();
        if r.is_none() {
            *r = Some(reason);
        }
        self.stop.store(true, Ordering::SeqCst);
    }

    fn fail(&self, err: EngineError) {
        let mut f = self.failure.lock();
        if f.is_none() {
            *f = Some(err);
        }
        self.stop.store(true, Ordering::SeqCst);
    }
}

impl<V: Payload, E: Payload> Engine<V, E> {
    pub fn new(config: EngineConfig) -> Self {
        Engine { config, functions: Vec::new(), syncs: Vec::new(), terminations: Vec::new() }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut EngineConfig {
        &mut self.config
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        f: impl Fn(&mut ScopeData<'_, V, E>, &mut UpdateContext<'_>) -> UpdateResult + Send + Sync + 'static,
    ) -> FunctionId {
        self.functions.push((name.into(), Box::new(f)));
        FunctionId(self.functions.len() as u32 - 1)
    }

    pub fn function_name(&self, f: FunctionId) -> Option<&str> {
        self.functions.get(f.index()).map(|(n, _)| n.as_str())
    }

    pub fn num_functions(&self) -> usize {
        self.functions.len()
    }

    /// Registers a sync; a later registration under the same key replaces
    /// the earlier one.
    pub fn add_sync<A, T>(&mut self, spec: SyncSpec<V, A, T>)
    where
        A: Clone + Send + Sync + 'static,
        T: std::any::Any + Send + Sync,
    {
        self.syncs.retain(|s| s.key() != spec.key());
        self.syncs.push(Box::new(spec));
    }

    pub fn add_termination(&mut self, f: impl Fn(&SdtView<'_>) -> bool + Send + Sync + 'static) {
        self.terminations.push(Box::new(f));
    }

    pub fn check_termination(&self, sdt: &SharedDataTable) -> bool {
        check_termination(&self.terminations, sdt)
    }

    /// Runs the sync for `key` now, on a graph that no engine is using.
    /// With a merge function the fold is split over `workers` chunks.
    pub fn run_sync_now(&self, graph: &DataGraph<V, E>, sdt: &SharedDataTable, key: &str) -> Result<(), EngineError> {
        let s = self.find_sync(key)?;
        s.run(graph, None, sdt, self.config.workers.max(1));
        Ok(())
    }

    fn find_sync(&self, key: &str) -> Result<&dyn ErasedSync<V, E>, EngineError> {
        self.syncs
            .iter()
            .find(|s| s.key() == key)
            .map(|s| s.as_ref())
            .ok_or_else(|| EngineError::UnknownSyncKey(key.to_string()))
    }

    fn validate(&self, spec: &SchedulerSpec, seeds: &[Task]) -> Result<(), EngineError> {
        if self.config.workers == 0 {
            return Err(EngineError::ZeroWorkers);
        }
        let known = |f: FunctionId| {
            if f.index() < self.functions.len() {
                Ok(())
            } else {
                Err(EngineError::UnknownFunction(f))
            }
        };
        for t in seeds {
            known(t.function)?;
        }
        match spec {
            SchedulerSpec::Synchronous { function, .. } | SchedulerSpec::RoundRobin { function, .. } => {
                known(*function)?
            }
            SchedulerSpec::Set { plan, .. } => {
                for n in plan.nodes() {
                    known(n.function)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Executes until the scheduler is exhausted, a termination function
    /// fires, or the update limit is reached. Periodic syncs run in the
    /// background and are flushed once before returning.
    ///
    /// Seed tasks are ignored by static schedulers, which generate their own.
    pub fn run(
        &self,
        graph: &mut DataGraph<V, E>,
        sdt: &SharedDataTable,
        spec: &SchedulerSpec,
        seeds: &[Task],
    ) -> Result<EngineStats, EngineError> {
        self.validate(spec, seeds)?;
        let graph: &DataGraph<V, E> = graph;
        let topo = graph.topology()?;
        let workers = self.config.workers;
        let sched = spec.build(graph.num_vertices(), self.functions.len(), workers);
        if let SchedulerSpec::Set { plan, .. } = spec {
            if plan.nodes().iter().any(|n| n.vertex.index() >= graph.num_vertices()) {
                return Err(
                    GraphError::UnknownVertex(plan.nodes().iter().map(|n| n.vertex).max().expect("non-empty")).into()
                );
            }
        }
        if sched.kind().is_dynamic() {
            for (i, t) in seeds.iter().enumerate() {
                sched.add_task(*t, i % workers)?;
            }
        }

        let locks = LockTable::new(graph.num_vertices());
        let snapshot = (sched.kind() == SchedulerKind::Synchronous).then(|| Snapshot::of(graph));
        let barrier = Barrier::new(workers);
        let shared = Shared {
            graph,
            sdt,
            sched: sched.as_ref(),
            locks: &locks,
            snapshot: snapshot.as_ref(),
            barrier: &barrier,
            stop: AtomicBool::new(false),
            reason: Mutex::new(None),
            failure: Mutex::new(None),
            applied: AtomicU64::new(0),
            tick: AtomicU64::new(0),
            vertex_counts: (0..graph.num_vertices()).map(|_| AtomicU64::new(0)).collect(),
            requests: SyncRequests::default(),
            sync_keys: self.syncs.iter().map(|s| s.key().to_string()).collect(),
        };

        let started = Instant::now();
        let mut sync_runs: BTreeMap<String, u64> = BTreeMap::new();
        let outcomes: Vec<WorkerOutcome> = std::thread::scope(|s| {
            let agent = (!self.syncs.is_empty()).then(|| s.spawn(|| self.sync_agent(&shared)));
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let shared = &shared;
                    s.spawn(move || self.worker_loop(w, shared, topo))
                })
                .collect();
            let outcomes =
                handles.into_iter().map(|h| h.join().expect("worker thread panicked outside an update")).collect();
            shared.requests.shutdown();
            if let Some(a) = agent {
                sync_runs = a.join().expect("sync agent panicked");
            }
            outcomes
        });
        let wall_time = started.elapsed();

        if let Some(err) = shared.failure.lock().take() {
            return Err(err);
        }
        let reason = shared.reason.lock().unwrap_or(TerminationReason::Quiescent);
        let trace = self.config.record_trace.then(|| {
            let mut records: Vec<TraceRecord> = outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect();
            records.sort_by_key(|r| r.start);
            for (i, r) in records.iter_mut().enumerate() {
                r.task = i as u64;
            }
            ExecutionTrace { records }
        });
        let per_worker: Vec<u64> = outcomes.iter().map(|o| o.updates).collect();
        Ok(EngineStats {
            updates_applied: per_worker.iter().sum(),
            wall_time,
            per_worker,
            trace,
            dropped_tasks: outcomes.iter().map(|o| o.dropped).sum(),
            sync_runs,
            reason,
        })
    }

    fn worker_loop(&self, w: usize, sh: &Shared<'_, V, E>, topo: &crate::graph::Topology) -> WorkerOutcome {
        let synchronous = sh.sched.kind() == SchedulerKind::Synchronous;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(w as u64);
        let mut out = WorkerOutcome::default();
        let mut idle_spins = 0u32;
        let period = self.config.termination_check_period.max(1);
        loop {
            // synchronous workers must keep meeting at the barrier, so they
            // stop there instead of here
            if !synchronous && sh.stop.load(Ordering::SeqCst) {
                break;
            }
            match sh.sched.pop_task(w) {
                Pop::Task(task) => {
                    idle_spins = 0;
                    if synchronous && sh.stop.load(Ordering::SeqCst) {
                        sh.sched.complete(w, &task);
                        continue;
                    }
                    self.execute(w, sh, topo, task, &mut rng, &mut out);
                    sh.sched.complete(w, &task);
                    out.updates += 1;
                    let total = sh.applied.fetch_add(1, Ordering::SeqCst) + 1;
                    if self.config.max_updates.is_some_and(|m| total >= m) {
                        sh.halt(TerminationReason::UpdateLimit);
                    }
                    if !self.terminations.is_empty()
                        && out.updates % period == 0
                        && check_termination(&self.terminations, sh.sdt)
                    {
                        sh.halt(TerminationReason::TerminationFunction);
                    }
                }
                Pop::WaitForBarrier if synchronous => {
                    if sh.barrier.wait().is_leader() {
                        if let Some(snap) = sh.snapshot {
                            // SAFETY: every other worker is parked at the barrier.
                            unsafe { snap.refresh(sh.graph) };
                        }
                        sh.sched.advance_sweep();
                        if !self.terminations.is_empty() && check_termination(&self.terminations, sh.sdt) {
                            sh.halt(TerminationReason::TerminationFunction);
                        }
                    }
                    sh.barrier.wait();
                    if sh.stop.load(Ordering::SeqCst) {
                        break;
                    }
                }
                Pop::WaitForBarrier => {
                    idle_spins += 1;
                    if idle_spins < 64 {
                        std::thread::yield_now();
                    } else {
                        std::thread::sleep(Duration::from_micros(50));
                    }
                }
                Pop::Empty => break,
            }
        }
        out
    }

    fn execute(
        &self,
        w: usize,
        sh: &Shared<'_, V, E>,
        topo: &crate::graph::Topology,
        task: Task,
        rng: &mut ChaCha8Rng,
        out: &mut WorkerOutcome,
    ) {
        let model = self.config.consistency;
        let guard = sh.locks.acquire(topo, model, task.vertex);
        let start = sh.tick.fetch_add(1, Ordering::SeqCst);
        // the center is held in every model, so this count is race-free
        let vertex_updates = sh.vertex_counts[task.vertex.index()].fetch_add(1, Ordering::Relaxed);
        let mut scope = ScopeData::new(sh.graph, topo, sh.snapshot, task.vertex, model);
        let mut ctx = UpdateContext {
            worker: w,
            task,
            vertex_updates,
            seed: self.config.seed,
            scheduler: sh.sched,
            sdt: sh.sdt.view(),
            rng,
            dropped: &mut out.dropped,
            sync_keys: &sh.sync_keys,
            requests: &sh.requests,
        };
        let f = &self.functions[task.function.index()].1;
        let result = catch_unwind(AssertUnwindSafe(|| f(&mut scope, &mut ctx)));
        let end = sh.tick.fetch_add(1, Ordering::SeqCst);
        if self.config.record_trace {
            out.records.push(TraceRecord {
                task: 0,
                vertex: task.vertex,
                function: task.function.0,
                worker: w as u32,
                start,
                end: Some(end),
                locks: guard.locks().to_vec(),
            });
        }
        drop(guard);
        let message = match result {
            Ok(Ok(())) => return,
            Ok(Err(e)) => e.to_string(),
            Err(panic) => panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "update panicked".to_string()),
        };
        sh.fail(EngineError::UpdateFailed { vertex: task.vertex, function: task.function, message });
    }

    /// Background agent: periodic syncs on their schedule, requested syncs
    /// as they arrive, and one flush of every periodic sync at shutdown.
    fn sync_agent(&self, sh: &Shared<'_, V, E>) -> BTreeMap<String, u64> {
        let mut runs: BTreeMap<String, u64> = BTreeMap::new();
        let start = Instant::now();
        let mut due: Vec<Option<Instant>> = self.syncs.iter().map(|s| s.period().map(|p| start + p)).collect();
        let chunks = self.config.workers.max(1);
        let run_one = |i: usize, runs: &mut BTreeMap<String, u64>| {
            let s = &self.syncs[i];
            s.run(sh.graph, Some(sh.locks), sh.sdt, chunks);
            *runs.entry(s.key().to_string()).or_default() += 1;
            if !self.terminations.is_empty() && check_termination(&self.terminations, sh.sdt) {
                sh.halt(TerminationReason::TerminationFunction);
            }
        };
        loop {
            let (requested, shutting_down) = {
                let mut q = sh.requests.queue.lock().unwrap();
                loop {
                    let now = Instant::now();
                    let next = due.iter().flatten().min().copied();
                    if !q.0.is_empty() || q.1 || next.is_some_and(|t| t <= now) {
                        break;
                    }
                    let wait = next.map(|t| t - now).unwrap_or(Duration::from_secs(3600));
                    q = sh.requests.wake.wait_timeout(q, wait).unwrap().0;
                }
                (std::mem::take(&mut q.0), q.1)
            };
            if shutting_down {
                for (i, s) in self.syncs.iter().enumerate() {
                    if s.period().is_some() || requested.iter().any(|k| k == s.key()) {
                        run_one(i, &mut runs);
                    }
                }
                return runs;
            }
            for key in &requested {
                if let Some(i) = self.syncs.iter().position(|s| s.key() == key) {
                    run_one(i, &mut runs);
                }
            }
            let now = Instant::now();
            for (i, slot) in due.iter_mut().enumerate() {
                if let (Some(t), Some(p)) = (*slot, self.syncs[i].period()) {
                    if t <= now {
                        run_one(i, &mut runs);
                        *slot = Some(Instant::now() + p);
                    }
                }
            }
        }
    }
}

#[derive(Default)]
struct WorkerOutcome {
    updates: u64,
    dropped: u64,
    records: Vec<TraceRecord>,
}
