//! Schedulers: the dynamic task queues, the static sweep schedules, and the
//! set scheduler with its compiled execution plan.
//!
//! Every scheduler tracks its *outstanding* work (pending plus in-flight
//! tasks). [`Pop::Empty`] is returned only when that count is zero, so an
//! in-flight update that is about to emit a task keeps the other workers
//! polling instead of exiting.

mod fifo;
mod plan;
mod priority;
mod sweep;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::VertexId;

pub use fifo::{FifoMode, FifoScheduler};
pub use plan::{compile_plan, ExecutionPlan, PlanError, PlanNode, SetScheduler, Stage};
pub use priority::PriorityScheduler;
pub use sweep::SweepScheduler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionId(pub u32);

impl FunctionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A (vertex, update function) pair. Two tasks with the same pair denote the
/// same unit of work; priority is ignored by the FIFO schedulers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub vertex: VertexId,
    pub function: FunctionId,
    pub priority: f64,
}

impl Task {
    pub fn new(vertex: VertexId, function: FunctionId) -> Self {
        Task { vertex, function, priority: 0.0 }
    }

    pub fn with_priority(vertex: VertexId, function: FunctionId, priority: f64) -> Self {
        Task { vertex, function, priority }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Synchronous,
    RoundRobin,
    FifoSingle,
    FifoMultiQueue,
    FifoPartitioned,
    PriorityStrict,
    PriorityApprox,
    Set,
    Splash,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Synchronous => "synchronous",
            SchedulerKind::RoundRobin => "round-robin",
            SchedulerKind::FifoSingle => "fifo",
            SchedulerKind::FifoMultiQueue => "multiqueue",
            SchedulerKind::FifoPartitioned => "partitioned",
            SchedulerKind::PriorityStrict => "priority",
            SchedulerKind::PriorityApprox => "approx-priority",
            SchedulerKind::Set => "set",
            SchedulerKind::Splash => "splash",
        }
    }

    /// Schedulers that accept tasks from update functions.
    pub fn is_dynamic(self) -> bool {
        !matches!(self, SchedulerKind::Synchronous | SchedulerKind::RoundRobin | SchedulerKind::Set)
    }

    /// Strict-order schedulers as opposed to the relaxed variants.
    pub fn is_strict(self) -> bool {
        matches!(self, SchedulerKind::FifoSingle | SchedulerKind::PriorityStrict)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = SchedulerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "synchronous" | "sync" => SchedulerKind::Synchronous,
            "round-robin" | "roundrobin" => SchedulerKind::RoundRobin,
            "fifo" | "fifo-single" => SchedulerKind::FifoSingle,
            "multiqueue" | "fifo-multiqueue" => SchedulerKind::FifoMultiQueue,
            "partitioned" | "fifo-partitioned" => SchedulerKind::FifoPartitioned,
            "priority" | "priority-strict" => SchedulerKind::PriorityStrict,
            "approx-priority" | "priority-approx" => SchedulerKind::PriorityApprox,
            "set" => SchedulerKind::Set,
            "splash" => SchedulerKind::Splash,
            other => return Err(SchedulerError::UnknownScheduler(other.to_string())),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("{0} scheduler does not accept dynamic tasks")]
    StaticScheduler(SchedulerKind),
    #[error("{0} scheduler is not supported")]
    Unsupported(SchedulerKind),
    #[error("unknown scheduler {0:?}")]
    UnknownScheduler(String),
    #[error("task refers to unregistered function {0:?}")]
    UnknownFunction(FunctionId),
    #[error("task refers to unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("task priority must not be NaN")]
    NanPriority,
    #[error("{0} scheduler needs a parameter: {1}")]
    MissingParameter(SchedulerKind, &'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddOutcome {
    /// A new pending task was created.
    Inserted,
    /// An identical task was already pending; it was kept (FIFO) or its
    /// priority raised to the maximum of both (priority schedulers).
    Merged,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pop {
    Task(Task),
    /// Nothing poppable right now but work is outstanding: either a sweep
    /// barrier or in-flight tasks that may still create work.
    WaitForBarrier,
    /// No pending and no in-flight work.
    Empty,
}

pub trait Scheduler: Send + Sync {
    fn kind(&self) -> SchedulerKind;

    /// `origin` is the worker that creates the task (seed tasks use a
    /// round-robin worker index); relaxed schedulers use it for placement.
    fn add_task(&self, task: Task, origin: usize) -> Result<AddOutcome, SchedulerError>;

    fn pop_task(&self, worker: usize) -> Pop;

    /// Reports that the task last popped by `worker` has finished, including
    /// every task it emitted.
    fn complete(&self, worker: usize, task: &Task);

    /// Called by exactly one worker while all workers wait at a sweep
    /// barrier. Only the synchronous scheduler uses it.
    fn advance_sweep(&self) {}

    /// Pending plus in-flight tasks.
    fn outstanding(&self) -> usize;
}

/// Scheduler selection plus the parameters each kind needs.
#[derive(Clone, Debug)]
pub enum SchedulerSpec {
    Synchronous {
        sweeps: usize,
        function: FunctionId,
    },
    RoundRobin {
        sweeps: usize,
        function: FunctionId,
    },
    FifoSingle,
    FifoMultiQueue,
    FifoPartitioned,
    PriorityStrict,
    PriorityApprox,
    /// Compiled plan, dispatched `rounds` times back to back.
    Set {
        plan: std::sync::Arc<ExecutionPlan>,
        rounds: usize,
    },
}

impl SchedulerSpec {
    pub fn kind(&self) -> SchedulerKind {
        match self {
            SchedulerSpec::Synchronous { .. } => SchedulerKind::Synchronous,
            SchedulerSpec::RoundRobin { .. } => SchedulerKind::RoundRobin,
            SchedulerSpec::FifoSingle => SchedulerKind::FifoSingle,
            SchedulerSpec::FifoMultiQueue => SchedulerKind::FifoMultiQueue,
            SchedulerSpec::FifoPartitioned => SchedulerKind::FifoPartitioned,
            SchedulerSpec::PriorityStrict => SchedulerKind::PriorityStrict,
            SchedulerSpec::PriorityApprox => SchedulerKind::PriorityApprox,
            SchedulerSpec::Set { .. } => SchedulerKind::Set,
        }
    }

    /// Dynamic kinds by name; static kinds need their parameters and are
    /// built with the enum variants directly.
    pub fn dynamic(kind: SchedulerKind) -> Result<Self, SchedulerError> {
        Ok(match kind {
            SchedulerKind::FifoSingle => SchedulerSpec::FifoSingle,
            SchedulerKind::FifoMultiQueue => SchedulerSpec::FifoMultiQueue,
            SchedulerKind::FifoPartitioned => SchedulerSpec::FifoPartitioned,
            SchedulerKind::PriorityStrict => SchedulerSpec::PriorityStrict,
            SchedulerKind::PriorityApprox => SchedulerSpec::PriorityApprox,
            SchedulerKind::Splash => return Err(SchedulerError::Unsupported(kind)),
            SchedulerKind::Synchronous | SchedulerKind::RoundRobin => {
                return Err(SchedulerError::MissingParameter(kind, "sweeps and function"))
            }
            SchedulerKind::Set => return Err(SchedulerError::MissingParameter(kind, "plan")),
        })
    }

    pub fn build(&self, n_vertices: usize, n_functions: usize, n_workers: usize) -> Box<dyn Scheduler> {
        let n_workers = n_workers.max(1);
        match self {
            SchedulerSpec::Synchronous { sweeps, function } => {
                Box::new(SweepScheduler::synchronous(n_vertices, *sweeps, *function))
            }
            SchedulerSpec::RoundRobin { sweeps, function } => {
                Box::new(SweepScheduler::round_robin(n_vertices, *sweeps, *function))
            }
            SchedulerSpec::FifoSingle => {
                Box::new(FifoScheduler::new(FifoMode::Single, n_vertices, n_functions, n_workers))
            }
            SchedulerSpec::FifoMultiQueue => {
                Box::new(FifoScheduler::new(FifoMode::MultiQueue, n_vertices, n_functions, n_workers))
            }
            SchedulerSpec::FifoPartitioned => {
                Box::new(FifoScheduler::new(FifoMode::Partitioned, n_vertices, n_functions, n_workers))
            }
            SchedulerSpec::PriorityStrict => Box::new(PriorityScheduler::new(true, n_vertices, n_functions, n_workers)),
            SchedulerSpec::PriorityApprox => {
                Box::new(PriorityScheduler::new(false, n_vertices, n_functions, n_workers))
            }
            SchedulerSpec::Set { plan, rounds } => Box::new(SetScheduler::new(plan.clone(), *rounds, n_workers)),
        }
    }
}

/// Shape shared by the dynamic schedulers: validates tasks against the
/// graph size and registered functions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TaskSpace {
    n_vertices: usize,
    n_functions: usize,
}

impl TaskSpace {
    pub(crate) fn new(n_vertices: usize, n_functions: usize) -> Self {
        TaskSpace { n_vertices, n_functions }
    }

    pub(crate) fn slots(&self) -> usize {
        self.n_vertices * self.n_functions
    }

    pub(crate) fn slot(&self, task: &Task) -> Result<usize, SchedulerError> {
        if task.vertex.index() >= self.n_vertices {
            return Err(SchedulerError::UnknownVertex(task.vertex));
        }
        if task.function.index() >= self.n_functions {
            return Err(SchedulerError::UnknownFunction(task.function));
        }
        if task.priority.is_nan() {
            return Err(SchedulerError::NanPriority);
        }
        Ok(task.vertex.index() * self.n_functions + task.function.index())
    }
}

pub(crate) fn new_flags(n: usize) -> Vec<AtomicBool> {
    (0..n).map(|_| AtomicBool::new(false)).collect()
}

/// Sentinel for "not pending" in a priority slot.
pub(crate) const NOT_PENDING: u64 = u64::MAX;

pub(crate) fn new_priorities(n: usize) -> Vec<AtomicU64> {
    (0..n).map(|_| AtomicU64::new(NOT_PENDING)).collect()
}

/// Cheap per-call victim selection for work stealing.
pub(crate) fn victim_start(worker: usize, n: usize) -> usize {
    static COUNTER: AtomicU64 = AtomicU64::new(0x9E37_79B9_7F4A_7C15);
    let mut x = COUNTER.fetch_add(0x9E37_79B9_7F4A_7C15, Ordering::Relaxed) ^ worker as u64;
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    (x % n as u64) as usize
}
