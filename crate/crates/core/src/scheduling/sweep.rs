use std::sync::atomic::{AtomicUsize, Ordering};

use super::{AddOutcome, FunctionId, Pop, Scheduler, SchedulerError, SchedulerKind, Task};
use crate::graph::VertexId;

/// Static schedule that applies one function to vertices 0..n-1, `sweeps`
/// times over.
///
/// Round-robin mode hands out sweep k+1 only after every task of sweep k has
/// completed. Synchronous mode instead returns [`Pop::WaitForBarrier`] at the
/// end of each sweep; the engine then gathers all workers at a barrier and
/// one of them calls [`Scheduler::advance_sweep`].
pub struct SweepScheduler {
    barrier: bool,
    n: usize,
    sweeps: usize,
    function: FunctionId,
    next: AtomicUsize,
    completed: AtomicUsize,
    sweep: AtomicUsize,
}

impl SweepScheduler {
    pub fn round_robin(n_vertices: usize, sweeps: usize, function: FunctionId) -> Self {
        Self::new(false, n_vertices, sweeps, function)
    }

    pub fn synchronous(n_vertices: usize, sweeps: usize, function: FunctionId) -> Self {
        Self::new(true, n_vertices, sweeps, function)
    }

    fn new(barrier: bool, n: usize, sweeps: usize, function: FunctionId) -> Self {
        SweepScheduler {
            barrier,
            n,
            sweeps,
            function,
            next: AtomicUsize::new(0),
            completed: AtomicUsize::new(0),
            sweep: AtomicUsize::new(0),
        }
    }

    fn total(&self) -> usize {
        self.n * self.sweeps
    }

    /// Index of the sweep the synchronous schedule is currently in.
    pub fn current_sweep(&self) -> usize {
        self.sweep.load(Ordering::SeqCst)
    }
}

impl Scheduler for SweepScheduler {
    fn kind(&self) -> SchedulerKind {
        if self.barrier {
            SchedulerKind::Synchronous
        } else {
            SchedulerKind::RoundRobin
        }
    }

    fn add_task(&self, _task: Task, _origin: usize) -> Result<AddOutcome, SchedulerError> {
        Err(SchedulerError::StaticScheduler(self.kind()))
    }

    fn pop_task(&self, _worker: usize) -> Pop {
        if self.barrier && self.sweep.load(Ordering::SeqCst) >= self.sweeps {
            return Pop::Empty;
        }
        loop {
            let i = self.next.load(Ordering::SeqCst);
            if self.barrier {
                let limit = (self.sweep.load(Ordering::SeqCst) + 1) * self.n;
                if i >= limit {
                    return Pop::WaitForBarrier;
                }
            } else {
                if i >= self.total() {
                    return if self.completed.load(Ordering::SeqCst) == self.total() {
                        Pop::Empty
                    } else {
                        Pop::WaitForBarrier
                    };
                }
                let k = i / self.n;
                if self.completed.load(Ordering::SeqCst) < k * self.n {
                    return Pop::WaitForBarrier;
                }
            }
            if self.next.compare_exchange(i, i + 1, Ordering::SeqCst, Ordering::SeqCst).is_ok() {
                return Pop::Task(Task::new(VertexId((i % self.n) as u32), self.function));
            }
        }
    }

    fn complete(&self, _worker: usize, _task: &Task) {
        self.completed.fetch_add(1, Ordering::SeqCst);
    }

    fn advance_sweep(&self) {
        if self.barrier {
            self.sweep.fetch_add(1, Ordering::SeqCst);
        }
    }

    fn outstanding(&self) -> usize {
        self.total() - self.completed.load(Ordering::SeqCst)
    }
}
