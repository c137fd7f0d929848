use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use parking_lot::Mutex;

use super::{new_flags, victim_start, AddOutcome, Pop, Scheduler, SchedulerError, SchedulerKind, Task, TaskSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FifoMode {
    /// One global queue.
    Single,
    /// One queue per worker; tasks go to the creating worker's queue and
    /// idle workers steal from a random victim.
    MultiQueue,
    /// Vertex v always lives in queue v mod workers; no stealing.
    Partitioned,
}

pub struct FifoScheduler {
    mode: FifoMode,
    space: TaskSpace,
    queues: Vec<Mutex<VecDeque<Task>>>,
    pending: Vec<AtomicBool>,
    outstanding: AtomicUsize,
}

impl FifoScheduler {
    pub fn new(mode: FifoMode, n_vertices: usize, n_functions: usize, n_workers: usize) -> Self {
        let space = TaskSpace::new(n_vertices, n_functions);
        let n_queues = if mode == FifoMode::Single { 1 } else { n_workers.max(1) };
        FifoScheduler {
            mode,
            space,
            queues: (0..n_queues).map(|_| Mutex::new(VecDeque::new())).collect(),
            pending: new_flags(space.slots()),
            outstanding: AtomicUsize::new(0),
        }
    }

    fn queue_for(&self, task: &Task, origin: usize) -> usize {
        match self.mode {
            FifoMode::Single => 0,
            FifoMode::MultiQueue => origin % self.queues.len(),
            FifoMode::Partitioned => task.vertex.index() % self.queues.len(),
        }
    }

    fn take(&self, q: usize) -> Option<Task> {
        let task = self.queues[q].lock().pop_front()?;
        // cleared after removal so a re-add made while the task runs is queued
        let slot = self.space.slot(&task).expect("queued task was validated");
        self.pending[slot].store(false, Ordering::Release);
        Some(task)
    }
}

impl Scheduler for FifoScheduler {
    fn kind(&self) -> SchedulerKind {
        match self.mode {
            FifoMode::Single => SchedulerKind::FifoSingle,
            FifoMode::MultiQueue => SchedulerKind::FifoMultiQueue,
            FifoMode::Partitioned => SchedulerKind::FifoPartitioned,
        }
    }

    fn add_task(&self, task: Task, origin: usize) -> Result<AddOutcome, SchedulerError> {
        let slot = self.space.slot(&task)?;
        if self.pending[slot].swap(true, Ordering::AcqRel) {
            return Ok(AddOutcome::Merged);
        }
        self.outstanding.fetch_add(1, Ordering::SeqCst);
        let q = self.queue_for(&task, origin);
        self.queues[q].lock().push_back(task);
        Ok(AddOutcome::Inserted)
    }

    fn pop_task(&self, worker: usize) -> Pop {
        let n = self.queues.len();
        let own = if self.mode == FifoMode::Single { 0 } else { worker % n };
        if let Some(t) = self.take(own) {
            return Pop::Task(t);
        }
        if self.mode == FifoMode::MultiQueue && n > 1 {
            let start = victim_start(worker, n);
            for k in 0..n {
                let q = (start + k) % n;
                if q != own {
                    if let Some(t) = self.take(q) {
                        return Pop::Task(t);
                    }
                }
            }
        }
        if self.outstanding.load(Ordering::SeqCst) == 0 {
            Pop::Empty
        } else {
            Pop::WaitForBarrier
        }
    }

    fn complete(&self, _worker: usize, _task: &Task) {
        self.outstanding.fetch_sub(1, Ordering::SeqCst);
    }

    fn outstanding(&self) -> usize {
        self.outstanding.load(Ordering::SeqCst)
    }
}
