use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use parking_lot::Mutex;

use super::{
    new_priorities, victim_start, AddOutcome, FunctionId, Pop, Scheduler, SchedulerError, SchedulerKind, Task,
    TaskSpace, NOT_PENDING,
};
use crate::graph::VertexId;

#[derive(Clone, Copy, Debug)]
struct Entry {
    priority: f64,
    vertex: VertexId,
    function: FunctionId,
    slot: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // max-heap: highest priority first, ties to the lowest (vertex, function)
    fn cmp(&self, other: &Self) -> CmpOrdering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.vertex.cmp(&self.vertex))
            .then_with(|| other.function.cmp(&self.function))
    }
}

/// Binary-heap priority scheduler.
///
/// The live priority of each (vertex, function) slot is kept in an atomic
/// table; heap entries whose priority no longer matches the table are stale
/// and skipped on pop (lazy deletion). Strict mode keeps a single heap and
/// performs every operation under its lock. Approximate mode keeps one heap
/// per worker with stealing.
pub struct PriorityScheduler {
    strict: bool,
    space: TaskSpace,
    heaps: Vec<Mutex<BinaryHeap<Entry>>>,
    live: Vec<AtomicU64>,
    outstanding: AtomicUsize,
}

impl PriorityScheduler {
    pub fn new(strict: bool, n_vertices: usize, n_functions: usize, n_workers: usize) -> Self {
        let space = TaskSpace::new(n_vertices, n_functions);
        let n_heaps = if strict { 1 } else { n_workers.max(1) };
        PriorityScheduler {
            strict,
            space,
            heaps: (0..n_heaps).map(|_| Mutex::new(BinaryHeap::new())).collect(),
            live: new_priorities(space.slots()),
            outstanding: AtomicUsize::new(0),
        }
    }

    /// Raises the live priority of `slot` to at least `p`. Returns the
    /// previous raw value when the table changed.
    fn raise(&self, slot: usize, p: f64) -> Option<u64> {
        let cell = &self.live[slot];
        let mut cur = cell.load(Ordering::Acquire);
        loop {
            if cur != NOT_PENDING && f64::from_bits(cur) >= p {
                return None;
            }
            match cell.compare_exchange_weak(cur, p.to_bits(), Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return Some(cur),
                Err(seen) => cur = seen,
            }
        }
    }

    fn take(&self, heap: &mut BinaryHeap<Entry>) -> Option<Task> {
        while let Some(e) = heap.pop() {
            let claimed = self.live[e.slot]
                .compare_exchange(e.priority.to_bits(), NOT_PENDING, Ordering::AcqRel, Ordering::Acquire)
                .is_ok();
            if claimed {
                return Some(Task::with_priority(e.vertex, e.function, e.priority));
            }
        }
        None
    }

    fn insert(&self, heap: &mut BinaryHeap<Entry>, task: Task, slot: usize) -> AddOutcome {
        // counted up front so a concurrent steal of the entry can never
        // drive the counter below the true amount of work
        self.outstanding.fetch_add(1, Ordering::SeqCst);
        match self.raise(slot, task.priority) {
            None => {
                self.outstanding.fetch_sub(1, Ordering::SeqCst);
                AddOutcome::Merged
            }
            Some(prev) => {
                if prev != NOT_PENDING {
                    self.outstanding.fetch_sub(1, Ordering::SeqCst);
                }
                heap.push(Entry { priority: task.priority, vertex: task.vertex, function: task.function, slot });
                if prev == NOT_PENDING {
                    AddOutcome::Inserted
                } else {
                    AddOutcome::Merged
                }
            }
        }
    }

    /// Live priority of a pending task, if any.
    pub fn pending_priority(&self, vertex: VertexId, function: FunctionId) -> Option<f64> {
        let slot = self.space.slot(&Task::new(vertex, function)).ok()?;
        let bits = self.live[slot].load(Ordering::Acquire);
        (bits != NOT_PENDING).then(|| f64::from_bits(bits))
    }

    fn idle(&self) -> Pop {
        if self.outstanding.load(Ordering::SeqCst) == 0 {
            Pop::Empty
        } else {
            Pop::WaitForBarrier
        }
    }
}

impl Scheduler for PriorityScheduler {
    fn kind(&self) -> SchedulerKind {
        if self.strict {
            SchedulerKind::PriorityStrict
        } else {
            SchedulerKind::PriorityApprox
        }
    }

    fn add_task(&self, task: Task, origin: usize) -> Result<AddOutcome, SchedulerError> {
        let slot = self.space.slot(&task)?;
        let h = if self.strict { 0 } else { origin % self.heaps.len() };
        if !self.strict {
            // skip the lock entirely for adds that change nothing
            let bits = self.live[slot].load(Ordering::Acquire);
            if bits != NOT_PENDING && f64::from_bits(bits) >= task.priority {
                return Ok(AddOutcome::Merged);
            }
        }
        let mut heap = self.heaps[h].lock();
        Ok(self.insert(&mut heap, task, slot))
    }

    fn pop_task(&self, worker: usize) -> Pop {
        if self.strict {
            let mut heap = self.heaps[0].lock();
            return match self.take(&mut heap) {
                Some(t) => Pop::Task(t),
                None => {
                    drop(heap);
                    self.idle()
                }
            };
        }
        let n = self.heaps.len();
        let own = worker % n;
        if let Some(t) = self.take(&mut self.heaps[own].lock()) {
            return Pop::Task(t);
        }
        let start = victim_start(worker, n);
        for k in 0..n {
            let q = (start + k) % n;
            if q != own {
                if let Some(t) = self.take(&mut self.heaps[q].lock()) {
                    return Pop::Task(t);
                }
            }
        }
        self.idle()
    }

    fn complete(&self, _worker: usize, _task: &Task) {
        self.outstanding.fetch_sub(1, Ordering::SeqCst);
    }

    fn outstanding(&self) -> usize {
        self.outstanding.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: u32, p: f64) -> Task {
        Task::with_priority(VertexId(v), FunctionId(0), p)
    }

    fn drain(s: &PriorityScheduler) -> Vec<(u32, f64)> {
        let mut out = Vec::new();
        while let Pop::Task(task) = s.pop_task(0) {
            out.push((task.vertex.0, task.priority));
            s.complete(0, &task);
        }
        out
    }

    #[test]
    fn strict_pops_max_first() {
        let s = PriorityScheduler::new(true, 4, 1, 2);
        s.add_task(t(0, 0.1), 0).unwrap();
        s.add_task(t(1, 0.9), 1).unwrap();
        s.add_task(t(2, 0.5), 0).unwrap();
        assert_eq!(drain(&s), vec![(1, 0.9), (2, 0.5), (0, 0.1)]);
        assert_eq!(s.pop_task(1), Pop::Empty);
    }

    #[test]
    fn max_merge() {
        let s = PriorityScheduler::new(true, 8, 1, 1);
        assert_eq!(s.add_task(t(3, 0.2), 0).unwrap(), AddOutcome::Inserted);
        assert_eq!(s.add_task(t(3, 0.9), 0).unwrap(), AddOutcome::Merged);
        assert_eq!(s.add_task(t(3, 0.4), 0).unwrap(), AddOutcome::Merged);
        assert_eq!(s.pending_priority(VertexId(3), FunctionId(0)), Some(0.9));
        assert_eq!(s.outstanding(), 1);
        assert_eq!(drain(&s), vec![(3, 0.9)]);
    }

    #[test]
    fn stale_entries_are_skipped_after_readd() {
        let s = PriorityScheduler::new(true, 2, 1, 1);
        s.add_task(t(0, 0.5), 0).unwrap();
        s.add_task(t(0, 0.9), 0).unwrap();
        let Pop::Task(a) = s.pop_task(0) else { panic!() };
        assert_eq!(a.priority, 0.9);
        s.add_task(t(0, 0.3), 0).unwrap();
        s.complete(0, &a);
        assert_eq!(drain(&s), vec![(0, 0.3)]);
    }

    #[test]
    fn ties_break_by_vertex() {
        let s = PriorityScheduler::new(true, 4, 1, 1);
        for v in [3, 0, 2, 1] {
            s.add_task(t(v, 1.0), 0).unwrap();
        }
        let order: Vec<u32> = drain(&s).into_iter().map(|x| x.0).collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn approx_steals_and_conserves() {
        let s = PriorityScheduler::new(false, 100, 1, 4);
        let inserted = AtomicUsize::new(0);
        let popped = AtomicUsize::new(0);
        std::thread::scope(|sc| {
            for w in 0..4usize {
                let (s, inserted, popped) = (&s, &inserted, &popped);
                sc.spawn(move || {
                    for i in 0..400u32 {
                        let v = (i * 31 + w as u32) % 100;
                        if s.add_task(t(v, (i % 17) as f64), w).unwrap() == AddOutcome::Inserted {
                            inserted.fetch_add(1, Ordering::Relaxed);
                        }
                        if i % 2 == 0 {
                            if let Pop::Task(task) = s.pop_task(w) {
                                popped.fetch_add(1, Ordering::Relaxed);
                                s.complete(w, &task);
                            }
                        }
                    }
                    loop {
                        match s.pop_task(w) {
                            Pop::Task(task) => {
                                popped.fetch_add(1, Ordering::Relaxed);
                                s.complete(w, &task);
                            }
                            Pop::WaitForBarrier => std::thread::yield_now(),
                            Pop::Empty => break,
                        }
                    }
                });
            }
        });
        assert_eq!(inserted.load(Ordering::Relaxed), popped.load(Ordering::Relaxed));
    }

    proptest! {
        #[test]
        fn strict_heap_order(adds in proptest::collection::vec((0u32..20, 0u32..1000), 1..200)) {
            let s = PriorityScheduler::new(true, 20, 1, 1);
            let mut best = std::collections::HashMap::new();
            for (v, p) in &adds {
                let p = *p as f64 / 10.0;
                s.add_task(t(*v, p), 0).unwrap();
                let e = best.entry(*v).or_insert(p);
                if p > *e { *e = p; }
            }
            let out = drain(&s);
            prop_assert_eq!(out.len(), best.len());
            for w in out.windows(2) {
                prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
            }
            for (v, p) in out {
                prop_assert_eq!(best[&v], p);
            }
        }
    }
}
