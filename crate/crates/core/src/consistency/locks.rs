use std::cell::Cell;

use parking_lot::lock_api::RawRwLock as _;
use parking_lot::RawRwLock;

use super::{lock_plan, ConsistencyModel, LockMode, LockPlan};
use crate::graph::{Topology, VertexId};

thread_local! {
    static HELD: Cell<u32> = const { Cell::new(0) };
}

/// One reader-writer lock per vertex. Edge data is covered by the lock of
/// the update's center vertex, so there are no edge locks.
pub struct LockTable {
    locks: Vec<RawRwLock>,
}

impl LockTable {
    pub fn new(n_vertices: usize) -> Self {
        LockTable { locks: (0..n_vertices).map(|_| RawRwLock::INIT).collect() }
    }

    pub fn len(&self) -> usize {
        self.locks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locks.is_empty()
    }

    /// Blocks until the exclusion set of `model` at `v` is held.
    ///
    /// Locks are taken in ascending vertex order, which is a global total
    /// order, so concurrent acquisitions cannot form a wait cycle. The
    /// calling thread must not hold another guard.
    pub fn acquire(&self, topo: &Topology, model: ConsistencyModel, v: VertexId) -> LockGuard<'_> {
        debug_assert!(HELD.with(|h| h.get()) == 0, "a worker may hold at most one scope guard");
        let plan = lock_plan(model, v, topo);
        for &(u, mode) in &plan {
            let lock = &self.locks[u.index()];
            match mode {
                LockMode::Read => lock.lock_shared(),
                LockMode::Write => lock.lock_exclusive(),
            }
        }
        HELD.with(|h| h.set(h.get() + 1));
        LockGuard { table: self, plan }
    }

    /// Shared lock on a single vertex, used by sync folds.
    pub fn read_vertex(&self, v: VertexId) -> VertexReadGuard<'_> {
        self.locks[v.index()].lock_shared();
        VertexReadGuard { table: self, vertex: v }
    }

    /// True when no lock on `v` is held in any mode.
    pub fn is_free(&self, v: VertexId) -> bool {
        let lock = &self.locks[v.index()];
        if lock.try_lock_exclusive() {
            // SAFETY: just acquired above.
            unsafe { lock.unlock_exclusive() };
            true
        } else {
            false
        }
    }
}

/// Held exclusion set. Dropping it releases every lock in reverse order.
pub struct LockGuard<'a> {
    table: &'a LockTable,
    plan: LockPlan,
}

impl LockGuard<'_> {
    pub fn locks(&self) -> &[(VertexId, LockMode)] {
        &self.plan
    }

    /// Explicit release; equivalent to dropping the guard.
    pub fn release(self) {}
}

impl Drop for LockGuard<'_> {
    fn drop(&mut self) {
        for &(u, mode) in self.plan.iter().rev() {
            let lock = &self.table.locks[u.index()];
            // SAFETY: every entry of the plan was locked in `acquire` with this mode.
            unsafe {
                match mode {
                    LockMode::Read => lock.unlock_shared(),
                    LockMode::Write => lock.unlock_exclusive(),
                }
            }
        }
        HELD.with(|h| h.set(h.get() - 1));
    }
}

pub struct VertexReadGuard<'a> {
    table: &'a LockTable,
    vertex: VertexId,
}

impl Drop for VertexReadGuard<'_> {
    fn drop(&mut self) {
        // SAFETY: locked shared in `read_vertex`.
        unsafe { self.table.locks[self.vertex.index()].unlock_shared() }
    }
}
