use std::any::Any;
use std::sync::Arc;
use std::time::Duration;

use crate::consistency::LockTable;
use crate::graph::{DataGraph, VertexId};
use crate::sdt::{SdtView, SharedDataTable};

type FoldFn<V, A> = dyn Fn(&V, A) -> A + Send + Sync;
type MergeFn<A> = dyn Fn(A, A) -> A + Send + Sync;
type ApplyFn<A, T> = dyn Fn(A, &SdtView<'_>) -> T + Send + Sync;
/// Hands the payload of one vertex to a callback.
type ReadFn<'a, V> = dyn Fn(VertexId, &mut dyn FnMut(&V)) + Sync + 'a;

/// A fold/merge/apply aggregation over all vertex payloads that writes its
/// result to one SDT key.
///
/// Folds are read-only. `apply` also receives the SDT so it can combine the
/// aggregate with the current value (for example a gradient step).
pub struct SyncSpec<V, A, T> {
    key: String,
    initial: A,
    fold: Arc<FoldFn<V, A>>,
    merge: Option<Arc<MergeFn<A>>>,
    apply: Arc<ApplyFn<A, T>>,
    period: Option<Duration>,
}

impl<V, A, T> SyncSpec<V, A, T>
where
    V: Send + Sync + 'static,
    A: Clone + Send + Sync + 'static,
    T: Any + Send + Sync,
{
    pub fn new(
        key: impl Into<String>,
        initial: A,
        fold: impl Fn(&V, A) -> A + Send + Sync + 'static,
        apply: impl Fn(A, &SdtView<'_>) -> T + Send + Sync + 'static,
    ) -> Self {
        SyncSpec { key: key.into(), initial, fold: Arc::new(fold), merge: None, apply: Arc::new(apply), period: None }
    }

    /// Enables parallel chunked folding; `merge` must be associative and
    /// commutative over fold results.
    pub fn with_merge(mut self, merge: impl Fn(A, A) -> A + Send + Sync + 'static) -> Self {
        self.merge = Some(Arc::new(merge));
        self
    }

    /// Runs the sync in the background every `period` while the engine runs.
    pub fn with_period(mut self, period: Duration) -> Self {
        self.period = Some(period);
        self
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    /// Aggregate over `n` vertices split into `chunks` contiguous ranges.
    /// Without a merge function the fold is sequential regardless of
    /// `chunks`.
    fn aggregate(&self, n: usize, chunks: usize, read: &ReadFn<'_, V>) -> A {
        let fold_range = |lo: usize, hi: usize| {
            let mut acc = Some(self.initial.clone());
            for i in lo..hi {
                read(VertexId(i as u32), &mut |x| {
                    let a = acc.take().expect("accumulator present");
                    acc = Some((self.fold)(x, a));
                });
            }
            acc.expect("accumulator present")
        };
        let merge = match &self.merge {
            Some(m) if chunks > 1 && n > 1 => m,
            _ => return fold_range(0, n),
        };
        let chunks = chunks.min(n);
        let bounds: Vec<(usize, usize)> = (0..chunks).map(|c| (c * n / chunks, (c + 1) * n / chunks)).collect();
        let mut parts: Vec<A> = std::thread::scope(|s| {
            let handles: Vec<_> = bounds.iter().map(|&(lo, hi)| s.spawn(move || fold_range(lo, hi))).collect();
            handles.into_iter().map(|h| h.join().expect("fold worker panicked")).collect()
        });
        // pairwise reduction tree
        while parts.len() > 1 {
            let mut next = Vec::with_capacity(parts.len().div_ceil(2));
            let mut it = parts.into_iter();
            while let Some(a) = it.next() {
                next.push(match it.next() {
                    Some(b) => merge(a, b),
                    None => a,
                });
            }
            parts = next;
        }
        parts.pop().expect("at least one chunk")
    }

    /// Runs fold/merge/apply over explicit chunking and returns the applied
    /// value without touching any SDT entry.
    pub fn evaluate<E: Send + Sync>(&self, graph: &DataGraph<V, E>, sdt: &SharedDataTable, chunks: usize) -> T {
        let read = |v: VertexId, f: &mut dyn FnMut(&V)| f(graph.vertex_data(v));
        let acc = self.aggregate(graph.num_vertices(), chunks, &read);
        (self.apply)(acc, &sdt.view())
    }
}

/// Type-erased sync as stored by the engine.
pub(crate) trait ErasedSync<V, E>: Send + Sync {
    fn key(&self) -> &str;
    fn period(&self) -> Option<Duration>;
    /// With `locks`, every vertex is read under its shared lock.
    fn run(&self, graph: &DataGraph<V, E>, locks: Option<&LockTable>, sdt: &SharedDataTable, chunks: usize);
}

impl<V, E, A, T> ErasedSync<V, E> for SyncSpec<V, A, T>
where
    V: Send + Sync + 'static,
    E: Send + Sync,
    A: Clone + Send + Sync + 'static,
    T: Any + Send + Sync,
{
    fn key(&self) -> &str {
        &self.key
    }

    fn period(&self) -> Option<Duration> {
        self.period
    }

    fn run(&self, graph: &DataGraph<V, E>, locks: Option<&LockTable>, sdt: &SharedDataTable, chunks: usize) {
        let read = |v: VertexId, f: &mut dyn FnMut(&V)| match locks {
            Some(table) => {
                let _g = table.read_vertex(v);
                // SAFETY: shared lock held; writers need the exclusive lock.
                f(unsafe { graph.vertex_slot(v).get() })
            }
            None => f(graph.vertex_data(v)),
        };
        let acc = self.aggregate(graph.num_vertices(), chunks, &read);
        let value = (self.apply)(acc, &sdt.view());
        sdt.set(self.key.clone(), value);
    }
}
