use std::cell::UnsafeCell;

use crate::consistency::ConsistencyModel;
use crate::graph::{DataGraph, EdgeId, Scope, Topology, VertexId};

/// Previous-sweep copy of every payload, read by synchronous sweeps.
pub(crate) struct Snapshot<V, E> {
    data: UnsafeCell<(Vec<V>, Vec<E>)>,
}

// SAFETY: the snapshot is only written by the barrier leader while every
// other worker is parked at the barrier; between barriers it is read-only.
unsafe impl<V: Send + Sync, E: Send + Sync> Sync for Snapshot<V, E> {}

impl<V: Clone, E: Clone> Snapshot<V, E> {
    pub(crate) fn of(graph: &DataGraph<V, E>) -> Self {
        let vs = graph.vertex_payloads().cloned().collect();
        let es = graph.edge_ids().map(|e| graph.edge_data(e).clone()).collect();
        Snapshot { data: UnsafeCell::new((vs, es)) }
    }

    /// # Safety
    /// No other thread may access the snapshot or write the graph payloads
    /// during the call.
    pub(crate) unsafe fn refresh(&self, graph: &DataGraph<V, E>) {
        let (vs, es) = &mut *self.data.get();
        for (i, slot) in vs.iter_mut().enumerate() {
            slot.clone_from(graph.vertex_slot(VertexId(i as u32)).get());
        }
        for (i, slot) in es.iter_mut().enumerate() {
            slot.clone_from(graph.edge_slot(EdgeId(i as u32)).get());
        }
    }

    fn vertex(&self, v: VertexId) -> &V {
        // SAFETY: read-only between barriers.
        unsafe { &(&*self.data.get()).0[v.index()] }
    }

    fn edge(&self, e: EdgeId) -> &E {
        // SAFETY: read-only between barriers.
        unsafe { &(&*self.data.get()).1[e.index()] }
    }
}

/// The data an update function may touch: the center vertex, its adjacent
/// edges, and its neighbors, with access rights set by the consistency model.
///
/// | model  | center  | adjacent edges | neighbors |
/// |--------|---------|----------------|-----------|
/// | vertex | shared  | shared         | shared    |
/// | edge   | mutable | mutable        | shared    |
/// | full   | mutable | mutable        | mutable   |
///
/// Under the vertex model no update receives `&mut` access to anything, so
/// payloads that must be written under it need interior mutability (atomics).
/// Under a synchronous schedule the shared accessors return the values from
/// the end of the previous sweep while the `_mut` accessors write the live
/// graph.
///
/// Accessing data outside the scope, or mutable access the model does not
/// grant, panics; the engine reports it as a failed update.
pub struct ScopeData<'a, V, E> {
    graph: &'a DataGraph<V, E>,
    topo: &'a Topology,
    snapshot: Option<&'a Snapshot<V, E>>,
    center: VertexId,
    model: ConsistencyModel,
}

impl<'a, V: Clone, E: Clone> ScopeData<'a, V, E> {
    /// Caller must hold the locks `model` assigns to `center` for as long as
    /// the value lives.
    pub(crate) fn new(
        graph: &'a DataGraph<V, E>,
        topo: &'a Topology,
        snapshot: Option<&'a Snapshot<V, E>>,
        center: VertexId,
        model: ConsistencyModel,
    ) -> Self {
        ScopeData { graph, topo, snapshot, center, model }
    }

    pub fn center(&self) -> VertexId {
        self.center
    }

    pub fn model(&self) -> ConsistencyModel {
        self.model
    }

    pub fn topology(&self) -> &'a Topology {
        self.topo
    }

    pub fn scope(&self) -> Scope<'a> {
        self.topo.scope_of(self.center).expect("center is a graph vertex")
    }

    pub fn in_edges(&self) -> &'a [EdgeId] {
        self.topo.in_edges(self.center)
    }

    pub fn out_edges(&self) -> &'a [EdgeId] {
        self.topo.out_edges(self.center)
    }

    pub fn neighbors(&self) -> &'a [VertexId] {
        self.topo.neighbors(self.center)
    }

    pub fn source(&self, e: EdgeId) -> VertexId {
        self.topo.source(e)
    }

    pub fn target(&self, e: EdgeId) -> VertexId {
        self.topo.target(e)
    }

    /// Edge `u -> v` if it exists and touches the center.
    pub fn find_edge(&self, u: VertexId, v: VertexId) -> Option<EdgeId> {
        if u != self.center && v != self.center {
            return None;
        }
        self.topo.find_edge(u, v)
    }

    pub fn vertex(&self) -> &V {
        match self.snapshot {
            Some(s) => s.vertex(self.center),
            // SAFETY: the center is locked in every model; `&self` excludes
            // a live `&mut` from `vertex_mut`.
            None => unsafe { self.graph.vertex_slot(self.center).get() },
        }
    }

    pub fn vertex_mut(&mut self) -> &mut V {
        assert!(self.model != ConsistencyModel::Vertex, "vertex consistency grants shared access only");
        // SAFETY: the center's write lock is held under edge and full models.
        unsafe { self.graph.vertex_slot(self.center).get_mut() }
    }

    pub fn neighbor(&self, u: VertexId) -> &V {
        self.check_neighbor(u);
        match self.snapshot {
            Some(s) => s.vertex(u),
            // SAFETY: neighbors are read- or write-locked under edge and full;
            // under vertex nobody holds `&mut` to any payload.
            None => unsafe { self.graph.vertex_slot(u).get() },
        }
    }

    pub fn neighbor_mut(&mut self, u: VertexId) -> &mut V {
        assert!(self.model == ConsistencyModel::Full, "only full consistency grants write access to neighbors");
        self.check_neighbor(u);
        // SAFETY: full consistency write-locks every neighbor.
        unsafe { self.graph.vertex_slot(u).get_mut() }
    }

    pub fn edge(&self, e: EdgeId) -> &E {
        self.check_edge(e);
        match self.snapshot {
            Some(s) => s.edge(e),
            // SAFETY: adjacent edges are covered by the center's lock; under
            // vertex consistency they are never handed out mutably.
            None => unsafe { self.graph.edge_slot(e).get() },
        }
    }

    pub fn edge_mut(&mut self, e: EdgeId) -> &mut E {
        assert!(self.model != ConsistencyModel::Vertex, "vertex consistency grants shared access only");
        self.check_edge(e);
        // SAFETY: both endpoints of an adjacent edge are locked and at least
        // the center exclusively, so no other update can reach this edge.
        unsafe { self.graph.edge_slot(e).get_mut() }
    }

    fn check_neighbor(&self, u: VertexId) {
        assert!(self.topo.is_neighbor(self.center, u), "{u} is outside the scope of {}", self.center);
    }

    fn check_edge(&self, e: EdgeId) {
        assert!(
            e.index() < self.topo.num_edges()
                && (self.topo.source(e) == self.center || self.topo.target(e) == self.center),
            "{e} is not adjacent to {}",
            self.center
        );
    }
}
