//! The data graph: a directed graph with a mutable payload on every vertex
//! and every directed edge.
//!
//! Construction is single threaded. [`DataGraph::freeze`] builds sorted
//! adjacency (CSR) and makes the structure immutable; from then on only
//! payloads change, and during an engine run they are reached exclusively
//! through the consistency module's locks.

use std::cell::UnsafeCell;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bound every vertex and edge payload must satisfy.
///
/// `Clone` is needed by the synchronous scheduler, which double-buffers the
/// graph between sweeps. `Sync` is needed because neighbors are read from
/// other workers.
pub trait Payload: Clone + Send + Sync + 'static {}

impl<T: Clone + Send + Sync + 'static> Payload for T {}

/// Dense vertex index, assigned in insertion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub u32);

/// Dense directed-edge index, assigned in insertion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for VertexId {
    fn from(i: usize) -> Self {
        VertexId(u32::try_from(i).expect("vertex index exceeds u32"))
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph structure is frozen")]
    FrozenGraph,
    #[error("graph is not frozen yet")]
    NotFrozen,
    #[error("self-loop on {0}")]
    SelfLoop(VertexId),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(VertexId, VertexId),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
}

/// Payload storage shared between workers. Access is only sound while the
/// caller holds the lock that the consistency model assigns to the datum.
pub(crate) struct Slot<T>(UnsafeCell<T>);

// SAFETY: the engine hands out `&T` / `&mut T` only under the per-vertex
// reader-writer locks, so aliasing follows the usual borrow rules across
// threads.
unsafe impl<T: Send + Sync> Sync for Slot<T> {}

impl<T> Slot<T> {
    fn new(value: T) -> Self {
        Slot(UnsafeCell::new(value))
    }

    /// # Safety
    /// No `&mut T` to this slot may exist for the returned lifetime.
    #[inline]
    pub(crate) unsafe fn get(&self) -> &T {
        &*self.0.get()
    }

    /// # Safety
    /// The caller must hold exclusive access to this slot.
    #[allow(clippy::mut_from_ref)]
    #[inline]
    pub(crate) unsafe fn get_mut(&self) -> &mut T {
        &mut *self.0.get()
    }

    fn get_exclusive(&mut self) -> &mut T {
        self.0.get_mut()
    }

    fn into_inner(self) -> T {
        self.0.into_inner()
    }
}

/// Immutable structure of a frozen graph: endpoints plus sorted adjacency.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Topology {
    sources: Vec<VertexId>,
    targets: Vec<VertexId>,
    in_offsets: Vec<usize>,
    in_edges: Vec<EdgeId>,
    out_offsets: Vec<usize>,
    out_edges: Vec<EdgeId>,
    nbr_offsets: Vec<usize>,
    neighbors: Vec<VertexId>,
}

impl Topology {
    fn build(n_vertices: usize, sources: Vec<VertexId>, targets: Vec<VertexId>) -> Self {
        let n_edges = sources.len();
        let mut ins: Vec<Vec<EdgeId>> = vec![Vec::new(); n_vertices];
        let mut outs: Vec<Vec<EdgeId>> = vec![Vec::new(); n_vertices];
        for e in 0..n_edges {
            let id = EdgeId(e as u32);
            outs[sources[e].index()].push(id);
            ins[targets[e].index()].push(id);
        }
        let mut in_offsets = Vec::with_capacity(n_vertices + 1);
        let mut out_offsets = Vec::with_capacity(n_vertices + 1);
        let mut nbr_offsets = Vec::with_capacity(n_vertices + 1);
        let mut in_edges = Vec::with_capacity(n_edges);
        let mut out_edges = Vec::with_capacity(n_edges);
        let mut neighbors = Vec::with_capacity(2 * n_edges);
        in_offsets.push(0);
        out_offsets.push(0);
        nbr_offsets.push(0);
        for v in 0..n_vertices {
            let mut inv = std::mem::take(&mut ins[v]);
            inv.sort_by_key(|e| sources[e.index()]);
            let mut outv = std::mem::take(&mut outs[v]);
            outv.sort_by_key(|e| targets[e.index()]);
            let mut nb: Vec<VertexId> =
                inv.iter().map(|e| sources[e.index()]).chain(outv.iter().map(|e| targets[e.index()])).collect();
            nb.sort_unstable();
            nb.dedup();
            in_edges.extend(inv);
            out_edges.extend(outv);
            neighbors.extend(nb);
            in_offsets.push(in_edges.len());
            out_offsets.push(out_edges.len());
            nbr_offsets.push(neighbors.len());
        }
        Topology { sources, targets, in_offsets, in_edges, out_offsets, out_edges, nbr_offsets, neighbors }
    }

    pub fn num_vertices(&self) -> usize {
        self.in_offsets.len().saturating_sub(1)
    }

    pub fn num_edges(&self) -> usize {
        self.sources.len()
    }

    #[inline]
    pub fn source(&self, e: EdgeId) -> VertexId {
        self.sources[e.index()]
    }

    #[inline]
    pub fn target(&self, e: EdgeId) -> VertexId {
        self.targets[e.index()]
    }

    /// Inbound edges `(* -> v)`, sorted by source.
    #[inline]
    pub fn in_edges(&self, v: VertexId) -> &[EdgeId] {
        let i = v.index();
        &self.in_edges[self.in_offsets[i]..self.in_offsets[i + 1]]
    }

    /// Outbound edges `(v -> *)`, sorted by target.
    #[inline]
    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        let i = v.index();
        &self.out_edges[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    /// Sorted, deduplicated in- and out-neighbors of `v`.
    #[inline]
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        let i = v.index();
        &self.neighbors[self.nbr_offsets[i]..self.nbr_offsets[i + 1]]
    }

    /// The directed edge `u -> v`, if present.
    pub fn find_edge(&self, u: VertexId, v: VertexId) -> Option<EdgeId> {
        let outs = self.out_edges(u);
        outs.binary_search_by_key(&v, |e| self.target(*e)).ok().map(|i| outs[i])
    }

    pub fn is_neighbor(&self, v: VertexId, u: VertexId) -> bool {
        self.neighbors(v).binary_search(&u).is_ok()
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        v.index() < self.num_vertices()
    }

    /// Other endpoint of `e` as seen from `v`.
    #[inline]
    pub fn opposite(&self, e: EdgeId, v: VertexId) -> VertexId {
        let s = self.source(e);
        if s == v {
            self.target(e)
        } else {
            s
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.num_vertices() as u32).map(VertexId)
    }

    pub fn scope_of(&self, v: VertexId) -> Result<Scope<'_>, GraphError> {
        if !self.contains_vertex(v) {
            return Err(GraphError::UnknownVertex(v));
        }
        Ok(Scope { center: v, in_edges: self.in_edges(v), out_edges: self.out_edges(v), neighbors: self.neighbors(v) })
    }
}

/// The structural extent of an update on `center`: its adjacent edges and
/// neighboring vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope<'a> {
    pub center: VertexId,
    pub in_edges: &'a [EdgeId],
    pub out_edges: &'a [EdgeId],
    pub neighbors: &'a [VertexId],
}

pub struct DataGraph<V, E> {
    vertices: Vec<Slot<V>>,
    edge_data: Vec<Slot<E>>,
    sources: Vec<VertexId>,
    targets: Vec<VertexId>,
    edge_set: HashSet<(u32, u32)>,
    topology: Option<Topology>,
}

impl<V, E> Default for DataGraph<V, E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V, E> DataGraph<V, E> {
    pub fn new() -> Self {
        DataGraph {
            vertices: Vec::new(),
            edge_data: Vec::new(),
            sources: Vec::new(),
            targets: Vec::new(),
            edge_set: HashSet::new(),
            topology: None,
        }
    }

    pub fn add_vertex(&mut self, payload: V) -> Result<VertexId, GraphError> {
        if self.is_frozen() {
            return Err(GraphError::FrozenGraph);
        }
        let id = VertexId::from(self.vertices.len());
        self.vertices.push(Slot::new(payload));
        Ok(id)
    }

    pub fn add_edge(&mut self, u: VertexId, v: VertexId, payload: E) -> Result<EdgeId, GraphError> {
        if self.is_frozen() {
            return Err(GraphError::FrozenGraph);
        }
        for x in [u, v] {
            if x.index() >= self.vertices.len() {
                return Err(GraphError::UnknownVertex(x));
            }
        }
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if !self.edge_set.insert((u.0, v.0)) {
            return Err(GraphError::DuplicateEdge(u, v));
        }
        let id = EdgeId(self.edge_data.len() as u32);
        self.edge_data.push(Slot::new(payload));
        self.sources.push(u);
        self.targets.push(v);
        Ok(id)
    }

    /// Builds sorted adjacency and locks the structure. Idempotent.
    pub fn freeze(&mut self) {
        if self.topology.is_none() {
            self.topology = Some(Topology::build(
                self.vertices.len(),
                std::mem::take(&mut self.sources),
                std::mem::take(&mut self.targets),
            ));
            self.edge_set = HashSet::new();
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.topology.is_some()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_data.len()
    }

    pub fn topology(&self) -> Result<&Topology, GraphError> {
        self.topology.as_ref().ok_or(GraphError::NotFrozen)
    }

    pub fn scope_of(&self, v: VertexId) -> Result<Scope<'_>, GraphError> {
        self.topology()?.scope_of(v)
    }

    pub fn source(&self, e: EdgeId) -> VertexId {
        match &self.topology {
            Some(t) => t.source(e),
            None => self.sources[e.index()],
        }
    }

    pub fn target(&self, e: EdgeId) -> VertexId {
        match &self.topology {
            Some(t) => t.target(e),
            None => self.targets[e.index()],
        }
    }

    pub fn vertex_data(&self, v: VertexId) -> &V {
        // SAFETY: `&self` excludes a running engine, which borrows `&mut self`.
        unsafe { self.vertices[v.index()].get() }
    }

    pub fn vertex_data_mut(&mut self, v: VertexId) -> &mut V {
        self.vertices[v.index()].get_exclusive()
    }

    pub fn edge_data(&self, e: EdgeId) -> &E {
        // SAFETY: see `vertex_data`.
        unsafe { self.edge_data[e.index()].get() }
    }

    pub fn edge_data_mut(&mut self, e: EdgeId) -> &mut E {
        self.edge_data[e.index()].get_exclusive()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertices.len() as u32).map(VertexId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edge_data.len() as u32).map(EdgeId)
    }

    pub fn vertex_payloads(&self) -> impl Iterator<Item = &V> {
        self.vertex_ids().map(move |v| self.vertex_data(v))
    }

    /// Structural copy of a frozen graph with freshly computed payloads.
    pub fn map_payloads<V2, E2>(
        &self,
        mut vmap: impl FnMut(VertexId, &V) -> V2,
        mut emap: impl FnMut(EdgeId, &E) -> E2,
    ) -> Result<DataGraph<V2, E2>, GraphError> {
        let topo = self.topology()?.clone();
        Ok(DataGraph {
            vertices: self.vertex_ids().map(|v| Slot::new(vmap(v, self.vertex_data(v)))).collect(),
            edge_data: self.edge_ids().map(|e| Slot::new(emap(e, self.edge_data(e)))).collect(),
            sources: Vec::new(),
            targets: Vec::new(),
            edge_set: HashSet::new(),
            topology: Some(topo),
        })
    }

    pub fn into_payloads(self) -> (Vec<V>, Vec<E>) {
        (
            self.vertices.into_iter().map(Slot::into_inner).collect(),
            self.edge_data.into_iter().map(Slot::into_inner).collect(),
        )
    }

    pub(crate) fn vertex_slot(&self, v: VertexId) -> &Slot<V> {
        &self.vertices[v.index()]
    }

    pub(crate) fn edge_slot(&self, e: EdgeId) -> &Slot<E> {
        &self.edge_data[e.index()]
    }
}

impl<V: fmt::Debug, E: fmt::Debug> fmt::Debug for DataGraph<V, E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataGraph")
            .field("vertices", &self.num_vertices())
            .field("edges", &self.num_edges())
            .field("frozen", &self.is_frozen())
            .finish()
    }
}

impl<V: Clone, E: Clone> Clone for DataGraph<V, E> {
    fn clone(&self) -> Self {
        DataGraph {
            vertices: self.vertex_payloads().cloned().map(Slot::new).collect(),
            edge_data: self.edge_ids().map(|e| Slot::new(self.edge_data(e).clone())).collect(),
            sources: self.sources.clone(),
            targets: self.targets.clone(),
            edge_set: self.edge_set.clone(),
            topology: self.topology.clone(),
        }
    }
}
