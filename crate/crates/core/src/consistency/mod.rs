//! Consistency models, their exclusion sets, and the ordered locking
//! protocol that enforces them.

mod canary;
mod locks;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::graph::{EdgeId, GraphError, Topology, VertexId};

pub use canary::Canary;
pub use locks::{LockGuard, LockTable, VertexReadGuard};
pub use trace::{check_sequential_consistency, ConflictPair, ExecutionTrace, TraceError, TraceRecord, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsistencyModel {
    /// Only the center vertex is reserved.
    Vertex,
    /// Center vertex and adjacent edges are exclusive, neighbors are shared.
    Edge,
    /// The whole scope is exclusive.
    Full,
}

impl ConsistencyModel {
    pub const ALL: [ConsistencyModel; 3] = [ConsistencyModel::Vertex, ConsistencyModel::Edge, ConsistencyModel::Full];

    pub fn name(self) -> &'static str {
        match self {
            ConsistencyModel::Vertex => "vertex",
            ConsistencyModel::Edge => "edge",
            ConsistencyModel::Full => "full",
        }
    }
}

impl fmt::Display for ConsistencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConsistencyModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vertex" => Ok(ConsistencyModel::Vertex),
            "edge" => Ok(ConsistencyModel::Edge),
            "full" => Ok(ConsistencyModel::Full),
            other => Err(format!("unknown consistency model {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LockMode {
    Read,
    Write,
}

impl LockMode {
    pub fn conflicts(self, other: LockMode) -> bool {
        self == LockMode::Write || other == LockMode::Write
    }
}

/// A unit of graph data for conflict analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataUnit {
    Vertex(VertexId),
    Edge(EdgeId),
}

impl DataUnit {
    /// Dense index: vertices first, then edges.
    pub fn dense_index(self, n_vertices: usize) -> usize {
        match self {
            DataUnit::Vertex(v) => v.index(),
            DataUnit::Edge(e) => n_vertices + e.index(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExclusionSet {
    pub write_vertices: Vec<VertexId>,
    pub write_edges: Vec<EdgeId>,
    pub read_vertices: Vec<VertexId>,
}

impl ExclusionSet {
    pub fn units(&self) -> impl Iterator<Item = (DataUnit, LockMode)> + '_ {
        self.write_vertices
            .iter()
            .map(|v| (DataUnit::Vertex(*v), LockMode::Write))
            .chain(self.write_edges.iter().map(|e| (DataUnit::Edge(*e), LockMode::Write)))
            .chain(self.read_vertices.iter().map(|v| (DataUnit::Vertex(*v), LockMode::Read)))
    }

    /// True when both sets touch a common datum and at least one side writes it.
    pub fn conflicts_with(&self, other: &ExclusionSet) -> bool {
        let hit = |a: &[VertexId], b: &[VertexId]| a.iter().any(|v| b.binary_search(v).is_ok());
        hit(&self.write_vertices, &other.write_vertices)
            || hit(&self.write_vertices, &other.read_vertices)
            || hit(&self.read_vertices, &other.write_vertices)
            || self.write_edges.iter().any(|e| other.write_edges.binary_search(e).is_ok())
    }

    /// Every datum touched, in either mode.
    pub fn touched(&self) -> (Vec<VertexId>, Vec<EdgeId>) {
        let mut vs: Vec<VertexId> = self.write_vertices.iter().chain(&self.read_vertices).copied().collect();
        vs.sort_unstable();
        vs.dedup();
        (vs, self.write_edges.clone())
    }
}

fn adjacent_edges(topo: &Topology, v: VertexId) -> Vec<EdgeId> {
    let mut edges: Vec<EdgeId> = topo.in_edges(v).iter().chain(topo.out_edges(v)).copied().collect();
    edges.sort_unstable();
    edges
}

pub fn exclusion_set(model: ConsistencyModel, v: VertexId, topo: &Topology) -> Result<ExclusionSet, GraphError> {
    if !topo.contains_vertex(v) {
        return Err(GraphError::UnknownVertex(v));
    }
    Ok(match model {
        ConsistencyModel::Vertex => ExclusionSet { write_vertices: vec![v], ..Default::default() },
        ConsistencyModel::Edge => ExclusionSet {
            write_vertices: vec![v],
            write_edges: adjacent_edges(topo, v),
            read_vertices: topo.neighbors(v).to_vec(),
        },
        ConsistencyModel::Full => {
            let mut w: Vec<VertexId> = topo.neighbors(v).to_vec();
            let pos = w.binary_search(&v).unwrap_err();
            w.insert(pos, v);
            ExclusionSet { write_vertices: w, write_edges: adjacent_edges(topo, v), read_vertices: Vec::new() }
        }
    })
}

pub(crate) type LockPlan = SmallVec<[(VertexId, LockMode); 8]>;

/// Vertex locks for an update on `v`, in ascending vertex order.
pub(crate) fn lock_plan(model: ConsistencyModel, v: VertexId, topo: &Topology) -> LockPlan {
    let mut plan = LockPlan::new();
    match model {
        ConsistencyModel::Vertex => plan.push((v, LockMode::Write)),
        ConsistencyModel::Edge | ConsistencyModel::Full => {
            let nbr_mode = if model == ConsistencyModel::Full { LockMode::Write } else { LockMode::Read };
            let mut placed = false;
            for &u in topo.neighbors(v) {
                if !placed && u > v {
                    plan.push((v, LockMode::Write));
                    placed = true;
                }
                plan.push((u, nbr_mode));
            }
            if !placed {
                plan.push((v, LockMode::Write));
            }
        }
    }
    plan
}
