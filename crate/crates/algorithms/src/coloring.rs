//! Greedy graph coloring as an update function.
//!
//! Each update sets the center to the smallest color none of its neighbors
//! currently has. Under edge consistency two adjacent vertices never update
//! at the same time, so whichever runs second sees the other's color and any
//! parallel run ends with a proper coloring.

use graphlab_core::scheduling::Stage;
use graphlab_core::{
    ConsistencyModel, DataGraph, Engine, EngineConfig, EngineStats, FunctionId, SchedulerSpec, ScopeData,
    SharedDataTable, Task, Topology, UpdateContext, UpdateResult, VertexId,
};

use crate::AlgoError;

pub const UNCOLORED: u32 = u32::MAX;

pub type ColorGraph = DataGraph<u32, ()>;

/// Uncolored graph with one directed edge per listed pair.
pub fn build_graph(n: usize, pairs: &[(usize, usize)]) -> Result<ColorGraph, AlgoError> {
    let mut g = DataGraph::new();
    for _ in 0..n {
        g.add_vertex(UNCOLORED)?;
    }
    for &(u, v) in pairs {
        g.add_edge(VertexId::from(u), VertexId::from(v), ())?;
    }
    g.freeze();
    Ok(g)
}

/// Uncolored copy of an existing structure.
pub fn graph_like(topo: &Topology) -> Result<ColorGraph, AlgoError> {
    let pairs: Vec<(usize, usize)> = (0..topo.num_edges())
        .map(|i| {
            let e = graphlab_core::EdgeId(i as u32);
            (topo.source(e).index(), topo.target(e).index())
        })
        .collect();
    build_graph(topo.num_vertices(), &pairs)
}

pub fn register(engine: &mut Engine<u32, ()>) -> FunctionId {
    engine.register("color", update)
}

pub fn update(scope: &mut ScopeData<'_, u32, ()>, _ctx: &mut UpdateContext<'_>) -> UpdateResult {
    let nbrs = scope.neighbors();
    // a vertex with d neighbors always finds a free color in 0..=d
    let mut used = vec![false; nbrs.len() + 1];
    for &u in nbrs {
        let c = *scope.neighbor(u) as usize;
        if c < used.len() {
            used[c] = true;
        }
    }
    let c = used.iter().position(|&b| !b).expect("pigeonhole") as u32;
    *scope.vertex_mut() = c;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<u32>,
    pub n_colors: u32,
}

impl Coloring {
    pub fn from_colors(colors: Vec<u32>) -> Self {
        let n_colors = colors.iter().filter(|&&c| c != UNCOLORED).map(|&c| c + 1).max().unwrap_or(0);
        Coloring { colors, n_colors }
    }

    /// Errors on the first edge whose endpoints share a color, or on an
    /// uncolored vertex (reported as a self-pair).
    pub fn check(&self, topo: &Topology) -> Result<(), AlgoError> {
        if self.colors.len() != topo.num_vertices() {
            return Err(AlgoError::InvalidModel("coloring size differs from graph".into()));
        }
        for v in topo.vertices() {
            if self.colors[v.index()] == UNCOLORED {
                return Err(AlgoError::ImproperColoring(v, v));
            }
            for &u in topo.neighbors(v) {
                if self.colors[u.index()] == self.colors[v.index()] {
                    return Err(AlgoError::ImproperColoring(v.min(u), v.max(u)));
                }
            }
        }
        Ok(())
    }

    /// Vertices of each color, in color order.
    pub fn classes(&self) -> Vec<Vec<VertexId>> {
        let mut out = vec![Vec::new(); self.n_colors as usize];
        for (i, &c) in self.colors.iter().enumerate() {
            if c != UNCOLORED {
                out[c as usize].push(VertexId::from(i));
            }
        }
        out
    }

    /// One set-schedule stage per color class.
    pub fn stages(&self, f: FunctionId) -> Vec<Stage> {
        self.classes().into_iter().map(|vs| Stage::new(vs, f)).collect()
    }
}

/// Colors `graph` in place with one task per vertex and returns the result.
pub fn color(
    graph: &mut ColorGraph,
    workers: usize,
    spec: &SchedulerSpec,
) -> Result<(Coloring, EngineStats), AlgoError> {
    let mut engine = Engine::new(EngineConfig::new(workers, ConsistencyModel::Edge));
    let f = register(&mut engine);
    let seeds: Vec<Task> = graph.vertex_ids().map(|v| Task::new(v, f)).collect();
    let stats = engine.run(graph, &SharedDataTable::new(), spec, &seeds)?;
    Ok((Coloring::from_colors(graph.vertex_payloads().copied().collect()), stats))
}

/// Greedy coloring visiting vertices in `order` on one thread.
pub fn sequential(topo: &Topology, order: impl IntoIterator<Item = VertexId>) -> Coloring {
    let mut colors = vec![UNCOLORED; topo.num_vertices()];
    for v in order {
        let nbrs = topo.neighbors(v);
        let mut used = vec![false; nbrs.len() + 1];
        for &u in nbrs {
            let c = colors[u.index()] as usize;
            if c < used.len() {
                used[c] = true;
            }
        }
        colors[v.index()] = used.iter().position(|&b| !b).expect("pigeonhole") as u32;
    }
    Coloring::from_colors(colors)
}
