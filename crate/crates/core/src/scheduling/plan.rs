use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use super::{AddOutcome, FunctionId, Pop, Scheduler, SchedulerError, SchedulerKind, Task};
use crate::consistency::{exclusion_set, ConsistencyModel, LockMode};
use crate::graph::{GraphError, Topology, VertexId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("execution plan contains a cycle")]
    CycleDetected,
    #[error("dependency {0} -> {1} does not go to a strictly later stage")]
    BackEdge(usize, usize),
    #[error("dependency refers to unknown node {0}")]
    UnknownNode(usize),
}

/// One `(S_i, f_i)` step of a set schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stage {
    pub vertices: Vec<VertexId>,
    pub function: FunctionId,
}

impl Stage {
    pub fn new(vertices: impl IntoIterator<Item = VertexId>, function: FunctionId) -> Self {
        Stage { vertices: vertices.into_iter().collect(), function }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanNode {
    pub stage: usize,
    pub vertex: VertexId,
    pub function: FunctionId,
}

/// Dependency DAG over (stage, vertex) nodes.
#[derive(Clone, Debug)]
pub struct ExecutionPlan {
    nodes: Vec<PlanNode>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl ExecutionPlan {
    /// Builds a plan from explicit dependencies and checks the structural
    /// invariants: known nodes, edges only to strictly later stages, acyclic.
    pub fn from_parts(nodes: Vec<PlanNode>, deps: &[(usize, usize)]) -> Result<Self, PlanError> {
        let mut preds = vec![Vec::new(); nodes.len()];
        let mut succs = vec![Vec::new(); nodes.len()];
        for &(a, b) in deps {
            if a >= nodes.len() {
                return Err(PlanError::UnknownNode(a));
            }
            if b >= nodes.len() {
                return Err(PlanError::UnknownNode(b));
            }
            preds[b].push(a);
            succs[a].push(b);
        }
        for p in preds.iter_mut().chain(succs.iter_mut()) {
            p.sort_unstable();
            p.dedup();
        }
        let plan = ExecutionPlan { nodes, preds, succs };
        plan.topological_order()?;
        plan.check_stages()?;
        Ok(plan)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn predecessors(&self, node: usize) -> &[usize] {
        &self.preds[node]
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.succs[node]
    }

    pub fn n_stages(&self) -> usize {
        self.nodes.iter().map(|n| n.stage + 1).max().unwrap_or(0)
    }

    pub fn n_edges(&self) -> usize {
        self.succs.iter().map(Vec::len).sum()
    }

    pub fn find(&self, stage: usize, vertex: VertexId) -> Option<usize> {
        self.nodes.iter().position(|n| n.stage == stage && n.vertex == vertex)
    }

    /// Kahn's algorithm; fails if a cycle remains.
    pub fn topological_order(&self) -> Result<Vec<usize>, PlanError> {
        let mut indeg: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &s in &self.succs[i] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    queue.push_back(s);
                }
            }
        }
        if order.len() == self.len() {
            Ok(order)
        } else {
            Err(PlanError::CycleDetected)
        }
    }

    fn check_stages(&self) -> Result<(), PlanError> {
        for (a, succ) in self.succs.iter().enumerate() {
            for &b in succ {
                if self.nodes[a].stage >= self.nodes[b].stage {
                    return Err(PlanError::BackEdge(a, b));
                }
            }
        }
        Ok(())
    }
}

/// Compiles a stage sequence into a dependency DAG.
///
/// Dependencies are tracked per data unit (vertex payload or edge payload):
/// a read depends on the unit's latest writers, a write on those writers and
/// every reader since. Effects of a stage are recorded only after the whole
/// stage is scanned, so nodes of one stage never depend on each other.
/// Duplicate vertices within a stage are collapsed.
pub fn compile_plan(stages: &[Stage], topo: &Topology, model: ConsistencyModel) -> Result<ExecutionPlan, PlanError> {
    let nv = topo.num_vertices();
    let units = nv + topo.num_edges();
    let mut writers: Vec<Vec<usize>> = vec![Vec::new(); units];
    let mut readers: Vec<Vec<usize>> = vec![Vec::new(); units];

    let mut nodes = Vec::new();
    let mut deps = Vec::new();
    for (si, stage) in stages.iter().enumerate() {
        let mut vs = stage.vertices.clone();
        vs.sort_unstable();
        vs.dedup();
        let mut effects: Vec<(usize, usize, LockMode)> = Vec::new();
        for v in vs {
            let set = exclusion_set(model, v, topo)?;
            let id = nodes.len();
            nodes.push(PlanNode { stage: si, vertex: v, function: stage.function });
            for (unit, mode) in set.units() {
                let u = unit.dense_index(nv);
                deps.extend(writers[u].iter().map(|&w| (w, id)));
                if mode == LockMode::Write {
                    deps.extend(readers[u].iter().map(|&r| (r, id)));
                }
                effects.push((u, id, mode));
            }
        }
        // a stage that writes a unit replaces its writer set with all of the
        // stage's writers, so conflicting nodes within one stage are all kept
        let mut rewritten = vec![false; units];
        for &(u, _, mode) in &effects {
            if mode == LockMode::Write && !rewritten[u] {
                rewritten[u] = true;
                writers[u].clear();
                readers[u].clear();
            }
        }
        for (u, id, mode) in effects {
            match mode {
                LockMode::Write => writers[u].push(id),
                LockMode::Read => readers[u].push(id),
            }
        }
    }
    ExecutionPlan::from_parts(nodes, &deps)
}

struct DispatchState {
    remaining_preds: Vec<usize>,
    ready: BinaryHeap<Reverse<(usize, VertexId, usize)>>,
    round: usize,
    left_in_round: usize,
    current: Vec<Option<usize>>,
}

/// Greedy list dispatch of an execution plan: a node is poppable as soon as
/// all its predecessors have completed. Ready nodes are handed out in
/// ascending (stage, vertex) order. The plan can be re-run `rounds` times;
/// a round starts once the previous one has fully completed.
pub struct SetScheduler {
    plan: Arc<ExecutionPlan>,
    rounds: usize,
    state: Mutex<DispatchState>,
    outstanding: AtomicUsize,
}

impl SetScheduler {
    pub fn new(plan: Arc<ExecutionPlan>, rounds: usize, n_workers: usize) -> Self {
        let mut state = DispatchState {
            remaining_preds: Vec::new(),
            ready: BinaryHeap::new(),
            round: 0,
            left_in_round: 0,
            current: vec![None; n_workers.max(1)],
        };
        if rounds > 0 {
            Self::arm(&plan, &mut state);
        }
        SetScheduler { outstanding: AtomicUsize::new(plan.len() * rounds), plan, rounds, state: Mutex::new(state) }
    }

    pub fn plan(&self) -> &ExecutionPlan {
        &self.plan
    }

    fn arm(plan: &ExecutionPlan, st: &mut DispatchState) {
        st.remaining_preds = plan.preds.iter().map(Vec::len).collect();
        st.left_in_round = plan.len();
        for (i, n) in plan.nodes.iter().enumerate() {
            if plan.preds[i].is_empty() {
                st.ready.push(Reverse((n.stage, n.vertex, i)));
            }
        }
    }
}

impl Scheduler for SetScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Set
    }

    fn add_task(&self, _task: Task, _origin: usize) -> Result<AddOutcome, SchedulerError> {
        Err(SchedulerError::StaticScheduler(SchedulerKind::Set))
    }

    fn pop_task(&self, worker: usize) -> Pop {
        let mut st = self.state.lock();
        if let Some(Reverse((_, _, i))) = st.ready.pop() {
            let slot = worker % st.current.len();
            debug_assert!(st.current[slot].is_none(), "worker popped twice without completing");
            st.current[slot] = Some(i);
            let n = self.plan.nodes[i];
            return Pop::Task(Task::new(n.vertex, n.function));
        }
        if self.outstanding.load(Ordering::SeqCst) == 0 {
            Pop::Empty
        } else {
            Pop::WaitForBarrier
        }
    }

    fn complete(&self, worker: usize, _task: &Task) {
        let mut st = self.state.lock();
        let slot = worker % st.current.len();
        let i = st.current[slot].take().expect("complete without a popped node");
        for &s in &self.plan.succs[i] {
            st.remaining_preds[s] -= 1;
            if st.remaining_preds[s] == 0 {
                let n = self.plan.nodes[s];
                st.ready.push(Reverse((n.stage, n.vertex, s)));
            }
        }
        st.left_in_round -= 1;
        if st.left_in_round == 0 && st.round + 1 < self.rounds {
            st.round += 1;
            Self::arm(&self.plan, &mut st);
        }
        self.outstanding.fetch_sub(1, Ordering::SeqCst);
    }

    fn outstanding(&self) -> usize {
        self.outstanding.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DataGraph;

    fn undirected(n: u32, edges: &[(u32, u32)]) -> DataGraph<(), ()> {
        let mut g = DataGraph::new();
        for _ in 0..n {
            g.add_vertex(()).unwrap();
        }
        for &(a, b) in edges {
            g.add_edge(VertexId(a), VertexId(b), ()).unwrap();
            g.add_edge(VertexId(b), VertexId(a), ()).unwrap();
        }
        g.freeze();
        g
    }

    fn deps_of(plan: &ExecutionPlan, stage: usize, v: u32) -> Vec<u32> {
        let i = plan.find(stage, VertexId(v)).unwrap();
        let mut d: Vec<u32> = plan.predecessors(i).iter().map(|&p| plan.nodes()[p].vertex.0).collect();
        d.sort_unstable();
        d
    }

    // vertices v1..v5 map to ids 0..4
    fn five_vertex() -> DataGraph<(), ()> {
        undirected(5, &[(0, 2), (1, 2), (2, 4), (3, 4)])
    }

    #[test]
    fn two_stage_dependency_structure() {
        let g = five_vertex();
        let f = FunctionId(0);
        let stages =
            [Stage::new([VertexId(0), VertexId(1), VertexId(4)], f), Stage::new([VertexId(2), VertexId(3)], f)];
        let plan = compile_plan(&stages, g.topology().unwrap(), ConsistencyModel::Edge).unwrap();
        assert_eq!(plan.len(), 5);
        assert_eq!(deps_of(&plan, 1, 2), vec![0, 1, 4]);
        assert_eq!(deps_of(&plan, 1, 3), vec![4]);
        for v in [0, 1, 4] {
            assert!(deps_of(&plan, 0, v).is_empty());
        }
    }

    #[test]
    fn early_release_after_predecessor() {
        let g = five_vertex();
        let f = FunctionId(0);
        let stages =
            [Stage::new([VertexId(0), VertexId(1), VertexId(4)], f), Stage::new([VertexId(2), VertexId(3)], f)];
        let plan = compile_plan(&stages, g.topology().unwrap(), ConsistencyModel::Edge).unwrap();
        let s = SetScheduler::new(Arc::new(plan), 1, 3);
        let pop = |w| match s.pop_task(w) {
            Pop::Task(t) => t.vertex.0,
            other => panic!("{other:?}"),
        };
        assert_eq!(pop(0), 0);
        assert_eq!(pop(1), 1);
        assert_eq!(pop(2), 4);
        s.complete(2, &Task::new(VertexId(4), f));
        // v4 runs while v1 and v2 are still in flight
        assert_eq!(pop(2), 3);
        assert_eq!(s.pop_task(2), Pop::WaitForBarrier);
    }

    #[test]
    fn single_stage_and_disjoint_stages_have_no_edges() {
        let g = undirected(6, &[(0, 1), (4, 5)]);
        let t = g.topology().unwrap();
        let f = FunctionId(0);
        let one = compile_plan(&[Stage::new((0..6).map(VertexId), f)], t, ConsistencyModel::Full).unwrap();
        assert_eq!(one.n_edges(), 0);
        let two =
            compile_plan(&[Stage::new([VertexId(0)], f), Stage::new([VertexId(4)], f)], t, ConsistencyModel::Edge)
                .unwrap();
        assert_eq!(two.n_edges(), 0);
    }

    #[test]
    fn chain_dispatches_in_order_and_repeats() {
        let g = undirected(1, &[]);
        let f = FunctionId(0);
        let stages: Vec<Stage> = (0..3).map(|_| Stage::new([VertexId(0)], f)).collect();
        let plan = compile_plan(&stages, g.topology().unwrap(), ConsistencyModel::Vertex).unwrap();
        assert_eq!(plan.n_edges(), 2);
        let s = SetScheduler::new(Arc::new(plan), 2, 2);
        let mut count = 0;
        loop {
            match s.pop_task(count % 2) {
                Pop::Task(t) => {
                    assert_eq!(s.pop_task(1 - count % 2), Pop::WaitForBarrier);
                    s.complete(count % 2, &t);
                    count += 1;
                }
                Pop::Empty => break,
                Pop::WaitForBarrier => panic!("chain stalled"),
            }
        }
        assert_eq!(count, 6);
    }

    #[test]
    fn independent_nodes_all_ready() {
        let g = undirected(8, &[]);
        let f = FunctionId(0);
        let plan = compile_plan(&[Stage::new((0..8).map(VertexId), f)], g.topology().unwrap(), ConsistencyModel::Edge)
            .unwrap();
        let s = SetScheduler::new(Arc::new(plan), 1, 8);
        for w in 0..8 {
            assert!(matches!(s.pop_task(w), Pop::Task(_)));
        }
    }

    #[test]
    fn write_after_read_is_ordered() {
        // stage 0 reads v1 (edge model at v0); stage 1 writes v1
        let g = undirected(2, &[(0, 1)]);
        let f = FunctionId(0);
        let plan = compile_plan(
            &[Stage::new([VertexId(0)], f), Stage::new([VertexId(1)], f)],
            g.topology().unwrap(),
            ConsistencyModel::Edge,
        )
        .unwrap();
        assert_eq!(deps_of(&plan, 1, 1), vec![0]);
    }

    #[test]
    fn malformed_plans_are_rejected() {
        let n = |stage| PlanNode { stage, vertex: VertexId(0), function: FunctionId(0) };
        assert_eq!(
            ExecutionPlan::from_parts(vec![n(0), n(1)], &[(0, 1), (1, 0)]).unwrap_err(),
            PlanError::CycleDetected
        );
        assert_eq!(ExecutionPlan::from_parts(vec![n(0), n(0)], &[(0, 1)]).unwrap_err(), PlanError::BackEdge(0, 1));
        assert!(ExecutionPlan::from_parts(vec![n(0)], &[(0, 3)]).is_err());
        let g = undirected(2, &[]);
        assert!(compile_plan(
            &[Stage::new([VertexId(7)], FunctionId(0))],
            g.topology().unwrap(),
            ConsistencyModel::Edge
        )
        .is_err());
    }
}
