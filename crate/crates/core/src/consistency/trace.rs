//! Execution traces and the offline sequential-consistency checker.
//!
//! Every record carries logical start/end ticks drawn from one global
//! counter: start after the scope locks are held, end before they are
//! released. Two updates whose exclusion sets conflict must therefore have
//! disjoint tick intervals; the checker verifies that and returns the
//! equivalent sequential order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{exclusion_set, ConsistencyModel, DataUnit, LockMode};
use crate::graph::{GraphError, Topology, VertexId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub task: u64,
    pub vertex: VertexId,
    pub function: u32,
    pub worker: u32,
    pub start: u64,
    pub end: Option<u64>,
    pub locks: Vec<(VertexId, LockMode)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("task {0} has no end tick")]
    IncompleteTrace(u64),
    #[error("worker {worker} has overlapping or unordered ticks at task {task}")]
    NonMonotonicWorker { worker: u32, task: u64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConflictPair {
    pub first: u64,
    pub second: u64,
    pub unit: DataUnit,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Task ids in an equivalent sequential order.
    Serializable(Vec<u64>),
    Violation(ConflictPair),
}

impl Verdict {
    pub fn is_serializable(&self) -> bool {
        matches!(self, Verdict::Serializable(_))
    }
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks that every record is complete and that each worker's
    /// intervals are strictly increasing.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut per_worker: Vec<(u32, u64, u64, u64)> = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let end = r.end.ok_or(TraceError::IncompleteTrace(r.task))?;
            if end < r.start {
                return Err(TraceError::NonMonotonicWorker { worker: r.worker, task: r.task });
            }
            per_worker.push((r.worker, r.start, end, r.task));
        }
        per_worker.sort_unstable();
        for w in per_worker.windows(2) {
            if w[0].0 == w[1].0 && w[0].2 >= w[1].1 {
                return Err(TraceError::NonMonotonicWorker { worker: w[1].0, task: w[1].3 });
            }
        }
        Ok(())
    }

    /// One record per line:
    /// `task vertex function worker start end locks`, where `locks` is a
    /// comma separated list of `R<v>`/`W<v>` (or `-`).
    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "# task vertex function worker start end locks")?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            let end = r.end.map_or_else(|| "-".to_string(), |e| e.to_string());
            let _ = write!(line, "{} {} {} {} {} {} ", r.task, r.vertex.0, r.function, r.worker, r.start, end);
            if r.locks.is_empty() {
                line.push('-');
            }
            for (i, (v, mode)) in r.locks.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push(if *mode == LockMode::Write { 'W' } else { 'R' });
                let _ = write!(line, "{}", v.0);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn parse(input: impl BufRead) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| TraceError::Parse { line: no, msg: msg.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(err("expected 7 fields"));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|_| err(&format!("bad number {s:?}")));
            let end = if fields[5] == "-" { None } else { Some(num(fields[5])?) };
            let mut locks = Vec::new();
            if fields[6] != "-" {
                for item in fields[6].split(',') {
                    let (mode, rest) = match item.as_bytes().first() {
                        Some(b'W') => (LockMode::Write, &item[1..]),
                        Some(b'R') => (LockMode::Read, &item[1..]),
                        _ => return Err(err(&format!("bad lock {item:?}"))),
                    };
                    locks.push((VertexId(num(rest)? as u32), mode));
                }
            }
            records.push(TraceRecord {
                task: num(fields[0])?,
                vertex: VertexId(num(fields[1])? as u32),
                function: num(fields[2])? as u32,
                worker: num(fields[3])? as u32,
                start: num(fields[4])?,
                end,
                locks,
            });
        }
        Ok(ExecutionTrace { records })
    }
}

/// Builds the conflict graph of `trace` under `model` and either returns an
/// equivalent sequential order or the first pair of conflicting updates that
/// overlapped in time.
pub fn check_sequential_consistency(
    trace: &ExecutionTrace,
    model: ConsistencyModel,
    topo: &Topology,
) -> Result<Verdict, TraceError> {
    trace.validate()?;
    let n_vertices = topo.num_vertices();
    let n_units = n_vertices + topo.num_edges();
    let records = &trace.records;

    // accesses per data unit: (start, record index, mode)
    let mut accesses: Vec<Vec<(u64, usize, LockMode)>> = vec![Vec::new(); n_units];
    for (i, r) in records.iter().enumerate() {
        let set = exclusion_set(model, r.vertex, topo)?;
        for (unit, mode) in set.units() {
            accesses[unit.dense_index(n_vertices)].push((r.start, i, mode));
        }
    }

    let end = |i: usize| records[i].end.unwrap_or(u64::MAX);
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); records.len()];
    let mut indegree = vec![0usize; records.len()];
    for (u, list) in accesses.iter_mut().enumerate() {
        list.sort_unstable();
        let unit = if u < n_vertices {
            DataUnit::Vertex(VertexId(u as u32))
        } else {
            DataUnit::Edge(crate::graph::EdgeId((u - n_vertices) as u32))
        };
        // latest end among writes / among any access so far
        let mut max_write: Option<(u64, usize)> = None;
        let mut max_any: Option<(u64, usize)> = None;
        let mut last_write: Option<usize> = None;
        let mut readers: Vec<usize> = Vec::new();
        for &(start, i, mode) in list.iter() {
            let blocker = if mode == LockMode::Write { max_any } else { max_write };
            if let Some((e, j)) = blocker {
                if e >= start {
                    return Ok(Verdict::Violation(ConflictPair {
                        first: records[j].task,
                        second: records[i].task,
                        unit,
                    }));
                }
            }
            let mut link = |j: usize| {
                succ[j].push(i);
                indegree[i] += 1;
            };
            if let Some(w) = last_write {
                link(w);
            }
            if mode == LockMode::Write {
                for r in readers.drain(..) {
                    link(r);
                }
                last_write = Some(i);
            } else {
                readers.push(i);
            }
            let e = end(i);
            if max_any.is_none_or(|(m, _)| e > m) {
                max_any = Some((e, i));
            }
            if mode == LockMode::Write && max_write.is_none_or(|(m, _)| e > m) {
                max_write = Some((e, i));
            }
        }
    }

    let mut ready: BinaryHeap<Reverse<(u64, usize)>> =
        indegree.iter().enumerate().filter(|(_, d)| **d == 0).map(|(i, _)| Reverse((records[i].start, i))).collect();
    let mut order = Vec::with_capacity(records.len());
    while let Some(Reverse((_, i))) = ready.pop() {
        order.push(records[i].task);
        for &j in &succ[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.push(Reverse((records[j].start, j)));
            }
        }
    }
    debug_assert_eq!(order.len(), records.len(), "real-time conflict graph is acyclic");
    Ok(Verdict::Serializable(order))
}
