//! Shared-memory engine for asynchronous, graph-structured computation.
//!
//! A [`graph::DataGraph`] holds user payloads on vertices and directed
//! edges; update functions run on one vertex's scope at a time under a
//! [`consistency::ConsistencyModel`], in an order chosen by a scheduler.
//! Global state lives in the [`sdt::SharedDataTable`] and is maintained by
//! fold/merge/apply syncs.

pub mod consistency;
pub mod engine;
pub mod graph;
pub mod scheduling;
pub mod sdt;

pub use consistency::ConsistencyModel;
pub use engine::{
    Engine, EngineConfig, EngineError, EngineStats, ScopeData, SyncSpec, TerminationReason, UpdateContext, UpdateError,
    UpdateResult,
};
pub use graph::{DataGraph, EdgeId, GraphError, Payload, Topology, VertexId};
pub use scheduling::{FunctionId, SchedulerKind, SchedulerSpec, Task};
pub use sdt::{SdtView, SharedDataTable};
