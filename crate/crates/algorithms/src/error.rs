use graphlab_core::scheduling::PlanError;
use graphlab_core::{EngineError, GraphError, VertexId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlgoError {
    /// A message normalizer was zero or not finite. Potentials are checked
    /// for strict positivity at load time, so this signals underflow.
    #[error("message normalizer from {vertex} underflowed")]
    NumericalUnderflow { vertex: VertexId },
    #[error("adjacent vertices {0} and {1} share a color")]
    ImproperColoring(VertexId, VertexId),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
