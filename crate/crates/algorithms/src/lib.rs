//! Graph-parallel programs built on `graphlab-core`: loopy belief
//! propagation with online parameter learning, greedy coloring, chromatic
//! Gibbs sampling, CoEM label propagation and the shooting Lasso solver.
//!
//! Each module exposes its payload types, a graph builder from a plain
//! problem description, a `register` function that installs the update
//! function in an [`Engine`](graphlab_core::Engine), and a convenience
//! driver. Problem generators used by tests and benchmarks live next to the
//! algorithm they feed.

pub mod atomic;
pub mod bp;
pub mod coem;
pub mod coloring;
mod error;
pub mod gibbs;
pub mod lasso;
pub mod learn;
pub mod mrf;

pub use atomic::AtomicF64;
pub use error::AlgoError;
pub use mrf::{Matrix, MrfEdge, PairwiseMrf};
