//! Problem files, synthetic generators and the benchmark runner behind the
//! `graphlab` binary.

pub mod formats;
pub mod report;
pub mod runner;
pub mod synth;
