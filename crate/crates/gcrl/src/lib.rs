//! Experiment front end for `gcrl-core`: layered configuration, CSV/JSON
//! metrics, binary checkpoints, multi-threaded collection, the benchmark
//! suite runner and the throughput bench.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod executor;
pub mod experiment;
pub mod metrics;
pub mod suite;
