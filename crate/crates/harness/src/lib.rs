//! Datasets, workloads and the acceptance suite for the `kanva` index.

pub mod dataset;
pub mod suite;
pub mod workload;
