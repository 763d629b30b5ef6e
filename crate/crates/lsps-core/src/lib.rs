//! Large-scale propensity score (LSPS) engine: regularized propensity
//! estimation, equipoise and covariate-balance diagnostics, stratified effect
//! estimation, and simulation benchmarks for confounder pinpointability.

pub mod balance;
pub mod dataset;
pub mod effect;
pub mod error;
pub mod pipeline;
pub mod propensity;
pub mod rng;
pub mod simbench;
pub mod solver;
pub mod sparse;
pub mod stats;

pub use dataset::{CohortDataset, Outcome};
pub use error::{LspsError, Result};
pub use sparse::{Column, MatrixView, SparseMatrix};
