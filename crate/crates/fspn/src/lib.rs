//! Factorize-sum-split-product networks: a tree-structured probabilistic
//! model that factors highly correlated variables into multivariate leaves
//! conditioned on axis-aligned regions of the remaining variables, keeping
//! both density estimation accurate and range-probability queries fast.
//!
//! The crate covers the full pipeline: dataset ingestion and synthetic
//! generation (`data_io`), structure learning (`learning`), marginal /
//! evidence / likelihood queries (`inference`), compilation of discrete
//! Bayesian networks into equivalent models (`compile`), and brute-force
//! oracles plus benchmarks for validating all of it (`evalharness`).

pub mod compile;
pub mod data_io;
pub mod error;
pub mod evalharness;
pub mod fmt;
pub mod inference;
pub mod leaf;
pub mod learning;
pub mod manifest;
pub mod model;

pub use error::{FspnError, Result};
pub use model::{Event, FspnModel, FspnNode, Interval, ModelStats, VariableMeta};
