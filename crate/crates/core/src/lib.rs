//! Shift-robust semi-supervised node classification.
//!
//! The crate builds graph-localized (biased) training splits with
//! personalized PageRank, measures the representation shift they induce with
//! central moment discrepancy and kernel MMD, and trains GNN classifiers
//! whose objective corrects that shift with a CMD regularizer and kernel
//! mean matching instance weights.

pub mod discrepancy;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod kmm;
pub mod models;
pub mod nn;
pub mod ppr;
pub mod rng;
pub mod sampler;
pub mod sparse;
pub mod trainer;

pub use error::{Error, Result};
