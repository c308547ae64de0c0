//! Hypergraph neural networks and feature-poisoning attacks against them.

pub mod attack;
pub mod data_io;
pub mod error;
pub mod experiment;
pub mod hgnn;
pub mod hypergraph;
pub mod sparse;

pub use error::{Error, Result};
