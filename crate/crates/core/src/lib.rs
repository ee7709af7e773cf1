//! Fake-news detection as classification of per-article heterogeneous
//! social-context graphs.

pub mod error;
pub mod fixtures;
pub mod gnn;
pub mod harness;
pub mod hetgraph;
pub mod ingest;
pub mod numkit;
pub mod synth;

pub use error::{Error, Result};
