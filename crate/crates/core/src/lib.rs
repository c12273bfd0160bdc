//! Drug–miRNA association prediction with an adjacency-masked graph transformer.

pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod seqembed;
pub mod store;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
