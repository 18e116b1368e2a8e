pub mod aligner;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod maps;
pub mod ngrammine;
pub mod pivots;
pub mod stats;
pub mod synth;
pub mod tsv;

pub use error::{Error, Result};
