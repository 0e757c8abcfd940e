//! Driver for the gaugeatlas engine: dataset ingest, configuration, staged
//! pipeline runs with digest-stamped outputs, sweeps and synthetic data.

pub mod config;
pub mod generate;
pub mod ingest;
pub mod output;
pub mod persist;
pub mod pipeline;
pub mod sweep;
