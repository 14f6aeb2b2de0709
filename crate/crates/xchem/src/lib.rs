//! Pipeline runtime: configuration, file formats, model backends and the
//! phase commands behind the `xchem` binary.

pub mod chat;
pub mod config;
pub mod embed;
pub mod engine;
pub mod fsutil;
pub mod harness;
pub mod ingest;
pub mod report;
pub mod select;
pub mod synth;
