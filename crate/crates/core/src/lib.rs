pub mod anchors;
mod binio;
pub mod error;
pub mod interval;
pub mod nn;
pub mod sampling;
pub mod ranker;
pub mod data_io;
pub mod classifier;
pub mod metrics;
pub mod detect;
pub mod pipeline;
pub mod cli;
