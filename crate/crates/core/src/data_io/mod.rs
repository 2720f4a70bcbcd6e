//! Annotation and feature ingestion plus the synthetic benchmark generator.

pub mod features;
pub mod manifest;
pub mod synth;

pub use features::{decode_features, encode_features, feature_path, read_features, write_features};
pub use manifest::{load_manifest, Annotation, DatasetManifest, Span, VideoEntry};
pub use synth::{generate_synthetic, SynthConfig, SyntheticDataset};
