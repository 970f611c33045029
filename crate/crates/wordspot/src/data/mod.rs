//! Dataset manifests, model persistence, and the synthetic corpus generator.

pub mod archive;
pub mod manifest;
pub mod synth;

pub use archive::ModelArchive;
pub use manifest::{read_manifest, write_manifest, LineRecord, WordSpan};
