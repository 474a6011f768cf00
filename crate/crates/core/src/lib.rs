//! Tooling for measuring how far synthetic imagery sits from real imagery.
//!
//! The crate has two halves. The metric engines ([`cmmd`], [`seg_eval`],
//! [`det_eval`]) quantify the appearance gap and check that enhanced images
//! still agree with their ground-truth annotations. The [`pipeline`] drives
//! a two-phase enhancement (diffusion enhancement, then image-to-image
//! translation towards a real dataset) over remote HTTP backends with a
//! content-addressed cache and replayable run manifests.

pub mod cmmd;
pub mod dataset;
pub mod det_eval;
pub mod embedding;
pub mod hash;
pub mod pipeline;
pub mod report;
pub mod seg_eval;

#[cfg(feature = "stub")]
pub mod stub;

pub use cmmd::{cmmd, mmd_sq, CmmdConfig, Estimator, MmdReport};
pub use dataset::{
    AnnotationKind, CategoryMapping, DatasetManifest, DetectionAnnotation, ImageRecord, SegLabelMap,
};
pub use det_eval::{BoundingBox, Detection, MatchResult};
pub use embedding::EmbeddingMatrix;
pub use pipeline::{PhaseKind, PhaseSpec, PipelineConfig, RunManifest, TargetDomain};
pub use report::ComparisonReport;
pub use seg_eval::ConfusionMatrix;

/// Version of the toolkit.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version of the JSON output schemas under `schemas/`.
pub const SCHEMA_VERSION: u32 = 1;
