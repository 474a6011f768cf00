//! Dataset manifests, segmentation label maps, detection annotations and
//! category mappings.

mod detections;
mod labels;
mod manifest;
mod mapping;

pub use detections::{
    parse_box_lines, read_box_file, validate_detections, BoxLine, ClampedBox, DetectionAnnotation,
    DetectionValidation, RejectedBox,
};
pub use labels::{read_label_png, write_label_png, SegLabelMap, DEFAULT_IGNORE_INDEX};
pub use manifest::{load_manifest, AnnotationKind, BoxFormat, DatasetManifest, ImageRecord};
pub use mapping::{
    apply_category_mapping, default_vkitti2_mapping, CategoryMapping, MappingRule, ResolvedMapping,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid record {record:?}: {message}")]
    Validation { record: String, message: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("category mapping: {0}")]
    Mapping(String),

    #[error("label {label} at pixel ({x}, {y}) is outside the {categories} known categories")]
    LabelOutOfRange {
        x: u32,
        y: u32,
        label: u8,
        categories: usize,
    },

    #[error("label map is {actual_w}x{actual_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },

    #[error("label image {path}: {message}")]
    LabelImage { path: PathBuf, message: String },
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;
