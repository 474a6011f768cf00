use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Segmentation,
    Detection,
    None,
}

/// Coordinate convention of detection box files paired with a manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxFormat {
    /// Absolute pixel coordinates.
    #[default]
    Pixel,
    /// Coordinates in `[0, 1]`, scaled by the image width and height.
    Normalized,
}

impl BoxFormat {
    fn is_pixel(&self) -> bool {
        *self == BoxFormat::Pixel
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub source_tag: String,
}

/// An ordered catalog of images. Record order is the iteration order used by
/// every downstream consumer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub root: PathBuf,
    pub annotation_kind: AnnotationKind,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "BoxFormat::is_pixel")]
    pub box_format: BoxFormat,
    pub records: Vec<ImageRecord>,
    /// Directory the manifest was loaded from; relative roots resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Directory that record paths are relative to.
    pub fn resolved_root(&self) -> PathBuf {
        if self.root.is_absolute() {
            self.root.clone()
        } else {
            self.base_dir.join(&self.root)
        }
    }

    pub fn image_path(&self, record: &ImageRecord) -> PathBuf {
        self.resolved_root().join(&record.path)
    }

    pub fn record(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    /// Checks the structural invariants. When `check_files` is set, every
    /// record path must also exist under the root.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        if self.records.is_empty() {
            return Err(DatasetError::Manifest("manifest has no records".into()));
        }
        if self.annotation_kind != AnnotationKind::None && self.categories.is_empty() {
            return Err(DatasetError::Manifest(format!(
                "annotation kind {:?} requires a non-empty category list",
                self.annotation_kind
            )));
        }
        let mut seen_categories = HashSet::new();
        for c in &self.categories {
            if !seen_categories.insert(c.as_str()) {
                return Err(DatasetError::Manifest(format!("duplicate category {c:?}")));
            }
        }
        if self.annotation_kind == AnnotationKind::Segmentation && self.categories.len() > 255 {
            return Err(DatasetError::Manifest(
                "segmentation manifests support at most 255 categories".into(),
            ));
        }

        let root = self.resolved_root();
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            let invalid = |message: String| DatasetError::Validation {
                record: r.id.clone(),
                message,
            };
            if r.id.is_empty() {
                return Err(invalid("empty id".into()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(invalid("duplicate id".into()));
            }
            if r.width == 0 || r.height == 0 {
                return Err(invalid(format!("bad dimensions {}x{}", r.width, r.height)));
            }
            let rel = Path::new(&r.path);
            let escapes = rel.components().any(|c| {
                matches!(
                    c,
                    Component::ParentDir | Component::RootDir | Component::Prefix(_)
                )
            });
            if r.path.is_empty() || escapes {
                return Err(invalid(format!(
                    "path {:?} does not stay under the root",
                    r.path
                )));
            }
            if check_files && !root.join(rel).is_file() {
                return Err(invalid(format!(
                    "image {} does not exist",
                    root.join(rel).display()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_pretty() + "\n").map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Loads and validates a manifest, including the existence of every image.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    manifest.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    manifest.validate(true)?;
    Ok(manifest)
}
