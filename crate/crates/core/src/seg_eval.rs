//! Confusion-matrix based segmentation evaluation (per-class IoU and mIoU).
//!
//! Pixels whose ground truth is the ignore index are skipped. Pixels whose
//! *prediction* is the ignore index are counted in a separate void column:
//! they enlarge the union of the ground-truth class without matching it.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_category_mapping, read_label_png, AnnotationKind, CategoryMapping, DatasetError,
    DatasetManifest, SegLabelMap, DEFAULT_IGNORE_INDEX,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MapRole {
    GroundTruth,
    Prediction,
}

#[derive(Debug, thiserror::Error)]
pub enum SegEvalError {
    #[error("ground truth is {gt_w}x{gt_h} but prediction is {pred_w}x{pred_h}")]
    DimensionMismatch {
        gt_w: u32,
        gt_h: u32,
        pred_w: u32,
        pred_h: u32,
    },

    #[error("{role:?} label {label} at pixel ({x}, {y}) is outside the {k} evaluated classes")]
    LabelOutOfRange {
        role: MapRole,
        x: u32,
        y: u32,
        label: u8,
        k: usize,
    },

    #[error("no class has a non-empty union; mIoU is undefined")]
    NoDefinedClasses,

    #[error("image {id}: {source}")]
    Image {
        id: String,
        #[source]
        source: DatasetError,
    },

    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// `counts[g * k + p]` is the number of pixels with ground truth `g`
/// predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    void_pred: Vec<u64>,
    pixels_ignored: u64,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
            void_pred: vec![0; k],
            pixels_ignored: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    /// Pixels of ground-truth class `gt` predicted as the ignore index.
    pub fn void_pred(&self, gt: usize) -> u64 {
        self.void_pred[gt]
    }

    pub fn pixels_ignored(&self) -> u64 {
        self.pixels_ignored
    }

    pub fn pixels_evaluated(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.void_pred.iter().sum::<u64>()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::new(self.k);
        for g in 0..self.k {
            for p in 0..self.k {
                t.counts[p * self.k + g] = self.get(g, p);
            }
        }
        t.void_pred = self.void_pred.clone();
        t.pixels_ignored = self.pixels_ignored;
        t
    }

    /// Element-wise sum. Panics if the class counts differ.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(
            self.k, other.k,
            "merging confusion matrices of different size"
        );
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        self.void_pred
            .iter_mut()
            .zip(&other.void_pred)
            .for_each(|(a, b)| *a += b);
        self.pixels_ignored += other.pixels_ignored;
    }

    /// Adds the joint pixel counts of one image. On error the matrix is unchanged.
    pub fn accumulate(&mut self, gt: &SegLabelMap, pred: &SegLabelMap) -> Result<(), SegEvalError> {
        if gt.width != pred.width || gt.height != pred.height {
            return Err(SegEvalError::DimensionMismatch {
                gt_w: gt.width,
                gt_h: gt.height,
                pred_w: pred.width,
                pred_h: pred.height,
            });
        }
        let k = self.k;
        let mut delta = ConfusionMatrix::new(k);
        for (i, (&g, &p)) in gt.labels.iter().zip(&pred.labels).enumerate() {
            if g == gt.ignore_index {
                delta.pixels_ignored += 1;
                continue;
            }
            let out_of_range = |role, label| {
                let (x, y) = gt.coords(i);
                SegEvalError::LabelOutOfRange {
                    role,
                    x,
                    y,
                    label,
                    k,
                }
            };
            if g as usize >= k {
                return Err(out_of_range(MapRole::GroundTruth, g));
            }
            if p == pred.ignore_index {
                delta.void_pred[g as usize] += 1;
            } else if p as usize >= k {
                return Err(out_of_range(MapRole::Prediction, p));
            } else {
                delta.counts[g as usize * k + p as usize] += 1;
            }
        }
        self.merge(&delta);
        Ok(())
    }

    /// IoU of every class; `None` where the union is empty.
    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        (0..self.k)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..self.k).map(|p| self.get(c, p)).sum::<u64>() + self.void_pred[c];
                let col: u64 = (0..self.k).map(|g| self.get(g, c)).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    /// Mean IoU over classes with a non-empty union.
    pub fn miou(&self) -> Result<f64, SegEvalError> {
        let defined: Vec<f64> = self.iou_per_class().into_iter().flatten().collect();
        if defined.is_empty() {
            return Err(SegEvalError::NoDefinedClasses);
        }
        Ok(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// JSON summary emitted by `eval-seg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    pub per_class_iou: BTreeMap<String, Option<f64>>,
    /// Class names in evaluation order.
    pub classes: Vec<String>,
    pub miou: f64,
    pub pixels_evaluated: u64,
    pub pixels_ignored: u64,
    pub void_pred_pixels: u64,
    /// How prediction-side ignore pixels were scored.
    pub void_pred_policy: String,
    pub n_images: usize,
}

impl SegReport {
    pub fn from_matrix(
        cm: &ConfusionMatrix,
        classes: &[String],
        n_images: usize,
    ) -> Result<Self, SegEvalError> {
        let iou = cm.iou_per_class();
        Ok(Self {
            per_class_iou: classes.iter().cloned().zip(iou).collect(),
            classes: classes.to_vec(),
            miou: cm.miou()?,
            pixels_evaluated: cm.pixels_evaluated(),
            pixels_ignored: cm.pixels_ignored(),
            void_pred_pixels: cm.void_pred.iter().sum(),
            void_pred_policy: "counted_against_gt_class".into(),
            n_images,
        })
    }
}

/// Evaluates every record of a segmentation manifest. Ground-truth maps
/// (`<gt_dir>/<id>.png`, source categories) are relabeled through `mapping`;
/// prediction maps (`<pred_dir>/<id>.png`) are read in target space.
pub fn evaluate_directories(
    manifest: &DatasetManifest,
    gt_dir: &Path,
    pred_dir: &Path,
    mapping: &CategoryMapping,
) -> Result<(ConfusionMatrix, Vec<String>), SegEvalError> {
    if manifest.annotation_kind != AnnotationKind::Segmentation {
        return Err(DatasetError::Manifest(format!(
            "manifest {:?} is not a segmentation dataset",
            manifest.name
        ))
        .into());
    }
    let resolved = mapping.resolve(&manifest.categories)?;
    let k = resolved.targets.len();
    let per_image: Vec<ConfusionMatrix> = manifest
        .records
        .par_iter()
        .map(|record| {
            let wrap = |source| SegEvalError::Image {
                id: record.id.clone(),
                source,
            };
            let file = format!("{}.png", record.id);
            let gt = read_label_png(&gt_dir.join(&file), DEFAULT_IGNORE_INDEX).map_err(wrap)?;
            gt.check_dimensions(record.width, record.height)
                .map_err(wrap)?;
            let gt = apply_category_mapping(&gt, &resolved).map_err(wrap)?;
            let pred = read_label_png(&pred_dir.join(&file), DEFAULT_IGNORE_INDEX).map_err(wrap)?;
            let mut cm = ConfusionMatrix::new(k);
            cm.accumulate(&gt, &pred).map_err(|e| match e {
                SegEvalError::LabelOutOfRange { .. } | SegEvalError::DimensionMismatch { .. } => {
                    SegEvalError::Image {
                        id: record.id.clone(),
                        source: DatasetError::Manifest(e.to_string()),
                    }
                }
                other => other,
            })?;
            Ok(cm)
        })
        .collect::<Result<_, SegEvalError>>()?;
    let mut total = ConfusionMatrix::new(k);
    for cm in &per_image {
        total.merge(cm);
    }
    Ok((total, resolved.targets))
}
