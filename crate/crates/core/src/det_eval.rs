//! Detection evaluation: box IoU, greedy confidence-ordered matching,
//! all-point interpolated average precision and mAP at a single IoU threshold.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, DetectionAnnotation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetEvalError {
    #[error("degenerate box {0:?}")]
    DegenerateBox(BoundingBox),

    #[error("confidence {0} is outside [0, 1]")]
    BadConfidence(f64),

    #[error("IoU threshold {0} is outside (0, 1]")]
    BadThreshold(f64),

    #[error("detections passed to match_detections must share one image and class")]
    MixedGroup,

    #[error("class has no ground truth; average precision is undefined")]
    NoGroundTruth,

    #[error("no class has ground truth; mAP is undefined")]
    NoDefinedClasses,

    #[error("class index {class} is outside the {categories} categories")]
    UnknownClass { class: usize, categories: usize },
}

/// Axis-aligned box in pixels, `(x_min, y_min)` to `(x_max, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, DetEvalError> {
        let b = Self::new_unchecked(x_min, y_min, x_max, y_max);
        if b.is_degenerate() {
            return Err(DetEvalError::DegenerateBox(b));
        }
        Ok(b)
    }

    pub const fn new_unchecked(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// True unless `x_min < x_max` and `y_min < y_max` (NaN counts as degenerate).
    pub fn is_degenerate(&self) -> bool {
        !(self.x_min < self.x_max && self.y_min < self.y_max)
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    fn iou_unchecked(&self, other: &BoundingBox) -> f64 {
        let iw = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let ih = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        inter / (self.area() + other.area() - inter)
    }
}

pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64, DetEvalError> {
    for bx in [a, b] {
        if bx.is_degenerate() {
            return Err(DetEvalError::DegenerateBox(*bx));
        }
    }
    Ok(a.iou_unchecked(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_index: usize,
    pub confidence: f64,
    pub bbox: BoundingBox,
}

impl Detection {
    fn validate(&self) -> Result<(), DetEvalError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(DetEvalError::BadConfidence(self.confidence));
        }
        if self.bbox.is_degenerate() {
            return Err(DetEvalError::DegenerateBox(self.bbox));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    #[serde(rename = "TP")]
    Tp,
    #[serde(rename = "FP")]
    Fp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// One flag per detection, in descending confidence order.
    pub flags: Vec<Flag>,
    /// `order[r]` is the input index of the detection at rank `r`.
    pub order: Vec<usize>,
    pub n_gt: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.flags.iter().filter(|f| **f == Flag::Tp).count()
    }
}

/// Indices sorted by descending confidence; ties keep input order.
fn confidence_order(confidences: impl Iterator<Item = f64>) -> Vec<usize> {
    let conf: Vec<f64> = confidences.collect();
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]));
    order
}

/// Unmatched ground truth with the highest IoU at or above `threshold`;
/// ties go to the lowest index.
fn best_unmatched(
    det: &BoundingBox,
    gts: &[BoundingBox],
    used: &[bool],
    threshold: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        if used[g] {
            continue;
        }
        let iou = det.iou_unchecked(gt);
        if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
            best = Some((g, iou));
        }
    }
    best.map(|(g, _)| g)
}

fn check_threshold(threshold: f64) -> Result<(), DetEvalError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(DetEvalError::BadThreshold(threshold))
    }
}

/// Greedy matching of one image's detections of one class against its
/// ground truth. Each detection, highest confidence first, claims the
/// unmatched ground truth it overlaps most (IoU >= `threshold`) or is a
/// false positive.
pub fn match_detections(
    detections: &[Detection],
    ground_truth: &[BoundingBox],
    threshold: f64,
) -> Result<MatchResult, DetEvalError> {
    check_threshold(threshold)?;
    if let Some(first) = detections.first() {
        if detections
            .iter()
            .any(|d| d.image_id != first.image_id || d.class_index != first.class_index)
        {
            return Err(DetEvalError::MixedGroup);
        }
    }
    for d in detections {
        d.validate()?;
    }
    for g in ground_truth {
        if g.is_degenerate() {
            return Err(DetEvalError::DegenerateBox(*g));
        }
    }
    let order = confidence_order(detections.iter().map(|d| d.confidence));
    let mut used = vec![false; ground_truth.len()];
    let flags = order
        .iter()
        .map(
            |&i| match best_unmatched(&detections[i].bbox, ground_truth, &used, threshold) {
                Some(g) => {
                    used[g] = true;
                    Flag::Tp
                }
                None => Flag::Fp,
            },
        )
        .collect();
    Ok(MatchResult {
        flags,
        order,
        n_gt: ground_truth.len(),
    })
}

/// Area under the precision/recall curve, with precision at each rank
/// replaced by the best precision at any equal or deeper rank.
pub fn average_precision(result: &MatchResult) -> Result<f64, DetEvalError> {
    if result.n_gt == 0 {
        return Err(DetEvalError::NoGroundTruth);
    }
    let mut tp = 0usize;
    let mut precision: Vec<f64> = result
        .flags
        .iter()
        .enumerate()
        .map(|(rank, f)| {
            if *f == Flag::Tp {
                tp += 1;
            }
            tp as f64 / (rank + 1) as f64
        })
        .collect();
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let area: f64 = result
        .flags
        .iter()
        .zip(&precision)
        .filter(|(f, _)| **f == Flag::Tp)
        .map(|(_, p)| *p)
        .sum();
    Ok(area / result.n_gt as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub n_gt: usize,
    pub n_pred: usize,
    pub true_positives: usize,
}

/// JSON summary emitted by `eval-det`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetReport {
    pub per_class_ap: BTreeMap<String, Option<f64>>,
    pub per_class_counts: BTreeMap<String, ClassCounts>,
    pub classes: Vec<String>,
    pub map50: f64,
    pub iou_threshold: f64,
    pub interpolation: String,
    pub n_images: usize,
    pub n_gt: usize,
    pub n_pred: usize,
}

/// Per-class match results across a whole dataset. Detections of a class are
/// ranked globally by confidence and matched within their own image.
pub fn match_dataset(
    detections: &[Detection],
    ground_truth: &[DetectionAnnotation],
    n_classes: usize,
    threshold: f64,
) -> Result<Vec<MatchResult>, DetEvalError> {
    check_threshold(threshold)?;
    let mut gts: Vec<HashMap<&str, Vec<BoundingBox>>> = vec![HashMap::new(); n_classes];
    for g in ground_truth {
        if g.class_index >= n_classes {
            return Err(DetEvalError::UnknownClass {
                class: g.class_index,
                categories: n_classes,
            });
        }
        if g.bbox.is_degenerate() {
            return Err(DetEvalError::DegenerateBox(g.bbox));
        }
        gts[g.class_index]
            .entry(g.image_id.as_str())
            .or_default()
            .push(g.bbox);
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, d) in detections.iter().enumerate() {
        if d.class_index >= n_classes {
            return Err(DetEvalError::UnknownClass {
                class: d.class_index,
                categories: n_classes,
            });
        }
        d.validate()?;
        per_class[d.class_index].push(i);
    }

    let mut results = Vec::with_capacity(n_classes);
    for (class, members) in per_class.iter().enumerate() {
        let class_gts = &gts[class];
        let mut used: HashMap<&str, Vec<bool>> = class_gts
            .iter()
            .map(|(img, boxes)| (*img, vec![false; boxes.len()]))
            .collect();
        let ranked = confidence_order(members.iter().map(|&i| detections[i].confidence));
        let mut flags = Vec::with_capacity(members.len());
        let mut order = Vec::with_capacity(members.len());
        for r in ranked {
            let det = &detections[members[r]];
            order.push(members[r]);
            let flag = match (
                class_gts.get(det.image_id.as_str()),
                used.get_mut(det.image_id.as_str()),
            ) {
                (Some(boxes), Some(used)) => {
                    match best_unmatched(&det.bbox, boxes, used, threshold) {
                        Some(g) => {
                            used[g] = true;
                            Flag::Tp
                        }
                        None => Flag::Fp,
                    }
                }
                _ => Flag::Fp,
            };
            flags.push(flag);
        }
        results.push(MatchResult {
            flags,
            order,
            n_gt: class_gts.values().map(Vec::len).sum(),
        });
    }
    Ok(results)
}

/// mAP over the classes of `manifest` that have ground truth.
pub fn map50(
    detections: &[Detection],
    ground_truth: &[DetectionAnnotation],
    manifest: &DatasetManifest,
    threshold: f64,
) -> Result<DetReport, DetEvalError> {
    let classes = &manifest.categories;
    let results = match_dataset(detections, ground_truth, classes.len(), threshold)?;
    let mut per_class_ap = BTreeMap::new();
    let mut per_class_counts = BTreeMap::new();
    let mut defined = Vec::new();
    for (name, result) in classes.iter().zip(&results) {
        let ap = match average_precision(result) {
            Ok(ap) => Some(ap),
            Err(DetEvalError::NoGroundTruth) => None,
            Err(e) => return Err(e),
        };
        defined.extend(ap);
        per_class_ap.insert(name.clone(), ap);
        per_class_counts.insert(
            name.clone(),
            ClassCounts {
                n_gt: result.n_gt,
                n_pred: result.flags.len(),
                true_positives: result.true_positives(),
            },
        );
    }
    if defined.is_empty() {
        return Err(DetEvalError::NoDefinedClasses);
    }
    Ok(DetReport {
        per_class_ap,
        per_class_counts,
        classes: classes.clone(),
        map50: defined.iter().sum::<f64>() / defined.len() as f64,
        iou_threshold: threshold,
        interpolation: "all_point".into(),
        n_images: manifest.records.len(),
        n_gt: ground_truth.len(),
        n_pred: detections.len(),
    })
}
