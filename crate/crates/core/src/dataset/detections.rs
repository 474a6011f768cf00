use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotationKind, BoxFormat, DatasetError, DatasetManifest, Result};
use crate::det_eval::BoundingBox;

/// A ground-truth box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionAnnotation {
    pub image_id: String,
    pub class_index: usize,
    pub bbox: BoundingBox,
}

/// One parsed line of a box file: `image_id class x_min y_min x_max y_max [conf]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxLine {
    /// 1-based line number in the source text.
    pub line: usize,
    pub image_id: String,
    pub class_index: usize,
    pub bbox: BoundingBox,
    pub confidence: Option<f64>,
}

impl BoxLine {
    pub fn annotation(&self) -> DetectionAnnotation {
        DetectionAnnotation {
            image_id: self.image_id.clone(),
            class_index: self.class_index,
            bbox: self.bbox,
        }
    }
}

pub fn parse_box_lines(text: &str) -> Result<Vec<BoxLine>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |message: String| DatasetError::Parse {
            path: format!("<line {line}>").into(),
            message,
        };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 6 && fields.len() != 7 {
            return Err(bad(format!(
                "expected 6 or 7 fields, found {}",
                fields.len()
            )));
        }
        let class_index: usize = fields[1]
            .parse()
            .map_err(|_| bad(format!("class {:?} is not a category index", fields[1])))?;
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[2..]) {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("{field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("{field:?} is not finite")));
            }
            *slot = v;
        }
        out.push(BoxLine {
            line,
            image_id: fields[0].to_owned(),
            class_index,
            bbox: BoundingBox::new_unchecked(nums[0], nums[1], nums[2], nums[3]),
            confidence: (fields.len() == 7).then_some(nums[4]),
        });
    }
    Ok(out)
}

pub fn read_box_file(path: &Path) -> Result<Vec<BoxLine>> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_box_lines(&text).map_err(|e| match e {
        DatasetError::Parse { path: at, message } => DatasetError::Parse {
            path: path.to_path_buf(),
            message: format!("{}: {message}", at.display()),
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClampedBox {
    pub line: usize,
    pub image_id: String,
    pub original: BoundingBox,
    pub clamped: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnknownImage,
    UnknownClass,
    Degenerate,
    BadConfidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedBox {
    pub line: usize,
    pub image_id: String,
    pub reason: RejectReason,
}

/// Outcome of checking a box file against a manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DetectionValidation {
    /// Boxes that passed, in pixel coordinates and clamped to the image.
    pub accepted: Vec<BoxLine>,
    pub clamped: Vec<ClampedBox>,
    pub rejected: Vec<RejectedBox>,
}

impl DetectionValidation {
    pub fn is_clean(&self) -> bool {
        self.clamped.is_empty() && self.rejected.is_empty()
    }

    pub fn rejected_for(&self, reason: RejectReason) -> impl Iterator<Item = &RejectedBox> {
        self.rejected.iter().filter(move |r| r.reason == reason)
    }
}

/// Converts boxes to pixel coordinates, clamps them to the image, and drops
/// boxes that name unknown images or classes or have zero area after clamping.
pub fn validate_detections(
    manifest: &DatasetManifest,
    boxes: &[BoxLine],
) -> Result<DetectionValidation> {
    if manifest.annotation_kind != AnnotationKind::Detection {
        return Err(DatasetError::Manifest(format!(
            "manifest {:?} is not a detection dataset",
            manifest.name
        )));
    }
    let mut report = DetectionValidation::default();
    for b in boxes {
        let reject = |reason| RejectedBox {
            line: b.line,
            image_id: b.image_id.clone(),
            reason,
        };
        let Some(record) = manifest.record(&b.image_id) else {
            report.rejected.push(reject(RejectReason::UnknownImage));
            continue;
        };
        if b.class_index >= manifest.categories.len() {
            report.rejected.push(reject(RejectReason::UnknownClass));
            continue;
        }
        if let Some(c) = b.confidence {
            if !(0.0..=1.0).contains(&c) {
                report.rejected.push(reject(RejectReason::BadConfidence));
                continue;
            }
        }
        let (w, h) = (record.width as f64, record.height as f64);
        let pixel = match manifest.box_format {
            BoxFormat::Pixel => b.bbox,
            BoxFormat::Normalized => BoundingBox::new_unchecked(
                b.bbox.x_min * w,
                b.bbox.y_min * h,
                b.bbox.x_max * w,
                b.bbox.y_max * h,
            ),
        };
        let clamped = BoundingBox::new_unchecked(
            pixel.x_min.clamp(0.0, w),
            pixel.y_min.clamp(0.0, h),
            pixel.x_max.clamp(0.0, w),
            pixel.y_max.clamp(0.0, h),
        );
        if clamped.is_degenerate() {
            log::warn!(
                "dropping zero-area box on line {} for image {}",
                b.line,
                b.image_id
            );
            report.rejected.push(reject(RejectReason::Degenerate));
            continue;
        }
        if clamped != pixel {
            report.clamped.push(ClampedBox {
                line: b.line,
                image_id: b.image_id.clone(),
                original: pixel,
                clamped,
            });
        }
        report.accepted.push(BoxLine {
            bbox: clamped,
            ..b.clone()
        });
    }
    Ok(report)
}
