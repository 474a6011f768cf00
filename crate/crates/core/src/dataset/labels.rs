use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat};

use super::{DatasetError, Result};

/// Label value reserved for pixels that take no part in evaluation.
pub const DEFAULT_IGNORE_INDEX: u8 = 255;

/// A per-pixel category index grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegLabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u8>,
    pub ignore_index: u8,
}

impl SegLabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u8>, ignore_index: u8) -> Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(DatasetError::Manifest(format!(
                "label buffer holds {} values, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            ignore_index,
        })
    }

    pub fn filled(width: u32, height: u32, label: u8, ignore_index: u8) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width as usize * height as usize],
            ignore_index,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn coords(&self, offset: usize) -> (u32, u32) {
        let w = self.width as usize;
        ((offset % w) as u32, (offset / w) as u32)
    }

    /// Every label must index one of `categories` categories or be the ignore index.
    pub fn check_labels(&self, categories: usize) -> Result<()> {
        for (i, &label) in self.labels.iter().enumerate() {
            if label != self.ignore_index && label as usize >= categories {
                let (x, y) = self.coords(i);
                return Err(DatasetError::LabelOutOfRange {
                    x,
                    y,
                    label,
                    categories,
                });
            }
        }
        Ok(())
    }

    pub fn check_dimensions(&self, width: u32, height: u32) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(DatasetError::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                actual_w: self.width,
                actual_h: self.height,
            });
        }
        Ok(())
    }
}

/// Reads an 8-bit single-channel PNG index map.
pub fn read_label_png(path: &Path, ignore_index: u8) -> Result<SegLabelMap> {
    let bad = |message: String| DatasetError::LabelImage {
        path: path.to_path_buf(),
        message,
    };
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| bad(e.to_string()))?;
    let gray = match img {
        DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(bad(format!(
                "expected an 8-bit single-channel index map, found {:?}",
                other.color()
            )))
        }
    };
    let (width, height) = gray.dimensions();
    SegLabelMap::new(width, height, gray.into_raw(), ignore_index)
}

pub fn write_label_png(map: &SegLabelMap, path: &Path) -> Result<()> {
    let img = GrayImage::from_raw(map.width, map.height, map.labels.clone())
        .expect("buffer length checked at construction");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| DatasetError::LabelImage {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
