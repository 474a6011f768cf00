//! Seeded fixture generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sim2real_core::{BoundingBox, Detection, DetectionAnnotation, EmbeddingMatrix, SegLabelMap};

/// `n` random unit-norm rows of dimension `d`.
pub fn unit_embeddings(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let ids = (0..n).map(|i| i.to_string()).collect();
    EmbeddingMatrix::new(ids, d, data)
        .and_then(|m| m.normalize_rows())
        .expect("random rows are finite and non-zero")
}

/// Ground-truth and prediction maps over `k` classes that agree on about
/// 80% of pixels, with 5% ignore pixels in the ground truth.
pub fn label_pair(width: u32, height: u32, k: u8, seed: u64) -> (SegLabelMap, SegLabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (width * height) as usize;
    let mut gt = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(n);
    for _ in 0..n {
        let g = rng.random_range(0..k);
        gt.push(if rng.random_bool(0.05) { 255 } else { g });
        pred.push(if rng.random_bool(0.8) {
            g
        } else {
            rng.random_range(0..k)
        });
    }
    (
        SegLabelMap::new(width, height, gt, 255).expect("sizes match"),
        SegLabelMap::new(width, height, pred, 255).expect("sizes match"),
    )
}

/// Detection dataset: `images` images with `per_image` objects each over
/// `classes` classes, detected with jitter plus one false positive per image.
pub fn detection_set(
    images: usize,
    per_image: usize,
    classes: usize,
    seed: u64,
) -> (Vec<Detection>, Vec<DetectionAnnotation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for i in 0..images {
        let image_id = format!("img_{i:05}");
        for _ in 0..per_image {
            let class_index = rng.random_range(0..classes);
            let x = rng.random_range(0.0..900.0);
            let y = rng.random_range(0.0..300.0);
            let (w, h) = (rng.random_range(10.0..100.0), rng.random_range(10.0..60.0));
            gts.push(DetectionAnnotation {
                image_id: image_id.clone(),
                class_index,
                bbox: BoundingBox::new_unchecked(x, y, x + w, y + h),
            });
            let j = |rng: &mut ChaCha8Rng| rng.random_range(-4.0..4.0);
            dets.push(Detection {
                image_id: image_id.clone(),
                class_index,
                confidence: rng.random_range(0.0..1.0),
                bbox: BoundingBox::new_unchecked(
                    x + j(&mut rng),
                    y + j(&mut rng),
                    x + w + j(&mut rng),
                    y + h + j(&mut rng),
                ),
            });
        }
        dets.push(Detection {
            image_id,
            class_index: rng.random_range(0..classes),
            confidence: rng.random_range(0.0..1.0),
            bbox: BoundingBox::new_unchecked(950.0, 350.0, 990.0, 370.0),
        });
    }
    (dets, gts)
}
