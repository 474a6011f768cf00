//! Deliberately naive reference implementations used to check the engines.
//! Shared with the acceptance suite of the CLI crate.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- kernel MMD

/// Random `n x d` matrix with entries in `[-1, 1) + shift`.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f32) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| rng.random_range(-1.0f32..1.0) + shift)
                .collect()
        })
        .collect()
}

fn k(x: &[f32], y: &[f32], sigma: f64) -> f64 {
    let mut sq = 0.0f64;
    for i in 0..x.len() {
        let d = x[i] as f64 - y[i] as f64;
        sq += d * d;
    }
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// Mean of the full kernel matrix, summed row by row.
fn dense_mean(a: &[Vec<f32>], b: &[Vec<f32>], sigma: f64, skip_diagonal: bool) -> f64 {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (i, x) in a.iter().enumerate() {
        let mut row = 0.0f64;
        for (j, y) in b.iter().enumerate() {
            if skip_diagonal && i == j {
                continue;
            }
            row += k(x, y, sigma);
            count += 1;
        }
        total += row;
    }
    total / count as f64
}

/// Squared MMD from materialized kernel matrices.
pub fn dense_mmd_sq(x: &[Vec<f32>], y: &[Vec<f32>], sigma: f64, unbiased: bool) -> f64 {
    dense_mean(x, x, sigma, unbiased) + dense_mean(y, y, sigma, unbiased)
        - 2.0 * dense_mean(x, y, sigma, false)
}

// ---------------------------------------------------------------- segmentation

pub const IGNORE: u8 = 255;

/// Random `w x h` label pair over `k` classes with roughly 10% ignore pixels
/// in each map. Predictions agree with ground truth about half the time.
pub fn random_label_pair(rng: &mut ChaCha8Rng, w: usize, h: usize, k: u8) -> (Vec<u8>, Vec<u8>) {
    let mut gt = Vec::with_capacity(w * h);
    let mut pred = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let g = if rng.random_bool(0.1) {
            IGNORE
        } else {
            rng.random_range(0..k)
        };
        let p = if rng.random_bool(0.1) {
            IGNORE
        } else if g != IGNORE && rng.random_bool(0.5) {
            g
        } else {
            rng.random_range(0..k)
        };
        gt.push(g);
        pred.push(p);
    }
    (gt, pred)
}

/// Confusion counts `[gt][pred]` plus the per-class count of ignored predictions.
pub fn brute_confusion(gt: &[u8], pred: &[u8], k: usize) -> (Vec<Vec<u64>>, Vec<u64>) {
    let mut m = vec![vec![0u64; k]; k];
    let mut void = vec![0u64; k];
    for i in 0..gt.len() {
        if gt[i] == IGNORE {
            continue;
        }
        if pred[i] == IGNORE {
            void[gt[i] as usize] += 1;
        } else {
            m[gt[i] as usize][pred[i] as usize] += 1;
        }
    }
    (m, void)
}

/// Per-class IoU by counting pixels directly, then the mean over defined classes.
pub fn brute_miou(gt: &[u8], pred: &[u8], k: usize) -> (Vec<Option<f64>>, Option<f64>) {
    let mut ious = Vec::with_capacity(k);
    for c in 0..k as u8 {
        let mut inter = 0u64;
        let mut union = 0u64;
        for i in 0..gt.len() {
            if gt[i] == IGNORE {
                continue;
            }
            let in_gt = gt[i] == c;
            let in_pred = pred[i] == c;
            if in_gt && in_pred {
                inter += 1;
            }
            if in_gt || in_pred {
                union += 1;
            }
        }
        ious.push((union > 0).then(|| inter as f64 / union as f64));
    }
    let defined: Vec<f64> = ious.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    (ious, mean)
}

// ---------------------------------------------------------------- detection

/// Integer-corner box `(x0, y0, x1, y1)`.
pub type IBox = (i64, i64, i64, i64);

/// Exact IoU as a rational `(intersection, union)`.
pub fn iou_rational(a: IBox, b: IBox) -> (i64, i64) {
    let iw = (a.2.min(b.2) - a.0.max(b.0)).max(0);
    let ih = (a.3.min(b.3) - a.1.max(b.1)).max(0);
    let inter = iw * ih;
    let area = |r: IBox| (r.2 - r.0) * (r.3 - r.1);
    (inter, area(a) + area(b) - inter)
}

/// Random scene: up to 4 ground-truth boxes and up to 6 detections, most of
/// them jittered copies of ground truth. Confidences are drawn from a small
/// set so ties occur.
pub fn random_scene(rng: &mut ChaCha8Rng) -> (Vec<IBox>, Vec<(IBox, f64)>) {
    let n_gt = rng.random_range(0..=4);
    let gts: Vec<IBox> = (0..n_gt)
        .map(|_| {
            let x0 = rng.random_range(0..40);
            let y0 = rng.random_range(0..40);
            (
                x0,
                y0,
                x0 + rng.random_range(2..20),
                y0 + rng.random_range(2..20),
            )
        })
        .collect();
    let n_det = rng.random_range(0..=6);
    let dets = (0..n_det)
        .map(|_| {
            let b = if !gts.is_empty() && rng.random_bool(0.7) {
                let g = gts[rng.random_range(0..gts.len())];
                let j = |rng: &mut ChaCha8Rng| rng.random_range(-3..=3);
                let x0 = g.0 + j(rng);
                let y0 = g.1 + j(rng);
                (
                    x0,
                    y0,
                    (g.2 + j(rng)).max(x0 + 1),
                    (g.3 + j(rng)).max(y0 + 1),
                )
            } else {
                let x0 = rng.random_range(0..50);
                let y0 = rng.random_range(0..50);
                (
                    x0,
                    y0,
                    x0 + rng.random_range(1..15),
                    y0 + rng.random_range(1..15),
                )
            };
            let conf = [0.1, 0.25, 0.5, 0.75, 0.9][rng.random_range(0..5)];
            (b, conf)
        })
        .collect();
    (gts, dets)
}

/// Greedy matching with exact rational IoU comparisons. Detections are
/// visited by selection of the highest remaining confidence, earliest first.
/// Returns flags (true = TP) in visiting order.
pub fn greedy_flags(gts: &[IBox], dets: &[(IBox, f64)]) -> Vec<bool> {
    let mut visited = vec![false; dets.len()];
    let mut used = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(dets.len());
    for _ in 0..dets.len() {
        let mut next: Option<usize> = None;
        for i in 0..dets.len() {
            if !visited[i] && next.is_none_or(|n| dets[i].1 > dets[n].1) {
                next = Some(i);
            }
        }
        let i = next.unwrap();
        visited[i] = true;
        let mut best: Option<(usize, (i64, i64))> = None;
        for (g, &gt) in gts.iter().enumerate() {
            if used[g] {
                continue;
            }
            let (num, den) = iou_rational(dets[i].0, gt);
            if 2 * num < den {
                continue;
            }
            // num/den > bn/bd  <=>  num*bd > bn*den
            if best.is_none_or(|(_, (bn, bd))| num * bd > bn * den) {
                best = Some((g, (num, den)));
            }
        }
        match best {
            Some((g, _)) => {
                used[g] = true;
                flags.push(true);
            }
            None => flags.push(false),
        }
    }
    flags
}

/// All-point interpolated AP from flags in rank order.
pub fn ap_from_flags(flags: &[bool], n_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (r, &f) in flags.iter().enumerate() {
        tp += f as usize;
        precision.push(tp as f64 / (r + 1) as f64);
    }
    let mut total = 0.0;
    for r in 0..flags.len() {
        if flags[r] {
            let envelope = precision[r..]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            total += envelope;
        }
    }
    total / n_gt as f64
}
