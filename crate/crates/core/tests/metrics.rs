mod oracles;

use oracles::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sim2real_core::cmmd::{cmmd, CmmdConfig, Estimator};
use sim2real_core::det_eval::{average_precision, map50, match_detections, Flag, MatchResult};
use sim2real_core::{
    AnnotationKind, BoundingBox, ConfusionMatrix, DatasetManifest, Detection, DetectionAnnotation,
    EmbeddingMatrix, SegLabelMap,
};

fn matrix(rows: &[Vec<f32>]) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(rows).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn cmmd_matches_dense_oracle() {
    let mut rng = rng(7);
    for fixture in 0..12 {
        let d = rng.random_range(1..=64);
        let n = rng.random_range(2..=128);
        let m = rng.random_range(2..=128);
        let x = random_rows(&mut rng, n, d, 0.0);
        let y = random_rows(&mut rng, m, d, 0.3);
        for estimator in [Estimator::BiasedVStatistic, Estimator::UnbiasedUStatistic] {
            let config = CmmdConfig {
                estimator,
                block: 16,
                ..CmmdConfig::default()
            };
            let got = cmmd(&matrix(&x), &matrix(&y), &config).unwrap();
            let want = dense_mmd_sq(
                &x,
                &y,
                config.sigma,
                estimator == Estimator::UnbiasedUStatistic,
            );
            assert!(
                rel(got.mmd_sq, want) <= 1e-10,
                "fixture {fixture}: {} vs {want}",
                got.mmd_sq
            );
        }
    }
}

/// Rows on a 1/64 grid in [-1, 1], so the exact transforms below stay exact in f32.
fn grid_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: i32) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| (rng.random_range(-64..=64) + shift) as f32 / 64.0)
                .collect()
        })
        .collect()
}

/// Orthogonal map exact on grid data: Hadamard/2 on each 4-block, then a
/// coordinate reversal and alternating sign flips.
fn exact_rotation(row: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(row.len());
    for c in row.chunks_exact(4) {
        out.push((c[0] + c[1] + c[2] + c[3]) / 2.0);
        out.push((c[0] - c[1] + c[2] - c[3]) / 2.0);
        out.push((c[0] + c[1] - c[2] - c[3]) / 2.0);
        out.push((c[0] - c[1] - c[2] + c[3]) / 2.0);
    }
    out.reverse();
    out.iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { *v } else { -*v })
        .collect()
}

#[test]
fn cmmd_invariances() {
    let mut rng = rng(11);
    let config = CmmdConfig::default();
    for _ in 0..5 {
        let d = 4 * rng.random_range(1..=8);
        let (n, m) = (rng.random_range(2..60), rng.random_range(2..60));
        let x = grid_rows(&mut rng, n, d, 0);
        let y = grid_rows(&mut rng, m, d, 10);
        let (mx, my) = (matrix(&x), matrix(&y));
        let base = cmmd(&mx, &my, &config).unwrap().cmmd;
        assert!(base > 0.0);

        assert_eq!(
            base.to_bits(),
            cmmd(&my, &mx, &config).unwrap().cmmd.to_bits()
        );

        let t: Vec<f32> = (0..d)
            .map(|_| rng.random_range(-32..32) as f32 / 64.0)
            .collect();
        let shift = |rows: &[Vec<f32>]| -> Vec<Vec<f32>> {
            rows.iter()
                .map(|r| r.iter().zip(&t).map(|(a, b)| a + b).collect())
                .collect()
        };
        let shifted = cmmd(&matrix(&shift(&x)), &matrix(&shift(&y)), &config)
            .unwrap()
            .cmmd;
        assert!((shifted - base).abs() <= 1e-8);

        let rot = |rows: &[Vec<f32>]| -> Vec<Vec<f32>> {
            rows.iter().map(|r| exact_rotation(r)).collect()
        };
        let rotated = cmmd(&matrix(&rot(&x)), &matrix(&rot(&y)), &config)
            .unwrap()
            .cmmd;
        assert!((rotated - base).abs() <= 1e-8);

        let n = x.len().max(y.len());
        for block in [1, 7, 64, n] {
            let c = CmmdConfig { block, ..config };
            assert!(rel(cmmd(&mx, &my, &c).unwrap().cmmd, base) <= 1e-10);
        }
    }
}

#[test]
fn cmmd_zero_on_identical_sets() {
    let mut rng = rng(3);
    for n in [1, 17, 256] {
        for d in [4, 16] {
            let x = matrix(&random_rows(&mut rng, n, d, 0.0));
            assert!(
                cmmd(&x, &x.clone(), &CmmdConfig::default())
                    .unwrap()
                    .cmmd
                    .abs()
                    <= 1e-6
            );
        }
    }
}

#[test]
fn confusion_and_miou_match_pixel_loop() {
    let mut rng = rng(5);
    for _ in 0..40 {
        let k = rng.random_range(1..=8u8);
        let (gt, pred) = random_label_pair(&mut rng, 32, 32, k);
        let (want_m, want_void) = brute_confusion(&gt, &pred, k as usize);
        let (want_iou, want_miou) = brute_miou(&gt, &pred, k as usize);

        let mut cm = ConfusionMatrix::new(k as usize);
        cm.accumulate(
            &SegLabelMap::new(32, 32, gt.clone(), IGNORE).unwrap(),
            &SegLabelMap::new(32, 32, pred, IGNORE).unwrap(),
        )
        .unwrap();
        for g in 0..k as usize {
            assert_eq!(cm.void_pred(g), want_void[g]);
            for (p, &want) in want_m[g].iter().enumerate() {
                assert_eq!(cm.get(g, p), want);
            }
        }
        assert_eq!(cm.iou_per_class(), want_iou);
        assert_eq!(cm.miou().ok(), want_miou);

        let mut perfect = ConfusionMatrix::new(k as usize);
        let map = SegLabelMap::new(32, 32, gt, IGNORE).unwrap();
        perfect.accumulate(&map, &map).unwrap();
        if perfect.pixels_evaluated() > 0 {
            assert_eq!(perfect.miou().unwrap(), 1.0);
        }
    }
}

fn to_bbox(b: IBox) -> BoundingBox {
    BoundingBox::new_unchecked(b.0 as f64, b.1 as f64, b.2 as f64, b.3 as f64)
}

fn detections(dets: &[(IBox, f64)], scale: f64) -> Vec<Detection> {
    dets.iter()
        .map(|&(b, c)| Detection {
            image_id: "scene".into(),
            class_index: 0,
            confidence: c * scale,
            bbox: to_bbox(b),
        })
        .collect()
}

#[test]
fn greedy_matching_and_ap_match_oracle() {
    let mut rng = rng(13);
    for _ in 0..100 {
        let (gts, dets) = random_scene(&mut rng);
        let gt_boxes: Vec<BoundingBox> = gts.iter().map(|&b| to_bbox(b)).collect();
        let result = match_detections(&detections(&dets, 1.0), &gt_boxes, 0.5).unwrap();
        let flags: Vec<bool> = result.flags.iter().map(|f| *f == Flag::Tp).collect();
        assert_eq!(flags, greedy_flags(&gts, &dets));
        if gts.is_empty() {
            assert!(average_precision(&result).is_err());
        } else {
            assert_eq!(
                average_precision(&result).unwrap(),
                ap_from_flags(&flags, gts.len())
            );
        }
    }
}

#[test]
fn map_is_invariant_to_confidence_scaling() {
    let mut rng = rng(17);
    let manifest = DatasetManifest {
        name: "scenes".into(),
        root: ".".into(),
        annotation_kind: AnnotationKind::Detection,
        categories: vec!["car".into()],
        box_format: Default::default(),
        records: Vec::new(),
        base_dir: ".".into(),
    };
    for _ in 0..30 {
        let (gts, dets) = random_scene(&mut rng);
        if gts.is_empty() {
            continue;
        }
        let anns: Vec<DetectionAnnotation> = gts
            .iter()
            .map(|&b| DetectionAnnotation {
                image_id: "scene".into(),
                class_index: 0,
                bbox: to_bbox(b),
            })
            .collect();
        let base = map50(&detections(&dets, 1.0), &anns, &manifest, 0.5).unwrap();
        for s in [0.5, 0.37, 1e-3] {
            let scaled = map50(&detections(&dets, s), &anns, &manifest, 0.5).unwrap();
            assert_eq!(scaled.map50, base.map50);
            assert_eq!(scaled.per_class_ap, base.per_class_ap);
        }
    }
}

#[test]
fn hand_worked_average_precision() {
    let r = MatchResult {
        flags: vec![Flag::Tp, Flag::Fp, Flag::Tp],
        order: vec![0, 1, 2],
        n_gt: 2,
    };
    assert!((average_precision(&r).unwrap() - 0.8333).abs() < 1e-4);
    assert!((average_precision(&r).unwrap() - 5.0 / 6.0).abs() <= 1e-9);
}
