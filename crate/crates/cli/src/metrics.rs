use anyhow::{bail, Context, Result};
use serde_json::json;
use sim2real_core::cmmd::{cmmd as compute_cmmd, CmmdConfig, Estimator};
use sim2real_core::dataset::{
    default_vkitti2_mapping, load_manifest, read_box_file, validate_detections, CategoryMapping,
    DetectionValidation,
};
use sim2real_core::det_eval::map50;
use sim2real_core::embedding::read_embeddings;
use sim2real_core::report::{envelope, MetricKind};
use sim2real_core::seg_eval::{evaluate_directories, SegReport};
use sim2real_core::Detection;

use crate::{CmmdArgs, EstimatorArg, EvalDetArgs, EvalSegArgs, EXIT_OK};

pub const BUNDLED_MAPPING: &str = "vkitti2-cityscapes";

pub fn cmmd(args: CmmdArgs) -> Result<i32> {
    let mut reference = read_embeddings(&args.reference)?;
    let mut generated = read_embeddings(&args.generated)?;
    if !args.no_normalize {
        reference = reference
            .normalize_rows()
            .with_context(|| format!("normalizing {}", args.reference.display()))?;
        generated = generated
            .normalize_rows()
            .with_context(|| format!("normalizing {}", args.generated.display()))?;
    }
    let config = CmmdConfig {
        sigma: args.sigma,
        scale: args.scale,
        estimator: match args.estimator {
            EstimatorArg::Biased => Estimator::BiasedVStatistic,
            EstimatorArg::Unbiased => Estimator::UnbiasedUStatistic,
        },
        block: args.block,
    };
    let report = compute_cmmd(&reference, &generated, &config)?;
    let mut body = serde_json::to_value(report)?;
    body["normalized"] = json!(!args.no_normalize);
    args.output.emit(&envelope(
        MetricKind::Cmmd,
        body,
        args.output.label().as_ref(),
    ))?;
    Ok(EXIT_OK)
}

fn load_mapping(arg: Option<&str>, categories: &[String]) -> Result<CategoryMapping> {
    Ok(match arg {
        None => CategoryMapping::identity(categories),
        Some(BUNDLED_MAPPING) => default_vkitti2_mapping(),
        Some(path) => CategoryMapping::load(path.as_ref())?,
    })
}

pub fn eval_seg(args: EvalSegArgs) -> Result<i32> {
    let manifest = load_manifest(&args.manifest)?;
    let mapping = load_mapping(args.mapping.as_deref(), &manifest.categories)?;
    let (cm, classes) = evaluate_directories(&manifest, &args.gt_dir, &args.pred_dir, &mapping)?;
    let report = SegReport::from_matrix(&cm, &classes, manifest.records.len())?;
    let mut body = serde_json::to_value(report)?;
    body["mapping"] = json!(mapping.name);
    args.output.emit(&envelope(
        MetricKind::Miou,
        body,
        args.output.label().as_ref(),
    ))?;
    Ok(EXIT_OK)
}

fn warn_dropped(what: &str, v: &DetectionValidation) {
    for c in &v.clamped {
        log::info!("{what}: clamped box on line {} ({})", c.line, c.image_id);
    }
    for r in &v.rejected {
        log::warn!(
            "{what}: dropped line {} ({}): {:?}",
            r.line,
            r.image_id,
            r.reason
        );
    }
}

pub fn eval_det(args: EvalDetArgs) -> Result<i32> {
    let manifest = load_manifest(&args.manifest)?;
    let gt = validate_detections(&manifest, &read_box_file(&args.gt)?)?;
    let pred = validate_detections(&manifest, &read_box_file(&args.pred)?)?;
    warn_dropped("ground truth", &gt);
    warn_dropped("predictions", &pred);

    let annotations: Vec<_> = gt.accepted.iter().map(|b| b.annotation()).collect();
    let mut detections = Vec::with_capacity(pred.accepted.len());
    for b in &pred.accepted {
        let Some(confidence) = b.confidence else {
            bail!("{}: line {} has no confidence", args.pred.display(), b.line);
        };
        detections.push(Detection {
            image_id: b.image_id.clone(),
            class_index: b.class_index,
            confidence,
            bbox: b.bbox,
        });
    }
    let report = map50(&detections, &annotations, &manifest, args.iou_threshold)?;
    let mut body = serde_json::to_value(report)?;
    body["boxes_clamped"] = json!({ "gt": gt.clamped.len(), "pred": pred.clamped.len() });
    body["boxes_dropped"] = json!({ "gt": gt.rejected.len(), "pred": pred.rejected.len() });
    args.output.emit(&envelope(
        MetricKind::Map50,
        body,
        args.output.label().as_ref(),
    ))?;
    Ok(EXIT_OK)
}
