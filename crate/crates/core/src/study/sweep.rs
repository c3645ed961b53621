use super::metrics::{argmax_rows, class_map, miou, Metric};
use super::report::{ReportMeta, SweepReport, SweepRow};
use crate::data::Dataset;
use crate::error::{ensure, Error, Result};
use crate::jpeg::Image;
use crate::mitigation::{apply_batch, MitigationStrategy, Quality};
use crate::nn::{images_to_tensor, ModelKind, ParameterSet};
use crate::par;

/// 10, 20, ..., 90.
pub const DEFAULT_QUALITIES: [u8; 9] = [10, 20, 30, 40, 50, 60, 70, 80, 90];

const EVAL_CHUNK: usize = 32;

/// Predicted class per image (classifiers) or per pixel, flattened N×H×W
/// (segmenters).
pub fn predict(model: &ParameterSet, images: &[Image]) -> Result<Vec<usize>> {
    let kind = model.descriptor().kind;
    ensure!(kind != ModelKind::AcNet, "ac_net makes no class predictions");
    let chunks: Vec<&[Image]> = images.chunks(EVAL_CHUNK).collect();
    let parts = par::try_map(&chunks, |chunk| {
        let refs: Vec<&Image> = chunk.iter().collect();
        let out = model.forward(&images_to_tensor(&refs)?)?;
        match kind {
            ModelKind::Classifier => argmax_rows(&out.logits),
            _ => class_map(&out.logits),
        }
    })?;
    Ok(parts.concat())
}

fn metric_for(model: &ParameterSet) -> Result<Metric> {
    match model.descriptor().kind {
        ModelKind::Classifier => Ok(Metric::Top1Accuracy),
        ModelKind::Segmenter => Ok(Metric::Miou),
        ModelKind::AcNet => Err(Error::invalid("ac_net is not a task model")),
    }
}

/// Metric of `model` on `data` after compression at `quality` and the
/// strategy's correction, as a fraction in `[0, 1]`.
pub fn evaluate(model: &ParameterSet, strategy: &MitigationStrategy, data: &Dataset, quality: Quality) -> Result<f64> {
    ensure!(!data.is_empty(), "evaluation needs a non-empty dataset");
    let metric = metric_for(model)?;
    let inputs = apply_batch(strategy, &data.images, quality)?;
    let pred = predict(model, &inputs)?;
    match metric {
        Metric::Top1Accuracy => {
            let hits = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
            Ok(hits as f64 / data.len() as f64)
        }
        Metric::Miou => {
            let masks = data
                .masks
                .as_ref()
                .ok_or_else(|| Error::invalid("segmentation evaluation needs masks"))?;
            let gt: Vec<usize> = masks.iter().flat_map(|m| m.data.iter().map(|&v| v as usize)).collect();
            let k = model.descriptor().num_classes.unwrap_or(0);
            miou(&pred, &gt, k)
        }
    }
}

/// Clean reference plus one row per quality. Values are percentages; the
/// clean row has drop 0. Quality levels are evaluated in parallel and the
/// rows come back ordered clean first, then by ascending quality.
pub fn evaluate_sweep(
    model: &ParameterSet,
    strategy: &MitigationStrategy,
    data: &Dataset,
    qualities: &[u8],
) -> Result<SweepReport> {
    ensure!(!data.is_empty(), "evaluation needs a non-empty dataset");
    strategy.validate()?;
    let metric = metric_for(model)?;
    let mut levels: Vec<Quality> = vec![Quality::Clean];
    for &q in qualities {
        ensure!((1..=100).contains(&q), "quality {q} outside [1, 100]");
        levels.push(Quality::Jpeg(q));
    }
    levels.sort();
    levels.dedup();
    let values = par::try_map(&levels, |&q| evaluate(model, strategy, data, q))?;
    let reference = 100.0 * values[0];
    let rows = levels
        .iter()
        .zip(&values)
        .map(|(&quality, &v)| {
            let value = 100.0 * v;
            SweepRow {
                model: model.tag.clone(),
                mitigation: strategy.kind.to_string(),
                quality,
                metric,
                value,
                reference: Some(reference),
                drop: Some(reference - value),
            }
        })
        .collect();
    Ok(SweepReport { rows, meta: ReportMeta::now(data.id.clone(), None) })
}
