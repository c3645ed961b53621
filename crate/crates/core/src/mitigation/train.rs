use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::augment_jpeg;
use super::protocol::{TrainLog, TrainProtocol};
use crate::autodiff::{cosine_lr, sgd_step, GradMap, OptimizerState, Tape};
use crate::data::Dataset;
use crate::error::{ensure, Error, Result};
use crate::jpeg::Image;
use crate::nn::{images_to_tensor, ModelKind, ParameterSet};

/// Shared epoch loop: cosine lr per epoch, seeded shuffle, one SGD step per
/// batch. `step` receives the model and the batch indices and returns the
/// batch loss with its gradients.
pub(crate) fn run_epochs<F>(
    model: &mut ParameterSet,
    n: usize,
    protocol: &TrainProtocol,
    mut step: F,
) -> Result<TrainLog>
where
    F: FnMut(&ParameterSet, &[usize], &mut ChaCha8Rng) -> Result<(f64, GradMap<f32>)>,
{
    protocol.validate()?;
    ensure!(n > 0, "training needs a non-empty dataset");
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
    let mut state = OptimizerState::new(protocol.momentum, protocol.weight_decay);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    for epoch in 0..protocol.epochs {
        let lr = cosine_lr(epoch, protocol.epochs, protocol.lr_start, protocol.lr_end)?;
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for idx in order.chunks(protocol.batch_size) {
            let (loss, grads) = step(model, idx, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            sgd_step(model.iter_mut(), &grads, &mut state, lr)?;
            total += loss;
            batches += 1;
        }
        log.epoch_loss.push(total / batches as f64);
        log::info!("epoch {epoch}: lr {lr:.3e} loss {:.5}", total / batches as f64);
    }
    Ok(log)
}

/// Training targets for `idx`: one label per image for classifiers, one
/// per pixel (from the masks) for segmenters.
pub(crate) fn batch_targets(model: &ParameterSet, data: &Dataset, idx: &[usize]) -> Result<Vec<usize>> {
    match model.descriptor().kind {
        ModelKind::Classifier => Ok(idx.iter().map(|&i| data.labels[i]).collect()),
        ModelKind::Segmenter => {
            let masks = data
                .masks
                .as_ref()
                .ok_or_else(|| Error::invalid("segmenter training needs masks"))?;
            Ok(idx.iter().flat_map(|&i| masks[i].data.iter().map(|&v| v as usize)).collect())
        }
        ModelKind::AcNet => Err(Error::invalid("ac_net is not a task model")),
    }
}

/// Cross-entropy of `model` on a batch and its parameter gradients.
/// `targets` as produced for the model kind: per image or per pixel.
pub fn task_loss_grads(model: &ParameterSet, images: &[&Image], targets: &[usize]) -> Result<(f64, GradMap<f32>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true)?;
    let x = tape.leaf(images_to_tensor(images)?, false)?;
    let out = model.forward_graph(&mut tape, &bound, x)?;
    let loss = tape.softmax_xent(out.logits, targets)?;
    let grads = tape.backward(loss)?;
    Ok((f64::from(tape.value(loss).item()), model.collect_grads(&bound, &grads)))
}

/// Pixel l1 between the corrector's output on `compressed` and `originals`.
pub fn ac_loss_grads(ac: &ParameterSet, compressed: &[&Image], originals: &[&Image]) -> Result<(f64, GradMap<f32>)> {
    ensure!(ac.descriptor().kind == ModelKind::AcNet, "expected an ac_net model");
    let mut tape = Tape::new();
    let bound = ac.bind(&mut tape, true)?;
    let x = tape.leaf(images_to_tensor(compressed)?, false)?;
    let target = tape.leaf(images_to_tensor(originals)?, false)?;
    let out = ac.forward_graph(&mut tape, &bound, x)?;
    let loss = tape.l1_loss(out.logits, target)?;
    let grads = tape.backward(loss)?;
    Ok((f64::from(tape.value(loss).item()), ac.collect_grads(&bound, &grads)))
}

fn check_task(model: &ParameterSet, data: &Dataset) -> Result<()> {
    ensure!(!data.is_empty(), "training needs a non-empty dataset");
    match model.descriptor().kind {
        ModelKind::Classifier => ensure!(
            model.descriptor().num_classes.unwrap_or(0) == data.num_classes(),
            "classifier has {} outputs but the dataset has {} classes",
            model.descriptor().num_classes.unwrap_or(0),
            data.num_classes()
        ),
        ModelKind::Segmenter => ensure!(
            model.descriptor().num_classes.unwrap_or(0) == data.num_seg_classes(),
            "segmenter has {} outputs but the dataset needs {}",
            model.descriptor().num_classes.unwrap_or(0),
            data.num_seg_classes()
        ),
        ModelKind::AcNet => return Err(Error::invalid("ac_net is not a task model")),
    }
    Ok(())
}

/// Trains a task model on uncompressed images. This produces the
/// "pretrained" weights every mitigation starts from.
pub fn pretrain_task(model: &ParameterSet, data: &Dataset, protocol: &TrainProtocol) -> Result<(ParameterSet, TrainLog)> {
    check_task(model, data)?;
    let mut out = model.clone();
    let log = run_epochs(&mut out, data.len(), protocol, |m, idx, _| {
        let images: Vec<&Image> = idx.iter().map(|&i| &data.images[i]).collect();
        task_loss_grads(m, &images, &batch_targets(m, data, idx)?)
    })?;
    out.tag = format!("{}+task", model.tag);
    Ok((out, log))
}

/// Fine-tunes a task model on JPEG-compressed training images, each at an
/// independent quality from `protocol.quality_range`. No uncompressed
/// image is seen.
pub fn supervised_finetune(
    model: &ParameterSet,
    data: &Dataset,
    protocol: &TrainProtocol,
) -> Result<(ParameterSet, TrainLog)> {
    check_task(model, data)?;
    let mut out = model.clone();
    let log = run_epochs(&mut out, data.len(), protocol, |m, idx, rng| {
        let images: Vec<&Image> = idx.iter().map(|&i| &data.images[i]).collect();
        let (jpeg, _) = augment_jpeg(&images, protocol.quality_range, rng)?;
        let refs: Vec<&Image> = jpeg.iter().collect();
        task_loss_grads(m, &refs, &batch_targets(m, data, idx)?)
    })?;
    out.tag = format!("{}+finetune", model.tag);
    Ok((out, log))
}

/// Trains the off-the-shelf corrector: pixel l1 between its output on
/// JPEG-augmented images and the originals. Labels are ignored.
pub fn pretrain_ac(ac: &ParameterSet, data: &Dataset, protocol: &TrainProtocol) -> Result<(ParameterSet, TrainLog)> {
    ensure!(ac.descriptor().kind == ModelKind::AcNet, "expected an ac_net model");
    ensure!(!data.is_empty(), "training needs a non-empty dataset");
    let mut out = ac.clone();
    let log = run_epochs(&mut out, data.len(), protocol, |m, idx, rng| {
        let images: Vec<&Image> = idx.iter().map(|&i| &data.images[i]).collect();
        let (jpeg, _) = augment_jpeg(&images, protocol.quality_range, rng)?;
        let refs: Vec<&Image> = jpeg.iter().collect();
        ac_loss_grads(m, &refs, &images)
    })?;
    out.tag = format!("{}+ac", ac.tag);
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, SyntheticDatasetSpec};
    use crate::jpeg::roundtrip;
    use crate::nn::{build_model, ArchitectureDescriptor};

    fn tiny() -> Dataset {
        let spec = SyntheticDatasetSpec { n_train: 8, n_eval: 4, size: 16, ..Default::default() };
        generate_dataset(&spec).unwrap().train
    }

    #[test]
    fn zero_epochs_is_noop() {
        let data = tiny();
        let m = build_model(&ArchitectureDescriptor::classifier(5).with_input(16, 16), 1).unwrap();
        let p = TrainProtocol::default().with_epochs(0);
        let (out, log) = supervised_finetune(&m, &data, &p).unwrap();
        assert_eq!(out.fingerprint(), m.fingerprint());
        assert!(log.epoch_loss.is_empty());
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = tiny().take(0);
        let m = build_model(&ArchitectureDescriptor::classifier(5).with_input(16, 16), 1).unwrap();
        let p = TrainProtocol::default().with_epochs(1);
        assert!(matches!(supervised_finetune(&m, &data, &p), Err(Error::InvalidArgument(_))));
        let ac = build_model(&ArchitectureDescriptor::ac_net(), 1).unwrap();
        assert!(matches!(pretrain_ac(&ac, &data, &p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fresh_ac_loss_is_raw_jpeg_error() {
        let data = tiny();
        let ac = build_model(&ArchitectureDescriptor::ac_net(), 1).unwrap();
        let orig: Vec<&Image> = data.images.iter().take(3).collect();
        let jpeg: Vec<Image> = orig.iter().map(|im| roundtrip(im, 10).unwrap()).collect();
        let jrefs: Vec<&Image> = jpeg.iter().collect();
        let (loss, _) = ac_loss_grads(&ac, &jrefs, &orig).unwrap();
        let mut s = 0.0;
        let mut n = 0;
        for (a, b) in jpeg.iter().zip(&orig) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                s += (f64::from(x) - f64::from(y)).abs() / 255.0;
                n += 1;
            }
        }
        assert!((loss - s / n as f64).abs() < 1e-6, "{loss} vs {}", s / n as f64);
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny();
        let m = build_model(&ArchitectureDescriptor::segmenter(6).with_input(16, 16), 3).unwrap();
        let p = TrainProtocol::default().with_epochs(2).with_lr(0.01, 0.001);
        let (a, la) = supervised_finetune(&m, &data, &p).unwrap();
        let (b, lb) = supervised_finetune(&m, &data, &p).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(la, lb);
        assert_ne!(a.fingerprint(), m.fingerprint());
    }
}
