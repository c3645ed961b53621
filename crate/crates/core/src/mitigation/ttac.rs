use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::augment_jpeg;
use super::protocol::{TrainLog, TrainProtocol};
use super::strategy::TtacTarget;
use super::train::run_epochs;
use crate::autodiff::{cosine_lr, sgd_step, GradMap, OptimizerState, Tape, Tensor};
use crate::data::Dataset;
use crate::error::{ensure, Error, Result};
use crate::jpeg::Image;
use crate::nn::{images_to_tensor, ModelKind, ParameterSet};

/// Logits for classifiers, encoder features for everything else.
pub fn default_target(task: &ParameterSet) -> TtacTarget {
    match task.descriptor().kind {
        ModelKind::Classifier => TtacTarget::Logits,
        _ => TtacTarget::Features,
    }
}

fn check_task(task: &ParameterSet, target: TtacTarget) -> Result<()> {
    ensure!(task.descriptor().kind != ModelKind::AcNet, "the supervising model must be a task model");
    if target == TtacTarget::Features {
        ensure!(task.descriptor().has_features(), "target=features but the task model has no feature output");
    }
    Ok(())
}

/// One frozen task model supervising the corrector.
#[derive(Clone, Copy, Debug)]
pub struct TtacTask<'a> {
    pub model: &'a ParameterSet,
    pub dataset: &'a Dataset,
    pub target: TtacTarget,
}

impl<'a> TtacTask<'a> {
    pub fn new(model: &'a ParameterSet, dataset: &'a Dataset) -> Self {
        Self { model, dataset, target: default_target(model) }
    }
}

fn task_output(task: &ParameterSet, target: TtacTarget, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
    let out = task.forward(batch)?;
    match target {
        TtacTarget::Logits => Ok(out.logits),
        TtacTarget::Features => out
            .features
            .ok_or_else(|| Error::invalid("task model has no feature output")),
    }
}

/// Mean l1 between the task outputs on `originals` and on `corrected`.
/// Zero whenever the two batches are equal.
pub fn ttac_loss(task: &ParameterSet, target: TtacTarget, originals: &Tensor<f32>, corrected: &Tensor<f32>) -> Result<f64> {
    check_task(task, target)?;
    ensure!(originals.shape() == corrected.shape(), "batch shapes differ");
    let a = task_output(task, target, originals)?;
    let b = task_output(task, target, corrected)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| f64::from((x - y).abs())).sum();
    Ok(s / a.len() as f64)
}

/// TTAC loss on one batch and its gradient with respect to the corrector.
/// The reference branch runs without a graph; the task parameters are
/// recorded as constants so only the corrector receives gradients.
pub fn ttac_loss_grads(
    ac: &ParameterSet,
    task: &ParameterSet,
    target: TtacTarget,
    originals: &[&Image],
    compressed: &[&Image],
) -> Result<(f64, GradMap<f32>)> {
    check_task(task, target)?;
    ensure!(ac.descriptor().kind == ModelKind::AcNet, "expected an ac_net model");
    ensure!(originals.len() == compressed.len(), "batch sizes differ");
    let reference = task_output(task, target, &images_to_tensor(originals)?)?;

    let mut tape = Tape::new();
    let ac_bound = ac.bind(&mut tape, true)?;
    let task_bound = task.bind(&mut tape, false)?;
    let x = tape.leaf(images_to_tensor(compressed)?, false)?;
    let corrected = ac.forward_graph(&mut tape, &ac_bound, x)?.logits;
    let out = task.forward_graph(&mut tape, &task_bound, corrected)?;
    let pred = match target {
        TtacTarget::Logits => out.logits,
        TtacTarget::Features => out.features.ok_or_else(|| Error::invalid("task model has no feature output"))?,
    };
    let r = tape.leaf(reference, false)?;
    let loss = tape.l1_loss(pred, r)?;
    let grads = tape.backward(loss)?;
    Ok((f64::from(tape.value(loss).item()), ac.collect_grads(&ac_bound, &grads)))
}

/// Fine-tunes the corrector against one frozen task model. Only images are
/// used; labels and masks are ignored. The task model is borrowed
/// immutably and returned untouched.
pub fn ttac_train(
    ac: &ParameterSet,
    task: &ParameterSet,
    data: &Dataset,
    protocol: &TrainProtocol,
    target: TtacTarget,
) -> Result<(ParameterSet, TrainLog)> {
    check_task(task, target)?;
    ensure!(ac.descriptor().kind == ModelKind::AcNet, "expected an ac_net model");
    ensure!(!data.is_empty(), "training needs a non-empty dataset");
    let mut out = ac.clone();
    let log = run_epochs(&mut out, data.len(), protocol, |m, idx, rng| {
        let images: Vec<&Image> = idx.iter().map(|&i| &data.images[i]).collect();
        let (jpeg, _) = augment_jpeg(&images, protocol.quality_range, rng)?;
        let refs: Vec<&Image> = jpeg.iter().collect();
        ttac_loss_grads(m, task, target, &images, &refs)
    })?;
    out.tag = format!("{}+ttac", ac.tag);
    Ok((out, log))
}

/// One multihead round at fixed corrector weights. `batches[t]` holds
/// (originals, compressed) for task `t`. Returns the per-task losses and
/// the summed gradient.
pub fn multihead_round(
    ac: &ParameterSet,
    tasks: &[TtacTask<'_>],
    batches: &[(Vec<&Image>, Vec<&Image>)],
) -> Result<(Vec<f64>, GradMap<f32>)> {
    ensure!(tasks.len() == batches.len(), "{} tasks but {} batches", tasks.len(), batches.len());
    let mut total = ac.zero_grads();
    let mut losses = Vec::with_capacity(tasks.len());
    for (task, (orig, comp)) in tasks.iter().zip(batches) {
        let (loss, grads) = ttac_loss_grads(ac, task.model, task.target, orig, comp)?;
        for (name, g) in grads {
            if let Some(acc) = total.get_mut(&name) {
                acc.add_assign(&g);
            }
        }
        losses.push(loss);
    }
    Ok((losses, total))
}

/// TTAC with several frozen task models. Each round takes the next batch
/// of every task (shorter datasets wrap around), sums the gradients and
/// takes one optimizer step. An epoch is as many rounds as the largest
/// dataset has batches.
pub fn multihead_ttac(ac: &ParameterSet, tasks: &[TtacTask<'_>], protocol: &TrainProtocol) -> Result<(ParameterSet, TrainLog)> {
    ensure!(tasks.len() >= 2, "multihead training needs at least 2 tasks, got {}", tasks.len());
    ensure!(ac.descriptor().kind == ModelKind::AcNet, "expected an ac_net model");
    protocol.validate()?;
    for t in tasks {
        check_task(t.model, t.target)?;
        ensure!(!t.dataset.is_empty(), "training needs a non-empty dataset");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
    let mut state = OptimizerState::new(protocol.momentum, protocol.weight_decay);
    let mut out = ac.clone();
    let mut orders: Vec<Vec<usize>> = tasks.iter().map(|t| (0..t.dataset.len()).collect()).collect();
    let bs = protocol.batch_size;
    let rounds = tasks.iter().map(|t| t.dataset.len().div_ceil(bs)).max().unwrap_or(0);
    let mut log = TrainLog { epoch_loss: Vec::new(), task_loss: vec![Vec::new(); tasks.len()] };
    for epoch in 0..protocol.epochs {
        let lr = cosine_lr(epoch, protocol.epochs, protocol.lr_start, protocol.lr_end)?;
        for o in &mut orders {
            o.shuffle(&mut rng);
        }
        let mut sums = vec![0.0; tasks.len()];
        for r in 0..rounds {
            let mut jpegs = Vec::with_capacity(tasks.len());
            let mut origs = Vec::with_capacity(tasks.len());
            for (t, order) in tasks.iter().zip(&orders) {
                let nb = order.len().div_ceil(bs);
                let chunk = order.chunks(bs).nth(r % nb).unwrap_or(&[]);
                let images: Vec<&Image> = chunk.iter().map(|&i| &t.dataset.images[i]).collect();
                jpegs.push(augment_jpeg(&images, protocol.quality_range, &mut rng)?.0);
                origs.push(images);
            }
            let batches: Vec<(Vec<&Image>, Vec<&Image>)> = origs
                .into_iter()
                .zip(&jpegs)
                .map(|(o, j)| (o, j.iter().collect()))
                .collect();
            let (losses, grads) = multihead_round(&out, tasks, &batches)?;
            if losses.iter().any(|l| !l.is_finite()) {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            sgd_step(out.iter_mut(), &grads, &mut state, lr)?;
            for (s, l) in sums.iter_mut().zip(&losses) {
                *s += l;
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / rounds as f64).collect();
        log.epoch_loss.push(means.iter().sum());
        for (series, m) in log.task_loss.iter_mut().zip(means) {
            series.push(m);
        }
    }
    out.tag = format!("{}+multihead", ac.tag);
    Ok((out, log))
}
