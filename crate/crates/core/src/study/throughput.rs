use std::time::Instant;

use crate::autodiff::{sgd_step, OptimizerState};
use crate::error::{ensure, Result};
use crate::jpeg::{roundtrip, Image};
use crate::mitigation::{ac_loss_grads, default_target, task_loss_grads, ttac_loss_grads, MitigationKind, MitigationStrategy};
use crate::nn::{images_to_tensor, ModelKind, ParameterSet};

pub const DEFAULT_WARMUP: usize = 10;

/// Images per second at batch size 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Throughput {
    pub inference: f64,
    pub training: f64,
}

fn median_rate(mut f: impl FnMut() -> Result<()>, n_iters: usize, warmup: usize) -> Result<f64> {
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 { times[mid] } else { 0.5 * (times[mid - 1] + times[mid]) };
    // a timer that reports 0 would otherwise give an infinite rate
    Ok(1.0 / median.max(1e-9))
}

/// Median single-image latency of the deployed pipeline, inverted.
///
/// Inference runs the corrector (for correction strategies) and the task
/// model on one decoded JPEG. Training runs forward, backward and an SGD
/// step of whatever the strategy trains: the task model for `none` and
/// supervised fine-tuning, the corrector otherwise. The codec is excluded
/// because every strategy pays for it equally.
pub fn throughput(
    model: &ParameterSet,
    strategy: &MitigationStrategy,
    image: &Image,
    n_iters: usize,
    warmup: usize,
) -> Result<Throughput> {
    ensure!(n_iters >= 3, "throughput needs at least 3 timed iterations, got {n_iters}");
    strategy.validate()?;
    let kind = model.descriptor().kind;
    ensure!(kind != ModelKind::AcNet, "throughput is measured for a task model");
    let jpeg = roundtrip(image, 50)?;
    let x = images_to_tensor(&[&jpeg])?;
    let ac = strategy.ac_model.as_ref().filter(|_| strategy.kind.uses_ac());

    let inference = median_rate(
        || {
            let input = match ac {
                Some(ac) => ac.forward(&x)?.logits,
                None => x.clone(),
            };
            model.forward(&input)?;
            Ok(())
        },
        n_iters,
        warmup,
    )?;

    let targets: Vec<usize> = match kind {
        ModelKind::Classifier => vec![0],
        _ => vec![0; image.width() * image.height()],
    };
    let mut state = OptimizerState::new(0.9, 5e-4);
    let training = match (strategy.kind, ac) {
        (MitigationKind::Ttac, Some(ac)) => {
            let mut ac = ac.clone();
            let target = strategy.target.unwrap_or_else(|| default_target(model));
            median_rate(
                || {
                    let (_, g) = ttac_loss_grads(&ac, model, target, &[image], &[&jpeg])?;
                    sgd_step(ac.iter_mut(), &g, &mut state, 1e-6)
                },
                n_iters,
                warmup,
            )?
        }
        (_, Some(ac)) => {
            let mut ac = ac.clone();
            median_rate(
                || {
                    let (_, g) = ac_loss_grads(&ac, &[&jpeg], &[image])?;
                    sgd_step(ac.iter_mut(), &g, &mut state, 1e-6)
                },
                n_iters,
                warmup,
            )?
        }
        _ => {
            let mut task = model.clone();
            median_rate(
                || {
                    let (_, g) = task_loss_grads(&task, &[&jpeg], &targets)?;
                    sgd_step(task.iter_mut(), &g, &mut state, 1e-6)
                },
                n_iters,
                warmup,
            )?
        }
    };
    Ok(Throughput { inference, training })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_model, ArchitectureDescriptor};

    #[test]
    fn positive_and_validated() {
        let m = build_model(&ArchitectureDescriptor::classifier(3).with_input(16, 16), 1).unwrap();
        let img = Image::filled(16, 16, [30, 60, 90]).unwrap();
        let t = throughput(&m, &MitigationStrategy::none(), &img, 3, 1).unwrap();
        assert!(t.inference > 0.0 && t.training > 0.0);
        assert!(throughput(&m, &MitigationStrategy::none(), &img, 2, 1).is_err());
    }
}
