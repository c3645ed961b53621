use std::fmt;
use std::str::FromStr;

use crate::autodiff::Tensor;
use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Top1Accuracy,
    Miou,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Top1Accuracy => "top1_accuracy",
            Metric::Miou => "miou",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top1_accuracy" => Ok(Metric::Top1Accuracy),
            "miou" => Ok(Metric::Miou),
            _ => Err(Error::invalid(format!("unknown metric '{s}'"))),
        }
    }
}

/// Index of the largest entry; the lowest index wins ties.
fn argmax(row: impl Iterator<Item = f32>) -> usize {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, v) in row.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Predicted class per row of an N×K tensor.
pub fn argmax_rows(logits: &Tensor<f32>) -> Result<Vec<usize>> {
    ensure!(logits.shape().len() == 2, "expected N×K logits, got {:?}", logits.shape());
    Ok((0..logits.shape()[0]).map(|i| argmax(logits.outer(i).iter().copied())).collect())
}

/// Predicted class per pixel of an N×K×H×W tensor, flattened N×H×W.
pub fn class_map(logits: &Tensor<f32>) -> Result<Vec<usize>> {
    let s = logits.shape();
    ensure!(s.len() == 4, "expected N×K×H×W logits, got {s:?}");
    let (k, plane) = (s[1], s[2] * s[3]);
    let mut out = Vec::with_capacity(s[0] * plane);
    for i in 0..s[0] {
        let src = logits.outer(i);
        out.extend((0..plane).map(|p| argmax((0..k).map(|c| src[c * plane + p]))));
    }
    Ok(out)
}

/// Fraction of rows whose argmax equals the label.
pub fn top1_accuracy(logits: &Tensor<f32>, labels: &[usize]) -> Result<f64> {
    let pred = argmax_rows(logits)?;
    ensure!(!pred.is_empty(), "top1_accuracy needs at least one sample");
    ensure!(pred.len() == labels.len(), "{} predictions for {} labels", pred.len(), labels.len());
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean intersection-over-union over the classes that occur in `pred` or
/// `gt`. Both are flattened class maps of equal length.
pub fn miou(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<f64> {
    ensure!(pred.len() == gt.len(), "class maps differ in size: {} vs {}", pred.len(), gt.len());
    ensure!(!gt.is_empty(), "miou of empty class maps");
    let mut inter = vec![0u64; num_classes];
    let mut union = vec![0u64; num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        ensure!(p < num_classes && g < num_classes, "class out of range [0, {num_classes})");
        if p == g {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[g] += 1;
        }
    }
    let ious: Vec<f64> = inter
        .iter()
        .zip(&union)
        .filter(|(_, &u)| u > 0)
        .map(|(&i, &u)| i as f64 / u as f64)
        .collect();
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        let l = Tensor::new(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        // the tie in row 2 goes to class 0
        assert_eq!(top1_accuracy(&l, &[0, 1, 0]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&l, &[1, 0, 1]).unwrap(), 0.0);
        assert!((top1_accuracy(&l, &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(top1_accuracy(&l, &[0]).is_err());
    }

    #[test]
    fn miou_cases() {
        assert!((miou(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap() - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!(miou(&[2, 2], &[2, 2], 4).unwrap(), 1.0);
        assert_eq!(miou(&[1, 0], &[0, 1], 2).unwrap(), 0.0);
        assert!(miou(&[5], &[0], 2).is_err());
    }

    #[test]
    fn class_map_layout() {
        // N=1, K=2, 1×2: pixel 0 prefers class 1, pixel 1 class 0
        let l = Tensor::new(&[1, 2, 1, 2], vec![0.0, 3.0, 1.0, 2.0]).unwrap();
        assert_eq!(class_map(&l).unwrap(), vec![1, 0]);
    }
}
