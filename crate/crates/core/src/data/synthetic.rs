//! Procedural shape images: one coloured shape on a flat random
//! background with additive uniform noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{ensure, Result};
use crate::jpeg::{Image, Mask};
use crate::par;

pub const SHAPE_NAMES: [&str; 5] = ["disk", "square", "triangle", "cross", "ring"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_eval: usize,
    pub size: usize,
    pub num_classes: usize,
    /// Peak amplitude of the additive per-sample noise, in 8-bit levels.
    pub noise: u8,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self { seed: 42, n_train: 2000, n_eval: 500, size: 48, num_classes: 5, noise: 24 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSplit {
    pub train: Dataset,
    pub eval: Dataset,
}

fn luma(c: [u8; 3]) -> f64 {
    0.299 * f64::from(c[0]) + 0.587 * f64::from(c[1]) + 0.114 * f64::from(c[2])
}

fn inside(class: usize, dx: f64, dy: f64, r: f64) -> bool {
    let d = (dx * dx + dy * dy).sqrt();
    match class {
        0 => d <= r,
        1 => dx.abs() <= 0.8 * r && dy.abs() <= 0.8 * r,
        2 => dy >= -r && dy <= 0.8 * r && dx.abs() <= r * (dy + r) / (1.8 * r),
        3 => {
            let t = 0.3 * r;
            (dx.abs() <= t && dy.abs() <= r) || (dy.abs() <= t && dx.abs() <= r)
        }
        _ => d <= r && d >= 0.55 * r,
    }
}

/// Sample `index` of the stream defined by `spec.seed`. Pure in
/// `(spec, index)`.
pub fn generate_sample(spec: &SyntheticDatasetSpec, index: u64) -> Result<(Image, usize, Mask)> {
    ensure!(spec.size >= 16, "image size must be >= 16");
    ensure!((1..=SHAPE_NAMES.len()).contains(&spec.num_classes), "num_classes must be in 1..=5");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let size = spec.size;
    let label = rng.random_range(0..spec.num_classes);
    let bg: [u8; 3] = rng.random();
    let fg = loop {
        let c: [u8; 3] = rng.random();
        if (luma(c) - luma(bg)).abs() >= 60.0 {
            break c;
        }
    };
    let (rmin, rmax) = (size as f64 / 6.0, size as f64 / 3.0);
    let r = rng.random_range(rmin..rmax);
    // keep the whole shape (radius r) inside the canvas
    let lo = r + 1.0;
    let hi = size as f64 - r - 1.0;
    let cx = rng.random_range(lo..hi);
    let cy = rng.random_range(lo..hi);
    let noise = i16::from(spec.noise);
    let mut data = Vec::with_capacity(size * size * 3);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let on = inside(label, dx, dy, r);
            mask.push(if on { label as u8 + 1 } else { 0 });
            let base = if on { fg } else { bg };
            for c in base {
                let n = if noise > 0 { rng.random_range(-noise..=noise) } else { 0 };
                data.push((i16::from(c) + n).clamp(0, 255) as u8);
            }
        }
    }
    Ok((Image::new(size, size, data)?, label, Mask::new(size, size, mask)?))
}

fn build(spec: &SyntheticDatasetSpec, id: String, range: std::ops::Range<usize>) -> Result<Dataset> {
    let samples = par::map_range(range.len(), |i| generate_sample(spec, (range.start + i) as u64));
    let mut images = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    let mut masks = Vec::with_capacity(samples.len());
    for s in samples {
        let (im, l, m) = s?;
        images.push(im);
        labels.push(l);
        masks.push(m);
    }
    let names = SHAPE_NAMES[..spec.num_classes].iter().map(|s| s.to_string()).collect();
    Dataset::new(id, images, labels, Some(masks), names)
}

/// Train samples use indices `0..n_train`, eval samples
/// `n_train..n_train + n_eval`.
pub fn generate_dataset(spec: &SyntheticDatasetSpec) -> Result<SyntheticSplit> {
    ensure!(spec.n_train > 0 && spec.n_eval > 0, "n_train and n_eval must be positive");
    let tag = format!("synthetic-s{}-{}x{}", spec.seed, spec.size, spec.size);
    Ok(SyntheticSplit {
        train: build(spec, format!("{tag}-train"), 0..spec.n_train)?,
        eval: build(spec, format!("{tag}-eval"), spec.n_train..spec.n_train + spec.n_eval)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticDatasetSpec {
        SyntheticDatasetSpec { n_train: 40, n_eval: 10, ..Default::default() }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_dataset(&small()).unwrap(), generate_dataset(&small()).unwrap());
    }

    #[test]
    fn masks_match_labels() {
        let s = generate_dataset(&small()).unwrap();
        for ds in [&s.train, &s.eval] {
            for (m, &l) in ds.masks.as_ref().unwrap().iter().zip(&ds.labels) {
                assert!(m.data.iter().any(|&v| v != 0));
                assert!(m.data.iter().all(|&v| v == 0 || v as usize == l + 1));
            }
        }
    }

    #[test]
    fn shapes_stay_inside_canvas() {
        let spec = small();
        for i in 0..200 {
            let (_, _, m) = generate_sample(&spec, i).unwrap();
            let s = spec.size;
            for k in 0..s {
                for (x, y) in [(k, 0), (k, s - 1), (0, k), (s - 1, k)] {
                    assert_eq!(m.data[y * s + x], 0, "sample {i} touches border");
                }
            }
        }
    }

    #[test]
    fn train_eval_disjoint() {
        let s = generate_dataset(&small()).unwrap();
        let (first_eval, ..) = generate_sample(&small(), 40).unwrap();
        assert_eq!(s.eval.images[0], first_eval);
        assert!(!s.train.images.contains(&first_eval));
    }

    #[test]
    fn rejects_empty() {
        let spec = SyntheticDatasetSpec { n_train: 0, ..small() };
        assert!(generate_dataset(&spec).is_err());
    }
}
