use rand::Rng;

use crate::error::{ensure, Result};
use crate::jpeg::{roundtrip, Image};
use crate::par;

/// Draws one integer quality per image, uniform on the inclusive range.
pub fn draw_qualities<R: Rng>(n: usize, range: (u8, u8), rng: &mut R) -> Result<Vec<u8>> {
    let (lo, hi) = range;
    ensure!(1 <= lo && lo <= hi && hi <= 100, "quality range [{lo}, {hi}] not within [1, 100]");
    Ok((0..n).map(|_| rng.random_range(lo..=hi)).collect())
}

/// Compresses and decodes every image at an independently drawn quality.
/// Qualities come from `rng` in image order; the codec work is spread over
/// the worker pool, so the output does not depend on the worker count.
pub fn augment_jpeg<R: Rng>(images: &[&Image], range: (u8, u8), rng: &mut R) -> Result<(Vec<Image>, Vec<u8>)> {
    let qualities = draw_qualities(images.len(), range, rng)?;
    let jobs: Vec<(&Image, u8)> = images.iter().copied().zip(qualities.iter().copied()).collect();
    let out = par::try_map(&jobs, |&(im, q)| roundtrip(im, q))?;
    Ok((out, qualities))
}
