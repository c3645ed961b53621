use crate::autodiff::Tensor;
use crate::error::{ensure, Result};
use crate::jpeg::Image;

/// Stacks images into an N×3×H×W tensor scaled to `[0, 1]`.
pub fn images_to_tensor(images: &[&Image]) -> Result<Tensor<f32>> {
    ensure!(!images.is_empty(), "empty image batch");
    let (w, h) = (images[0].width(), images[0].height());
    ensure!(
        images.iter().all(|im| im.width() == w && im.height() == h),
        "batch images must share dimensions"
    );
    let plane = w * h;
    let mut data = vec![0f32; images.len() * 3 * plane];
    for (i, im) in images.iter().enumerate() {
        let out = &mut data[i * 3 * plane..(i + 1) * 3 * plane];
        for (p, px) in im.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = f32::from(px[c]) / 255.0;
            }
        }
    }
    Tensor::new(&[images.len(), 3, h, w], data)
}

/// Inverse of [`images_to_tensor`]: clamps to `[0, 1]` and rounds to 8 bits.
pub fn tensor_to_images(t: &Tensor<f32>) -> Result<Vec<Image>> {
    let s = t.shape();
    ensure!(s.len() == 4 && s[1] == 3, "expected N×3×H×W, got {s:?}");
    let (n, h, w) = (s[0], s[2], s[3]);
    let plane = h * w;
    (0..n)
        .map(|i| {
            let src = t.outer(i);
            let mut data = Vec::with_capacity(3 * plane);
            for p in 0..plane {
                for c in 0..3 {
                    data.push((src[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
            Image::new(w, h, data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let img = Image::new(3, 2, (0..18).map(|v| v * 14).collect()).unwrap();
        let t = images_to_tensor(&[&img, &img]).unwrap();
        assert_eq!(t.shape(), &[2, 3, 2, 3]);
        assert_eq!(tensor_to_images(&t).unwrap(), vec![img.clone(), img]);
    }
}
