use crate::autodiff::{Tape, Tensor};
use crate::error::{ensure, Error, Result};
use crate::jpeg::{Image, Mask};
use crate::nn::{images_to_tensor, Layer, ModelKind, ParameterSet};

/// Non-negative class-evidence map at image resolution, max-normalized to 1
/// unless it is all zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub layer: String,
    pub class: usize,
}

impl Heatmap {
    /// 8-bit rendering (`round(255·v)`), e.g. for writing as PGM.
    pub fn to_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect(),
        }
    }
}

/// The last ReLU before the feature marker, or the last ReLU overall.
pub fn default_cam_layer(model: &ParameterSet) -> Option<String> {
    let mut relus = 0;
    let mut last = None;
    for layer in &model.descriptor().layers {
        match layer {
            Layer::Relu => {
                relus += 1;
                last = Some(format!("relu{relus}"));
            }
            Layer::Features if last.is_some() => return last,
            _ => {}
        }
    }
    last
}

/// Grad-CAM of `class` at activation `layer`: channel weights are the
/// spatial means of ∂score/∂A, the map is `ReLU(Σ_k α_k A_k)` normalized
/// and upsampled (nearest) to the image size. For segmenters the score is
/// the class logit summed over all pixels.
pub fn gradcam(model: &ParameterSet, image: &Image, class: usize, layer: &str) -> Result<Heatmap> {
    let kind = model.descriptor().kind;
    ensure!(kind != ModelKind::AcNet, "Grad-CAM needs a task model");
    let k = model.descriptor().num_classes.unwrap_or(0);
    ensure!(class < k, "class {class} out of range [0, {k})");

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true)?;
    let x = tape.leaf(images_to_tensor(&[image])?, false)?;
    let out = model.forward_graph(&mut tape, &bound, x)?;
    let act = out
        .activation(layer)
        .ok_or_else(|| Error::invalid(format!("unknown layer '{layer}'")))?;
    let shape = tape.shape(act).to_vec();
    ensure!(shape.len() == 4, "layer '{layer}' is not a spatial activation");

    let onehot = |shape: &[usize]| Tensor::from_fn(shape, |i| if i == class { 1.0 } else { 0.0 });
    let picked = match kind {
        ModelKind::Classifier => {
            let w = tape.leaf(onehot(&[1, k]), false)?;
            tape.dense(out.logits, w, None)?
        }
        _ => {
            let w = tape.leaf(onehot(&[1, k, 1, 1]), false)?;
            tape.conv2d(out.logits, w, None, 1, 0)?
        }
    };
    let score = tape.sum(picked)?;
    let grads = tape.backward(score)?;
    let (c, h, w) = (shape[1], shape[2], shape[3]);
    let plane = h * w;
    let a = tape.value(act).data();
    let cam = match grads.get(act) {
        Some(g) => {
            let g = g.data();
            let mut cam = vec![0f64; plane];
            for ch in 0..c {
                let gs = &g[ch * plane..(ch + 1) * plane];
                let alpha = gs.iter().map(|&v| f64::from(v)).sum::<f64>() / plane as f64;
                for (m, &av) in cam.iter_mut().zip(&a[ch * plane..(ch + 1) * plane]) {
                    *m += alpha * f64::from(av);
                }
            }
            cam
        }
        // the score does not depend on this activation
        None => vec![0f64; plane],
    };
    let cam: Vec<f64> = cam.into_iter().map(|v| v.max(0.0)).collect();
    let max = cam.iter().copied().fold(0.0, f64::max);
    let (ih, iw) = (image.height(), image.width());
    let mut data = Vec::with_capacity(ih * iw);
    for y in 0..ih {
        let sy = y * h / ih;
        for xx in 0..iw {
            let v = cam[sy * w + xx * w / iw];
            data.push(if max > 0.0 { v / max } else { 0.0 });
        }
    }
    Ok(Heatmap { width: iw, height: ih, data, layer: layer.to_string(), class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_model, ArchitectureDescriptor};

    fn img() -> Image {
        Image::new(16, 16, (0..16 * 16 * 3).map(|i| ((i * 53) % 256) as u8).collect()).unwrap()
    }

    #[test]
    fn shape_range_and_errors() {
        let m = build_model(&ArchitectureDescriptor::classifier(5).with_input(16, 16), 4).unwrap();
        let layer = default_cam_layer(&m).unwrap();
        assert_eq!(layer, "relu3");
        let h = gradcam(&m, &img(), 2, &layer).unwrap();
        assert_eq!((h.width, h.height, h.data.len()), (16, 16, 256));
        assert!(h.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let max = h.data.iter().copied().fold(0.0, f64::max);
        assert!(max == 1.0 || max == 0.0);
        assert!(matches!(gradcam(&m, &img(), 0, "nope"), Err(Error::InvalidArgument(_))));
        assert!(gradcam(&m, &img(), 5, &layer).is_err());
    }

    #[test]
    fn segmenter_works() {
        let m = build_model(&ArchitectureDescriptor::segmenter(6).with_input(16, 16), 4).unwrap();
        let h = gradcam(&m, &img(), 1, "relu2").unwrap();
        assert_eq!(h.data.len(), 256);
    }
}
