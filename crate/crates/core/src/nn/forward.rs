use super::descriptor::{Layer, ModelKind, INPUT_MEAN, INPUT_STD};
use super::params::ParameterSet;
use crate::autodiff::{Gradients, GradMap, Tape, Tensor, Var};
use crate::error::{ensure, Result};

/// Parameter leaves recorded on a tape, aligned with the parameter order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub vars: Vec<Var>,
    pub trainable: bool,
}

/// Graph handles produced by [`ParameterSet::forward_graph`].
#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// Unnormalized class scores (or the corrected image for `ac_net`).
    pub logits: Var,
    pub features: Option<Var>,
    /// Named intermediate activations (`conv1`, `relu1`, `pool1`, ...).
    pub activations: Vec<(String, Var)>,
}

impl ForwardVars {
    pub fn activation(&self, name: &str) -> Option<Var> {
        self.activations.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Materialized outputs of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub logits: Tensor<f32>,
    pub features: Option<Tensor<f32>>,
}

impl ParameterSet {
    /// Records every parameter as a leaf. Frozen (`trainable = false`)
    /// parameters still pass gradients through to their inputs.
    pub fn bind(&self, tape: &mut Tape<f32>, trainable: bool) -> Result<BoundParams> {
        let vars = self
            .tensors()
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect::<Result<_>>()?;
        Ok(BoundParams { vars, trainable })
    }

    /// Collects parameter gradients by name. Parameters that received no
    /// gradient get zeros.
    pub fn collect_grads(&self, bound: &BoundParams, grads: &Gradients<f32>) -> GradMap<f32> {
        self.iter()
            .zip(&bound.vars)
            .map(|((name, t), &v)| {
                let g = grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
                (name.to_string(), g)
            })
            .collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let inp = self.descriptor().input;
        ensure!(shape.len() == 4, "model input must be N×C×H×W, got {shape:?}");
        ensure!(shape[0] >= 1, "empty batch");
        ensure!(shape[1] == inp.channels, "model expects {} channels, got {}", inp.channels, shape[1]);
        if self.descriptor().kind != ModelKind::AcNet {
            ensure!(
                shape[2] == inp.height && shape[3] == inp.width,
                "model expects {}×{} inputs, got {}×{}",
                inp.height,
                inp.width,
                shape[2],
                shape[3]
            );
        }
        Ok(())
    }

    /// Records the forward pass of `input` on `tape`.
    ///
    /// `ac_net` models are fully convolutional and accept any spatial size;
    /// task models require the declared input size.
    pub fn forward_graph(&self, tape: &mut Tape<f32>, bound: &BoundParams, input: Var) -> Result<ForwardVars> {
        ensure!(bound.vars.len() == self.len(), "bound parameters do not belong to this model");
        let in_shape = tape.shape(input).to_vec();
        self.check_input(&in_shape)?;
        let mut cur = input;
        let mut next_param = 0;
        let mut features = None;
        let mut activations = Vec::new();
        let mut counts = [0usize; 4];
        for layer in &self.descriptor().layers {
            let name = match *layer {
                Layer::Conv { kernel, stride, .. } => {
                    let (w, b) = (bound.vars[next_param], bound.vars[next_param + 1]);
                    next_param += 2;
                    cur = tape.conv2d(cur, w, Some(b), stride, kernel / 2)?;
                    counts[0] += 1;
                    format!("conv{}", counts[0])
                }
                Layer::Relu => {
                    cur = tape.relu(cur)?;
                    counts[1] += 1;
                    format!("relu{}", counts[1])
                }
                Layer::MaxPool2 => {
                    cur = tape.maxpool2(cur)?;
                    counts[2] += 1;
                    format!("pool{}", counts[2])
                }
                Layer::GlobalAvgPool => {
                    cur = tape.avgpool_global(cur)?;
                    "gap".to_string()
                }
                Layer::Dense { .. } => {
                    let (w, b) = (bound.vars[next_param], bound.vars[next_param + 1]);
                    next_param += 2;
                    cur = tape.dense(cur, w, Some(b))?;
                    counts[3] += 1;
                    format!("dense{}", counts[3])
                }
                Layer::UpsampleToInput => {
                    cur = tape.upsample_nearest(cur, in_shape[2], in_shape[3])?;
                    "upsample".to_string()
                }
                Layer::ResidualInput => {
                    cur = tape.residual_add(input, cur)?;
                    "residual".to_string()
                }
                Layer::Clamp01 => {
                    cur = tape.clamp(cur, 0.0, 1.0)?;
                    "clamp".to_string()
                }
                Layer::Standardize => {
                    cur = tape.affine(cur, 1.0 / INPUT_STD, -INPUT_MEAN / INPUT_STD)?;
                    "standardize".to_string()
                }
                Layer::Features => {
                    features = Some(cur);
                    continue;
                }
            };
            activations.push((name, cur));
        }
        Ok(ForwardVars { logits: cur, features, activations })
    }

    /// Gradient-free forward pass.
    pub fn forward(&self, batch: &Tensor<f32>) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let x = tape.leaf(batch.clone(), false)?;
        let out = self.forward_graph(&mut tape, &bound, x)?;
        Ok(ForwardOutput {
            logits: tape.value(out.logits).clone(),
            features: out.features.map(|f| tape.value(f).clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_model, ArchitectureDescriptor};

    fn batch(n: usize, h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn(&[n, 3, h, w], |i| ((i * 7919) % 1000) as f32 / 1000.0)
    }

    #[test]
    fn classifier_shapes() {
        let m = build_model(&ArchitectureDescriptor::classifier(5), 0).unwrap();
        let out = m.forward(&batch(2, 48, 48)).unwrap();
        assert_eq!(out.logits.shape(), &[2, 5]);
        assert_eq!(out.features.unwrap().shape(), &[2, 64, 12, 12]);
    }

    #[test]
    fn segmenter_shapes() {
        let m = build_model(&ArchitectureDescriptor::segmenter(6), 0).unwrap();
        let out = m.forward(&batch(2, 48, 48)).unwrap();
        assert_eq!(out.logits.shape(), &[2, 6, 48, 48]);
    }

    #[test]
    fn fresh_ac_net_is_identity() {
        let m = build_model(&ArchitectureDescriptor::ac_net(), 0).unwrap();
        let x = batch(2, 20, 12);
        let out = m.forward(&x).unwrap();
        assert_eq!(out.logits, x);
        let zero = m.clone().zeroed();
        assert_eq!(zero.forward(&x).unwrap().logits, x);
    }

    #[test]
    fn ac_output_in_unit_range() {
        let mut m = build_model(&ArchitectureDescriptor::ac_net(), 0).unwrap();
        for v in m.get_mut("conv4.weight").unwrap().data_mut() {
            *v = 0.5;
        }
        let out = m.forward(&batch(1, 16, 16)).unwrap();
        assert!(out.logits.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn wrong_input_size() {
        let m = build_model(&ArchitectureDescriptor::classifier(5), 0).unwrap();
        assert!(m.forward(&batch(1, 40, 48)).is_err());
        let bad = Tensor::zeros(&[1, 1, 48, 48]);
        assert!(m.forward(&bad).is_err());
    }

    #[test]
    fn forward_is_pure() {
        let m = build_model(&ArchitectureDescriptor::classifier(5), 4).unwrap();
        let x = batch(3, 48, 48);
        assert_eq!(m.forward(&x).unwrap(), m.forward(&x).unwrap());
    }
}
