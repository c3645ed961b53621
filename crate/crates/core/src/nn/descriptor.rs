use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Classifier,
    Segmenter,
    AcNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

/// One entry of a layer list. Convolutions use "same" padding
/// (`kernel / 2`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Layer {
    Conv {
        kernel: usize,
        channels: usize,
        stride: usize,
        /// Start from all-zero weights and bias instead of He-uniform.
        #[serde(default)]
        zero_init: bool,
    },
    Relu,
    MaxPool2,
    GlobalAvgPool,
    Dense { units: usize },
    /// Nearest-neighbour resize back to the input's spatial size.
    UpsampleToInput,
    /// Adds the network input to the current activation.
    ResidualInput,
    /// Clamp to `[0, 1]`.
    Clamp01,
    /// Fixed input transform `(x − INPUT_MEAN) / INPUT_STD`.
    Standardize,
    /// Marks the current activation as the model's feature output.
    Features,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamInit {
    HeUniform { fan_in: usize },
    Zeros,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: ParamInit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub kind: ModelKind,
    pub input: InputSpec,
    pub num_classes: Option<usize>,
    pub layers: Vec<Layer>,
}

fn conv(kernel: usize, channels: usize) -> Layer {
    Layer::Conv { kernel, channels, stride: 1, zero_init: false }
}

fn encoder() -> Vec<Layer> {
    vec![
        Layer::Standardize,
        conv(3, 16),
        Layer::Relu,
        Layer::MaxPool2,
        conv(3, 32),
        Layer::Relu,
        Layer::MaxPool2,
        conv(3, 64),
        Layer::Relu,
        Layer::Features,
    ]
}

pub const DEFAULT_SIZE: usize = 48;

/// Task models see `(x − 0.5) / 0.25`, which puts `[0, 1]` pixels at
/// roughly unit scale. Without it the small networks sit on a loss
/// plateau for many epochs.
pub const INPUT_MEAN: f32 = 0.5;
pub const INPUT_STD: f32 = 0.25;

impl ArchitectureDescriptor {
    /// Three conv blocks, global average pooling and a dense head.
    pub fn classifier(num_classes: usize) -> Self {
        let mut layers = encoder();
        layers.extend([Layer::GlobalAvgPool, Layer::Dense { units: num_classes }]);
        Self {
            kind: ModelKind::Classifier,
            input: InputSpec { channels: 3, height: DEFAULT_SIZE, width: DEFAULT_SIZE },
            num_classes: Some(num_classes),
            layers,
        }
    }

    /// Classifier encoder with a 1×1 conv head upsampled to input size.
    pub fn segmenter(num_classes: usize) -> Self {
        let mut layers = encoder();
        layers.extend([conv(1, num_classes), Layer::UpsampleToInput]);
        Self {
            kind: ModelKind::Segmenter,
            input: InputSpec { channels: 3, height: DEFAULT_SIZE, width: DEFAULT_SIZE },
            num_classes: Some(num_classes),
            layers,
        }
    }

    /// ARCNN-style corrector: 9×9·32, 5×5·16, 1×1·16, 5×5·3 on the
    /// standardized input, a residual connection to the raw input and a
    /// final clamp. The last conv starts at
    /// zero so a fresh network is the identity.
    pub fn ac_net() -> Self {
        Self {
            kind: ModelKind::AcNet,
            input: InputSpec { channels: 3, height: DEFAULT_SIZE, width: DEFAULT_SIZE },
            num_classes: None,
            layers: vec![
                Layer::Standardize,
                conv(9, 32),
                Layer::Relu,
                conv(5, 16),
                Layer::Relu,
                conv(1, 16),
                Layer::Relu,
                Layer::Features,
                Layer::Conv { kernel: 5, channels: 3, stride: 1, zero_init: true },
                Layer::ResidualInput,
                Layer::Clamp01,
            ],
        }
    }

    pub fn with_input(mut self, height: usize, width: usize) -> Self {
        self.input.height = height;
        self.input.width = width;
        self
    }

    pub fn has_features(&self) -> bool {
        self.layers.contains(&Layer::Features)
    }

    /// Checks shape consistency for the declared input and lists the
    /// parameters the layer list needs, in order.
    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        let inp = self.input;
        ensure!(
            inp.channels >= 1 && inp.height >= 1 && inp.width >= 1,
            "input spec must be non-empty"
        );
        ensure!(!self.layers.is_empty(), "descriptor has no layers");
        // current activation shape without the batch axis
        let mut shape = vec![inp.channels, inp.height, inp.width];
        let mut specs = Vec::new();
        let (mut nconv, mut ndense) = (0, 0);
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Conv { kernel, channels, stride, zero_init } => {
                    ensure!(shape.len() == 3, "layer {i}: conv needs a spatial input");
                    ensure!(kernel % 2 == 1 && kernel >= 1, "layer {i}: kernel must be odd");
                    ensure!(channels >= 1 && stride >= 1, "layer {i}: channels and stride must be >= 1");
                    nconv += 1;
                    let fan_in = shape[0] * kernel * kernel;
                    let init = if zero_init { ParamInit::Zeros } else { ParamInit::HeUniform { fan_in } };
                    specs.push(ParamSpec {
                        name: format!("conv{nconv}.weight"),
                        shape: vec![channels, shape[0], kernel, kernel],
                        init,
                    });
                    specs.push(ParamSpec { name: format!("conv{nconv}.bias"), shape: vec![channels], init: ParamInit::Zeros });
                    let pad = kernel / 2;
                    shape = vec![
                        channels,
                        (shape[1] + 2 * pad - kernel) / stride + 1,
                        (shape[2] + 2 * pad - kernel) / stride + 1,
                    ];
                }
                Layer::Relu | Layer::Features => {}
                Layer::Clamp01 | Layer::Standardize => {}
                Layer::MaxPool2 => {
                    ensure!(shape.len() == 3 && shape[1] >= 2 && shape[2] >= 2, "layer {i}: maxpool needs >= 2x2 input");
                    shape = vec![shape[0], shape[1] / 2, shape[2] / 2];
                }
                Layer::GlobalAvgPool => {
                    ensure!(shape.len() == 3, "layer {i}: global pooling needs a spatial input");
                    shape = vec![shape[0]];
                }
                Layer::Dense { units } => {
                    ensure!(shape.len() == 1, "layer {i}: dense needs a flat input");
                    ensure!(units >= 1, "layer {i}: dense units must be >= 1");
                    ndense += 1;
                    specs.push(ParamSpec {
                        name: format!("dense{ndense}.weight"),
                        shape: vec![units, shape[0]],
                        init: ParamInit::HeUniform { fan_in: shape[0] },
                    });
                    specs.push(ParamSpec { name: format!("dense{ndense}.bias"), shape: vec![units], init: ParamInit::Zeros });
                    shape = vec![units];
                }
                Layer::UpsampleToInput => {
                    ensure!(shape.len() == 3, "layer {i}: upsample needs a spatial input");
                    shape = vec![shape[0], inp.height, inp.width];
                }
                Layer::ResidualInput => {
                    ensure!(
                        shape == [inp.channels, inp.height, inp.width],
                        "layer {i}: residual shape {shape:?} differs from input"
                    );
                }
            }
        }
        match self.kind {
            ModelKind::Classifier => {
                let k = self.num_classes.unwrap_or(0);
                ensure!(k >= 1 && shape == [k], "classifier must end in {k} logits, got {shape:?}");
            }
            ModelKind::Segmenter => {
                let k = self.num_classes.unwrap_or(0);
                ensure!(
                    k >= 1 && shape == [k, inp.height, inp.width],
                    "segmenter must end in {k}×H×W logits, got {shape:?}"
                );
            }
            ModelKind::AcNet => {
                ensure!(
                    shape == [inp.channels, inp.height, inp.width],
                    "ac_net output {shape:?} must match its input"
                );
            }
        }
        Ok(specs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert_eq!(ArchitectureDescriptor::classifier(5).param_specs().unwrap().len(), 8);
        assert_eq!(ArchitectureDescriptor::segmenter(6).param_specs().unwrap().len(), 8);
        assert_eq!(ArchitectureDescriptor::ac_net().param_specs().unwrap().len(), 8);
    }

    #[test]
    fn inconsistent_descriptors() {
        let mut d = ArchitectureDescriptor::classifier(5);
        d.num_classes = Some(4);
        assert!(d.param_specs().is_err());
        // without the last conv the output has 16 channels, not 3
        let mut d = ArchitectureDescriptor::ac_net();
        d.layers.remove(8);
        assert!(d.param_specs().is_err());
        let mut d = ArchitectureDescriptor::classifier(5);
        d.layers.insert(0, Layer::Dense { units: 3 });
        assert!(d.param_specs().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let d = ArchitectureDescriptor::ac_net();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<ArchitectureDescriptor>(&s).unwrap(), d);
    }
}
