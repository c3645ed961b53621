use std::hash::{DefaultHasher, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::descriptor::{ArchitectureDescriptor, ParamInit};
use crate::autodiff::{GradMap, Tensor};
use crate::error::{ensure, Error, Result};

/// Named, ordered model parameters plus the descriptor that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    descriptor: ArchitectureDescriptor,
    pub tag: String,
    names: Vec<String>,
    tensors: Vec<Tensor<f32>>,
}

impl ParameterSet {
    /// Assembles a parameter set, checking names and shapes against the
    /// descriptor.
    pub fn from_parts(
        descriptor: ArchitectureDescriptor,
        tag: String,
        named: Vec<(String, Tensor<f32>)>,
    ) -> Result<Self> {
        let specs = descriptor.param_specs()?;
        ensure!(
            specs.len() == named.len(),
            "descriptor needs {} tensors, got {}",
            specs.len(),
            named.len()
        );
        for (spec, (name, t)) in specs.iter().zip(&named) {
            ensure!(spec.name == *name, "expected parameter {}, got {name}", spec.name);
            ensure!(
                spec.shape == t.shape(),
                "parameter {name}: shape {:?} != {:?}",
                t.shape(),
                spec.shape
            );
        }
        let (names, tensors) = named.into_iter().unzip();
        Ok(Self { descriptor, tag, names, tensors })
    }

    pub fn descriptor(&self) -> &ArchitectureDescriptor {
        &self.descriptor
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f32>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub(crate) fn tensors(&self) -> &[Tensor<f32>] {
        &self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Hash over names, shapes and exact value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, t) in self.iter() {
            h.write(name.as_bytes());
            for &d in t.shape() {
                h.write_usize(d);
            }
            for v in t.data() {
                h.write_u32(v.to_bits());
            }
        }
        h.finish()
    }

    /// Zero gradient for every parameter.
    pub fn zero_grads(&self) -> GradMap<f32> {
        self.iter().map(|(n, t)| (n.to_string(), Tensor::zeros(t.shape()))).collect()
    }

    /// Sets every parameter to zero.
    pub fn zeroed(mut self) -> Self {
        for t in &mut self.tensors {
            t.data_mut().fill(0.0);
        }
        self
    }
}

/// He-uniform initialization (`U(±√(6/fan_in))`), biases and `zero_init`
/// layers at zero. Deterministic in `seed`.
pub fn build_model(desc: &ArchitectureDescriptor, seed: u64) -> Result<ParameterSet> {
    let specs = desc.param_specs()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut named = Vec::with_capacity(specs.len());
    for spec in specs {
        let t = match spec.init {
            ParamInit::Zeros => Tensor::zeros(&spec.shape),
            ParamInit::HeUniform { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt();
                Tensor::from_fn(&spec.shape, |_| rng.random_range(-bound..bound) as f32)
            }
        };
        named.push((spec.name, t));
    }
    ParameterSet::from_parts(desc.clone(), format!("init-seed-{seed}"), named)
        .map_err(|e| Error::invalid(e.to_string()))
}
