//! Task networks and the artifact-correction network.
//!
//! Every model is a [`ParameterSet`] driven by an
//! [`ArchitectureDescriptor`]: an ordered layer list that [`build_model`]
//! validates and initializes, and that the forward pass interprets on an
//! autodiff [`Tape`](crate::autodiff::Tape).

mod checkpoint;
mod convert;
mod descriptor;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use convert::{images_to_tensor, tensor_to_images};
pub use descriptor::{ArchitectureDescriptor, InputSpec, Layer, ModelKind, ParamInit, ParamSpec, DEFAULT_SIZE, INPUT_MEAN, INPUT_STD};
pub use forward::{BoundParams, ForwardOutput, ForwardVars};
pub use params::{build_model, ParameterSet};
