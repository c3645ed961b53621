//! Datasets and experiment configuration.

mod config;
mod dataset;
mod folder;
mod synthetic;

pub use config::{parse_config, parse_qualities, ConfigMap, DatasetSource, ExperimentConfig};
pub use dataset::Dataset;
pub use folder::{load_image_folder, save_image_folder};
pub use synthetic::{generate_dataset, generate_sample, SyntheticDatasetSpec, SyntheticSplit, SHAPE_NAMES};
