//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Later keys replace
//! earlier ones, and [`ConfigMap::merge`] applies command-line overrides on
//! top of a file. [`ExperimentConfig::to_config_string`] writes the
//! resolved settings back in the same format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use super::synthetic::SyntheticDatasetSpec;
use crate::error::{ensure, Error, Result};
use crate::mitigation::{MitigationKind, TrainProtocol, TtacTarget};
use crate::nn::ModelKind;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    /// Entries of `other` win.
    pub fn merge(&mut self, other: &ConfigMap) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::invalid(format!("bad value for {key}: '{v}'"))))
            .transpose()
    }
}

pub fn parse_config(text: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("config line {}: expected key=value", n + 1)))?;
        let k = k.trim();
        ensure!(!k.is_empty(), "config line {}: empty key", n + 1);
        map.set(k, v.trim());
    }
    Ok(map)
}

fn list(v: Option<&str>) -> impl Iterator<Item = &str> {
    v.into_iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty())
}

/// Comma-separated JPEG qualities, each in `[1, 100]`.
pub fn parse_qualities(v: &str) -> Result<Vec<u8>> {
    let qs = list(Some(v))
        .map(|q| match q.parse::<u8>() {
            Ok(q) if (1..=100).contains(&q) => Ok(q),
            _ => Err(Error::invalid(format!("bad quality '{q}'"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    ensure!(!qs.is_empty(), "empty quality list");
    Ok(qs)
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticDatasetSpec),
    Folder(PathBuf),
}

const SYNTHETIC_KEYS: [&str; 6] = ["data.seed", "data.n_train", "data.n_eval", "data.size", "data.num_classes", "data.noise"];

const KNOWN_KEYS: [&str; 28] = [
    "seed",
    "data.path",
    "data.split",
    "data.subset",
    "data.seed",
    "data.n_train",
    "data.n_eval",
    "data.size",
    "data.num_classes",
    "data.noise",
    "model.kind",
    "model.checkpoint",
    "mitigation",
    "mitigation.target",
    "mitigation.ac_checkpoint",
    "mitigation.skip_on_uncompressed",
    "train.epochs",
    "train.lr_start",
    "train.lr_end",
    "train.momentum",
    "train.weight_decay",
    "train.batch_size",
    "train.q_min",
    "train.q_max",
    "train.seed",
    "train.mode",
    "sweep.qualities",
    "out",
];

/// Everything needed to rerun an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSource,
    pub model_kind: Option<ModelKind>,
    /// Several for multihead training (comma-separated in the file).
    pub model_checkpoints: Vec<PathBuf>,
    pub mitigation: MitigationKind,
    pub target: Option<TtacTarget>,
    pub ac_checkpoint: Option<PathBuf>,
    pub skip_on_uncompressed: bool,
    pub protocol: TrainProtocol,
    /// Split directory of a folder dataset.
    pub split: Option<String>,
    /// Use only the first `n` samples.
    pub subset: Option<usize>,
    pub train_mode: Option<String>,
    pub qualities: Vec<u8>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Builds a config from a key map. `seed` seeds everything that has no
    /// more specific seed key.
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        for (k, _) in map.iter() {
            ensure!(KNOWN_KEYS.contains(&k), "unknown config key '{k}'");
        }
        let seed = map.parsed::<u64>("seed")?.unwrap_or(42);
        let dataset = match map.get("data.path") {
            Some(p) => {
                let clash: Vec<&str> = SYNTHETIC_KEYS.iter().copied().filter(|k| map.contains(k)).collect();
                ensure!(clash.is_empty(), "data.path conflicts with synthetic keys {clash:?}");
                DatasetSource::Folder(PathBuf::from(p))
            }
            None => {
                let d = SyntheticDatasetSpec::default();
                let spec = SyntheticDatasetSpec {
                    seed: map.parsed("data.seed")?.unwrap_or(seed),
                    n_train: map.parsed("data.n_train")?.unwrap_or(d.n_train),
                    n_eval: map.parsed("data.n_eval")?.unwrap_or(d.n_eval),
                    size: map.parsed("data.size")?.unwrap_or(d.size),
                    num_classes: map.parsed("data.num_classes")?.unwrap_or(d.num_classes),
                    noise: map.parsed("data.noise")?.unwrap_or(d.noise),
                };
                ensure!(spec.n_train >= 1 && spec.n_eval >= 1, "synthetic dataset sizes must be >= 1");
                DatasetSource::Synthetic(spec)
            }
        };
        let model_kind = match map.get("model.kind") {
            None => None,
            Some("classifier") => Some(ModelKind::Classifier),
            Some("segmenter") => Some(ModelKind::Segmenter),
            Some("ac_net") => Some(ModelKind::AcNet),
            Some(other) => return Err(Error::invalid(format!("unknown model kind '{other}'"))),
        };
        let d = TrainProtocol::default();
        let protocol = TrainProtocol {
            epochs: map.parsed("train.epochs")?.unwrap_or(d.epochs),
            lr_start: map.parsed("train.lr_start")?.unwrap_or(d.lr_start),
            lr_end: map.parsed("train.lr_end")?.unwrap_or(d.lr_end),
            momentum: map.parsed("train.momentum")?.unwrap_or(d.momentum),
            weight_decay: map.parsed("train.weight_decay")?.unwrap_or(d.weight_decay),
            batch_size: map.parsed("train.batch_size")?.unwrap_or(d.batch_size),
            quality_range: (
                map.parsed("train.q_min")?.unwrap_or(d.quality_range.0),
                map.parsed("train.q_max")?.unwrap_or(d.quality_range.1),
            ),
            seed: map.parsed("train.seed")?.unwrap_or(seed),
        };
        protocol.validate()?;
        Ok(Self {
            seed,
            dataset,
            model_kind,
            model_checkpoints: list(map.get("model.checkpoint")).map(PathBuf::from).collect(),
            mitigation: map.parsed("mitigation")?.unwrap_or(MitigationKind::None),
            target: map.parsed("mitigation.target")?,
            ac_checkpoint: map.get("mitigation.ac_checkpoint").map(PathBuf::from),
            skip_on_uncompressed: map.parsed("mitigation.skip_on_uncompressed")?.unwrap_or(true),
            protocol,
            split: map.get("data.split").map(String::from),
            subset: map.parsed("data.subset")?,
            train_mode: map.get("train.mode").map(String::from),
            qualities: match map.get("sweep.qualities") {
                Some(v) => parse_qualities(v)?,
                None => crate::study::DEFAULT_QUALITIES.to_vec(),
            },
            out: map.get("out").map(PathBuf::from),
        })
    }

    /// Every setting, defaults included, in `key = value` form. Parsing the
    /// result gives back an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        match &self.dataset {
            DatasetSource::Folder(p) => kv("data.path", p.display().to_string()),
            DatasetSource::Synthetic(d) => {
                kv("data.seed", d.seed.to_string());
                kv("data.n_train", d.n_train.to_string());
                kv("data.n_eval", d.n_eval.to_string());
                kv("data.size", d.size.to_string());
                kv("data.num_classes", d.num_classes.to_string());
                kv("data.noise", d.noise.to_string());
            }
        }
        if let Some(k) = self.model_kind {
            let name = match k {
                ModelKind::Classifier => "classifier",
                ModelKind::Segmenter => "segmenter",
                ModelKind::AcNet => "ac_net",
            };
            kv("model.kind", name.into());
        }
        if !self.model_checkpoints.is_empty() {
            let paths: Vec<String> = self.model_checkpoints.iter().map(|p| p.display().to_string()).collect();
            kv("model.checkpoint", paths.join(","));
        }
        kv("mitigation", self.mitigation.to_string());
        if let Some(t) = self.target {
            kv("mitigation.target", if t == TtacTarget::Logits { "logits" } else { "features" }.into());
        }
        if let Some(p) = &self.ac_checkpoint {
            kv("mitigation.ac_checkpoint", p.display().to_string());
        }
        kv("mitigation.skip_on_uncompressed", self.skip_on_uncompressed.to_string());
        let p = &self.protocol;
        kv("train.epochs", p.epochs.to_string());
        kv("train.lr_start", format!("{:e}", p.lr_start));
        kv("train.lr_end", format!("{:e}", p.lr_end));
        kv("train.momentum", p.momentum.to_string());
        kv("train.weight_decay", format!("{:e}", p.weight_decay));
        kv("train.batch_size", p.batch_size.to_string());
        kv("train.q_min", p.quality_range.0.to_string());
        kv("train.q_max", p.quality_range.1.to_string());
        kv("train.seed", p.seed.to_string());
        if let Some(m) = &self.train_mode {
            kv("train.mode", m.clone());
        }
        if let Some(sp) = &self.split {
            kv("data.split", sp.clone());
        }
        if let Some(n) = self.subset {
            kv("data.subset", n.to_string());
        }
        let qs: Vec<String> = self.qualities.iter().map(u8::to_string).collect();
        kv("sweep.qualities", qs.join(","));
        if let Some(o) = &self.out {
            kv("out", o.display().to_string());
        }
        s
    }
}
