use std::fs;
use std::path::{Path, PathBuf};

use compresscheck::data::{
    generate_dataset, load_image_folder, parse_config, ConfigMap, Dataset, DatasetSource, ExperimentConfig,
};
use compresscheck::mitigation::{MitigationKind, MitigationStrategy, TtacTarget};
use compresscheck::jpeg::pnm::read_image;
use compresscheck::jpeg::Image;
use compresscheck::nn::{load_checkpoint, ParameterSet};

pub const SEED_ENV: &str = "COMPRESSCHECK_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] compresscheck::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}: no such file or directory")]
    Missing(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Configuration problems are the caller's to fix: report them as usage
/// errors.
pub fn usage(e: compresscheck::Error) -> CliError {
    match e {
        compresscheck::Error::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::Core(other),
    }
}

/// Seed from the environment, if set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Layers a config file (if any), the environment seed and command-line
/// overrides, in increasing precedence. The environment seed only fills
/// in when neither the file nor the flags set one.
pub fn resolve_config(file: Option<&Path>, overrides: &[(&str, Option<String>)]) -> CliResult<ExperimentConfig> {
    let mut map = match file {
        Some(p) => {
            require_file(p)?;
            let text = fs::read_to_string(p)?;
            parse_config(&text).map_err(usage)?
        }
        None => ConfigMap::new(),
    };
    let mut cli = ConfigMap::new();
    for (k, v) in overrides {
        if let Some(v) = v {
            cli.set(*k, v.clone());
        }
    }
    map.merge(&cli);
    if !map.contains("seed") {
        if let Some(s) = env_seed()? {
            map.set("seed", s.to_string());
        }
    }
    ExperimentConfig::from_map(&map).map_err(usage)
}

pub fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

pub fn load_dataset(cfg: &ExperimentConfig, default_split: &str) -> CliResult<Dataset> {
    let split = cfg.split.as_deref().unwrap_or(default_split);
    let data = match &cfg.dataset {
        DatasetSource::Folder(p) => {
            if !p.is_dir() {
                return Err(CliError::Missing(p.clone()));
            }
            load_image_folder(p, split)?
        }
        DatasetSource::Synthetic(spec) => {
            let s = generate_dataset(spec)?;
            match split {
                "train" => s.train,
                "eval" => s.eval,
                other => return Err(CliError::Usage(format!("synthetic data has splits train and eval, not '{other}'"))),
            }
        }
    };
    Ok(match cfg.subset {
        Some(n) => data.take(n),
        None => data,
    })
}

pub fn load_model(path: &Path) -> CliResult<ParameterSet> {
    require_file(path)?;
    Ok(load_checkpoint(path)?)
}

pub fn read_input(path: &Path) -> CliResult<Image> {
    require_file(path)?;
    Ok(read_image(path)?)
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

/// Strategy from a resolved config. Correction strategies need
/// `mitigation.ac_checkpoint`.
pub fn strategy(cfg: &ExperimentConfig) -> CliResult<MitigationStrategy> {
    let s = match cfg.mitigation {
        MitigationKind::None => MitigationStrategy::none(),
        MitigationKind::SupervisedFinetune => MitigationStrategy::supervised_finetune(),
        kind => {
            let path = cfg
                .ac_checkpoint
                .as_ref()
                .ok_or_else(|| CliError::Usage(format!("mitigation {kind} needs --ac-checkpoint")))?;
            let ac = load_model(path)?;
            if kind == MitigationKind::Ttac {
                MitigationStrategy::ttac(ac, cfg.target.unwrap_or(TtacTarget::Logits))
            } else {
                MitigationStrategy::off_the_shelf(ac)
            }
        }
    };
    Ok(s.with_skip(cfg.skip_on_uncompressed))
}

/// Writes the resolved configuration so the run can be repeated.
pub fn write_resolved(cfg: &ExperimentConfig, path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, cfg.to_config_string())?;
    Ok(())
}

/// `<file>.cfg` next to an output file.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}
