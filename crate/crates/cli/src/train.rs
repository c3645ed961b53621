use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use compresscheck::data::Dataset;
use compresscheck::mitigation::{
    default_target, multihead_ttac, pretrain_ac, pretrain_task, supervised_finetune, ttac_train, TrainLog, TtacTask,
};
use compresscheck::nn::{build_model, save_checkpoint, ArchitectureDescriptor, ModelKind, ParameterSet};

use crate::common::{load_dataset, load_model, opt, resolve_config, write_resolved, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Train a task model on uncompressed images.
    Task,
    /// Train the off-the-shelf corrector on pixel reconstruction.
    Ac,
    /// Fine-tune a corrector against one frozen task model.
    Ttac,
    /// Fine-tune a task model on JPEG-augmented images.
    Finetune,
    /// Fine-tune a corrector against several frozen task models.
    Multihead,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Task => "task",
            Mode::Ac => "ac",
            Mode::Ttac => "ttac",
            Mode::Finetune => "finetune",
            Mode::Multihead => "multihead",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Kind {
    Classifier,
    Segmenter,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Target {
    Logits,
    Features,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Output directory for `model.cchk`, `train_log.tsv` and `config.cfg`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image-folder dataset; without it a synthetic set is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Train on the first N samples only.
    #[arg(long)]
    subset: Option<usize>,
    /// Architecture for `--mode task`.
    #[arg(long, value_enum)]
    model: Option<Kind>,
    /// Frozen (ttac, multihead) or starting (finetune, task) task model.
    /// Repeat or comma-separate for multihead.
    #[arg(long, value_delimiter = ',')]
    task_checkpoint: Vec<PathBuf>,
    /// Starting corrector for ac, ttac and multihead.
    #[arg(long)]
    ac_checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    target: Option<Target>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr_start: Option<f64>,
    #[arg(long)]
    lr_end: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    q_min: Option<u8>,
    #[arg(long)]
    q_max: Option<u8>,
    /// Defaults to $COMPRESSCHECK_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
}

fn task_descriptor(kind: ModelKind, data: &Dataset) -> CliResult<ArchitectureDescriptor> {
    let img = data.images.first().ok_or_else(|| CliError::Usage("dataset is empty".into()))?;
    let desc = match kind {
        ModelKind::Classifier => ArchitectureDescriptor::classifier(data.num_classes()),
        ModelKind::Segmenter => ArchitectureDescriptor::segmenter(data.num_seg_classes()),
        ModelKind::AcNet => ArchitectureDescriptor::ac_net(),
    };
    Ok(desc.with_input(img.height(), img.width()))
}

fn write_log(log: &TrainLog, path: &std::path::Path) -> CliResult<()> {
    let mut s = String::from("epoch\tloss");
    for t in 0..log.task_loss.len() {
        let _ = write!(s, "\ttask{t}");
    }
    s.push('\n');
    for (e, l) in log.epoch_loss.iter().enumerate() {
        let _ = write!(s, "{e}\t{l}");
        for series in &log.task_loss {
            let _ = write!(s, "\t{}", series[e]);
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn run(a: TrainArgs) -> CliResult<()> {
    let checkpoints: Vec<String> = a.task_checkpoint.iter().map(|p| p.display().to_string()).collect();
    let cfg = resolve_config(
        a.config.as_deref(),
        &[
            ("train.mode", Some(a.mode.as_str().to_string())),
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
            ("data.path", a.data.as_ref().map(|p| p.display().to_string())),
            ("data.split", a.split.clone()),
            ("data.subset", opt(&a.subset)),
            (
                "model.kind",
                a.model.map(|k| match k {
                    Kind::Classifier => "classifier".to_string(),
                    Kind::Segmenter => "segmenter".to_string(),
                }),
            ),
            ("model.checkpoint", (!checkpoints.is_empty()).then(|| checkpoints.join(","))),
            ("mitigation.ac_checkpoint", a.ac_checkpoint.as_ref().map(|p| p.display().to_string())),
            (
                "mitigation.target",
                a.target.map(|t| match t {
                    Target::Logits => "logits".to_string(),
                    Target::Features => "features".to_string(),
                }),
            ),
            ("train.epochs", opt(&a.epochs)),
            ("train.lr_start", opt(&a.lr_start)),
            ("train.lr_end", opt(&a.lr_end)),
            ("train.batch_size", opt(&a.batch_size)),
            ("train.q_min", opt(&a.q_min)),
            ("train.q_max", opt(&a.q_max)),
            ("seed", opt(&a.seed)),
        ],
    )?;
    let out = cfg.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let n_tasks = cfg.model_checkpoints.len();
    match a.mode {
        Mode::Ttac | Mode::Finetune if n_tasks != 1 => {
            return Err(CliError::Usage(format!("--mode {} needs exactly one --task-checkpoint", a.mode.as_str())))
        }
        Mode::Multihead if n_tasks < 2 => {
            return Err(CliError::Usage("--mode multihead needs at least two --task-checkpoint".into()))
        }
        Mode::Task if n_tasks > 1 => return Err(CliError::Usage("--mode task takes at most one --task-checkpoint".into())),
        _ => {}
    }

    let data = load_dataset(&cfg, "train")?;
    let protocol = &cfg.protocol;
    let start_ac = || -> CliResult<ParameterSet> {
        match &cfg.ac_checkpoint {
            Some(p) => load_model(p),
            None => Ok(build_model(&ArchitectureDescriptor::ac_net(), cfg.seed)?),
        }
    };
    let (model, log) = match a.mode {
        Mode::Task => {
            let init = match cfg.model_checkpoints.first() {
                Some(p) => load_model(p)?,
                None => {
                    let kind = cfg.model_kind.unwrap_or(ModelKind::Classifier);
                    if kind == ModelKind::AcNet {
                        return Err(CliError::Usage("--mode task trains classifiers or segmenters".into()));
                    }
                    build_model(&task_descriptor(kind, &data)?, cfg.seed)?
                }
            };
            pretrain_task(&init, &data, protocol)?
        }
        Mode::Finetune => supervised_finetune(&load_model(&cfg.model_checkpoints[0])?, &data, protocol)?,
        Mode::Ac => pretrain_ac(&start_ac()?, &data, protocol)?,
        Mode::Ttac => {
            let task = load_model(&cfg.model_checkpoints[0])?;
            let target = cfg.target.unwrap_or_else(|| default_target(&task));
            ttac_train(&start_ac()?, &task, &data, protocol, target)?
        }
        Mode::Multihead => {
            let models = cfg.model_checkpoints.iter().map(|p| load_model(p)).collect::<CliResult<Vec<_>>>()?;
            let tasks: Vec<TtacTask> = models
                .iter()
                .map(|m| TtacTask { model: m, dataset: &data, target: cfg.target.unwrap_or_else(|| default_target(m)) })
                .collect();
            multihead_ttac(&start_ac()?, &tasks, protocol)?
        }
    };
    fs::create_dir_all(&out)?;
    save_checkpoint(&model, &out.join("model.cchk"))?;
    write_log(&log, &out.join("train_log.tsv"))?;
    write_resolved(&cfg, &out.join("config.cfg"))?;
    log::info!("saved {} to {}", model.tag, out.join("model.cchk").display());
    Ok(())
}
