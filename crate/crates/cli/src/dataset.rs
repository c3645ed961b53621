use std::path::PathBuf;

use clap::Args;
use compresscheck::data::{generate_dataset, save_image_folder, DatasetSource};

use crate::common::{opt, resolve_config, write_resolved, CliError, CliResult};

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Output directory; receives `train/`, `eval/`, their masks and
    /// `config.cfg`.
    #[arg(long)]
    out: PathBuf,
    /// Defaults to $COMPRESSCHECK_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_eval: Option<usize>,
    /// Square image side in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Number of shape classes, 1 to 5.
    #[arg(long)]
    classes: Option<usize>,
    /// Peak noise amplitude in 8-bit levels.
    #[arg(long)]
    noise: Option<u8>,
}

pub fn run(a: DatasetArgs) -> CliResult<()> {
    let cfg = resolve_config(
        None,
        &[
            ("seed", opt(&a.seed)),
            ("data.n_train", opt(&a.n_train)),
            ("data.n_eval", opt(&a.n_eval)),
            ("data.size", opt(&a.size)),
            ("data.num_classes", opt(&a.classes)),
            ("data.noise", opt(&a.noise)),
        ],
    )?;
    let DatasetSource::Synthetic(spec) = &cfg.dataset else {
        return Err(CliError::Usage("dataset generation needs a synthetic spec".into()));
    };
    let split = generate_dataset(spec)?;
    save_image_folder(&split.train, &a.out, "train")?;
    save_image_folder(&split.eval, &a.out, "eval")?;
    write_resolved(&cfg, &a.out.join("config.cfg"))?;
    log::info!("wrote {} train and {} eval samples to {}", split.train.len(), split.eval.len(), a.out.display());
    Ok(())
}
