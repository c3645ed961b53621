use std::fs;
use std::path::PathBuf;

use clap::Args;
use compresscheck::data::{generate_sample, SyntheticDatasetSpec};
use compresscheck::jpeg::pnm::write_mask;
use compresscheck::jpeg::roundtrip;
use compresscheck::study::{default_cam_layer, gradcam, throughput, DEFAULT_WARMUP};

use crate::common::{load_model, opt, read_input, resolve_config, sidecar, strategy, write_resolved, CliError, CliResult};

#[derive(Args, Debug)]
pub struct GradcamArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Class index to explain.
    #[arg(long)]
    class: usize,
    /// Activation name such as relu3 (default: last encoder ReLU).
    #[arg(long)]
    layer: Option<String>,
    /// Compress the image at this quality first.
    #[arg(long = "q")]
    quality: Option<u8>,
    /// Heatmap output (8-bit PGM).
    #[arg(long)]
    out: PathBuf,
}

pub fn run_gradcam(a: GradcamArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let mut img = read_input(&a.image)?;
    if let Some(q) = a.quality {
        if !(1..=100).contains(&q) {
            return Err(CliError::Usage(format!("--q must be in [1, 100], got {q}")));
        }
        img = roundtrip(&img, q)?;
    }
    let layer = match a.layer {
        Some(l) => l,
        None => default_cam_layer(&model).ok_or_else(|| CliError::Usage("model has no ReLU layer; pass --layer".into()))?,
    };
    let heat = gradcam(&model, &img, a.class, &layer).map_err(crate::common::usage)?;
    write_mask(&a.out, &heat.to_mask())?;
    log::info!("Grad-CAM of class {} at {layer} written to {}", a.class, a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ThroughputArgs {
    #[arg(long)]
    model: PathBuf,
    /// none, supervised_finetune, ac_off_the_shelf or ttac.
    #[arg(long, default_value = "none")]
    mitigation: String,
    #[arg(long)]
    ac_checkpoint: Option<PathBuf>,
    /// Timed iterations (at least 3).
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: usize,
    /// Input image; defaults to a synthetic sample of the model's size.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Append `mitigation<TAB>inference_ips<TAB>training_ips` here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run_throughput(a: ThroughputArgs) -> CliResult<()> {
    let cfg = resolve_config(
        None,
        &[
            ("mitigation", Some(a.mitigation.clone())),
            ("mitigation.ac_checkpoint", a.ac_checkpoint.as_ref().map(|p| p.display().to_string())),
            ("model.checkpoint", Some(a.model.display().to_string())),
            ("seed", opt(&a.seed)),
        ],
    )?;
    if a.iters < 3 {
        return Err(CliError::Usage(format!("--iters must be >= 3, got {}", a.iters)));
    }
    let model = load_model(&a.model)?;
    let strategy = strategy(&cfg)?;
    let img = match &a.image {
        Some(p) => read_input(p)?,
        None => {
            let size = model.descriptor().input.height;
            let spec = SyntheticDatasetSpec { seed: cfg.seed, size, ..Default::default() };
            generate_sample(&spec, 0)?.0
        }
    };
    let t = throughput(&model, &strategy, &img, a.iters, a.warmup)?;
    println!("mitigation={}\tinference_ips={:.2}\ttraining_ips={:.2}", a.mitigation, t.inference, t.training);
    if let Some(out) = &a.out {
        let mut text = fs::read_to_string(out).unwrap_or_default();
        text.push_str(&format!("{}\t{}\t{}\n", a.mitigation, t.inference, t.training));
        fs::write(out, text)?;
        write_resolved(&cfg, &sidecar(out))?;
    }
    Ok(())
}
