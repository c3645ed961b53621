use std::fs;
use std::path::PathBuf;

use clap::Args;
use compresscheck::study::{emit_report, evaluate_sweep, parse_csv, ReportFormat, ReportMeta, SweepReport};

use crate::common::{require_file, load_dataset, load_model, opt, resolve_config, sidecar, strategy, write_resolved, CliError, CliResult};

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Task model checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// none, supervised_finetune, ac_off_the_shelf or ttac.
    #[arg(long)]
    mitigation: Option<String>,
    /// Corrector for ac_off_the_shelf and ttac.
    #[arg(long)]
    ac_checkpoint: Option<PathBuf>,
    /// Image-folder dataset; without it a synthetic set is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset split to evaluate (default: eval).
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    subset: Option<usize>,
    /// Comma-separated qualities (default 10,20,...,90).
    #[arg(long)]
    qualities: Option<String>,
    /// Report CSV path; the resolved config goes to `<out>.cfg`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write plot data (TSV) here.
    #[arg(long)]
    plotdata: Option<PathBuf>,
    /// Run the corrector on uncompressed inputs too.
    #[arg(long)]
    no_skip: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run_sweep(a: SweepArgs) -> CliResult<()> {
    let cfg = resolve_config(
        a.config.as_deref(),
        &[
            ("model.checkpoint", a.model.as_ref().map(|p| p.display().to_string())),
            ("mitigation", a.mitigation.clone()),
            ("mitigation.ac_checkpoint", a.ac_checkpoint.as_ref().map(|p| p.display().to_string())),
            ("mitigation.skip_on_uncompressed", a.no_skip.then(|| "false".to_string())),
            ("data.path", a.data.as_ref().map(|p| p.display().to_string())),
            ("data.split", a.split.clone()),
            ("data.subset", opt(&a.subset)),
            ("sweep.qualities", a.qualities.clone()),
            ("out", a.out.as_ref().map(|p| p.display().to_string())),
            ("seed", opt(&a.seed)),
        ],
    )?;
    let out = cfg.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let model_path = match cfg.model_checkpoints.as_slice() {
        [p] => p.clone(),
        _ => return Err(CliError::Usage("sweep needs exactly one --model".into())),
    };
    let model = load_model(&model_path)?;
    let strategy = strategy(&cfg)?;
    let data = load_dataset(&cfg, "eval")?;
    let mut report = evaluate_sweep(&model, &strategy, &data, &cfg.qualities)?;
    report.meta.seed = Some(cfg.seed);
    let name = model_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    for row in &mut report.rows {
        row.model = name.clone();
    }
    emit_report(&report, ReportFormat::Csv, &out)?;
    if let Some(p) = &a.plotdata {
        emit_report(&report, ReportFormat::PlotData, p)?;
    }
    write_resolved(&cfg, &sidecar(&out))?;
    for row in &report.rows {
        println!("{}\t{}\t{}\t{:.2}\t{:.2}", row.mitigation, row.quality, row.metric, row.value, row.drop.unwrap_or(0.0));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Sweep CSVs to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Merged CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot data (TSV).
    #[arg(long)]
    plotdata: Option<PathBuf>,
}

/// Drops must equal reference − value to this tolerance.
const DROP_TOLERANCE: f64 = 1e-6;

pub fn run_report(a: ReportArgs) -> CliResult<()> {
    let mut merged = SweepReport { rows: Vec::new(), meta: ReportMeta::now("merged".into(), None) };
    for p in &a.inputs {
        require_file(p)?;
        let text = fs::read_to_string(p)?;
        let r = parse_csv(&text)?;
        for row in &r.rows {
            if let (Some(reference), Some(d)) = (row.reference, row.drop) {
                if (reference - row.value - d).abs() > DROP_TOLERANCE {
                    return Err(CliError::Core(compresscheck::Error::Decode(format!(
                        "{}: drop {d} != reference − value for {} {} q={}",
                        p.display(),
                        row.model,
                        row.mitigation,
                        row.quality
                    ))));
                }
            }
        }
        merged.extend(r);
    }
    if let Some(out) = &a.out {
        emit_report(&merged, ReportFormat::Csv, out)?;
    }
    if let Some(p) = &a.plotdata {
        emit_report(&merged, ReportFormat::PlotData, p)?;
    }
    println!("model\tmitigation\tquality\tmetric\tvalue\tdrop");
    for row in &merged.rows {
        let drop = row.drop.map(|d| format!("{d:.2}")).unwrap_or_default();
        println!("{}\t{}\t{}\t{}\t{:.2}\t{drop}", row.model, row.mitigation, row.quality, row.metric, row.value);
    }
    Ok(())
}
