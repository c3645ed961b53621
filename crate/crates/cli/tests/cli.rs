use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_compresscheck"));
    c.env_remove("COMPRESSCHECK_SEED").env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_dataset(dir: &Path) {
    ok(dir, &["dataset", "--out", "ds", "--n-train", "20", "--n-eval", "10", "--size", "32"]);
}

fn first_image(dir: &Path) -> String {
    let class_dir = dir.join("ds/train/disk");
    let mut names: Vec<_> = std::fs::read_dir(&class_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    format!("ds/train/disk/{}", names[0].to_string_lossy())
}

#[test]
fn ttac_without_task_checkpoint_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), &["train", "--mode", "ttac", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn multihead_needs_two_tasks() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), &["train", "--mode", "multihead", "--out", "x", "--task-checkpoint", "a.cchk"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_and_flag_exit_2() {
    let d = TempDir::new().unwrap();
    assert_eq!(run(d.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["sweep", "--bogus"]).status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), &["codec", "psnr", "a.ppm", "b.ppm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a.ppm"));
}

#[test]
fn codec_roundtrip_then_psnr() {
    let d = TempDir::new().unwrap();
    small_dataset(d.path());
    let img = first_image(d.path());
    ok(d.path(), &["codec", "roundtrip", "--in", &img, "--q", "50", "--out", "y.ppm"]);
    let db: f64 = ok(d.path(), &["codec", "psnr", &img, "y.ppm"]).trim().parse().unwrap();
    assert!(db.is_finite() && db > 0.0, "{db}");
}

#[test]
fn jfif_encode_decode_matches_in_memory_roundtrip() {
    let d = TempDir::new().unwrap();
    small_dataset(d.path());
    let img = first_image(d.path());
    ok(d.path(), &["codec", "encode", "--in", &img, "--q", "30", "--out", "x.jpg"]);
    ok(d.path(), &["codec", "decode", "--in", "x.jpg", "--out", "x.ppm"]);
    ok(d.path(), &["codec", "roundtrip", "--in", &img, "--q", "30", "--out", "y.ppm"]);
    let a = ok(d.path(), &["codec", "psnr", &img, "x.ppm"]);
    let b = ok(d.path(), &["codec", "psnr", &img, "y.ppm"]);
    assert_eq!(a, b);
}

#[test]
fn bad_quality_is_rejected() {
    let d = TempDir::new().unwrap();
    small_dataset(d.path());
    let img = first_image(d.path());
    let out = run(d.path(), &["codec", "roundtrip", "--in", &img, "--q", "0", "--out", "y.ppm"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_seed_is_the_default_and_flag_wins() {
    let d = TempDir::new().unwrap();
    let out = bin()
        .current_dir(d.path())
        .env("COMPRESSCHECK_SEED", "7")
        .args(["dataset", "--out", "a", "--n-train", "2", "--n-eval", "2", "--size", "16"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg = std::fs::read_to_string(d.path().join("a/config.cfg")).unwrap();
    assert!(cfg.lines().any(|l| l == "seed = 7"), "{cfg}");

    let out = bin()
        .current_dir(d.path())
        .env("COMPRESSCHECK_SEED", "7")
        .args(["dataset", "--out", "b", "--n-train", "2", "--n-eval", "2", "--size", "16", "--seed", "9"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg = std::fs::read_to_string(d.path().join("b/config.cfg")).unwrap();
    assert!(cfg.lines().any(|l| l == "seed = 9"), "{cfg}");
}

#[test]
fn train_sweep_report_pipeline() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    small_dataset(p);
    ok(p, &["train", "--mode", "task", "--data", "ds", "--epochs", "1", "--batch-size", "4", "--out", "task"]);
    for f in ["model.cchk", "train_log.tsv", "config.cfg"] {
        assert!(p.join("task").join(f).is_file(), "{f}");
    }
    ok(p, &["train", "--mode", "ac", "--data", "ds", "--epochs", "1", "--batch-size", "4", "--out", "ac"]);
    ok(
        p,
        &[
            "train", "--mode", "ttac", "--data", "ds", "--epochs", "1", "--batch-size", "4",
            "--task-checkpoint", "task/model.cchk", "--ac-checkpoint", "ac/model.cchk", "--out", "ttac",
        ],
    );

    ok(p, &["sweep", "--model", "task/model.cchk", "--data", "ds", "--out", "none.csv"]);
    let csv = std::fs::read_to_string(p.join("none.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("model,mitigation,quality,metric,value,reference,drop"));
    assert_eq!(lines.count(), 10, "clean + 9 quality levels");
    assert!(p.join("none.csv.cfg").is_file());

    ok(
        p,
        &[
            "sweep", "--model", "task/model.cchk", "--data", "ds", "--qualities", "10,50",
            "--mitigation", "ttac", "--ac-checkpoint", "ttac/model.cchk", "--out", "ttac.csv",
        ],
    );
    let table = ok(p, &["report", "none.csv", "ttac.csv", "--out", "all.csv", "--plotdata", "all.tsv"]);
    assert!(table.contains("ttac"));
    let merged = std::fs::read_to_string(p.join("all.csv")).unwrap();
    assert_eq!(merged.lines().count(), 1 + 10 + 3);
    let plot = std::fs::read_to_string(p.join("all.tsv")).unwrap();
    assert!(plot.contains("mitigation=none") && plot.contains("mitigation=ttac"));
}

#[test]
fn sweep_needs_corrector_for_ac_strategies() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    small_dataset(p);
    ok(p, &["train", "--mode", "task", "--data", "ds", "--epochs", "0", "--out", "task"]);
    let out = run(p, &["sweep", "--model", "task/model.cchk", "--data", "ds", "--mitigation", "ttac", "--out", "r.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_rejects_inconsistent_drop() {
    let d = TempDir::new().unwrap();
    std::fs::write(
        d.path().join("r.csv"),
        "model,mitigation,quality,metric,value,reference,drop\nm,none,10,top1_accuracy,90,100,3\n",
    )
    .unwrap();
    let out = run(d.path(), &["report", "r.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcam_and_throughput_run() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    small_dataset(p);
    ok(p, &["train", "--mode", "task", "--data", "ds", "--epochs", "0", "--out", "task"]);
    let img = first_image(p);
    ok(p, &["gradcam", "--model", "task/model.cchk", "--image", &img, "--class", "0", "--out", "cam.pgm"]);
    let pgm = std::fs::read(p.join("cam.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 32\n255\n"));

    let line = ok(p, &["throughput", "--model", "task/model.cchk", "--iters", "3", "--warmup", "1"]);
    assert!(line.starts_with("mitigation=none"), "{line}");
    let out = run(p, &["throughput", "--model", "task/model.cchk", "--iters", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
