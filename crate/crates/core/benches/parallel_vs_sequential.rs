//! Data-parallel helpers against a single worker on the hot paths: batch
//! JPEG round trips, a batched conv forward/backward and an evaluation
//! pass. Build with `--no-default-features --features png` to time the
//! purely sequential fallback.

use std::hint::black_box;

use compresscheck::autodiff::{Tape, Tensor};
use compresscheck::data::{generate_dataset, SyntheticDatasetSpec};
use compresscheck::jpeg::{roundtrip, Image};
use compresscheck::mitigation::{apply_batch, MitigationStrategy, Quality};
use compresscheck::nn::{build_model, ArchitectureDescriptor};
use compresscheck::par;
use compresscheck::study::evaluate;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn configs() -> Vec<(&'static str, usize)> {
    let all = par::workers();
    if all > 1 {
        vec![("sequential", 1), ("parallel", all)]
    } else {
        vec![("sequential", 1), ("parallel", 1)]
    }
}

fn bench_codec(c: &mut Criterion) {
    let spec = SyntheticDatasetSpec { n_train: 64, n_eval: 1, ..Default::default() };
    let images = generate_dataset(&spec).unwrap().train.images;
    let mut g = c.benchmark_group("jpeg_roundtrip_64");
    for (name, n) in configs() {
        g.bench_with_input(BenchmarkId::new(name, n), &images, |b, imgs| {
            b.iter(|| par::with_workers(n, || par::try_map(imgs, |im: &Image| roundtrip(im, 50)).unwrap()))
        });
    }
    g.finish();
}

fn bench_conv(c: &mut Criterion) {
    let x = Tensor::<f32>::from_fn(&[16, 3, 48, 48], |i| (i % 97) as f32 / 97.0);
    let w = Tensor::<f32>::from_fn(&[32, 3, 9, 9], |i| ((i % 13) as f32 - 6.0) / 100.0);
    let mut g = c.benchmark_group("conv9x9_fwd_bwd_16");
    g.sample_size(10);
    for (name, n) in configs() {
        g.bench_function(BenchmarkId::new(name, n), |b| {
            b.iter(|| {
                par::with_workers(n, || {
                    let mut t = Tape::new();
                    let xv = t.leaf(x.clone(), false).unwrap();
                    let wv = t.leaf(w.clone(), true).unwrap();
                    let y = t.conv2d(xv, wv, None, 1, 4).unwrap();
                    let s = t.sum(y).unwrap();
                    black_box(t.backward(s).unwrap());
                })
            })
        });
    }
    g.finish();
}

fn bench_eval(c: &mut Criterion) {
    let spec = SyntheticDatasetSpec { n_train: 1, n_eval: 128, ..Default::default() };
    let eval = generate_dataset(&spec).unwrap().eval;
    let cls = build_model(&ArchitectureDescriptor::classifier(5), 1).unwrap();
    let ac = build_model(&ArchitectureDescriptor::ac_net(), 2).unwrap();
    let none = MitigationStrategy::none();
    let ots = MitigationStrategy::off_the_shelf(ac);
    let mut g = c.benchmark_group("evaluate_128");
    g.sample_size(10);
    for (name, n) in configs() {
        g.bench_function(BenchmarkId::new(format!("none/{name}"), n), |b| {
            b.iter(|| par::with_workers(n, || evaluate(&cls, &none, &eval, Quality::Jpeg(30)).unwrap()))
        });
        g.bench_function(BenchmarkId::new(format!("ac_correct/{name}"), n), |b| {
            b.iter(|| par::with_workers(n, || apply_batch(&ots, &eval.images, Quality::Jpeg(30)).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_codec, bench_conv, bench_eval);
criterion_main!(benches);
