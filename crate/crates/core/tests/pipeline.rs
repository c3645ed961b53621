//! Small end-to-end runs through the public API: data, training,
//! mitigation and evaluation at 16×16 so they finish in seconds.

use compresscheck::data::{generate_dataset, load_image_folder, save_image_folder, SyntheticDatasetSpec, SyntheticSplit};
use compresscheck::jpeg::roundtrip;
use compresscheck::mitigation::{
    apply_batch, multihead_ttac, pretrain_ac, pretrain_task, supervised_finetune, ttac_train, MitigationStrategy,
    Quality, TrainProtocol, TtacTarget, TtacTask,
};
use compresscheck::nn::{build_model, load_checkpoint, save_checkpoint, ArchitectureDescriptor, ParameterSet};
use compresscheck::study::{emit_report, evaluate, evaluate_sweep, parse_csv, ReportFormat};

fn split() -> SyntheticSplit {
    generate_dataset(&SyntheticDatasetSpec { size: 16, n_train: 24, n_eval: 12, ..Default::default() }).unwrap()
}

fn quick() -> TrainProtocol {
    TrainProtocol { batch_size: 8, ..TrainProtocol::desk().with_epochs(2).with_lr(0.01, 1e-4) }
}

fn models() -> (ParameterSet, ParameterSet, ParameterSet) {
    (
        build_model(&ArchitectureDescriptor::classifier(5).with_input(16, 16), 1).unwrap(),
        build_model(&ArchitectureDescriptor::segmenter(6).with_input(16, 16), 2).unwrap(),
        build_model(&ArchitectureDescriptor::ac_net().with_input(16, 16), 3).unwrap(),
    )
}

#[test]
fn every_mitigation_trains_and_evaluates() {
    let s = split();
    let (cls, seg, ac) = models();
    let p = quick();
    let (cls, log) = pretrain_task(&cls, &s.train, &p).unwrap();
    assert_eq!(log.epoch_loss.len(), 2);
    let (seg, _) = pretrain_task(&seg, &s.train, &p).unwrap();
    let (ft, _) = supervised_finetune(&cls, &s.train, &p).unwrap();
    let (ots, _) = pretrain_ac(&ac, &s.train, &p).unwrap();
    let before = cls.fingerprint();
    let (tt, _) = ttac_train(&ots, &cls, &s.train, &p, TtacTarget::Logits).unwrap();
    assert_eq!(cls.fingerprint(), before);

    let strategies = [
        (&cls, MitigationStrategy::none()),
        (&ft, MitigationStrategy::supervised_finetune()),
        (&cls, MitigationStrategy::off_the_shelf(ots.clone())),
        (&cls, MitigationStrategy::ttac(tt.clone(), TtacTarget::Logits)),
        (&seg, MitigationStrategy::ttac(tt, TtacTarget::Features)),
    ];
    for (model, strategy) in &strategies {
        let r = evaluate_sweep(model, strategy, &s.eval, &[10, 50, 90]).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.rows[0].quality, Quality::Clean);
        for row in &r.rows {
            assert!((0.0..=100.0).contains(&row.value));
            assert!((row.reference.unwrap() - row.value - row.drop.unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn multihead_over_classifier_and_segmenter() {
    let s = split();
    let (cls, seg, ac) = models();
    let small = s.train.take(8);
    let tasks = [TtacTask::new(&cls, &s.train), TtacTask::new(&seg, &small)];
    assert_eq!(tasks[1].target, TtacTarget::Features);
    let (out, log) = multihead_ttac(&ac, &tasks, &quick()).unwrap();
    assert_eq!(log.task_loss.len(), 2);
    for e in 0..2 {
        let sum: f64 = log.task_loss.iter().map(|t| t[e]).sum();
        assert!((sum - log.epoch_loss[e]).abs() < 1e-9);
    }
    assert_ne!(out.fingerprint(), ac.fingerprint());
}

#[test]
fn training_is_deterministic() {
    let s = split();
    let (cls, _, ac) = models();
    let p = quick();
    let a = ttac_train(&ac, &cls, &s.train, &p, TtacTarget::Logits).unwrap().0;
    let b = ttac_train(&ac, &cls, &s.train, &p, TtacTarget::Logits).unwrap().0;
    assert_eq!(a.fingerprint(), b.fingerprint());
    let c = ttac_train(&ac, &cls, &s.train, &p.clone().with_seed(7), TtacTarget::Logits).unwrap().0;
    assert_ne!(a.fingerprint(), c.fingerprint());
}

#[test]
fn skip_on_uncompressed_controls_clean_correction() {
    let s = split();
    let (_, _, mut ac) = models();
    for (_, t) in ac.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += 0.05);
    }
    let skip = MitigationStrategy::off_the_shelf(ac.clone());
    let no_skip = MitigationStrategy::off_the_shelf(ac).with_skip(false);
    assert_eq!(apply_batch(&skip, &s.eval.images, Quality::Clean).unwrap(), s.eval.images);
    assert_ne!(apply_batch(&no_skip, &s.eval.images, Quality::Clean).unwrap(), s.eval.images);
    let jpeg: Vec<_> = s.eval.images.iter().map(|i| roundtrip(i, 30).unwrap()).collect();
    let none = MitigationStrategy::none();
    assert_eq!(apply_batch(&none, &s.eval.images, Quality::Jpeg(30)).unwrap(), jpeg);
}

#[test]
fn folder_and_checkpoint_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let s = split();
    save_image_folder(&s.eval, dir.path(), "eval").unwrap();
    let back = load_image_folder(dir.path(), "eval").unwrap();
    assert_eq!(back.images, s.eval.images);
    assert_eq!(back.labels, s.eval.labels);
    assert_eq!(back.masks, s.eval.masks);
    assert_eq!(back.class_names, s.eval.class_names);

    let (cls, _, _) = models();
    let path = dir.path().join("m.cchk");
    save_checkpoint(&cls, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let q = Quality::Jpeg(20);
    let none = MitigationStrategy::none();
    assert_eq!(evaluate(&cls, &none, &back, q).unwrap(), evaluate(&loaded, &none, &back, q).unwrap());

    let r = evaluate_sweep(&loaded, &none, &back, &[20, 80]).unwrap();
    let csv = dir.path().join("r.csv");
    emit_report(&r, ReportFormat::Csv, &csv).unwrap();
    assert_eq!(parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap().rows, r.rows);
    let tsv = dir.path().join("r.tsv");
    emit_report(&r, ReportFormat::PlotData, &tsv).unwrap();
    let text = std::fs::read_to_string(&tsv).unwrap();
    assert!(text.contains("quality\tdrop\n20\t"));
}

#[test]
fn bad_inputs_are_rejected() {
    let s = split();
    let (cls, seg, ac) = models();
    // AC strategies need a corrector; a task model is not one
    assert!(evaluate(&cls, &MitigationStrategy::off_the_shelf(cls.clone()), &s.eval, Quality::Jpeg(10)).is_err());
    // features target on a model without a feature output
    let plain = build_model(
        &ArchitectureDescriptor { layers: vec![compresscheck::nn::Layer::GlobalAvgPool, compresscheck::nn::Layer::Dense { units: 5 }], ..cls.descriptor().clone() },
        0,
    )
    .unwrap();
    assert!(ttac_train(&ac, &plain, &s.train, &quick(), TtacTarget::Features).is_err());
    // class count mismatch
    let wrong = build_model(&ArchitectureDescriptor::segmenter(5).with_input(16, 16), 0).unwrap();
    assert!(pretrain_task(&wrong, &s.train, &quick()).is_err());
    assert!(multihead_ttac(&ac, &[TtacTask::new(&seg, &s.train)], &quick()).is_err());
    let bad = TrainProtocol { quality_range: (0, 90), ..quick() };
    assert!(pretrain_ac(&ac, &s.train, &bad).is_err());
}
