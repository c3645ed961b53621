use compresscheck::autodiff::cosine_lr;
use compresscheck::data::{parse_config, ExperimentConfig};
use compresscheck::jpeg::{decode, encode, psnr, quality_to_tables, roundtrip, CodecConfig, Image, Subsampling};
use compresscheck::mitigation::Quality;
use compresscheck::nn::{build_model, read_checkpoint, write_checkpoint, ArchitectureDescriptor};
use compresscheck::study::{miou, parse_csv, write_csv, Metric, ReportMeta, SweepReport, SweepRow};
use proptest::prelude::*;

fn image(max_side: usize) -> impl Strategy<Value = Image> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h * 3).prop_map(move |d| Image::new(w, h, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tables_never_grow_with_quality(q in 1u8..100) {
        let (a, b) = (quality_to_tables(q).unwrap(), quality_to_tables(q + 1).unwrap());
        for i in 0..64 {
            prop_assert!(b.luma.0[i] <= a.luma.0[i]);
            prop_assert!(b.chroma.0[i] <= a.chroma.0[i]);
        }
    }

    #[test]
    fn roundtrip_keeps_dims_for_any_size(img in image(21), q in 1u8..=100, full in any::<bool>()) {
        let sub = if full { Subsampling::S444 } else { Subsampling::S420 };
        let cfg = CodecConfig::new(q).unwrap().with_subsampling(sub);
        let out = decode(&encode(&img, &cfg).unwrap()).unwrap();
        prop_assert_eq!((out.width(), out.height()), (img.width(), img.height()));
    }

    #[test]
    fn flat_mid_gray_survives(w in 1usize..30, h in 1usize..30, q in 1u8..=100) {
        let img = Image::filled(w, h, [128; 3]).unwrap();
        prop_assert_eq!(roundtrip(&img, q).unwrap(), img);
    }

    #[test]
    fn psnr_symmetric_and_infinite_on_self(a in image(8)) {
        let mut b = a.clone();
        b.data_mut()[0] ^= 0x10;
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!(psnr(&a, &a).unwrap().is_infinite());
    }

    #[test]
    fn cosine_is_monotone_and_bounded(total in 1usize..400, start in 1e-6f64..1.0, ratio in 0.0f64..1.0) {
        let end = start * ratio;
        let mut prev = f64::INFINITY;
        for e in 0..=total {
            let lr = cosine_lr(e, total, start, end).unwrap();
            prop_assert!(lr <= prev && lr >= end && lr <= start);
            prev = lr;
        }
    }

    #[test]
    fn miou_is_one_on_perfect_prediction(gt in proptest::collection::vec(0usize..4, 1..200)) {
        prop_assert_eq!(miou(&gt, &gt, 4).unwrap(), 1.0);
    }

    #[test]
    fn miou_stays_in_unit_interval(
        pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200)
    ) {
        let (p, g): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let v = miou(&p, &g, 5).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn checkpoint_bytes_roundtrip(seed in any::<u64>(), kind in 0u8..3) {
        let desc = match kind {
            0 => ArchitectureDescriptor::classifier(3),
            1 => ArchitectureDescriptor::segmenter(4),
            _ => ArchitectureDescriptor::ac_net(),
        }
        .with_input(16, 16);
        let m = build_model(&desc, seed).unwrap();
        let bytes = write_checkpoint(&m).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        prop_assert_eq!(back.fingerprint(), m.fingerprint());
        prop_assert_eq!(write_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn csv_roundtrip_is_exact(
        rows in proptest::collection::vec((0u8..=100, -1e6f64..1e6, proptest::option::of(-1e6f64..1e6)), 1..20)
    ) {
        let rows: Vec<SweepRow> = rows
            .into_iter()
            .map(|(q, value, reference)| SweepRow {
                model: "m,odel \"x\"".into(),
                mitigation: "ttac".into(),
                quality: if q == 0 { Quality::Clean } else { Quality::Jpeg(q) },
                metric: Metric::Miou,
                value,
                reference,
                drop: reference.map(|r| r - value),
            })
            .collect();
        let report = SweepReport { rows, meta: ReportMeta::default() };
        let mut buf = Vec::new();
        write_csv(&report, &mut buf).unwrap();
        let back = parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.rows, report.rows);
    }

    #[test]
    fn config_roundtrip(seed in any::<u64>(), epochs in 0usize..500, lr in 1e-6f64..1.0, q_lo in 10u8..50) {
        let text = format!(
            "seed = {seed}\ntrain.epochs = {epochs}\ntrain.lr_start = {lr}\ntrain.q_min = {q_lo}\nmitigation = none\n"
        );
        let cfg = ExperimentConfig::from_map(&parse_config(&text).unwrap()).unwrap();
        let again = ExperimentConfig::from_map(&parse_config(&cfg.to_config_string()).unwrap()).unwrap();
        prop_assert_eq!(again.to_config_string(), cfg.to_config_string());
        prop_assert_eq!(again.seed, seed);
        prop_assert_eq!(again.protocol.epochs, epochs);
        prop_assert_eq!(again.protocol.lr_start, lr);
    }
}
