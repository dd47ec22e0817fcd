use std::fs;

use proptest::prelude::*;
use spa_core::dataset::{
    self, AugmentConfig, Dataset, DatasetWriter, Prediction, Provenance, SampleRecord, Split,
};
use spa_core::spa_image::SnrLevel;
use spa_core::{Error, Grid2};

fn record_strategy() -> impl Strategy<Value = SampleRecord> {
    (2usize..9, 2usize..9)
        .prop_flat_map(|(w, h)| {
            let n = w * h;
            (
                Just((w, h)),
                prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 2 * n),
                prop::collection::vec((any::<bool>(), 0.0f32..=1.0), n),
                "[a-z][a-z0-9_]{0,8}",
                prop_oneof![
                    Just(SnrLevel::Clean),
                    (-5.0f64..40.0).prop_map(SnrLevel::Db)
                ],
                any::<u64>(),
                any::<bool>(),
            )
        })
        .prop_map(|((w, h), imgs, gt, id, snr, seed, experimental)| {
            let n = w * h;
            SampleRecord {
                id,
                img700: Grid2::from_vec(w, h, imgs[..n].to_vec()).unwrap(),
                img850: Grid2::from_vec(w, h, imgs[n..].to_vec()).unwrap(),
                gt_seg: Grid2::from_vec(
                    w,
                    h,
                    gt.iter().map(|&(s, _)| if s { 1.0 } else { 0.0 }).collect(),
                )
                .unwrap(),
                gt_so2: Grid2::from_vec(
                    w,
                    h,
                    gt.iter().map(|&(s, o)| if s { o } else { 0.0 }).collect(),
                )
                .unwrap(),
                snr,
                provenance: if experimental {
                    Provenance::ExperimentalImport
                } else {
                    Provenance::Simulated
                },
                seed,
                augmentation: None,
            }
        })
}

fn store_one(record: &SampleRecord) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let mut w = DatasetWriter::create(dir.path(), "digest").unwrap();
    w.write_sample(record, Some(Split::Train)).unwrap();
    let ds = w.commit().unwrap();
    (dir, ds)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn records_round_trip_bit_identically(record in record_strategy()) {
        let (_dir, ds) = store_one(&record);
        let back = Dataset::open(ds.root()).unwrap().read_sample(&record.id).unwrap();
        prop_assert_eq!(back.id.as_str(), record.id.as_str());
        for (a, b) in [(&back.img700, &record.img700), (&back.img850, &record.img850), (&back.gt_seg, &record.gt_seg), (&back.gt_so2, &record.gt_so2)] {
            let bits_a: Vec<u32> = a.as_slice().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.as_slice().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
        }
        prop_assert_eq!(back.snr, record.snr);
        prop_assert_eq!(back.provenance, record.provenance);
        prop_assert_eq!(back.seed, record.seed);
    }

    #[test]
    fn any_single_byte_corruption_is_detected(record in record_strategy(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let (_dir, ds) = store_one(&record);
        let path = ds.root().join(dataset::SAMPLES_DIR).join(format!("{}.{}", record.id, dataset::SAMPLE_EXT));
        let mut bytes = fs::read(&path).unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        fs::write(&path, &bytes).unwrap();
        prop_assert!(ds.read_sample(&record.id).is_err());
    }

    #[test]
    fn predictions_round_trip(w in 1usize..10, h in 1usize..10, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let f = |k: u64| Grid2::from_fn(w, h, |r, c| ((seed.wrapping_mul(k + 1) >> ((r * w + c) % 40)) & 0xff) as f32 / 255.0);
        let pred = Prediction { seg_prob: f(1), so2_intermediate: f(2) };
        dataset::write_prediction(dir.path(), "p_1", &pred).unwrap();
        prop_assert_eq!(dataset::read_prediction(dir.path(), "p_1").unwrap(), pred);
        prop_assert_eq!(dataset::list_predictions(dir.path()).unwrap(), vec!["p_1".to_string()]);
    }

    #[test]
    fn split_ignores_input_order(n in 0usize..200, seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("s{i:04}")).collect();
        let mut permuted = ids.clone();
        // deterministic permutation by sort key
        permuted.sort_by_key(|s| spa_core::rng::derive_seed(shuffle_seed, s.len() as u64 ^ s.bytes().map(u64::from).sum::<u64>()));
        permuted.reverse();
        let a = dataset::split(&ids, seed);
        let b = dataset::split(&permuted, seed);
        let mut counts = [0usize; 3];
        for id in &ids {
            let s = a.split_of(id).unwrap();
            prop_assert_eq!(Some(s), b.split_of(id));
            counts[s as usize] += 1;
        }
        prop_assert_eq!(counts[0], n * 8 / 10);
        prop_assert_eq!(counts[1], n / 10);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
    }

    #[test]
    fn augmented_copies_are_reproducible_from_recorded_params(record in record_strategy(), seed in any::<u64>()) {
        let copies = dataset::augment(&record, 4, seed, &AugmentConfig::default());
        prop_assert_eq!(copies.len(), 4);
        let again = dataset::augment(&record, 4, seed, &AugmentConfig::default());
        prop_assert_eq!(&copies, &again);
        for c in &copies {
            let params = c.augmentation.expect("parameters recorded");
            let rebuilt = dataset::apply_transform(&record, &params, c.id.clone());
            prop_assert_eq!(&rebuilt, c);
            prop_assert!(c.validate().is_ok());
        }
    }
}

#[test]
fn truncation_and_missing_entries() {
    let record = SampleRecord {
        id: "a".into(),
        img700: Grid2::filled(4, 4, 0.5),
        img850: Grid2::filled(4, 4, 0.25),
        gt_seg: Grid2::filled(4, 4, 0.0),
        gt_so2: Grid2::filled(4, 4, 0.0),
        snr: SnrLevel::Clean,
        provenance: Provenance::Simulated,
        seed: 1,
        augmentation: None,
    };
    let (_dir, ds) = store_one(&record);
    let path = ds.root().join("samples/a.f32x4");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(ds.read_sample("a"), Err(Error::Truncated { .. })));
    fs::remove_file(&path).unwrap();
    assert!(matches!(ds.read_sample("a"), Err(Error::MissingEntry(_))));
    assert!(matches!(ds.read_sample("zzz"), Err(Error::MissingEntry(_))));
}
