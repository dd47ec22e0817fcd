use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spa_core::metrics::{self, EvalReport, SegLossKind};
use spa_core::{Image, Mask};

fn mask_strategy(n: usize) -> impl Strategy<Value = Mask> {
    prop::collection::vec(any::<bool>(), n * n).prop_map(move |v| Mask::from_vec(n, n, v).unwrap())
}

fn image_strategy(n: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..=1.0, n * n).prop_map(move |v| Image::from_vec(n, n, v).unwrap())
}

proptest! {
    #[test]
    fn dice_is_symmetric_on_binary_inputs(a in mask_strategy(8), b in mask_strategy(8)) {
        let ab = metrics::dice_loss(&a.to_image(), &b).unwrap();
        let ba = metrics::dice_loss(&b.to_image(), &a).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn hybrid_loss_is_bounded(
        seg in image_strategy(8),
        gt in mask_strategy(8).prop_filter("non-empty", |m| m.count() > 0),
        so2 in image_strategy(8),
        so2_gt in image_strategy(8),
    ) {
        let l = metrics::hybrid_loss(&seg, &gt, &so2, &so2_gt, SegLossKind::Dice).unwrap();
        prop_assert!((0.0..=1.0).contains(&l), "{}", l);
    }

    #[test]
    fn hybrid_loss_ignores_so2_outside_vessels(
        seg in image_strategy(8),
        gt in mask_strategy(8).prop_filter("non-empty", |m| m.count() > 0),
        so2 in image_strategy(8),
        so2_gt in image_strategy(8),
        noise in prop::collection::vec(-1e3f64..1e3, 64),
        kind in prop_oneof![Just(SegLossKind::Dice), Just(SegLossKind::Mse)],
    ) {
        let mut perturbed = so2.clone();
        for ((v, &m), d) in perturbed.as_mut_slice().iter_mut().zip(gt.as_slice()).zip(&noise) {
            if !m {
                *v += d;
            }
        }
        let a = metrics::hybrid_loss(&seg, &gt, &so2, &so2_gt, kind).unwrap();
        let b = metrics::hybrid_loss(&seg, &gt, &perturbed, &so2_gt, kind).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn counts_partition_the_image(pred in mask_strategy(8), gt in mask_strategy(8)) {
        let s = metrics::seg_stats(&pred, &gt).unwrap();
        prop_assert_eq!(s.tp + s.tn + s.fp + s.fn_, 64);
        for r in [s.fpr, s.fnr, s.accuracy] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn aggregates_match_per_sample_rows(
        rows in prop::collection::vec((image_strategy(4), image_strategy(4), mask_strategy(4).prop_filter("non-empty", |m| m.count() > 0)), 1..6)
    ) {
        let samples: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, (seg, so2, gt))| {
                metrics::evaluate_sample(&format!("s{i}"), seg, so2, gt, so2, SegLossKind::Dice).unwrap()
            })
            .collect();
        let report = EvalReport::new(samples.clone());
        let aggs = report.aggregates();
        let dice: Vec<f64> = samples.iter().map(|s| s.dice_loss).collect();
        let ms = metrics::mean_std(&dice);
        let (name, got) = aggs[0];
        prop_assert_eq!(name, "dice_loss");
        prop_assert_eq!(got, ms);
    }
}

#[test]
fn random_guessing_misses_the_minority_class() {
    // prediction independent of the truth, positive at the prevalence rate
    let n = 128;
    let gt = Mask::from_fn(n, n, |r, c| r >= 118 && c < 96);
    let prevalence = gt.count() as f64 / (n * n) as f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = Mask::from_fn(n, n, |_, _| rng.random_bool(prevalence));
        let s = metrics::seg_stats(&pred, &gt).unwrap();
        assert!(s.fnr > s.fpr, "seed {seed}: fnr {} fpr {}", s.fnr, s.fpr);
    }
}
