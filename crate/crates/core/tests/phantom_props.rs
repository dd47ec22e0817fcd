use proptest::prelude::*;
use spa_core::chromophores::ChromophoreSpectrum;
use spa_core::phantom::{self, PhantomConfig, FIRST_VESSEL};

fn small_config(seed: u64) -> PhantomConfig {
    PhantomConfig {
        grid_dims: [32, 32, 32],
        mask_rows: 12,
        radius_range_mm: (0.5, 4.0),
        seed,
        ..PhantomConfig::default()
    }
}

#[test]
fn radius_and_count_over_many_seeds() {
    let mut counts = [0usize; 4];
    for seed in 0..1000u64 {
        let cfg = PhantomConfig {
            seed,
            ..PhantomConfig::default()
        };
        let cylinders = phantom::sample_cylinders(&cfg).unwrap();
        assert!(
            (1..=3).contains(&cylinders.len()),
            "seed {seed}: {} vessels",
            cylinders.len()
        );
        counts[cylinders.len()] += 1;
        for c in &cylinders {
            assert!(
                (0.5..=4.0).contains(&c.radius_mm),
                "seed {seed}: radius {}",
                c.radius_mm
            );
            let norm = c.axis.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-9);
            assert!((0.0..=1.0).contains(&c.so2));
        }
    }
    // all three counts actually occur
    assert!(counts[1..].iter().all(|&n| n > 200), "{counts:?}");
}

#[test]
fn vessels_sit_below_masked_rows_with_default_grid() {
    let spectrum = ChromophoreSpectrum::bundled();
    for seed in 0..5u64 {
        let cfg = PhantomConfig {
            seed,
            ..PhantomConfig::default()
        };
        let vol = phantom::build_volume(&cfg, &spectrum).unwrap();
        let mask = vol.vessel_mask_slice();
        assert_eq!(mask.dims(), (128, 128));
        assert!(mask.count() > 0);
        for row in 0..50 {
            for col in 0..128 {
                assert!(!*mask.get(row, col));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn build_is_deterministic_and_ground_truth_consistent(seed in any::<u64>()) {
        let spectrum = ChromophoreSpectrum::bundled();
        let cfg = small_config(seed);
        let a = phantom::build_volume(&cfg, &spectrum).unwrap();
        let b = phantom::build_volume(&cfg, &spectrum).unwrap();
        prop_assert_eq!(a.labels(), b.labels());
        prop_assert_eq!(a.tissues(), b.tissues());

        let mask = a.vessel_mask_slice();
        let so2 = a.gt_so2_slice();
        for (m, s) in mask.as_slice().iter().zip(so2.as_slice()) {
            if !*m {
                prop_assert_eq!(*s, 0.0);
            } else {
                prop_assert!(*s > 0.0 && *s <= 1.0);
            }
        }
        // every label present has properties at both wavelengths, and blood
        // carries the sO2 that produced its absorption
        for w in [700u32, 850] {
            let props = a.props_at(w).unwrap();
            for (i, t) in a.tissues().iter().enumerate() {
                if i >= FIRST_VESSEL as usize {
                    let s = t.so2.unwrap();
                    let expected = spectrum.blood_mu_a(s, w as f64).unwrap();
                    prop_assert_eq!(props[i].mu_a, expected);
                }
            }
        }
    }

    #[test]
    fn blood_absorption_is_affine_in_so2(s in 0.0f64..=1.0, wl in 690.0f64..=900.0) {
        let spectrum = ChromophoreSpectrum::bundled();
        let at = |x| spectrum.blood_mu_a(x, wl).unwrap();
        let lhs = at(s);
        let rhs = s * at(1.0) + (1.0 - s) * at(0.0);
        prop_assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * lhs.abs().max(rhs.abs()));
    }
}
