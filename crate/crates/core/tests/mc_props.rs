use std::collections::BTreeMap;

use proptest::prelude::*;
use spa_core::chromophores::{ChromophoreSpectrum, OpticalProperties};
use spa_core::mc::{self, AbsorbedEnergyMap, BeamSpec, TransportConfig};
use spa_core::phantom::{self, PhantomConfig, TissueVolume};

fn homogeneous(dims: [usize; 3], voxel: f64, mu_a: f64, mu_s: f64, g: f64) -> TissueVolume {
    let p = OpticalProperties::new(mu_a, mu_s, g).unwrap();
    TissueVolume::homogeneous(dims, [voxel; 3], BTreeMap::from([(700, p)])).unwrap()
}

fn transport(n: u64, threshold: f64, seed: u64) -> TransportConfig {
    TransportConfig {
        n_photons: n,
        roulette_threshold: threshold,
        seed,
        ..TransportConfig::default()
    }
}

fn run_with_threads(
    threads: usize,
    volume: &TissueVolume,
    wl: u32,
    cfg: &TransportConfig,
) -> AbsorbedEnergyMap {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| mc::simulate(volume, wl, &BeamSpec::default(), cfg).unwrap())
}

#[test]
fn bit_identical_across_worker_counts() {
    let cfg = PhantomConfig {
        grid_dims: [32, 32, 32],
        mask_rows: 12,
        seed: 3,
        ..PhantomConfig::default()
    };
    let volume = phantom::build_volume(&cfg, &ChromophoreSpectrum::bundled()).unwrap();
    // several blocks, last one partial
    let tc = transport(3 * 4096 + 123, 1e-4, 99);
    let one = run_with_threads(1, &volume, 850, &tc);
    let three = run_with_threads(3, &volume, 850, &tc);
    let four = run_with_threads(4, &volume, 850, &tc);
    assert_eq!(one, three);
    assert_eq!(one, four);
    assert!(one.grid.as_slice().iter().any(|&v| v > 0.0));
}

#[test]
fn different_seeds_differ() {
    let volume = homogeneous([16, 16, 16], 1.0, 1.0, 20.0, 0.8);
    let a = mc::simulate(
        &volume,
        700,
        &BeamSpec::default(),
        &transport(2000, 1e-4, 1),
    )
    .unwrap();
    let b = mc::simulate(
        &volume,
        700,
        &BeamSpec::default(),
        &transport(2000, 1e-4, 2),
    )
    .unwrap();
    assert_ne!(a.grid, b.grid);
}

/// Depth-slab sums of a map.
fn slabs(map: &AbsorbedEnergyMap) -> Vec<f64> {
    let [nx, ny, nz] = map.grid.dims();
    (0..nz)
        .map(|z| {
            let mut s = 0.0;
            for y in 0..ny {
                for x in 0..nx {
                    s += *map.grid.get(x, y, z);
                }
            }
            s
        })
        .collect()
}

#[test]
fn doubling_photons_is_statistically_consistent() {
    let volume = homogeneous([16, 16, 16], 1.0, 1.0, 50.0, 0.8);
    let n = 20_000;
    let batches: Vec<Vec<f64>> = (0..8)
        .map(|s| {
            slabs(
                &mc::simulate(
                    &volume,
                    700,
                    &BeamSpec::default(),
                    &transport(n, 1e-4, 100 + s),
                )
                .unwrap(),
            )
        })
        .collect();
    let double = slabs(
        &mc::simulate(
            &volume,
            700,
            &BeamSpec::default(),
            &transport(2 * n, 1e-4, 7),
        )
        .unwrap(),
    );
    for z in 0..16 {
        let vals: Vec<f64> = batches.iter().map(|b| b[z]).collect();
        let mean = vals.iter().sum::<f64>() / 8.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0;
        // error of the 8-run mean plus error of a single run at twice the photons
        let sigma = (var / 8.0 + var / 2.0).sqrt();
        assert!(
            (double[z] - mean).abs() <= 4.0 * sigma,
            "slab {z}: {} vs {mean} (sigma {sigma})",
            double[z]
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn conservation_and_non_negativity(
        mu_a in 0.0f64..20.0,
        mu_s in 0.0f64..200.0,
        g in -0.9f64..0.99,
        voxel in 0.2f64..2.0,
        seed in any::<u64>(),
    ) {
        let volume = homogeneous([16, 16, 16], voxel, mu_a, mu_s, g);
        let map = mc::simulate(&volume, 700, &BeamSpec { diameter_mm: 8.0 * voxel, center_mm: None }, &transport(3000, 0.0, seed)).unwrap();
        prop_assert!(map.grid.as_slice().iter().all(|&v| v >= 0.0));
        let total = map.deposited_weight + map.escaped_weight;
        prop_assert!((total - 1.0).abs() <= 1e-6, "total {}", total);
        let sum: f64 = map.grid.as_slice().iter().sum();
        prop_assert!((sum - map.deposited_weight).abs() <= 1e-12);
    }

    #[test]
    fn roulette_keeps_grid_non_negative(seed in any::<u64>()) {
        let volume = homogeneous([16, 16, 16], 0.5, 5.0, 100.0, 0.9);
        let map = mc::simulate(&volume, 700, &BeamSpec::default(), &transport(2000, 1e-4, seed)).unwrap();
        prop_assert!(map.grid.as_slice().iter().all(|&v| v >= 0.0));
    }
}
