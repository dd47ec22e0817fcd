//! Times transport on the default phantom: `mc_timing [photons] [roulette_threshold]`.

use std::time::Instant;

use spa_core::chromophores::ChromophoreSpectrum;
use spa_core::mc::{simulate, BeamSpec, TransportConfig};
use spa_core::phantom::{build_volume, PhantomConfig};

fn main() {
    let n: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let threshold: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1e-4);
    let cfg = PhantomConfig {
        seed: 3,
        ..Default::default()
    };
    let t = Instant::now();
    let vol = build_volume(&cfg, &ChromophoreSpectrum::bundled()).unwrap();
    println!("phantom {:?}", t.elapsed());
    for wl in [700, 850] {
        let t = Instant::now();
        let tc = TransportConfig {
            n_photons: n,
            roulette_threshold: threshold,
            seed: 1,
            ..Default::default()
        };
        let map = simulate(&vol, wl, &BeamSpec::default(), &tc).unwrap();
        println!(
            "{wl} nm: {:?} deposited {:.6} escaped {:.6} sum-1 {:.3e} clipped {}",
            t.elapsed(),
            map.deposited_weight,
            map.escaped_weight,
            map.deposited_weight + map.escaped_weight - 1.0,
            map.clipped_launches
        );
    }
}
