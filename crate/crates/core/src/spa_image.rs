//! sPA image formation from absorbed-energy volumes.
//!
//! The pipeline order is fixed: central slice, top-row masking, joint pair
//! normalisation, then noise. Noise variance is derived from the clean,
//! normalised image so the stated SNR refers to what the consumer sees.

use std::io::Write;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{Image, Mask};
use crate::mc::AbsorbedEnergyMap;
use crate::rng;

pub const DEFAULT_MASK_ROWS: usize = 50;
/// Sweep used for the noise-robustness evaluation, in dB.
pub const SNR_SWEEP_DB: [f64; 8] = [35.0, 30.0, 25.0, 20.0, 15.0, 10.0, 5.0, 0.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SpaImage {
    pub pixels: Image,
    pub wavelength_nm: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrLevel {
    Clean,
    Db(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaPair {
    pub img700: SpaImage,
    pub img850: SpaImage,
    pub snr: SnrLevel,
    pub seed: u64,
}

/// The plane `y = floor(ny / 2)`; rows are depth `z`, columns are `x`.
pub fn central_slice(map: &AbsorbedEnergyMap, wavelength_nm: u32) -> SpaImage {
    let [nx, ny, nz] = map.grid.dims();
    let y = ny / 2;
    SpaImage {
        pixels: Image::from_fn(nx, nz, |row, col| *map.grid.get(col, y, row)),
        wavelength_nm,
    }
}

/// Zeroes rows `0..n_rows`.
pub fn mask_top_rows(img: &SpaImage, n_rows: usize) -> SpaImage {
    let mut out = img.clone();
    let w = out.pixels.width();
    let rows = n_rows.min(out.pixels.height());
    out.pixels.as_mut_slice()[..rows * w].fill(0.0);
    out
}

/// Mean squared pixel value over the mask.
pub fn vessel_power(img: &Image, vessel_mask: &Mask) -> Result<f64> {
    img.ensure_same_dims(vessel_mask, "vessel power")?;
    let n = vessel_mask.count();
    if n == 0 {
        return Err(Error::validation("empty vessel mask: SNR is undefined"));
    }
    let sum: f64 = img
        .as_slice()
        .iter()
        .zip(vessel_mask.as_slice())
        .filter(|(_, &m)| m)
        .map(|(v, _)| v * v)
        .sum();
    Ok(sum / n as f64)
}

/// Noise variance giving `snr_db` for an image with vessel power `power`.
pub fn noise_variance(power: f64, snr_db: f64) -> f64 {
    power * 10f64.powf(-snr_db / 10.0)
}

/// Adds white Gaussian noise to every pixel so that vessel power over noise
/// variance equals `snr_db`. Negative results are kept.
pub fn add_noise(img: &SpaImage, vessel_mask: &Mask, snr_db: f64, seed: u64) -> Result<SpaImage> {
    if !snr_db.is_finite() {
        return Err(Error::validation(format!(
            "SNR must be finite, got {snr_db}"
        )));
    }
    let power = vessel_power(&img.pixels, vessel_mask)?;
    let sigma = noise_variance(power, snr_db).sqrt();
    let mut out = img.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::validation(e.to_string()))?;
    let mut rng = rng::stream(seed, 0);
    for v in out.pixels.as_mut_slice() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Divides both images by their joint maximum.
pub fn normalize_pair(pair: &SpaPair) -> Result<SpaPair> {
    pair.img700
        .pixels
        .ensure_same_dims(&pair.img850.pixels, "normalize pair")?;
    let max = pair
        .img700
        .pixels
        .as_slice()
        .iter()
        .chain(pair.img850.pixels.as_slice())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::validation(
            "cannot normalise a pair with no positive pixel",
        ));
    }
    let scale = |img: &SpaImage| SpaImage {
        pixels: img.pixels.map(|v| v / max),
        wavelength_nm: img.wavelength_nm,
    };
    Ok(SpaPair {
        img700: scale(&pair.img700),
        img850: scale(&pair.img850),
        snr: pair.snr,
        seed: pair.seed,
    })
}

/// Adds independent noise to both images of a clean pair. The per-wavelength
/// seeds are derived from `seed`.
pub fn add_pair_noise(
    pair: &SpaPair,
    vessel_mask: &Mask,
    snr_db: f64,
    seed: u64,
) -> Result<SpaPair> {
    Ok(SpaPair {
        img700: add_noise(
            &pair.img700,
            vessel_mask,
            snr_db,
            rng::derive_seed(seed, 700),
        )?,
        img850: add_noise(
            &pair.img850,
            vessel_mask,
            snr_db,
            rng::derive_seed(seed, 850),
        )?,
        snr: SnrLevel::Db(snr_db),
        seed,
    })
}

/// Slice, mask and normalise two absorbed-energy maps into a clean pair.
pub fn clean_pair(
    map700: &AbsorbedEnergyMap,
    map850: &AbsorbedEnergyMap,
    mask_rows: usize,
    seed: u64,
) -> Result<SpaPair> {
    let pair = SpaPair {
        img700: mask_top_rows(&central_slice(map700, 700), mask_rows),
        img850: mask_top_rows(&central_slice(map850, 850), mask_rows),
        snr: SnrLevel::Clean,
        seed,
    };
    normalize_pair(&pair)
}

/// 8-bit binary PGM (P5), min-max scaled. For viewing only.
pub fn write_pgm(img: &Image, out: &mut impl Write) -> std::io::Result<()> {
    let (min, max) = img
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max - min;
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    let bytes: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - min) / range * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    out.write_all(&bytes)
}

/// Little-endian f32 values, row-major, no header.
pub fn write_raw_f32(img: &Image, out: &mut impl Write) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(img.len() * 4);
    for &v in img.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&buf)
}
