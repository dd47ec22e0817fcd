//! Linear unmixing baseline: per-pixel two-chromophore non-negative least
//! squares followed by the sO₂ ratio.

use crate::chromophores::{Chromophore, ChromophoreSpectrum};
use crate::error::{Error, Result};
use crate::grid::{Image, Mask};
use crate::spa_image::SpaPair;

/// Rows are wavelengths (700, 850 nm), columns are (HbO₂, Hb) absorption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnmixMatrix {
    m: [[f64; 2]; 2],
}

impl UnmixMatrix {
    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        if m.iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::validation(
                "unmixing matrix entries must be positive",
            ));
        }
        let scale = m.iter().flatten().fold(0.0f64, |a, &v| a.max(v));
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() <= 1e-12 * scale * scale {
            return Err(Error::validation("unmixing matrix is singular"));
        }
        Ok(Self { m })
    }

    /// Matrix for two wavelengths from a tabulated spectrum.
    pub fn from_spectrum(spectrum: &ChromophoreSpectrum, wavelengths_nm: [f64; 2]) -> Result<Self> {
        let mut m = [[0.0; 2]; 2];
        for (row, &w) in m.iter_mut().zip(&wavelengths_nm) {
            row[0] = spectrum.absorption_at(w, Chromophore::HbO2)?;
            row[1] = spectrum.absorption_at(w, Chromophore::Hb)?;
        }
        Self::new(m)
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.m
    }

    pub fn apply(&self, c: ConcentrationPair) -> [f64; 2] {
        [
            self.m[0][0] * c.c_hbo2 + self.m[0][1] * c.c_hb,
            self.m[1][0] * c.c_hbo2 + self.m[1][1] * c.c_hb,
        ]
    }

    fn residual_sq(&self, c: ConcentrationPair, b: [f64; 2]) -> f64 {
        let r = self.apply(c);
        (r[0] - b[0]).powi(2) + (r[1] - b[1]).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConcentrationPair {
    pub c_hbo2: f64,
    pub c_hb: f64,
}

/// `argmin ‖A x − b‖₂` subject to `x ≥ 0`, by enumerating the active sets:
/// both free, one coordinate pinned at zero (each way), and the origin.
/// Among minimal residuals the candidate with larger `c_hbo2` wins.
pub fn nnls2(a: &UnmixMatrix, b: [f64; 2]) -> ConcentrationPair {
    let m = a.m;
    let mut candidates = [ConcentrationPair::default(); 4];
    let mut n = 1; // origin

    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let free = ConcentrationPair {
        c_hbo2: (b[0] * m[1][1] - m[0][1] * b[1]) / det,
        c_hb: (m[0][0] * b[1] - b[0] * m[1][0]) / det,
    };
    if free.c_hbo2 >= 0.0 && free.c_hb >= 0.0 {
        candidates[n] = free;
        n += 1;
    }
    for col in 0..2 {
        let (a0, a1) = (m[0][col], m[1][col]);
        let x = ((a0 * b[0] + a1 * b[1]) / (a0 * a0 + a1 * a1)).max(0.0);
        candidates[n] = if col == 0 {
            ConcentrationPair {
                c_hbo2: x,
                c_hb: 0.0,
            }
        } else {
            ConcentrationPair {
                c_hbo2: 0.0,
                c_hb: x,
            }
        };
        n += 1;
    }

    let tol = 1e-12 * (b[0] * b[0] + b[1] * b[1]);
    let mut best = candidates[0];
    let mut best_res = a.residual_sq(best, b);
    for &c in &candidates[1..n] {
        let res = a.residual_sq(c, b);
        if res < best_res - tol || (res <= best_res + tol && c.c_hbo2 > best.c_hbo2) {
            best = c;
            best_res = res;
        }
    }
    best
}

/// `c_hbo2 / (c_hbo2 + c_hb)`, with `(0, false)` when both are zero.
pub fn so2_from_conc(c: ConcentrationPair) -> (f64, bool) {
    let total = c.c_hbo2 + c.c_hb;
    if total > 0.0 {
        (c.c_hbo2 / total, true)
    } else {
        (0.0, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LuReport {
    pub masked_pixels: usize,
    /// Masked pixels whose concentrations were both zero.
    pub invalid_pixels: usize,
}

/// Per-pixel linear unmixing inside `mask`; zero elsewhere and at invalid pixels.
pub fn lu_map(pair: &SpaPair, a: &UnmixMatrix, mask: &Mask) -> Result<(Image, LuReport)> {
    let p700 = &pair.img700.pixels;
    let p850 = &pair.img850.pixels;
    p700.ensure_same_dims(p850, "linear unmixing")?;
    p700.ensure_same_dims(mask, "linear unmixing mask")?;
    let mut report = LuReport::default();
    let mut out = Image::filled(p700.width(), p700.height(), 0.0);
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        if !mask.as_slice()[i] {
            continue;
        }
        report.masked_pixels += 1;
        let c = nnls2(a, [p700.as_slice()[i], p850.as_slice()[i]]);
        let (so2, valid) = so2_from_conc(c);
        if !valid {
            report.invalid_pixels += 1;
        }
        *v = so2;
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spa_image::{SnrLevel, SpaImage};

    fn identity() -> UnmixMatrix {
        // positivity is required of real spectra; bypass it for the identity case
        UnmixMatrix {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    #[test]
    fn identity_system() {
        let c = nnls2(&identity(), [0.3, 0.7]);
        assert_eq!(
            c,
            ConcentrationPair {
                c_hbo2: 0.3,
                c_hb: 0.7
            }
        );
    }

    #[test]
    fn forward_then_invert() {
        let a = UnmixMatrix::new([[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let b = a.apply(ConcentrationPair {
            c_hbo2: 0.2,
            c_hb: 0.5,
        });
        assert_eq!(b, [1.2, 0.9]);
        let c = nnls2(&a, b);
        assert!((c.c_hbo2 - 0.2).abs() < 1e-15);
        assert!((c.c_hb - 0.5).abs() < 1e-15);
    }

    #[test]
    fn negative_component_is_clamped() {
        let c = nnls2(&identity(), [-0.5, 1.0]);
        assert_eq!(
            c,
            ConcentrationPair {
                c_hbo2: 0.0,
                c_hb: 1.0
            }
        );
    }

    #[test]
    fn negative_measurement_gives_origin() {
        let a = UnmixMatrix::new([[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert_eq!(nnls2(&a, [-1.0, -2.0]), ConcentrationPair::default());
    }

    #[test]
    fn matrix_validation() {
        assert!(UnmixMatrix::new([[1.0, 2.0], [2.0, 4.0]]).is_err());
        assert!(UnmixMatrix::new([[1.0, 0.0], [0.0, 1.0]]).is_err());
        let spectrum = ChromophoreSpectrum::bundled();
        let a = UnmixMatrix::from_spectrum(&spectrum, [700.0, 850.0]).unwrap();
        assert!(a.entries()[0][1] > a.entries()[0][0]);
    }

    #[test]
    fn so2_ratio() {
        assert_eq!(
            so2_from_conc(ConcentrationPair {
                c_hbo2: 1.0,
                c_hb: 0.0
            }),
            (1.0, true)
        );
        assert_eq!(
            so2_from_conc(ConcentrationPair {
                c_hbo2: 0.5,
                c_hb: 0.5
            }),
            (0.5, true)
        );
        assert_eq!(so2_from_conc(ConcentrationPair::default()), (0.0, false));
    }

    fn pair_from(
        f700: impl FnMut(usize, usize) -> f64,
        f850: impl FnMut(usize, usize) -> f64,
    ) -> SpaPair {
        SpaPair {
            img700: SpaImage {
                pixels: Image::from_fn(8, 8, f700),
                wavelength_nm: 700,
            },
            img850: SpaImage {
                pixels: Image::from_fn(8, 8, f850),
                wavelength_nm: 850,
            },
            snr: SnrLevel::Clean,
            seed: 0,
        }
    }

    #[test]
    fn map_recovers_forward_model() {
        let a =
            UnmixMatrix::from_spectrum(&ChromophoreSpectrum::bundled(), [700.0, 850.0]).unwrap();
        let b = a.apply(ConcentrationPair {
            c_hbo2: 0.8,
            c_hb: 0.2,
        });
        let mask = Mask::from_fn(8, 8, |r, c| r >= 3 && c < 5);
        let pair = pair_from(
            |r, _| b[0] * (1.0 + r as f64),
            |r, _| b[1] * (1.0 + r as f64),
        );
        let (map, report) = lu_map(&pair, &a, &mask).unwrap();
        assert_eq!(
            report,
            LuReport {
                masked_pixels: mask.count(),
                invalid_pixels: 0
            }
        );
        for (v, m) in map.as_slice().iter().zip(mask.as_slice()) {
            if *m {
                assert!((v - 0.8).abs() < 1e-9);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn map_degenerate_inputs() {
        let a =
            UnmixMatrix::from_spectrum(&ChromophoreSpectrum::bundled(), [700.0, 850.0]).unwrap();
        let zeros = pair_from(|_, _| 0.0, |_, _| 0.0);
        let all = Mask::filled(8, 8, true);
        let (map, report) = lu_map(&zeros, &a, &all).unwrap();
        assert!(map.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(report.invalid_pixels, 64);

        let ones = pair_from(|_, _| 1.0, |_, _| 1.0);
        let (map, report) = lu_map(&ones, &a, &Mask::filled(8, 8, false)).unwrap();
        assert!(map.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(report.masked_pixels, 0);

        assert!(lu_map(&ones, &a, &Mask::filled(4, 8, true)).is_err());
    }
}
