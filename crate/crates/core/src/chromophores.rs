//! Tabulated hemoglobin absorption and blood absorption as a function of sO₂.
//!
//! The bundled table is whole-blood absorption at 150 g/L total hemoglobin,
//! obtained from molar extinction coefficients ε (cm⁻¹/M, base 10) as
//! `μa = ln(10) · ε · C`, with `C = c_g_per_l / 64500` mol/L. Use
//! [`MolarExtinction::to_spectrum`] to rebuild it at another concentration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header line of the spectrum CSV.
pub const SPECTRUM_HEADER: &str = "wavelength_nm,mu_a_hbo2_cm1,mu_a_hb_cm1";
/// Header line of the molar extinction CSV.
pub const EXTINCTION_HEADER: &str = "wavelength_nm,eps_hbo2_cm1_per_molar,eps_hb_cm1_per_molar";

/// Molar mass of hemoglobin tetramer, g/mol.
pub const HEMOGLOBIN_MOLAR_MASS: f64 = 64_500.0;
pub const DEFAULT_TOTAL_HB_G_PER_L: f64 = 150.0;

const BUNDLED_SPECTRUM: &str = include_str!("../data/hemoglobin_150gpl.csv");
const BUNDLED_EXTINCTION: &str = include_str!("../data/hemoglobin_molar_extinction.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chromophore {
    HbO2,
    Hb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub wavelength_nm: f64,
    pub mu_a_hbo2: f64,
    pub mu_a_hb: f64,
}

/// Absorption coefficients (cm⁻¹) of HbO₂ and Hb, strictly increasing in wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChromophoreSpectrum {
    entries: Vec<SpectrumEntry>,
}

/// Optical properties of one tissue at one wavelength. Coefficients in cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalProperties {
    pub mu_a: f64,
    pub mu_s: f64,
    pub g: f64,
}

impl OpticalProperties {
    pub fn new(mu_a: f64, mu_s: f64, g: f64) -> Result<Self> {
        let p = Self { mu_a, mu_s, g };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_a >= 0.0 && self.mu_a.is_finite()) {
            return Err(Error::validation(format!(
                "mu_a must be >= 0, got {}",
                self.mu_a
            )));
        }
        if !(self.mu_s >= 0.0 && self.mu_s.is_finite()) {
            return Err(Error::validation(format!(
                "mu_s must be >= 0, got {}",
                self.mu_s
            )));
        }
        if !(self.g.abs() <= 1.0) {
            return Err(Error::validation(format!(
                "|g| must be <= 1, got {}",
                self.g
            )));
        }
        Ok(())
    }

    pub fn mu_t(&self) -> f64 {
        self.mu_a + self.mu_s
    }
}

impl ChromophoreSpectrum {
    pub fn new(entries: Vec<SpectrumEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::validation("spectrum has no entries"));
        }
        for (i, e) in entries.iter().enumerate() {
            if !(e.mu_a_hbo2 > 0.0 && e.mu_a_hb > 0.0) {
                return Err(Error::validation(format!(
                    "non-positive absorption at {} nm",
                    e.wavelength_nm
                )));
            }
            if i > 0 && !(e.wavelength_nm > entries[i - 1].wavelength_nm) {
                return Err(Error::validation(format!(
                    "wavelengths not strictly increasing at {} nm",
                    e.wavelength_nm
                )));
            }
        }
        Ok(Self { entries })
    }

    /// The bundled table (150 g/L total hemoglobin, 690–900 nm).
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SPECTRUM).expect("bundled spectrum is valid")
    }

    /// Parses the spectrum CSV. The header line is optional; `#` comments and
    /// blank lines are skipped.
    pub fn parse(source: &str) -> Result<Self> {
        let rows = parse_triples(source, SPECTRUM_HEADER)?;
        let entries = rows
            .into_iter()
            .map(|(_, w, a, b)| SpectrumEntry {
                wavelength_nm: w,
                mu_a_hbo2: a,
                mu_a_hb: b,
            })
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[SpectrumEntry] {
        &self.entries
    }

    pub fn range(&self) -> (f64, f64) {
        (
            self.entries[0].wavelength_nm,
            self.entries[self.entries.len() - 1].wavelength_nm,
        )
    }

    /// Absorption of one chromophore, linearly interpolated between bracketing entries.
    pub fn absorption_at(&self, wavelength_nm: f64, chromophore: Chromophore) -> Result<f64> {
        let pick = |e: &SpectrumEntry| match chromophore {
            Chromophore::HbO2 => e.mu_a_hbo2,
            Chromophore::Hb => e.mu_a_hb,
        };
        let (min, max) = self.range();
        if !(wavelength_nm >= min && wavelength_nm <= max) {
            return Err(Error::OutOfRange {
                wavelength: wavelength_nm,
                min,
                max,
            });
        }
        // first entry with wavelength >= query
        let hi = self
            .entries
            .partition_point(|e| e.wavelength_nm < wavelength_nm);
        let upper = &self.entries[hi];
        if upper.wavelength_nm == wavelength_nm {
            return Ok(pick(upper));
        }
        let lower = &self.entries[hi - 1];
        let t = (wavelength_nm - lower.wavelength_nm) / (upper.wavelength_nm - lower.wavelength_nm);
        Ok(pick(lower) + t * (pick(upper) - pick(lower)))
    }

    /// Blood absorption `so2·μa_HbO₂(λ) + (1−so2)·μa_Hb(λ)`.
    pub fn blood_mu_a(&self, so2: f64, wavelength_nm: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&so2) {
            return Err(Error::validation(format!(
                "sO2 must lie in [0, 1], got {so2}"
            )));
        }
        let oxy = self.absorption_at(wavelength_nm, Chromophore::HbO2)?;
        let deoxy = self.absorption_at(wavelength_nm, Chromophore::Hb)?;
        Ok(so2 * oxy + (1.0 - so2) * deoxy)
    }
}

/// Molar extinction coefficients (cm⁻¹/M, base 10) of HbO₂ and Hb.
#[derive(Debug, Clone, PartialEq)]
pub struct MolarExtinction {
    entries: Vec<(f64, f64, f64)>,
}

impl MolarExtinction {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_EXTINCTION).expect("bundled extinction table is valid")
    }

    pub fn parse(source: &str) -> Result<Self> {
        let rows = parse_triples(source, EXTINCTION_HEADER)?;
        Ok(Self {
            entries: rows.into_iter().map(|(_, w, a, b)| (w, a, b)).collect(),
        })
    }

    /// Absorption spectrum at the given total hemoglobin concentration.
    pub fn to_spectrum(&self, total_hb_g_per_l: f64) -> Result<ChromophoreSpectrum> {
        if !(total_hb_g_per_l > 0.0) {
            return Err(Error::validation(
                "hemoglobin concentration must be positive",
            ));
        }
        let molar = total_hb_g_per_l / HEMOGLOBIN_MOLAR_MASS;
        let scale = std::f64::consts::LN_10 * molar;
        ChromophoreSpectrum::new(
            self.entries
                .iter()
                .map(|&(w, a, b)| SpectrumEntry {
                    wavelength_nm: w,
                    mu_a_hbo2: a * scale,
                    mu_a_hb: b * scale,
                })
                .collect(),
        )
    }
}

/// Parses `wavelength,a,b` rows, returning (line number, values). Checks
/// ordering and positivity so errors name the offending line.
fn parse_triples(source: &str, header: &str) -> Result<Vec<(usize, f64, f64, f64)>> {
    let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if line == header {
                continue;
            }
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("not a finite number: {f:?}"),
                });
            }
        }
        if vals[1] <= 0.0 || vals[2] <= 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: "absorption values must be positive".into(),
            });
        }
        if let Some(&(_, prev, _, _)) = rows.last() {
            if vals[0] <= prev {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("wavelength {} not greater than previous {prev}", vals[0]),
                });
            }
        }
        rows.push((line_no, vals[0], vals[1], vals[2]));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}
