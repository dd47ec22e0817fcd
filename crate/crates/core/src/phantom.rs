//! Layered breast-tissue volume with randomized cylindrical blood vessels.
//!
//! Coordinates are in millimetres with the origin at a corner of the top
//! face: `x` and `y` are lateral, `z` is depth below the skin surface. The
//! imaged plane is the voxel layer `y = floor(ny / 2)`; its rows index depth
//! and its columns index `x`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chromophores::{ChromophoreSpectrum, OpticalProperties};
use crate::error::{Error, Result};
use crate::grid::{Grid3, Image, Mask};
use crate::rng;

pub const EPIDERMIS: u8 = 0;
pub const DERMIS: u8 = 1;
pub const BREAST: u8 = 2;
/// Label of the first blood vessel; vessel `k` has label `FIRST_VESSEL + k`.
pub const FIRST_VESSEL: u8 = 3;

pub const MAX_VESSELS: usize = (u8::MAX - FIRST_VESSEL) as usize;

/// Per-wavelength optical properties of the three skin/breast layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTable {
    pub epidermis: BTreeMap<u32, OpticalProperties>,
    pub dermis: BTreeMap<u32, OpticalProperties>,
    pub breast: BTreeMap<u32, OpticalProperties>,
}

impl Default for LayerTable {
    /// Representative breast-tissue properties at 700 and 850 nm.
    fn default() -> Self {
        let table = |a700, a850, s700, s850| {
            BTreeMap::from([
                (
                    700,
                    OpticalProperties {
                        mu_a: a700,
                        mu_s: s700,
                        g: 0.9,
                    },
                ),
                (
                    850,
                    OpticalProperties {
                        mu_a: a850,
                        mu_s: s850,
                        g: 0.9,
                    },
                ),
            ])
        };
        Self {
            epidermis: table(0.5542, 0.2933, 42.59, 35.17),
            dermis: table(0.0168, 0.0369, 259.45, 212.31),
            breast: table(0.0433, 0.0575, 119.76, 99.02),
        }
    }
}

impl LayerTable {
    fn layer(&self, label: u8) -> &BTreeMap<u32, OpticalProperties> {
        match label {
            EPIDERMIS => &self.epidermis,
            DERMIS => &self.dermis,
            _ => &self.breast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub volume_size_mm: [f64; 3],
    pub grid_dims: [usize; 3],
    /// Epidermis, dermis, breast.
    pub layer_thicknesses_mm: [f64; 3],
    /// Inclusive range of the vessel count. `(0, 0)` yields a vessel-free volume.
    pub n_cylinders: (usize, usize),
    pub radius_range_mm: (f64, f64),
    pub so2_range: (f64, f64),
    /// Image rows hidden by top-row masking; vessels are placed below them.
    pub mask_rows: usize,
    pub wavelengths_nm: Vec<u32>,
    pub layers: LayerTable,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            volume_size_mm: [38.0; 3],
            grid_dims: [128; 3],
            layer_thicknesses_mm: [0.3, 4.7, 33.0],
            n_cylinders: (1, 3),
            radius_range_mm: (0.5, 4.0),
            so2_range: (0.0, 1.0),
            mask_rows: 50,
            wavelengths_nm: vec![700, 850],
            layers: LayerTable::default(),
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn voxel_size_mm(&self) -> [f64; 3] {
        [
            self.volume_size_mm[0] / self.grid_dims[0] as f64,
            self.volume_size_mm[1] / self.grid_dims[1] as f64,
            self.volume_size_mm[2] / self.grid_dims[2] as f64,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self
            .volume_size_mm
            .iter()
            .any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return cfg(format!(
                "volume_size_mm must be positive, got {:?}",
                self.volume_size_mm
            ));
        }
        if self.grid_dims.iter().any(|&n| n < 16) {
            return cfg(format!(
                "grid_dims must be >= 16 per axis, got {:?}",
                self.grid_dims
            ));
        }
        if self.layer_thicknesses_mm.iter().any(|&t| !(t >= 0.0)) {
            return cfg("layer thicknesses must be non-negative".into());
        }
        let depth: f64 = self.layer_thicknesses_mm.iter().sum();
        if (depth - self.volume_size_mm[2]).abs() > 1e-9 * self.volume_size_mm[2].max(1.0) {
            return cfg(format!(
                "layer thicknesses sum to {depth} mm but volume depth is {} mm",
                self.volume_size_mm[2]
            ));
        }
        let (rmin, rmax) = self.radius_range_mm;
        let half = self
            .volume_size_mm
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
            / 2.0;
        if !(rmin > 0.0 && rmin <= rmax && rmax < half) {
            return cfg(format!(
                "radius range ({rmin}, {rmax}) must lie in (0, {half})"
            ));
        }
        let (cmin, cmax) = self.n_cylinders;
        if cmin > cmax || cmax > MAX_VESSELS {
            return cfg(format!("invalid cylinder count range [{cmin}, {cmax}]"));
        }
        let (smin, smax) = self.so2_range;
        if !(0.0 <= smin && smin <= smax && smax <= 1.0) {
            return cfg(format!("so2 range ({smin}, {smax}) must lie within [0, 1]"));
        }
        if self.mask_rows >= self.grid_dims[2] {
            return cfg(format!(
                "mask_rows {} must be below grid depth",
                self.mask_rows
            ));
        }
        if self.wavelengths_nm.is_empty() {
            return cfg("at least one wavelength is required".into());
        }
        for &w in &self.wavelengths_nm {
            for (name, layer) in [
                ("epidermis", &self.layers.epidermis),
                ("dermis", &self.layers.dermis),
                ("breast", &self.layers.breast),
            ] {
                let p = layer
                    .get(&w)
                    .ok_or_else(|| Error::Config(format!("no {name} properties at {w} nm")))?;
                p.validate()?;
            }
        }
        Ok(())
    }

    /// Sets one key of the flat key-value config format.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<bool> {
        use crate::kv::{parse_list, parse_value};
        match key {
            "volume_size_mm" => self.volume_size_mm = parse_list::<f64, 3>(key, value)?,
            "grid_dims" => self.grid_dims = parse_list::<usize, 3>(key, value)?,
            "layer_thicknesses_mm" => self.layer_thicknesses_mm = parse_list::<f64, 3>(key, value)?,
            "n_cylinders_min" => self.n_cylinders.0 = parse_value(key, value)?,
            "n_cylinders_max" => self.n_cylinders.1 = parse_value(key, value)?,
            "radius_min_mm" => self.radius_range_mm.0 = parse_value(key, value)?,
            "radius_max_mm" => self.radius_range_mm.1 = parse_value(key, value)?,
            "so2_min" => self.so2_range.0 = parse_value(key, value)?,
            "so2_max" => self.so2_range.1 = parse_value(key, value)?,
            "mask_rows" => self.mask_rows = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Infinite cylinder: all points within `radius_mm` of the axis line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub point_mm: [f64; 3],
    pub axis: [f64; 3],
    pub radius_mm: f64,
    pub so2: f64,
}

impl Cylinder {
    pub fn new(point_mm: [f64; 3], axis: [f64; 3], radius_mm: f64, so2: f64) -> Result<Self> {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(norm > 0.0) {
            return Err(Error::validation("cylinder axis must be non-zero"));
        }
        if !(radius_mm > 0.0) {
            return Err(Error::validation("cylinder radius must be positive"));
        }
        if !(0.0..=1.0).contains(&so2) {
            return Err(Error::validation(format!(
                "cylinder sO2 {so2} outside [0, 1]"
            )));
        }
        Ok(Self {
            point_mm,
            axis: [axis[0] / norm, axis[1] / norm, axis[2] / norm],
            radius_mm,
            so2,
        })
    }

    pub fn distance_to_axis(&self, p: [f64; 3]) -> f64 {
        let v = [
            p[0] - self.point_mm[0],
            p[1] - self.point_mm[1],
            p[2] - self.point_mm[2],
        ];
        let t = v[0] * self.axis[0] + v[1] * self.axis[1] + v[2] * self.axis[2];
        let perp = [
            v[0] - t * self.axis[0],
            v[1] - t * self.axis[1],
            v[2] - t * self.axis[2],
        ];
        (perp[0] * perp[0] + perp[1] * perp[1] + perp[2] * perp[2]).sqrt()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.distance_to_axis(p) <= self.radius_mm
    }
}

/// One labelled material in the volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tissue {
    pub name: String,
    /// sO₂ used for the absorption of blood tissues.
    pub so2: Option<f64>,
    pub props: BTreeMap<u32, OpticalProperties>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TissueVolume {
    labels: Grid3<u8>,
    tissues: Vec<Tissue>,
    voxel_size_mm: [f64; 3],
    cylinders: Vec<Cylinder>,
}

impl TissueVolume {
    /// Assembles a volume from raw parts. Every label present must index `tissues`.
    pub fn from_parts(
        labels: Grid3<u8>,
        tissues: Vec<Tissue>,
        voxel_size_mm: [f64; 3],
        cylinders: Vec<Cylinder>,
    ) -> Result<Self> {
        if voxel_size_mm.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::validation("voxel size must be positive"));
        }
        let mut present = [false; 256];
        for &l in labels.as_slice() {
            present[l as usize] = true;
        }
        if let Some(l) = (0..256).find(|&l| present[l] && l >= tissues.len()) {
            return Err(Error::validation(format!("label {l} has no tissue entry")));
        }
        for t in &tissues {
            for p in t.props.values() {
                p.validate()?;
            }
        }
        Ok(Self {
            labels,
            tissues,
            voxel_size_mm,
            cylinders,
        })
    }

    /// Single-material volume, for transport tests.
    pub fn homogeneous(
        dims: [usize; 3],
        voxel_size_mm: [f64; 3],
        props: BTreeMap<u32, OpticalProperties>,
    ) -> Result<Self> {
        Self::from_parts(
            Grid3::filled(dims, 0),
            vec![Tissue {
                name: "homogeneous".into(),
                so2: None,
                props,
            }],
            voxel_size_mm,
            Vec::new(),
        )
    }

    pub fn dims(&self) -> [usize; 3] {
        self.labels.dims()
    }

    pub fn voxel_size_mm(&self) -> [f64; 3] {
        self.voxel_size_mm
    }

    pub fn size_mm(&self) -> [f64; 3] {
        let d = self.dims();
        [
            d[0] as f64 * self.voxel_size_mm[0],
            d[1] as f64 * self.voxel_size_mm[1],
            d[2] as f64 * self.voxel_size_mm[2],
        ]
    }

    pub fn labels(&self) -> &Grid3<u8> {
        &self.labels
    }

    pub fn tissues(&self) -> &[Tissue] {
        &self.tissues
    }

    pub fn cylinders(&self) -> &[Cylinder] {
        &self.cylinders
    }

    pub fn label_at(&self, x: usize, y: usize, z: usize) -> u8 {
        *self.labels.get(x, y, z)
    }

    /// Optical properties per label at `wavelength_nm`, indexed by label.
    pub fn props_at(&self, wavelength_nm: u32) -> Result<Vec<OpticalProperties>> {
        self.tissues
            .iter()
            .map(|t| {
                t.props.get(&wavelength_nm).copied().ok_or_else(|| {
                    Error::validation(format!(
                        "tissue {:?} has no optical properties at {wavelength_nm} nm",
                        t.name
                    ))
                })
            })
            .collect()
    }

    pub fn central_y(&self) -> usize {
        self.dims()[1] / 2
    }

    /// Blood voxels of the central slice.
    pub fn vessel_mask_slice(&self) -> Mask {
        let [nx, _, nz] = self.dims();
        let y = self.central_y();
        Mask::from_fn(nx, nz, |row, col| {
            self.label_at(col, y, row) >= FIRST_VESSEL
        })
    }

    /// Ground-truth sO₂ of the central slice; zero outside vessels.
    pub fn gt_so2_slice(&self) -> Image {
        let [nx, _, nz] = self.dims();
        let y = self.central_y();
        Image::from_fn(nx, nz, |row, col| {
            let l = self.label_at(col, y, row);
            if l >= FIRST_VESSEL {
                self.tissues[l as usize].so2.unwrap_or(0.0)
            } else {
                0.0
            }
        })
    }
}

fn voxel_center(voxel: [f64; 3], x: usize, y: usize, z: usize) -> [f64; 3] {
    [
        (x as f64 + 0.5) * voxel[0],
        (y as f64 + 0.5) * voxel[1],
        (z as f64 + 0.5) * voxel[2],
    ]
}

/// Draws the vessel set for `config`. Each cylinder's axis crosses the imaged
/// plane inside the field of view; candidates whose cross-section is empty or
/// reaches into the masked top rows are redrawn.
pub fn sample_cylinders(config: &PhantomConfig) -> Result<Vec<Cylinder>> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, 0);
    let (cmin, cmax) = config.n_cylinders;
    let count = rng.random_range(cmin..=cmax);
    let voxel = config.voxel_size_mm();
    let [nx, ny, nz] = config.grid_dims;
    let y_plane = (ny / 2) as f64 * voxel[1] + 0.5 * voxel[1];
    let mask_depth = config.mask_rows as f64 * voxel[2];
    let (rmin, rmax) = config.radius_range_mm;
    let (smin, smax) = config.so2_range;

    const MAX_ATTEMPTS: usize = 10_000;
    let mut cylinders = Vec::with_capacity(count);
    for k in 0..count {
        let radius = if rmin == rmax {
            rmin
        } else {
            rng.random_range(rmin..=rmax)
        };
        let so2 = if smin == smax {
            smin
        } else {
            rng.random_range(smin..=smax)
        };
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let px = rng.random_range(0.0..config.volume_size_mm[0]);
            let pz = rng.random_range(mask_depth..config.volume_size_mm[2]);
            let cos_t: f64 = rng.random_range(-1.0..=1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let axis = [sin_t * phi.cos(), sin_t * phi.sin(), cos_t];
            let Ok(c) = Cylinder::new([px, y_plane, pz], axis, radius, so2) else {
                continue;
            };
            if slice_footprint_ok(&c, voxel, nx, nz, ny / 2, config.mask_rows) {
                accepted = Some(c);
                break;
            }
        }
        match accepted {
            Some(c) => cylinders.push(c),
            None => {
                return Err(Error::Config(format!(
                    "could not place vessel {k} below row {} after {MAX_ATTEMPTS} attempts",
                    config.mask_rows
                )))
            }
        }
    }
    Ok(cylinders)
}

fn slice_footprint_ok(
    c: &Cylinder,
    voxel: [f64; 3],
    nx: usize,
    nz: usize,
    y: usize,
    mask_rows: usize,
) -> bool {
    let mut any = false;
    for z in 0..nz {
        for x in 0..nx {
            if c.contains(voxel_center(voxel, x, y, z)) {
                if z < mask_rows {
                    return false;
                }
                any = true;
            }
        }
    }
    any
}

/// Builds the phantom for `config`, drawing vessels from its seed.
pub fn build_volume(
    config: &PhantomConfig,
    spectrum: &ChromophoreSpectrum,
) -> Result<TissueVolume> {
    let cylinders = sample_cylinders(config)?;
    build_volume_with_cylinders(config, spectrum, cylinders)
}

/// Builds the phantom with an explicit vessel list. Later cylinders override
/// earlier ones where they overlap.
pub fn build_volume_with_cylinders(
    config: &PhantomConfig,
    spectrum: &ChromophoreSpectrum,
    cylinders: Vec<Cylinder>,
) -> Result<TissueVolume> {
    config.validate()?;
    if cylinders.len() > MAX_VESSELS {
        return Err(Error::Config(format!(
            "at most {MAX_VESSELS} vessels supported"
        )));
    }
    let voxel = config.voxel_size_mm();
    let dims = config.grid_dims;
    let [t_epi, t_derm, _] = config.layer_thicknesses_mm;
    let derm_end = t_epi + t_derm;

    let mut labels = Grid3::filled(dims, BREAST);
    for z in 0..dims[2] {
        let zc = (z as f64 + 0.5) * voxel[2];
        let layer = if zc < t_epi {
            EPIDERMIS
        } else if zc < derm_end {
            DERMIS
        } else {
            BREAST
        };
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = voxel_center(voxel, x, y, z);
                let mut label = layer;
                for (k, c) in cylinders.iter().enumerate() {
                    if c.contains(p) {
                        label = FIRST_VESSEL + k as u8;
                    }
                }
                *labels.get_mut(x, y, z) = label;
            }
        }
    }

    let mut tissues = vec![
        Tissue {
            name: "epidermis".into(),
            so2: None,
            props: config.layers.layer(EPIDERMIS).clone(),
        },
        Tissue {
            name: "dermis".into(),
            so2: None,
            props: config.layers.layer(DERMIS).clone(),
        },
        Tissue {
            name: "breast".into(),
            so2: None,
            props: config.layers.layer(BREAST).clone(),
        },
    ];
    for (k, c) in cylinders.iter().enumerate() {
        let mut props = BTreeMap::new();
        for &w in &config.wavelengths_nm {
            // blood scatters like the surrounding breast tissue
            let breast = config.layers.breast[&w];
            props.insert(
                w,
                OpticalProperties {
                    mu_a: spectrum.blood_mu_a(c.so2, w as f64)?,
                    mu_s: breast.mu_s,
                    g: breast.g,
                },
            );
        }
        tissues.push(Tissue {
            name: format!("blood_{}", k + 1),
            so2: Some(c.so2),
            props,
        });
    }
    TissueVolume::from_parts(labels, tissues, voxel, cylinders)
}
