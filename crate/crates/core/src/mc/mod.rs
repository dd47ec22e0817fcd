//! Voxelized Monte Carlo photon transport (hop, drop, spin, roulette).
//!
//! Each packet draws a dimensionless optical path `-ln(u)` and marches it
//! voxel by voxel through the label grid, consuming `μt · length` per voxel.
//! At the end of the path it deposits the fraction `μa/μt` of its weight in
//! the voxel it stopped in, scatters by Henyey–Greenstein, and plays Russian
//! roulette below the weight threshold. Boundaries are index matched, so a
//! packet crossing the outer face escapes with its full weight.
//!
//! Packets are processed in fixed blocks. Each block owns a private
//! deposition grid and its packets draw from counter-based streams keyed by
//! `(seed, packet index)`; block grids are summed in block order. The result
//! is therefore identical for any number of worker threads.

mod raw;
mod scatter;

pub use raw::{read_mcvol, write_mcvol, MCVOL_MAGIC};
pub use scatter::{sample_hg, spin};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::kv::{parse_list, parse_value};
use crate::phantom::TissueVolume;
use crate::rng;

/// Packets per deposition block. Part of the result definition: changing it
/// changes floating-point summation order.
pub const PACKETS_PER_BLOCK: u64 = 4096;

const MM_PER_CM: f64 = 10.0;

/// Circular top-hat beam at normal incidence on the `z = 0` face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub diameter_mm: f64,
    /// Beam centre on the top face; `None` means the face centre.
    pub center_mm: Option<[f64; 2]>,
}

impl Default for BeamSpec {
    fn default() -> Self {
        Self {
            diameter_mm: 40.0,
            center_mm: None,
        }
    }
}

impl BeamSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter_mm > 0.0 && self.diameter_mm.is_finite()) {
            return Err(Error::Config(format!(
                "beam diameter must be positive, got {}",
                self.diameter_mm
            )));
        }
        Ok(())
    }

    pub fn set_key(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "beam_diameter_mm" => self.diameter_mm = parse_value(key, value)?,
            "beam_center_mm" => self.center_mm = Some(parse_list::<f64, 2>(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    pub n_photons: u64,
    /// Roulette weight threshold; `0.0` disables roulette.
    pub roulette_threshold: f64,
    /// Roulette survivors are boosted by this factor and survive with probability `1/m`.
    pub roulette_survival: u32,
    pub seed: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            n_photons: 1_000_000,
            roulette_threshold: 1e-4,
            roulette_survival: 10,
            seed: 0,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_photons == 0 {
            return Err(Error::Config("n_photons must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.roulette_threshold) {
            return Err(Error::Config(format!(
                "roulette threshold must lie in [0, 1), got {}",
                self.roulette_threshold
            )));
        }
        if self.roulette_survival < 2 {
            return Err(Error::Config(
                "roulette survival factor must be >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn set_key(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "photons" | "n_photons" => self.n_photons = parse_value(key, value)?,
            "roulette_threshold" => self.roulette_threshold = parse_value(key, value)?,
            "roulette_survival" => self.roulette_survival = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// State of one photon packet. Position in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonPacket {
    pub position_mm: [f64; 3],
    pub direction: [f64; 3],
    pub weight: f64,
}

/// Deposited weight per voxel, normalised per launched packet.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbedEnergyMap {
    pub grid: Grid3<f64>,
    pub voxel_size_mm: [f64; 3],
    /// Weight that left through the outer boundary, per launched packet.
    pub escaped_weight: f64,
    /// Sum of `grid`.
    pub deposited_weight: f64,
    /// Launch positions redrawn because they fell outside the top face.
    pub clipped_launches: u64,
    pub n_photons: u64,
}

/// Per-label coefficients at one wavelength, in mm⁻¹.
struct Medium {
    /// `μa/μt`, the fraction of weight deposited per interaction.
    absorb_fraction: Vec<f64>,
    mu_t: Vec<f64>,
    g: Vec<f64>,
}

struct Tally {
    grid: Vec<f64>,
    escaped: f64,
    clipped: u64,
}

struct Transport<'a> {
    labels: &'a [u8],
    dims: [usize; 3],
    voxel: [f64; 3],
    size: [f64; 3],
    medium: Medium,
    beam_center: [f64; 2],
    beam_radius: f64,
    config: TransportConfig,
}

/// Runs the transport simulation of `volume` at `wavelength_nm`.
pub fn simulate(
    volume: &TissueVolume,
    wavelength_nm: u32,
    beam: &BeamSpec,
    config: &TransportConfig,
) -> Result<AbsorbedEnergyMap> {
    beam.validate()?;
    config.validate()?;
    let props = volume.props_at(wavelength_nm)?;
    let medium = Medium {
        absorb_fraction: props
            .iter()
            .map(|p| {
                if p.mu_t() > 0.0 {
                    p.mu_a / p.mu_t()
                } else {
                    0.0
                }
            })
            .collect(),
        mu_t: props.iter().map(|p| p.mu_t() / MM_PER_CM).collect(),
        g: props.iter().map(|p| p.g).collect(),
    };
    let size = volume.size_mm();
    let beam_center = beam.center_mm.unwrap_or([size[0] / 2.0, size[1] / 2.0]);
    let beam_radius = beam.diameter_mm / 2.0;
    // the launch loop needs a non-empty overlap between beam disk and top face
    let nearest = [
        beam_center[0].clamp(0.0, size[0]),
        beam_center[1].clamp(0.0, size[1]),
    ];
    if (nearest[0] - beam_center[0]).hypot(nearest[1] - beam_center[1]) >= beam_radius {
        return Err(Error::Config("beam does not overlap the top face".into()));
    }

    let transport = Transport {
        labels: volume.labels().as_slice(),
        dims: volume.dims(),
        voxel: volume.voxel_size_mm(),
        size,
        medium,
        beam_center,
        beam_radius,
        config: *config,
    };

    let n_voxels = transport.labels.len();
    let n_blocks = config.n_photons.div_ceil(PACKETS_PER_BLOCK);
    let wave = rayon::current_num_threads().max(1) as u64;

    let mut grid = vec![0.0f64; n_voxels];
    let mut escaped = 0.0f64;
    let mut clipped = 0u64;
    let mut start = 0;
    while start < n_blocks {
        let end = (start + wave).min(n_blocks);
        let tallies: Vec<Tally> = (start..end)
            .into_par_iter()
            .map(|b| transport.run_block(b))
            .collect();
        for t in tallies {
            for (acc, v) in grid.iter_mut().zip(&t.grid) {
                *acc += v;
            }
            escaped += t.escaped;
            clipped += t.clipped;
        }
        start = end;
    }

    let n = config.n_photons as f64;
    for v in grid.iter_mut() {
        *v /= n;
    }
    let deposited_weight = grid.iter().sum();
    Ok(AbsorbedEnergyMap {
        grid: Grid3::from_vec(volume.dims(), grid)?,
        voxel_size_mm: volume.voxel_size_mm(),
        escaped_weight: escaped / n,
        deposited_weight,
        clipped_launches: clipped,
        n_photons: config.n_photons,
    })
}

impl Transport<'_> {
    fn run_block(&self, block: u64) -> Tally {
        let mut tally = Tally {
            grid: vec![0.0; self.labels.len()],
            escaped: 0.0,
            clipped: 0,
        };
        let first = block * PACKETS_PER_BLOCK;
        let last = (first + PACKETS_PER_BLOCK).min(self.config.n_photons);
        for packet in first..last {
            self.run_packet(packet, &mut tally);
        }
        tally
    }

    fn launch(&self, rng: &mut impl Rng, tally: &mut Tally) -> PhotonPacket {
        loop {
            let r = self.beam_radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            let x = self.beam_center[0] + r * phi.cos();
            let y = self.beam_center[1] + r * phi.sin();
            if (0.0..self.size[0]).contains(&x) && (0.0..self.size[1]).contains(&y) {
                return PhotonPacket {
                    position_mm: [x, y, 0.0],
                    direction: [0.0, 0.0, 1.0],
                    weight: 1.0,
                };
            }
            tally.clipped += 1;
        }
    }

    fn run_packet(&self, index: u64, tally: &mut Tally) {
        let mut rng = rng::stream(self.config.seed, index);
        let mut packet = self.launch(&mut rng, tally);
        let [nx, ny, _] = self.dims;
        let mut cell = [
            ((packet.position_mm[0] / self.voxel[0]) as usize).min(nx - 1),
            ((packet.position_mm[1] / self.voxel[1]) as usize).min(ny - 1),
            0usize,
        ];
        let threshold = self.config.roulette_threshold;
        let survival = self.config.roulette_survival as f64;

        loop {
            // hop: march a dimensionless path length through the voxels
            let u: f64 = rng.random();
            let mut remaining = -(1.0 - u).ln();
            let mut voxel_index;
            loop {
                voxel_index = (cell[2] * ny + cell[1]) * nx + cell[0];
                let label = self.labels[voxel_index] as usize;
                let mu_t = self.medium.mu_t[label];
                let (t_boundary, axis) = self.distance_to_boundary(&packet, cell);
                if mu_t > 0.0 && mu_t * t_boundary >= remaining {
                    let step = remaining / mu_t;
                    for k in 0..3 {
                        packet.position_mm[k] += packet.direction[k] * step;
                    }
                    break;
                }
                remaining -= mu_t * t_boundary;
                for k in 0..3 {
                    packet.position_mm[k] += packet.direction[k] * t_boundary;
                }
                let (dims_k, h) = (self.dims[axis], self.voxel[axis]);
                if packet.direction[axis] > 0.0 {
                    if cell[axis] + 1 == dims_k {
                        tally.escaped += packet.weight;
                        return;
                    }
                    cell[axis] += 1;
                    packet.position_mm[axis] = cell[axis] as f64 * h;
                } else {
                    if cell[axis] == 0 {
                        tally.escaped += packet.weight;
                        return;
                    }
                    packet.position_mm[axis] = cell[axis] as f64 * h;
                    cell[axis] -= 1;
                }
            }

            // drop
            let label = self.labels[voxel_index] as usize;
            let absorbed = packet.weight * self.medium.absorb_fraction[label];
            tally.grid[voxel_index] += absorbed;
            packet.weight -= absorbed;
            if packet.weight <= 0.0 {
                return;
            }

            // spin
            let cos_theta = sample_hg(self.medium.g[label], rng.random());
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            packet.direction = spin(packet.direction, cos_theta, phi);

            // roulette
            if packet.weight < threshold {
                if rng.random::<f64>() * survival < 1.0 {
                    packet.weight *= survival;
                } else {
                    return;
                }
            }
        }
    }

    /// Path length to the nearest face of `cell` along the packet direction,
    /// and the axis of that face.
    #[inline]
    fn distance_to_boundary(&self, packet: &PhotonPacket, cell: [usize; 3]) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut axis = 0;
        for k in 0..3 {
            let d = packet.direction[k];
            let t = if d > 0.0 {
                ((cell[k] + 1) as f64 * self.voxel[k] - packet.position_mm[k]) / d
            } else if d < 0.0 {
                (cell[k] as f64 * self.voxel[k] - packet.position_mm[k]) / d
            } else {
                continue;
            };
            let t = t.max(0.0);
            if t < best {
                best = t;
                axis = k;
            }
        }
        (best, axis)
    }
}
