//! Python module `spa_oximetry`.
//!
//! Images cross the boundary as lists of rows (`list[list[float]]`); masks as
//! lists of rows of bools. Wavelengths are in nm.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spa_core::chromophores::{Chromophore, ChromophoreSpectrum};
use spa_core::cli::{self as core_cli, SegLossArg};
use spa_core::dataset::{self, Provenance, SampleRecord, Split};
use spa_core::mc::{self, AbsorbedEnergyMap, BeamSpec, TransportConfig};
use spa_core::metrics::{self, SegLossKind};
use spa_core::phantom::{self, PhantomConfig, TissueVolume};
use spa_core::spa_image::{self, SnrLevel, SpaImage, SpaPair};
use spa_core::unmix::{self, ConcentrationPair, UnmixMatrix};
use spa_core::{Error, Grid2, Image};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::MissingEntry(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for spa_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn grid_from_rows<T: Clone>(rows: Vec<Vec<T>>) -> PyResult<Grid2<T>> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Grid2::from_vec(width, height, rows.into_iter().flatten().collect()).py()
}

fn grid_to_rows<T: Clone>(g: &Grid2<T>) -> Vec<Vec<T>> {
    g.as_slice()
        .chunks(g.width().max(1))
        .map(<[T]>::to_vec)
        .take(g.height())
        .collect()
}

fn to_f32(g: &Image) -> Grid2<f32> {
    g.map(|&v| v as f32)
}

fn to_f64(g: &Grid2<f32>) -> Image {
    g.map(|&v| v as f64)
}

fn seg_kind(kind: &str) -> PyResult<SegLossKind> {
    match kind {
        "dice" => Ok(SegLossKind::Dice),
        "mse" => Ok(SegLossKind::Mse),
        _ => Err(PyValueError::new_err(format!(
            "unknown segmentation loss {kind:?}"
        ))),
    }
}

fn parse_split(split: Option<&str>) -> PyResult<Option<Split>> {
    match split {
        None | Some("all") => Ok(None),
        Some("train") => Ok(Some(Split::Train)),
        Some("val") => Ok(Some(Split::Val)),
        Some("test") => Ok(Some(Split::Test)),
        Some(s) => Err(PyValueError::new_err(format!("unknown split {s:?}"))),
    }
}

fn image_pair(img700: Vec<Vec<f64>>, img850: Vec<Vec<f64>>) -> PyResult<SpaPair> {
    Ok(SpaPair {
        img700: SpaImage {
            pixels: grid_from_rows(img700)?,
            wavelength_nm: 700,
        },
        img850: SpaImage {
            pixels: grid_from_rows(img850)?,
            wavelength_nm: 850,
        },
        snr: SnrLevel::Clean,
        seed: 0,
    })
}

// ---------------------------------------------------------------- spectrum

/// Hemoglobin absorption spectrum (μa in cm⁻¹).
#[pyclass(name = "Spectrum", frozen, from_py_object)]
#[derive(Clone)]
pub struct PySpectrum {
    inner: ChromophoreSpectrum,
}

#[pymethods]
impl PySpectrum {
    /// The bundled table at 150 g/L total hemoglobin.
    #[staticmethod]
    fn bundled() -> Self {
        Self {
            inner: ChromophoreSpectrum::bundled(),
        }
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ChromophoreSpectrum::parse(text).py()?,
        })
    }

    fn range(&self) -> (f64, f64) {
        self.inner.range()
    }

    /// `chromophore` is `"hbo2"` or `"hb"`.
    fn absorption(&self, wavelength_nm: f64, chromophore: &str) -> PyResult<f64> {
        let c = match chromophore {
            "hbo2" => Chromophore::HbO2,
            "hb" => Chromophore::Hb,
            _ => {
                return Err(PyValueError::new_err(format!(
                    "unknown chromophore {chromophore:?}"
                )))
            }
        };
        self.inner.absorption_at(wavelength_nm, c).py()
    }

    fn blood_mu_a(&self, so2: f64, wavelength_nm: f64) -> PyResult<f64> {
        self.inner.blood_mu_a(so2, wavelength_nm).py()
    }

    /// Unmixing matrix rows `[μa_HbO2(λ), μa_Hb(λ)]` at 700 and 850 nm.
    fn unmix_matrix(&self) -> PyResult<[[f64; 2]; 2]> {
        Ok(UnmixMatrix::from_spectrum(&self.inner, [700.0, 850.0])
            .py()?
            .entries())
    }
}

// ---------------------------------------------------------------- phantom / transport

#[pyclass(name = "EnergyMap", frozen)]
pub struct PyEnergyMap {
    inner: AbsorbedEnergyMap,
}

#[pymethods]
impl PyEnergyMap {
    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.grid.dims()
    }

    #[getter]
    fn deposited(&self) -> f64 {
        self.inner.deposited_weight
    }

    #[getter]
    fn escaped(&self) -> f64 {
        self.inner.escaped_weight
    }

    #[getter]
    fn clipped_launches(&self) -> u64 {
        self.inner.clipped_launches
    }

    /// Deposited weight at voxel `(x, y, z)`.
    fn at(&self, x: usize, y: usize, z: usize) -> PyResult<f64> {
        let [nx, ny, nz] = self.inner.grid.dims();
        if x >= nx || y >= ny || z >= nz {
            return Err(PyValueError::new_err("voxel index out of range"));
        }
        Ok(*self.inner.grid.get(x, y, z))
    }

    /// Central y-slice, rows = depth.
    fn central_slice(&self) -> Vec<Vec<f64>> {
        grid_to_rows(&spa_image::central_slice(&self.inner, 0).pixels)
    }
}

#[pyclass(name = "Phantom", frozen)]
pub struct PyPhantom {
    inner: TissueVolume,
    mask_rows: usize,
}

#[pymethods]
impl PyPhantom {
    /// Random layered phantom with 1-3 vessels placed below the masked rows.
    #[new]
    #[pyo3(signature = (seed, grid=128, size_mm=38.0, mask_rows=50, spectrum=None))]
    fn new(
        seed: u64,
        grid: usize,
        size_mm: f64,
        mask_rows: usize,
        spectrum: Option<PySpectrum>,
    ) -> PyResult<Self> {
        let base = PhantomConfig::default();
        let scale = size_mm / base.volume_size_mm[2];
        let cfg = PhantomConfig {
            volume_size_mm: [size_mm; 3],
            grid_dims: [grid; 3],
            layer_thicknesses_mm: base.layer_thicknesses_mm.map(|t| t * scale),
            mask_rows,
            seed,
            ..base
        };
        let spectrum = spectrum.map_or_else(ChromophoreSpectrum::bundled, |s| s.inner);
        Ok(Self {
            inner: phantom::build_volume(&cfg, &spectrum).py()?,
            mask_rows,
        })
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.dims()
    }

    #[getter]
    fn mask_rows(&self) -> usize {
        self.mask_rows
    }

    /// `(point_mm, axis, radius_mm, so2)` per vessel.
    fn cylinders(&self) -> Vec<([f64; 3], [f64; 3], f64, f64)> {
        self.inner
            .cylinders()
            .iter()
            .map(|c| (c.point_mm, c.axis, c.radius_mm, c.so2))
            .collect()
    }

    fn vessel_mask(&self) -> Vec<Vec<bool>> {
        grid_to_rows(&self.inner.vessel_mask_slice())
    }

    fn gt_so2(&self) -> Vec<Vec<f64>> {
        grid_to_rows(&self.inner.gt_so2_slice())
    }

    /// Runs the transport at `wavelength_nm` (700 or 850). Releases the GIL.
    #[pyo3(signature = (wavelength_nm, photons, seed, roulette_threshold=1e-4, beam_diameter_mm=40.0))]
    fn simulate(
        &self,
        py: Python<'_>,
        wavelength_nm: u32,
        photons: u64,
        seed: u64,
        roulette_threshold: f64,
        beam_diameter_mm: f64,
    ) -> PyResult<PyEnergyMap> {
        let cfg = TransportConfig {
            n_photons: photons,
            roulette_threshold,
            seed,
            ..TransportConfig::default()
        };
        let beam = BeamSpec {
            diameter_mm: beam_diameter_mm,
            center_mm: None,
        };
        let inner = py
            .detach(|| mc::simulate(&self.inner, wavelength_nm, &beam, &cfg))
            .py()?;
        Ok(PyEnergyMap { inner })
    }
}

/// Henyey-Greenstein cosine for uniform draw `u`.
#[pyfunction]
fn sample_hg(g: f64, u: f64) -> f64 {
    mc::sample_hg(g, u)
}

// ---------------------------------------------------------------- images

/// Slice, mask and jointly normalise two energy maps into `(img700, img850)`.
#[pyfunction]
#[pyo3(signature = (map700, map850, mask_rows=50))]
fn clean_pair(
    map700: &PyEnergyMap,
    map850: &PyEnergyMap,
    mask_rows: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let p = spa_image::clean_pair(&map700.inner, &map850.inner, mask_rows, 0).py()?;
    Ok((
        grid_to_rows(&p.img700.pixels),
        grid_to_rows(&p.img850.pixels),
    ))
}

#[pyfunction]
fn add_noise(
    img: Vec<Vec<f64>>,
    vessel_mask: Vec<Vec<bool>>,
    snr_db: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let img = SpaImage {
        pixels: grid_from_rows(img)?,
        wavelength_nm: 0,
    };
    let out = spa_image::add_noise(&img, &grid_from_rows(vessel_mask)?, snr_db, seed).py()?;
    Ok(grid_to_rows(&out.pixels))
}

#[pyfunction]
fn normalize_pair(
    img700: Vec<Vec<f64>>,
    img850: Vec<Vec<f64>>,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let p = spa_image::normalize_pair(&image_pair(img700, img850)?).py()?;
    Ok((
        grid_to_rows(&p.img700.pixels),
        grid_to_rows(&p.img850.pixels),
    ))
}

// ---------------------------------------------------------------- unmixing

#[pyfunction]
fn nnls2(matrix: [[f64; 2]; 2], b: [f64; 2]) -> PyResult<(f64, f64)> {
    let c = unmix::nnls2(&UnmixMatrix::new(matrix).py()?, b);
    Ok((c.c_hbo2, c.c_hb))
}

/// `(so2, valid)`.
#[pyfunction]
fn so2_from_conc(c_hbo2: f64, c_hb: f64) -> (f64, bool) {
    unmix::so2_from_conc(ConcentrationPair { c_hbo2, c_hb })
}

/// Linear unmixing inside `mask`; returns `(so2_map, invalid_pixels)`.
#[pyfunction]
#[pyo3(signature = (img700, img850, mask, spectrum=None))]
fn lu_map(
    img700: Vec<Vec<f64>>,
    img850: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    spectrum: Option<PySpectrum>,
) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let spectrum = spectrum.map_or_else(ChromophoreSpectrum::bundled, |s| s.inner);
    let a = UnmixMatrix::from_spectrum(&spectrum, [700.0, 850.0]).py()?;
    let (so2, report) =
        unmix::lu_map(&image_pair(img700, img850)?, &a, &grid_from_rows(mask)?).py()?;
    Ok((grid_to_rows(&so2), report.invalid_pixels))
}

// ---------------------------------------------------------------- metrics

#[pyfunction]
#[pyo3(signature = (seg_prob, threshold=0.5))]
fn binarize(seg_prob: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<Vec<bool>>> {
    Ok(grid_to_rows(&metrics::binarize(
        &grid_from_rows(seg_prob)?,
        threshold,
    )))
}

#[pyfunction]
fn dice_loss(pred: Vec<Vec<f64>>, gt: Vec<Vec<bool>>) -> PyResult<f64> {
    metrics::dice_loss(&grid_from_rows(pred)?, &grid_from_rows(gt)?).py()
}

#[pyfunction]
fn mse_in_mask(pred: Vec<Vec<f64>>, gt: Vec<Vec<f64>>, mask: Vec<Vec<bool>>) -> PyResult<f64> {
    metrics::mse_in_mask(
        &grid_from_rows(pred)?,
        &grid_from_rows(gt)?,
        &grid_from_rows(mask)?,
    )
    .py()
}

#[pyfunction]
fn plain_mse_loss(pred: Vec<Vec<f64>>, gt: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::plain_mse_loss(&grid_from_rows(pred)?, &grid_from_rows(gt)?).py()
}

/// `0.5·seg_loss + 0.5·masked sO₂ MSE`; `seg_loss` is `"dice"` or `"mse"`.
#[pyfunction]
#[pyo3(signature = (seg_pred, seg_gt, so2_pred, so2_gt, seg_loss="dice"))]
fn hybrid_loss(
    seg_pred: Vec<Vec<f64>>,
    seg_gt: Vec<Vec<bool>>,
    so2_pred: Vec<Vec<f64>>,
    so2_gt: Vec<Vec<f64>>,
    seg_loss: &str,
) -> PyResult<f64> {
    metrics::hybrid_loss(
        &grid_from_rows(seg_pred)?,
        &grid_from_rows(seg_gt)?,
        &grid_from_rows(so2_pred)?,
        &grid_from_rows(so2_gt)?,
        seg_kind(seg_loss)?,
    )
    .py()
}

#[pyfunction]
fn final_so2(seg_bin: Vec<Vec<bool>>, so2: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(grid_to_rows(
        &metrics::final_so2(&grid_from_rows(seg_bin)?, &grid_from_rows(so2)?).py()?,
    ))
}

#[pyfunction]
fn seg_stats<'py>(
    py: Python<'py>,
    pred: Vec<Vec<bool>>,
    gt: Vec<Vec<bool>>,
) -> PyResult<Bound<'py, PyDict>> {
    let s = metrics::seg_stats(&grid_from_rows(pred)?, &grid_from_rows(gt)?).py()?;
    let d = PyDict::new(py);
    d.set_item("tp", s.tp)?;
    d.set_item("tn", s.tn)?;
    d.set_item("fp", s.fp)?;
    d.set_item("fn", s.fn_)?;
    d.set_item("fpr", s.fpr)?;
    d.set_item("fnr", s.fnr)?;
    d.set_item("accuracy", s.accuracy)?;
    Ok(d)
}

// ---------------------------------------------------------------- dataset

#[pyclass(name = "Dataset", frozen)]
pub struct PyDataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn open(root: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::Dataset::open(root).py()?,
        })
    }

    #[getter]
    fn config_digest(&self) -> String {
        self.inner.manifest().config_digest.clone()
    }

    #[pyo3(signature = (split=None))]
    fn ids(&self, split: Option<&str>) -> PyResult<Vec<String>> {
        Ok(self.inner.ids_in(parse_split(split)?))
    }

    /// Sample as a dict of arrays (`img700`, `img850`, `gt_seg`, `gt_so2`) and metadata.
    fn read_sample<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.read_sample(id).py()?;
        let split = self.inner.entry(id).py()?.split;
        let d = PyDict::new(py);
        d.set_item("id", &r.id)?;
        d.set_item("img700", grid_to_rows(&to_f64(&r.img700)))?;
        d.set_item("img850", grid_to_rows(&to_f64(&r.img850)))?;
        d.set_item("gt_seg", grid_to_rows(&to_f64(&r.gt_seg)))?;
        d.set_item("gt_so2", grid_to_rows(&to_f64(&r.gt_so2)))?;
        d.set_item(
            "snr_db",
            match r.snr {
                SnrLevel::Clean => None,
                SnrLevel::Db(v) => Some(v),
            },
        )?;
        d.set_item(
            "provenance",
            match r.provenance {
                Provenance::Simulated => "simulated",
                Provenance::ExperimentalImport => "experimental-import",
            },
        )?;
        d.set_item("seed", r.seed)?;
        d.set_item(
            "split",
            split.map(|s| match s {
                Split::Train => "train",
                Split::Val => "val",
                Split::Test => "test",
            }),
        )?;
        Ok(d)
    }
}

/// Writer for new datasets, e.g. to import experimental images.
#[pyclass(name = "DatasetWriter")]
pub struct PyDatasetWriter {
    inner: Option<dataset::DatasetWriter>,
}

#[pymethods]
impl PyDatasetWriter {
    #[new]
    #[pyo3(signature = (root, config_digest=""))]
    fn new(root: PathBuf, config_digest: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Some(dataset::DatasetWriter::create(root, config_digest).py()?),
        })
    }

    #[pyo3(signature = (id, img700, img850, gt_seg, gt_so2, split=None, snr_db=None, provenance="experimental-import", seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn write_sample(
        &mut self,
        id: String,
        img700: Vec<Vec<f64>>,
        img850: Vec<Vec<f64>>,
        gt_seg: Vec<Vec<f64>>,
        gt_so2: Vec<Vec<f64>>,
        split: Option<&str>,
        snr_db: Option<f64>,
        provenance: &str,
        seed: u64,
    ) -> PyResult<()> {
        let provenance = match provenance {
            "simulated" => Provenance::Simulated,
            "experimental-import" => Provenance::ExperimentalImport,
            p => return Err(PyValueError::new_err(format!("unknown provenance {p:?}"))),
        };
        let record = SampleRecord {
            id,
            img700: to_f32(&grid_from_rows(img700)?),
            img850: to_f32(&grid_from_rows(img850)?),
            gt_seg: to_f32(&grid_from_rows(gt_seg)?),
            gt_so2: to_f32(&grid_from_rows(gt_so2)?),
            snr: snr_db.map_or(SnrLevel::Clean, SnrLevel::Db),
            provenance,
            seed,
            augmentation: None,
        };
        let split = parse_split(split)?;
        self.writer()?.write_sample(&record, split).py()
    }

    /// Writes the manifest. The writer cannot be used afterwards.
    fn commit(&mut self) -> PyResult<PyDataset> {
        let w = self
            .inner
            .take()
            .ok_or_else(|| PyValueError::new_err("writer already committed"))?;
        Ok(PyDataset {
            inner: w.commit().py()?,
        })
    }
}

impl PyDatasetWriter {
    fn writer(&mut self) -> PyResult<&mut dataset::DatasetWriter> {
        self.inner
            .as_mut()
            .ok_or_else(|| PyValueError::new_err("writer already committed"))
    }
}

/// Writes `pred_dir/<id>.f32x2` (segmentation probability, intermediate sO₂).
#[pyfunction]
fn write_prediction(
    pred_dir: PathBuf,
    id: &str,
    seg_prob: Vec<Vec<f64>>,
    so2: Vec<Vec<f64>>,
) -> PyResult<()> {
    let pred = dataset::Prediction {
        seg_prob: to_f32(&grid_from_rows(seg_prob)?),
        so2_intermediate: to_f32(&grid_from_rows(so2)?),
    };
    dataset::write_prediction(&pred_dir, id, &pred).py()
}

#[pyfunction]
fn read_prediction(pred_dir: PathBuf, id: &str) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let p = dataset::read_prediction(&pred_dir, id).py()?;
    Ok((
        grid_to_rows(&to_f64(&p.seg_prob)),
        grid_to_rows(&to_f64(&p.so2_intermediate)),
    ))
}

#[pyfunction]
fn list_predictions(pred_dir: PathBuf) -> PyResult<Vec<String>> {
    dataset::list_predictions(&pred_dir).py()
}

/// Scores a prediction directory against a dataset; returns the report CSV.
#[pyfunction]
#[pyo3(signature = (dataset_root, pred_dir, split=None, seg_loss="auto"))]
fn evaluate(
    dataset_root: PathBuf,
    pred_dir: PathBuf,
    split: Option<&str>,
    seg_loss: &str,
) -> PyResult<String> {
    let kind = match seg_loss {
        "auto" => SegLossArg::Auto,
        "dice" => SegLossArg::Dice,
        "mse" => SegLossArg::Mse,
        k => {
            return Err(PyValueError::new_err(format!(
                "unknown segmentation loss {k:?}"
            )))
        }
    };
    let ds = dataset::Dataset::open(dataset_root).py()?;
    let pred_dir = dataset::resolve_pred_dir(&pred_dir);
    Ok(
        core_cli::evaluate(&ds, &pred_dir, parse_split(split)?, kind)
            .py()?
            .to_csv(),
    )
}

/// Registers every class and function on `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyPhantom>()?;
    m.add_class::<PyEnergyMap>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyDatasetWriter>()?;
    m.add_function(wrap_pyfunction!(sample_hg, m)?)?;
    m.add_function(wrap_pyfunction!(clean_pair, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_pair, m)?)?;
    m.add_function(wrap_pyfunction!(nnls2, m)?)?;
    m.add_function(wrap_pyfunction!(so2_from_conc, m)?)?;
    m.add_function(wrap_pyfunction!(lu_map, m)?)?;
    m.add_function(wrap_pyfunction!(binarize, m)?)?;
    m.add_function(wrap_pyfunction!(dice_loss, m)?)?;
    m.add_function(wrap_pyfunction!(mse_in_mask, m)?)?;
    m.add_function(wrap_pyfunction!(plain_mse_loss, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_loss, m)?)?;
    m.add_function(wrap_pyfunction!(final_so2, m)?)?;
    m.add_function(wrap_pyfunction!(seg_stats, m)?)?;
    m.add_function(wrap_pyfunction!(write_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(read_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(list_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("FORMAT_VERSION", dataset::FORMAT_VERSION)?;
    Ok(())
}

#[pymodule]
fn spa_oximetry(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
