//! `spa` command-line entry point.
//!
//! Every command writes `run.log` into its output directory with the fully
//! resolved configuration. Progress and timing go to stderr only, so output
//! directories are byte-identical across runs with the same inputs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use crate::chromophores::ChromophoreSpectrum;
use crate::dataset::{
    self, AugmentConfig, Dataset, DatasetWriter, Prediction, Provenance, SampleRecord, Split,
};
use crate::error::{Error, Result};
use crate::grid::{Grid2, Image};
use crate::kv;
use crate::mc::{self, BeamSpec, TransportConfig};
use crate::metrics::{self, EvalReport, SegLossKind};
use crate::phantom::{self, PhantomConfig};
use crate::rng::derive_seed;
use crate::spa_image::{self, SnrLevel, SpaImage, SpaPair};
use crate::unmix::{self, UnmixMatrix};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const RUN_LOG: &str = "run.log";

#[derive(Debug, Parser)]
#[command(
    name = "spa",
    version,
    about = "Spectroscopic photoacoustic oximetry toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate phantoms and write a clean dataset.
    Generate(GenerateArgs),
    /// Derive noisy datasets at one or more SNR levels.
    Noise(NoiseArgs),
    /// Linear-unmixing baseline; writes prediction blobs.
    Unmix(UnmixArgs),
    /// Score prediction blobs against a dataset.
    Eval(EvalArgs),
    /// Dump samples (and optionally predictions) as PGM and raw f32.
    Export(ExportArgs),
    /// Augment the training split with randomly transformed copies.
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Flat key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Photon packets per wavelength.
    #[arg(long)]
    pub photons: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Absorption spectrum CSV; defaults to the bundled hemoglobin table.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Also write each absorbed-energy volume as an MCVOL dump.
    #[arg(long)]
    pub dump_volumes: bool,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    pub dataset: PathBuf,
    /// Comma-separated SNR levels in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub snr: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::All => None,
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
        }
    }
}

#[derive(Debug, Args)]
pub struct UnmixArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Restrict unmixing to the vessels segmented in these predictions
    /// (thresholded at 0.5) instead of the ground truth.
    #[arg(long)]
    pub mask_from: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SegLossArg {
    /// Dice for simulated samples, MSE for imported experimental samples.
    Auto,
    Dice,
    Mse,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    /// Prediction directory (or its parent containing `pred/`).
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = SegLossArg::Auto)]
    pub seg_loss: SegLossArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sample ids to export; all when omitted.
    #[arg(long = "id")]
    pub ids: Vec<String>,
    /// Also export these predictions (thresholded segmentation and final sO₂).
    #[arg(long)]
    pub pred: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub copies: usize,
    #[arg(long, default_value_t = 15.0)]
    pub max_rotation_deg: f64,
    #[arg(long, default_value_t = 10)]
    pub max_shift_px: i32,
    #[arg(long, default_value_t = 0.5)]
    pub flip_probability: f64,
}

/// Exit code for an error: 2 for configuration problems, 3 for data problems.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_DATA
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Noise(a) => cmd_noise(&a),
        Command::Unmix(a) => cmd_unmix(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Export(a) => cmd_export(&a),
        Command::Augment(a) => cmd_augment(&a),
    }
}

// ---------------------------------------------------------------- helpers

fn read_kv(path: &Option<PathBuf>) -> Result<Vec<(String, String)>> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    Ok(kv::parse(&text)?.into_iter().collect())
}

fn reject_unknown(keys: &[(String, String)], known: &[&str]) -> Result<()> {
    for (k, _) in keys {
        if !known.contains(&k.as_str()) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
    }
    Ok(())
}

fn load_spectrum(path: &Option<PathBuf>) -> Result<(ChromophoreSpectrum, String)> {
    match path {
        None => Ok((ChromophoreSpectrum::bundled(), "bundled".into())),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read spectrum {}: {e}", p.display())))?;
            let s = ChromophoreSpectrum::parse(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Ok((s, p.display().to_string()))
        }
    }
}

fn write_run_log(out: &Path, command: &str, resolved: &str) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(RUN_LOG);
    let text = format!("command = {command}\n{resolved}");
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn to_f32(img: &Image) -> Grid2<f32> {
    img.map(|&v| v as f32)
}

fn record_pair(record: &SampleRecord) -> SpaPair {
    SpaPair {
        img700: SpaImage {
            pixels: record.img700_f64(),
            wavelength_nm: 700,
        },
        img850: SpaImage {
            pixels: record.img850_f64(),
            wavelength_nm: 850,
        },
        snr: record.snr,
        seed: record.seed,
    }
}

fn fmt_list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------- generate

/// Fully resolved settings of `generate`.
#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub phantom: PhantomConfig,
    pub transport: TransportConfig,
    pub beam: BeamSpec,
    pub samples: usize,
    pub seed: u64,
    pub spectrum_file: Option<PathBuf>,
}

impl GenerateConfig {
    pub fn resolve(args: &GenerateArgs) -> Result<Self> {
        let mut cfg = GenerateConfig {
            phantom: PhantomConfig::default(),
            transport: TransportConfig::default(),
            beam: BeamSpec::default(),
            samples: 10,
            seed: 0,
            spectrum_file: None,
        };
        for (k, v) in read_kv(&args.config)? {
            match k.as_str() {
                "samples" => cfg.samples = kv::parse_value(&k, &v)?,
                "seed" => cfg.seed = kv::parse_value(&k, &v)?,
                "spectrum_file" => cfg.spectrum_file = Some(PathBuf::from(&v)),
                _ => {
                    let known = cfg.phantom.set_key(&k, &v)?
                        || cfg.transport.set_key(&k, &v)?
                        || cfg.beam.set_key(&k, &v)?;
                    if !known {
                        return Err(Error::Config(format!("unknown config key {k:?}")));
                    }
                }
            }
        }
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(p) = args.photons {
            cfg.transport.n_photons = p;
        }
        if let Some(n) = args.samples {
            cfg.samples = n;
        }
        if args.spectrum.is_some() {
            cfg.spectrum_file = args.spectrum.clone();
        }
        cfg.phantom.validate()?;
        cfg.transport.validate()?;
        cfg.beam.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` text of every setting.
    pub fn to_text(&self) -> String {
        let p = &self.phantom;
        let mut s = String::new();
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(
            s,
            "spectrum_file = {}",
            self.spectrum_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "bundled".into())
        );
        let _ = writeln!(s, "volume_size_mm = {}", fmt_list(&p.volume_size_mm));
        let _ = writeln!(s, "grid_dims = {}", fmt_list(&p.grid_dims));
        let _ = writeln!(
            s,
            "layer_thicknesses_mm = {}",
            fmt_list(&p.layer_thicknesses_mm)
        );
        let _ = writeln!(s, "n_cylinders_min = {}", p.n_cylinders.0);
        let _ = writeln!(s, "n_cylinders_max = {}", p.n_cylinders.1);
        let _ = writeln!(s, "radius_min_mm = {}", p.radius_range_mm.0);
        let _ = writeln!(s, "radius_max_mm = {}", p.radius_range_mm.1);
        let _ = writeln!(s, "so2_min = {}", p.so2_range.0);
        let _ = writeln!(s, "so2_max = {}", p.so2_range.1);
        let _ = writeln!(s, "mask_rows = {}", p.mask_rows);
        let _ = writeln!(s, "wavelengths_nm = {}", fmt_list(&p.wavelengths_nm));
        for (name, layer) in [
            ("epidermis", &p.layers.epidermis),
            ("dermis", &p.layers.dermis),
            ("breast", &p.layers.breast),
        ] {
            for (w, o) in layer {
                let _ = writeln!(
                    s,
                    "# {name} {w} nm: mu_a {} mu_s {} g {}",
                    o.mu_a, o.mu_s, o.g
                );
            }
        }
        let _ = writeln!(s, "photons = {}", self.transport.n_photons);
        let _ = writeln!(
            s,
            "roulette_threshold = {}",
            self.transport.roulette_threshold
        );
        let _ = writeln!(
            s,
            "roulette_survival = {}",
            self.transport.roulette_survival
        );
        let _ = writeln!(s, "beam_diameter_mm = {}", self.beam.diameter_mm);
        if let Some(c) = self.beam.center_mm {
            let _ = writeln!(s, "beam_center_mm = {}", fmt_list(&c));
        }
        s
    }
}

/// Simulates one sample: phantom, transport at both wavelengths, clean pair.
pub fn simulate_sample(
    cfg: &GenerateConfig,
    spectrum: &ChromophoreSpectrum,
    index: usize,
) -> Result<(SampleRecord, [mc::AbsorbedEnergyMap; 2])> {
    let sample_seed = derive_seed(cfg.seed, index as u64);
    let phantom_cfg = PhantomConfig {
        seed: derive_seed(sample_seed, 1),
        ..cfg.phantom.clone()
    };
    let volume = phantom::build_volume(&phantom_cfg, spectrum)?;
    let run = |wl: u32| {
        let tc = TransportConfig {
            seed: derive_seed(sample_seed, wl as u64),
            ..cfg.transport
        };
        mc::simulate(&volume, wl, &cfg.beam, &tc)
    };
    let map700 = run(700)?;
    let map850 = run(850)?;
    let pair = spa_image::clean_pair(&map700, &map850, cfg.phantom.mask_rows, sample_seed)?;
    let gt_seg = volume
        .vessel_mask_slice()
        .map(|&b| if b { 1.0f32 } else { 0.0 });
    let record = SampleRecord {
        id: format!("sim_{index:05}"),
        img700: to_f32(&pair.img700.pixels),
        img850: to_f32(&pair.img850.pixels),
        gt_seg,
        gt_so2: to_f32(&volume.gt_so2_slice()),
        snr: SnrLevel::Clean,
        provenance: Provenance::Simulated,
        seed: sample_seed,
        augmentation: None,
    };
    Ok((record, [map700, map850]))
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let cfg = GenerateConfig::resolve(args)?;
    let (spectrum, _) = load_spectrum(&cfg.spectrum_file)?;
    if !cfg.phantom.wavelengths_nm.contains(&700) || !cfg.phantom.wavelengths_nm.contains(&850) {
        return Err(Error::Config(
            "generate needs the 700 and 850 nm wavelengths".into(),
        ));
    }
    let text = cfg.to_text();
    write_run_log(&args.out, "generate", &text)?;
    let mut writer = DatasetWriter::create(&args.out, &dataset::config_digest(&text))?;
    let ids: Vec<String> = (0..cfg.samples).map(|i| format!("sim_{i:05}")).collect();
    let splits = dataset::split(&ids, derive_seed(cfg.seed, u64::MAX));

    let started = Instant::now();
    for i in 0..cfg.samples {
        let t = Instant::now();
        let (record, maps) = simulate_sample(&cfg, &spectrum, i)?;
        if args.dump_volumes {
            let dir = args.out.join("volumes");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (map, wl) in maps.iter().zip([700, 850]) {
                let path = dir.join(format!("{}_{wl}.mcvol", record.id));
                let mut f = std::io::BufWriter::new(
                    fs::File::create(&path).map_err(|e| Error::io(&path, e))?,
                );
                mc::write_mcvol(map, &mut f).map_err(|e| Error::io(&path, e))?;
            }
        }
        let split = splits.split_of(&record.id);
        writer.write_sample(&record, split)?;
        info!(
            "sample {}/{} {} in {:.1?} (total {:.1?})",
            i + 1,
            cfg.samples,
            record.id,
            t.elapsed(),
            started.elapsed()
        );
    }
    writer.commit()?;
    Ok(())
}

// ---------------------------------------------------------------- noise

fn snr_dir_name(snr: f64) -> String {
    format!("snr_{snr}dB")
}

pub fn cmd_noise(args: &NoiseArgs) -> Result<()> {
    reject_unknown(&read_kv(&args.config)?, &[])?;
    let source = Dataset::open(&args.dataset)?;
    if args.snr.is_empty() {
        warn!("no SNR levels given; nothing to do");
        return Ok(());
    }
    if let Some(bad) = args.snr.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("invalid SNR level {bad}")));
    }
    let mut text = String::new();
    let _ = writeln!(text, "dataset = {}", args.dataset.display());
    let _ = writeln!(text, "source_digest = {}", source.manifest().config_digest);
    let _ = writeln!(text, "snr_db = {}", fmt_list(&args.snr));
    let _ = writeln!(text, "seed = {}", args.seed);
    write_run_log(&args.out, "noise", &text)?;

    let records: Vec<SampleRecord> = source
        .ids()
        .iter()
        .map(|id| source.read_sample(id))
        .collect::<Result<_>>()?;
    for r in &records {
        if r.snr != SnrLevel::Clean {
            return Err(Error::validation(format!(
                "sample {} is already noisy",
                r.id
            )));
        }
    }

    for &snr in &args.snr {
        let dir = args.out.join(snr_dir_name(snr));
        let level_text = format!("{text}level = {snr}\n");
        let mut writer = DatasetWriter::create(&dir, &dataset::config_digest(&level_text))?;
        let level_seed = derive_seed(args.seed, snr.to_bits());
        let noisy: Vec<SampleRecord> = records
            .par_iter()
            .map(|r| {
                let noisy = spa_image::add_pair_noise(
                    &record_pair(r),
                    &r.gt_mask(),
                    snr,
                    derive_seed(level_seed, r.seed),
                )
                .map_err(|e| Error::validation(format!("sample {}: {e}", r.id)))?;
                Ok(SampleRecord {
                    img700: to_f32(&noisy.img700.pixels),
                    img850: to_f32(&noisy.img850.pixels),
                    snr: SnrLevel::Db(snr),
                    ..r.clone()
                })
            })
            .collect::<Result<_>>()?;
        for r in &noisy {
            writer.write_sample(r, source.entry(&r.id)?.split)?;
        }
        writer.commit()?;
        info!(
            "wrote {} samples at {snr} dB to {}",
            noisy.len(),
            dir.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- unmix

pub fn cmd_unmix(args: &UnmixArgs) -> Result<()> {
    reject_unknown(&read_kv(&args.config)?, &[])?;
    let (spectrum, spectrum_name) = load_spectrum(&args.spectrum)?;
    let matrix = UnmixMatrix::from_spectrum(&spectrum, [700.0, 850.0])
        .map_err(|e| Error::Config(e.to_string()))?;
    let source = Dataset::open(&args.dataset)?;
    let mask_dir = args.mask_from.as_deref().map(dataset::resolve_pred_dir);

    let mut text = String::new();
    let _ = writeln!(text, "dataset = {}", args.dataset.display());
    let _ = writeln!(text, "spectrum = {spectrum_name}");
    let m = matrix.entries();
    let _ = writeln!(
        text,
        "matrix = {},{},{},{}",
        m[0][0], m[0][1], m[1][0], m[1][1]
    );
    let _ = writeln!(
        text,
        "mask_source = {}",
        mask_dir
            .as_ref()
            .map(|d| d.display().to_string())
            .unwrap_or_else(|| "gt".into())
    );
    let _ = writeln!(text, "split = {:?}", args.split);
    write_run_log(&args.out, "unmix", &text)?;

    let pred_dir = args.out.join(dataset::PRED_DIR);
    let mut report = String::from("sample_id,masked_pixels,invalid_pixels\n");
    for id in source.ids_in(args.split.split()) {
        let record = source.read_sample(&id)?;
        let mask = match &mask_dir {
            None => record.gt_mask(),
            Some(dir) => {
                let p = dataset::read_prediction(dir, &id)?;
                metrics::binarize(&p.seg_prob.map(|&v| v as f64), metrics::DEFAULT_THRESHOLD)
            }
        };
        let (so2, lu) = unmix::lu_map(&record_pair(&record), &matrix, &mask)?;
        let _ = writeln!(report, "{id},{},{}", lu.masked_pixels, lu.invalid_pixels);
        dataset::write_prediction(
            &pred_dir,
            &id,
            &Prediction {
                seg_prob: mask.map(|&b| if b { 1.0 } else { 0.0 }),
                so2_intermediate: to_f32(&so2),
            },
        )?;
    }
    let path = args.out.join("unmix_report.csv");
    fs::write(&path, report).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- eval

/// Scores every prediction against `ds`, restricted to `split`.
pub fn evaluate(
    ds: &Dataset,
    pred_dir: &Path,
    split: Option<Split>,
    seg_loss: SegLossArg,
) -> Result<EvalReport> {
    let expected: BTreeSet<String> = ds.ids_in(split).into_iter().collect();
    let found: BTreeSet<String> = dataset::list_predictions(pred_dir)?.into_iter().collect();
    if expected != found {
        let missing: Vec<&String> = expected.difference(&found).collect();
        let extra: Vec<&String> = found.difference(&expected).collect();
        return Err(Error::validation(format!(
            "prediction ids do not match dataset: missing predictions {missing:?}, unexpected predictions {extra:?}"
        )));
    }
    let ids: Vec<String> = expected.into_iter().collect();
    let samples = ids
        .par_iter()
        .map(|id| {
            let record = ds.read_sample(id)?;
            let pred = dataset::read_prediction(pred_dir, id)?;
            if pred.seg_prob.dims() != record.dims() {
                return Err(Error::validation(format!(
                    "{id}: prediction size differs from sample"
                )));
            }
            let kind = match (seg_loss, record.provenance) {
                (SegLossArg::Dice, _) => SegLossKind::Dice,
                (SegLossArg::Mse, _) => SegLossKind::Mse,
                (SegLossArg::Auto, Provenance::Simulated) => SegLossKind::Dice,
                (SegLossArg::Auto, Provenance::ExperimentalImport) => SegLossKind::Mse,
            };
            metrics::evaluate_sample(
                id,
                &pred.seg_prob.map(|&v| v as f64),
                &pred.so2_intermediate.map(|&v| v as f64),
                &record.gt_mask(),
                &record.gt_so2_f64(),
                kind,
            )
            .map_err(|e| Error::validation(format!("{id}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(samples))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    reject_unknown(&read_kv(&args.config)?, &[])?;
    let ds = Dataset::open(&args.dataset)?;
    let pred_dir = dataset::resolve_pred_dir(&args.predictions);
    let mut text = String::new();
    let _ = writeln!(text, "dataset = {}", args.dataset.display());
    let _ = writeln!(text, "predictions = {}", pred_dir.display());
    let _ = writeln!(text, "split = {:?}", args.split);
    let _ = writeln!(text, "seg_loss = {:?}", args.seg_loss);
    write_run_log(&args.out, "eval", &text)?;

    let report = evaluate(&ds, &pred_dir, args.split.split(), args.seg_loss)?;
    let path = args.out.join("eval.csv");
    fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
    for (name, ms) in report.aggregates() {
        println!("{name:>20}: {:.6} ± {:.6}", ms.mean, ms.std);
    }
    Ok(())
}

// ---------------------------------------------------------------- export

fn export_image(dir: &Path, stem: &str, img: &Image) -> Result<()> {
    let pgm = dir.join(format!("{stem}.pgm"));
    let mut f = fs::File::create(&pgm).map_err(|e| Error::io(&pgm, e))?;
    spa_image::write_pgm(img, &mut f).map_err(|e| Error::io(&pgm, e))?;
    let raw = dir.join(format!("{stem}.f32"));
    let mut f = fs::File::create(&raw).map_err(|e| Error::io(&raw, e))?;
    spa_image::write_raw_f32(img, &mut f).map_err(|e| Error::io(&raw, e))
}

pub fn cmd_export(args: &ExportArgs) -> Result<()> {
    let ds = Dataset::open(&args.dataset)?;
    let ids = if args.ids.is_empty() {
        ds.ids()
    } else {
        args.ids.clone()
    };
    let pred_dir = args.pred.as_deref().map(dataset::resolve_pred_dir);
    let mut text = String::new();
    let _ = writeln!(text, "dataset = {}", args.dataset.display());
    let _ = writeln!(text, "ids = {}", ids.join(","));
    write_run_log(&args.out, "export", &text)?;
    for id in &ids {
        let r = ds.read_sample(id)?;
        export_image(&args.out, &format!("{id}_img700"), &r.img700_f64())?;
        export_image(&args.out, &format!("{id}_img850"), &r.img850_f64())?;
        export_image(
            &args.out,
            &format!("{id}_gt_seg"),
            &r.gt_seg.map(|&v| v as f64),
        )?;
        export_image(&args.out, &format!("{id}_gt_so2"), &r.gt_so2_f64())?;
        if let Some(dir) = &pred_dir {
            let p = dataset::read_prediction(dir, id)?;
            let seg = metrics::binarize(&p.seg_prob.map(|&v| v as f64), metrics::DEFAULT_THRESHOLD);
            let so2 = metrics::final_so2(&seg, &p.so2_intermediate.map(|&v| v as f64))?;
            export_image(&args.out, &format!("{id}_pred_seg"), &seg.to_image())?;
            export_image(&args.out, &format!("{id}_pred_so2"), &so2)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- augment

pub fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    let config = AugmentConfig {
        max_rotation_deg: args.max_rotation_deg,
        max_shift_px: args.max_shift_px,
        flip_probability: args.flip_probability,
    };
    if !(config.max_rotation_deg >= 0.0)
        || config.max_shift_px < 0
        || !(0.0..=1.0).contains(&config.flip_probability)
    {
        return Err(Error::Config("invalid augmentation ranges".into()));
    }
    let source = Dataset::open(&args.dataset)?;
    let mut text = String::new();
    let _ = writeln!(text, "dataset = {}", args.dataset.display());
    let _ = writeln!(text, "copies = {}", args.copies);
    let _ = writeln!(text, "seed = {}", args.seed);
    let _ = writeln!(text, "max_rotation_deg = {}", config.max_rotation_deg);
    let _ = writeln!(text, "max_shift_px = {}", config.max_shift_px);
    let _ = writeln!(text, "flip_probability = {}", config.flip_probability);
    write_run_log(&args.out, "augment", &text)?;
    let mut writer = DatasetWriter::create(&args.out, &dataset::config_digest(&text))?;
    for entry in source.entries() {
        let record = source.read_sample(&entry.id)?;
        writer.write_sample(&record, entry.split)?;
        if entry.split == Some(Split::Train) {
            for copy in dataset::augment(
                &record,
                args.copies,
                derive_seed(args.seed, record.seed),
                &config,
            ) {
                writer.write_sample(&copy, Some(Split::Train))?;
            }
        }
    }
    writer.commit()?;
    Ok(())
}
