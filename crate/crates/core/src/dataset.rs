//! On-disk dataset container, deterministic splits and augmentation.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.json          format version, config digest, one entry per sample
//! samples/<id>.f32x4     img700, img850, gt_seg, gt_so2
//! ```
//!
//! and of a prediction directory:
//!
//! ```text
//! pred/<id>.f32x2        seg_prob, so2_intermediate
//! ```
//!
//! Every blob is `magic[4] | version u32 | width u32 | height u32 | count u32 |
//! count·width·height f32 | crc32 u32`, all little endian, arrays row-major.
//! The CRC covers every preceding byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Grid2, Image, Mask};
use crate::rng;
use crate::spa_image::SnrLevel;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_DIR: &str = "samples";
pub const PRED_DIR: &str = "pred";
pub const SAMPLE_EXT: &str = "f32x4";
pub const PRED_EXT: &str = "f32x2";
const SAMPLE_MAGIC: [u8; 4] = *b"SPA4";
const PRED_MAGIC: [u8; 4] = *b"SPA2";
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Simulated,
    ExperimentalImport,
}

impl Serialize for SnrLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SnrLevel::Clean => s.serialize_str("clean"),
            SnrLevel::Db(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for SnrLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Db(f64),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Db(v) => Ok(SnrLevel::Db(v)),
            Repr::Tag(t) if t == "clean" => Ok(SnrLevel::Clean),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!("unknown SNR level {t:?}"))),
        }
    }
}

/// Transform applied to produce an augmented copy: horizontal flip, then
/// rotation about the image centre, then an integer shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    pub shift_rows: i32,
    pub shift_cols: i32,
    pub flip: bool,
}

impl AugmentParams {
    pub const IDENTITY: Self = Self {
        rotation_deg: 0.0,
        shift_rows: 0,
        shift_cols: 0,
        flip: false,
    };
}

/// One dataset sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub img700: Grid2<f32>,
    pub img850: Grid2<f32>,
    pub gt_seg: Grid2<f32>,
    pub gt_so2: Grid2<f32>,
    pub snr: SnrLevel,
    pub provenance: Provenance,
    pub seed: u64,
    pub augmentation: Option<AugmentParams>,
}

impl SampleRecord {
    pub fn dims(&self) -> (usize, usize) {
        self.img700.dims()
    }

    pub fn validate(&self) -> Result<()> {
        validate_id(&self.id)?;
        let d = self.img700.dims();
        for (name, a) in [
            ("img850", &self.img850),
            ("gt_seg", &self.gt_seg),
            ("gt_so2", &self.gt_so2),
        ] {
            if a.dims() != d {
                return Err(Error::validation(format!(
                    "{}: {name} dimensions differ from img700",
                    self.id
                )));
            }
        }
        for (&s, &o) in self.gt_seg.as_slice().iter().zip(self.gt_so2.as_slice()) {
            if s != 0.0 && s != 1.0 {
                return Err(Error::validation(format!(
                    "{}: gt_seg must be binary",
                    self.id
                )));
            }
            if !(0.0..=1.0).contains(&o) {
                return Err(Error::validation(format!(
                    "{}: gt_so2 outside [0, 1]",
                    self.id
                )));
            }
            if s == 0.0 && o != 0.0 {
                return Err(Error::validation(format!(
                    "{}: gt_so2 nonzero outside gt_seg",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn img700_f64(&self) -> Image {
        self.img700.map(|&v| v as f64)
    }

    pub fn img850_f64(&self) -> Image {
        self.img850.map(|&v| v as f64)
    }

    pub fn gt_mask(&self) -> Mask {
        self.gt_seg.map(|&v| v > 0.5)
    }

    pub fn gt_so2_f64(&self) -> Image {
        self.gt_so2.map(|&v| v as f64)
    }
}

fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::validation(format!("invalid sample id {id:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub width: usize,
    pub height: usize,
    pub snr_db: SnrLevel,
    pub provenance: Provenance,
    pub seed: u64,
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<AugmentParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// SHA-256 of the resolved generation config.
    pub config_digest: String,
    pub samples: Vec<ManifestEntry>,
}

pub fn config_digest(resolved_config: &str) -> String {
    hex::encode(Sha256::digest(resolved_config.as_bytes()))
}

// ---------------------------------------------------------------- blobs

fn encode_blob(magic: [u8; 4], width: usize, height: usize, arrays: &[&Grid2<f32>]) -> Vec<u8> {
    let n = width * height;
    let mut buf = Vec::with_capacity(HEADER_LEN + arrays.len() * n * 4 + 4);
    buf.extend_from_slice(&magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    buf.extend_from_slice(&(height as u32).to_le_bytes());
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        for v in a.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn decode_blob(path: &Path, bytes: &[u8], magic: [u8; 4], count: usize) -> Result<Vec<Grid2<f32>>> {
    let format = |m: String| Error::Format {
        path: path.to_path_buf(),
        message: m,
    };
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[..4] != magic {
        return Err(format("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (width, height, stored_count) = (word(8) as usize, word(12) as usize, word(16) as usize);
    if stored_count != count {
        return Err(format(format!(
            "expected {count} arrays, header says {stored_count}"
        )));
    }
    let n = width * height;
    let expected = HEADER_LEN + count * n * 4 + 4;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() > expected {
        return Err(format(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let stored = word(expected - 4);
    let computed = crc32fast::hash(&bytes[..expected - 4]);
    if stored != computed {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            stored,
            computed,
        });
    }
    let body = &bytes[HEADER_LEN..expected - 4];
    body.chunks_exact(n * 4)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Grid2::from_vec(width, height, data)
        })
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingEntry(format!("{} does not exist", path.display()))
        } else {
            Error::io(path, e)
        }
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- store

/// Accumulates samples into a new dataset directory. Nothing is visible to
/// readers until [`DatasetWriter::commit`] writes the manifest.
#[derive(Debug)]
pub struct DatasetWriter {
    root: PathBuf,
    config_digest: String,
    entries: BTreeMap<String, ManifestEntry>,
}

impl DatasetWriter {
    pub fn create(root: impl AsRef<Path>, config_digest: &str) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        create_dir(&root.join(SAMPLES_DIR))?;
        Ok(Self {
            root,
            config_digest: config_digest.to_string(),
            entries: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_sample(&mut self, record: &SampleRecord, split: Option<Split>) -> Result<()> {
        record.validate()?;
        if self.entries.contains_key(&record.id) {
            return Err(Error::validation(format!(
                "duplicate sample id {:?}",
                record.id
            )));
        }
        let (width, height) = record.dims();
        let file = format!("{SAMPLES_DIR}/{}.{SAMPLE_EXT}", record.id);
        let bytes = encode_blob(
            SAMPLE_MAGIC,
            width,
            height,
            &[
                &record.img700,
                &record.img850,
                &record.gt_seg,
                &record.gt_so2,
            ],
        );
        write_file(&self.root.join(&file), &bytes)?;
        self.entries.insert(
            record.id.clone(),
            ManifestEntry {
                id: record.id.clone(),
                file,
                width,
                height,
                snr_db: record.snr,
                provenance: record.provenance,
                seed: record.seed,
                split,
                augmentation: record.augmentation,
            },
        );
        Ok(())
    }

    pub fn set_split(&mut self, id: &str, split: Split) -> Result<()> {
        let e = self
            .entries
            .get_mut(id)
            .ok_or_else(|| Error::MissingEntry(format!("sample {id:?} not written")))?;
        e.split = Some(split);
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Writes `manifest.json` (entries sorted by id) and returns the readable dataset.
    pub fn commit(self) -> Result<Dataset> {
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config_digest: self.config_digest,
            samples: self.entries.into_values().collect(),
        };
        let path = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        Ok(Dataset {
            root: self.root,
            manifest,
        })
    }
}

/// A committed dataset opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let bytes = read_file(&path)?;
        let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                path,
                found: manifest.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let mut seen = BTreeSet::new();
        for e in &manifest.samples {
            validate_id(&e.id)?;
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Format {
                    path: path.clone(),
                    message: format!("duplicate sample id {:?}", e.id),
                });
            }
        }
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.manifest.samples
    }

    pub fn entry(&self, id: &str) -> Result<&ManifestEntry> {
        self.manifest
            .samples
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::MissingEntry(format!("sample {id:?} not in manifest")))
    }

    pub fn ids(&self) -> Vec<String> {
        self.manifest.samples.iter().map(|e| e.id.clone()).collect()
    }

    pub fn ids_in(&self, split: Option<Split>) -> Vec<String> {
        self.manifest
            .samples
            .iter()
            .filter(|e| split.is_none() || e.split == split)
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn read_sample(&self, id: &str) -> Result<SampleRecord> {
        let entry = self.entry(id)?;
        let path = self.root.join(&entry.file);
        let bytes = read_file(&path)?;
        let mut arrays = decode_blob(&path, &bytes, SAMPLE_MAGIC, 4)?.into_iter();
        let mut next = || arrays.next().expect("four arrays decoded");
        let record = SampleRecord {
            id: entry.id.clone(),
            img700: next(),
            img850: next(),
            gt_seg: next(),
            gt_so2: next(),
            snr: entry.snr_db,
            provenance: entry.provenance,
            seed: entry.seed,
            augmentation: entry.augmentation,
        };
        if record.dims() != (entry.width, entry.height) {
            return Err(Error::Format {
                path,
                message: "blob dimensions disagree with manifest".into(),
            });
        }
        Ok(record)
    }
}

// ---------------------------------------------------------------- predictions

/// Raw model (or baseline) output for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub seg_prob: Grid2<f32>,
    pub so2_intermediate: Grid2<f32>,
}

/// Accepts either a prediction directory or its parent containing `pred/`.
pub fn resolve_pred_dir(dir: &Path) -> PathBuf {
    let nested = dir.join(PRED_DIR);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

pub fn write_prediction(pred_dir: &Path, id: &str, pred: &Prediction) -> Result<()> {
    validate_id(id)?;
    if !pred.seg_prob.same_dims(&pred.so2_intermediate) {
        return Err(Error::validation("prediction arrays differ in size"));
    }
    create_dir(pred_dir)?;
    let (w, h) = pred.seg_prob.dims();
    let bytes = encode_blob(PRED_MAGIC, w, h, &[&pred.seg_prob, &pred.so2_intermediate]);
    write_file(&pred_dir.join(format!("{id}.{PRED_EXT}")), &bytes)
}

pub fn read_prediction(pred_dir: &Path, id: &str) -> Result<Prediction> {
    let path = pred_dir.join(format!("{id}.{PRED_EXT}"));
    let bytes = read_file(&path)?;
    let mut arrays = decode_blob(&path, &bytes, PRED_MAGIC, 2)?.into_iter();
    Ok(Prediction {
        seg_prob: arrays.next().expect("two arrays"),
        so2_intermediate: arrays.next().expect("two arrays"),
    })
}

/// Sample ids with a prediction blob in `pred_dir`, sorted.
pub fn list_predictions(pred_dir: &Path) -> Result<Vec<String>> {
    let rd = fs::read_dir(pred_dir).map_err(|e| Error::io(pred_dir, e))?;
    let mut ids = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(pred_dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some(PRED_EXT) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

// ---------------------------------------------------------------- splits

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn split_of(&self, id: &str) -> Option<Split> {
        if self.train.iter().any(|x| x == id) {
            Some(Split::Train)
        } else if self.val.iter().any(|x| x == id) {
            Some(Split::Val)
        } else if self.test.iter().any(|x| x == id) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

/// 80/10/10 split after sorting and a seeded shuffle: `floor(0.8n)` train,
/// `floor(0.1n)` validation, the remainder test.
pub fn split(ids: &[String], seed: u64) -> SplitAssignment {
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut rng = rng::stream(seed, 0);
    sorted.shuffle(&mut rng);
    let n = sorted.len();
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let test = sorted.split_off(n_train + n_val);
    let val = sorted.split_off(n_train);
    SplitAssignment {
        train: sorted,
        val,
        test,
    }
}

// ---------------------------------------------------------------- augmentation

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub max_shift_px: i32,
    pub flip_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 15.0,
            max_shift_px: 10,
            flip_probability: 0.5,
        }
    }
}

fn transform_grid(src: &Grid2<f32>, params: &AugmentParams) -> Grid2<f32> {
    let (w, h) = src.dims();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (sin, cos) = params.rotation_deg.to_radians().sin_cos();
    Grid2::from_fn(w, h, |row, col| {
        let y = (row as i64 - params.shift_rows as i64) as f64 - cy;
        let x = (col as i64 - params.shift_cols as i64) as f64 - cx;
        let sx = (cos * x + sin * y + cx).round();
        let sy = (-sin * x + cos * y + cy).round();
        if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
            return 0.0;
        }
        let (sr, mut sc) = (sy as usize, sx as usize);
        if params.flip {
            sc = w - 1 - sc;
        }
        *src.get(sr, sc)
    })
}

/// Applies the same geometric transform to all four arrays.
pub fn apply_transform(record: &SampleRecord, params: &AugmentParams, id: String) -> SampleRecord {
    SampleRecord {
        id,
        img700: transform_grid(&record.img700, params),
        img850: transform_grid(&record.img850, params),
        gt_seg: transform_grid(&record.gt_seg, params).map(|&v| if v > 0.5 { 1.0 } else { 0.0 }),
        gt_so2: transform_grid(&record.gt_so2, params),
        snr: record.snr,
        provenance: record.provenance,
        seed: record.seed,
        augmentation: Some(*params),
    }
}

/// Draws the transform of augmented copy `copy`.
pub fn augment_params(config: &AugmentConfig, seed: u64, copy: u64) -> AugmentParams {
    let mut rng = rng::stream(seed, copy);
    let r = config.max_rotation_deg;
    let s = config.max_shift_px;
    AugmentParams {
        rotation_deg: if r > 0.0 {
            rng.random_range(-r..=r)
        } else {
            0.0
        },
        shift_rows: rng.random_range(-s..=s),
        shift_cols: rng.random_range(-s..=s),
        flip: rng.random::<f64>() < config.flip_probability,
    }
}

/// `n_copies` independently transformed copies of `record`, ids `<id>_aug<k>`.
pub fn augment(
    record: &SampleRecord,
    n_copies: usize,
    seed: u64,
    config: &AugmentConfig,
) -> Vec<SampleRecord> {
    (0..n_copies)
        .map(|k| {
            let params = augment_params(config, seed, k as u64);
            apply_transform(record, &params, format!("{}_aug{k}", record.id))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: &str, w: usize, h: usize) -> SampleRecord {
        let seg = Grid2::from_fn(w, h, |r, c| {
            if r > h / 2 && c > w / 3 && c < w / 2 {
                1.0
            } else {
                0.0
            }
        });
        SampleRecord {
            id: id.into(),
            img700: Grid2::from_fn(w, h, |r, c| (r * w + c) as f32 * 0.01),
            img850: Grid2::from_fn(w, h, |r, c| ((r + c) as f32).sin()),
            gt_so2: seg.map(|&s| s * 0.625),
            gt_seg: seg,
            snr: SnrLevel::Db(30.0),
            provenance: Provenance::Simulated,
            seed: u64::MAX - 3,
            augmentation: None,
        }
    }

    #[test]
    fn split_counts() {
        let ids: Vec<String> = (0..410).map(|i| format!("s{i:04}")).collect();
        let s = split(&ids, 5);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (328, 41, 41));
        let ten: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let s = split(&ten, 5);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        assert_eq!(split(&ids, 5), split(&ids, 5));
        let all: BTreeSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(split(&[], 1), SplitAssignment::default());
    }

    #[test]
    fn split_ignores_input_order() {
        let ids: Vec<String> = (0..50).map(|i| format!("s{i:02}")).collect();
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(split(&ids, 9), split(&rev, 9));
    }

    #[test]
    fn blob_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = DatasetWriter::create(dir.path(), "d").unwrap();
        w.write_sample(&record("a", 8, 6), Some(Split::Train))
            .unwrap();
        let ds = w.commit().unwrap();
        let path = dir.path().join("samples/a.f32x4");
        let good = fs::read(&path).unwrap();

        fs::write(&path, &good[..good.len() - 1]).unwrap();
        assert!(matches!(ds.read_sample("a"), Err(Error::Truncated { .. })));

        let mut flipped = good.clone();
        flipped[HEADER_LEN + 5] ^= 0x40;
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(ds.read_sample("a"), Err(Error::Checksum { .. })));

        let mut versioned = good.clone();
        versioned[4] = 9;
        fs::write(&path, &versioned).unwrap();
        assert!(matches!(
            ds.read_sample("a"),
            Err(Error::VersionMismatch { found: 9, .. })
        ));

        fs::remove_file(&path).unwrap();
        assert!(matches!(ds.read_sample("a"), Err(Error::MissingEntry(_))));
        assert!(matches!(ds.read_sample("zzz"), Err(Error::MissingEntry(_))));
    }

    #[test]
    fn manifest_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        DatasetWriter::create(dir.path(), "d")
            .unwrap()
            .commit()
            .unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            Dataset::open(dir.path()),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn record_validation() {
        let mut r = record("a", 8, 8);
        r.gt_so2 = Grid2::filled(8, 8, 0.5);
        assert!(r.validate().is_err());
        let mut r = record("a", 8, 8);
        r.gt_seg = Grid2::filled(8, 8, 0.5);
        assert!(r.validate().is_err());
        assert!(record("../x", 8, 8).validate().is_err());
        assert!(record("ok_1", 8, 8).validate().is_ok());
    }

    #[test]
    fn flip_twice_is_identity() {
        let r = record("a", 9, 7);
        let flip = AugmentParams {
            flip: true,
            ..AugmentParams::IDENTITY
        };
        let once = apply_transform(&r, &flip, "a".into());
        assert_ne!(once.img700, r.img700);
        let twice = apply_transform(&once, &flip, "a".into());
        assert_eq!(twice.img700, r.img700);
        assert_eq!(twice.gt_seg, r.gt_seg);
        assert_eq!(twice.gt_so2, r.gt_so2);
    }

    #[test]
    fn identity_transform() {
        let r = record("a", 16, 16);
        let same = apply_transform(&r, &AugmentParams::IDENTITY, "a".into());
        assert_eq!(same.img850, r.img850);
    }

    #[test]
    fn shift_moves_pixels() {
        let r = record("a", 16, 16);
        let p = AugmentParams {
            shift_rows: 2,
            shift_cols: -3,
            ..AugmentParams::IDENTITY
        };
        let s = apply_transform(&r, &p, "a".into());
        assert_eq!(*s.img700.get(5, 4), *r.img700.get(3, 7));
        assert_eq!(*s.img700.get(0, 4), 0.0);
    }

    #[test]
    fn augmented_copies_keep_support() {
        let r = record("a", 32, 32);
        let copies = augment(&r, 4, 77, &AugmentConfig::default());
        assert_eq!(copies.len(), 4);
        for (k, c) in copies.iter().enumerate() {
            assert_eq!(c.id, format!("a_aug{k}"));
            c.validate().unwrap();
            let p = c.augmentation.unwrap();
            assert!(
                p.rotation_deg.abs() <= 15.0
                    && p.shift_rows.abs() <= 10
                    && p.shift_cols.abs() <= 10
            );
            // reproducible from the original and the recorded parameters
            assert_eq!(&apply_transform(&r, &p, c.id.clone()), c);
        }
        assert_eq!(augment(&r, 4, 77, &AugmentConfig::default()), copies);
    }
}
