//! Pools on disk, landmark sidecars, and the generated dataset layout:
//! `gen_<g>/<id>.png`, `gen_<g>/<id>.landmarks.json`, `manifest.json`, `stats.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymmetry::{asymmetry_report, AsymmetryReport};
use crate::fusion::{FaceAsset, OpType, Pool};
use crate::ga::{AttemptRecord, EvolutionResult, GaConfig, GenerationState};
use crate::geometry::{ImageRaster, LandmarkSet, Point, LANDMARK_COUNT};
use crate::scoring::{detect_landmarks, ScorerBinding, ScoringError};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATS_FILE: &str = "stats.csv";
pub const STATS_HEADER: &str =
    "generation,alpha_tenths,attempted,accepted,rejected_forgery,rejected_recognized,rejected_no_face";
pub const DEFAULT_RESOLUTION: u32 = 1024;
const SIDECAR_SUFFIX: &str = ".landmarks.json";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {msg}")]
    DecodeFailure { path: PathBuf, msg: String },
    #[error("{0}: no landmark sidecar and no detector configured")]
    MissingLandmarks(PathBuf),
    #[error("{path}: invalid sidecar: {msg}")]
    InvalidSidecar { path: PathBuf, msg: String },
    #[error("{path}: invalid manifest: {msg}")]
    InvalidManifest { path: PathBuf, msg: String },
    #[error("{0}: no images found")]
    EmptyDirectory(PathBuf),
    #[error("landmarks for {path}: {source}")]
    Detector {
        path: PathBuf,
        #[source]
        source: ScoringError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-image landmark file, stored next to the image as `<stem>.landmarks.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub points: Vec<Point>,
}

impl Sidecar {
    pub fn from_landmarks(image: impl Into<String>, l: &LandmarkSet) -> Self {
        Self {
            image: image.into(),
            width: l.width,
            height: l.height,
            points: l.points.clone(),
        }
    }

    pub fn landmarks(&self) -> LandmarkSet {
        LandmarkSet::new(self.points.clone(), self.width, self.height)
    }
}

pub fn sidecar_path(image: &Path) -> PathBuf {
    let stem = image.file_stem().unwrap_or_default().to_string_lossy();
    image.with_file_name(format!("{stem}{SIDECAR_SUFFIX}"))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::InvalidSidecar {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<(), DatasetError> {
    fs::write(path, to_json(sidecar)).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LandmarkSource {
    /// `<stem>.landmarks.json` must exist next to every image.
    Sidecar,
    /// Ignore sidecars and run the detector binding on every image.
    Detector(ScorerBinding),
}

pub fn read_image(path: &Path) -> Result<ImageRaster, DatasetError> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => DatasetError::DecodeFailure {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    })?;
    Ok(ImageRaster::from_rgb_image(img.to_rgb8()))
}

pub fn write_png(path: &Path, img: &ImageRaster) -> Result<(), DatasetError> {
    img.to_rgb_image()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => DatasetError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => DatasetError::DecodeFailure {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        })
}

/// Load one image with its landmarks, optionally resized to `resolution x resolution`.
/// The asset id is the file stem.
pub fn load_asset(
    path: &Path,
    source: &LandmarkSource,
    resolution: Option<u32>,
    pool: Pool,
) -> Result<FaceAsset, DatasetError> {
    let raster = read_image(path)?;
    let (w, h) = raster.dimensions();
    let landmarks = match source {
        LandmarkSource::Sidecar => {
            let sc_path = sidecar_path(path);
            if !sc_path.exists() {
                return Err(DatasetError::MissingLandmarks(path.to_path_buf()));
            }
            let sc = read_sidecar(&sc_path)?;
            let bad = |msg: String| DatasetError::InvalidSidecar {
                path: sc_path.clone(),
                msg,
            };
            if (sc.width, sc.height) != (w, h) {
                return Err(bad(format!("sidecar is {}x{}, image is {w}x{h}", sc.width, sc.height)));
            }
            if sc.points.len() != LANDMARK_COUNT {
                return Err(bad(format!("expected {LANDMARK_COUNT} points, got {}", sc.points.len())));
            }
            sc.landmarks()
        }
        LandmarkSource::Detector(binding) => {
            detect_landmarks(&raster, binding).map_err(|source| DatasetError::Detector {
                path: path.to_path_buf(),
                source,
            })?
        }
    };
    let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let asset = FaceAsset::original(id, raster, landmarks, pool);
    Ok(match resolution {
        Some(r) if (w, h) != (r, r) => asset.resized(r, r),
        _ => asset,
    })
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if path.is_file() && IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

pub fn load_pool(
    dir: &Path,
    source: &LandmarkSource,
    resolution: Option<u32>,
    pool: Pool,
) -> Result<Vec<FaceAsset>, DatasetError> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(DatasetError::EmptyDirectory(dir.to_path_buf()));
    }
    files.iter().map(|f| load_asset(f, source, resolution, pool)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    /// Relative to the manifest.
    pub file: String,
    pub generation: u32,
    pub alpha_tenths: u8,
    pub op_type: OpType,
    pub drug_parent: Option<String>,
    pub healthy_parent: Option<String>,
    pub real_confidence: f64,
    pub min_distance: f64,
    pub is_unknown: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub asymmetry: Option<AsymmetryReport>,
    pub attempt: usize,
}

/// A posthoc-mode survivor that was identified: it bred, but its image is not published.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithheldRecord {
    pub id: String,
    pub generation: u32,
    pub drug_parent: Option<String>,
    pub healthy_parent: Option<String>,
    pub min_distance: f64,
    pub attempt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalEntry {
    pub id: String,
    pub pool: Pool,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub cohort: String,
    pub resolution: Option<u32>,
    pub forgery_scorer: String,
    pub matcher: String,
    pub landmarks: String,
    #[serde(flatten)]
    pub ga: GaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: RunConfig,
    pub originals: Vec<OriginalEntry>,
    pub gallery: Vec<String>,
    pub records: Vec<ManifestRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub withheld: Vec<WithheldRecord>,
    pub generations: Vec<GenerationState>,
    pub terminated_early: Option<u32>,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteOptions {
    /// Score every published asset with the asymmetry metric.
    pub with_asymmetry: bool,
}

pub fn build_manifest(
    config: RunConfig,
    originals: &[OriginalEntry],
    result: &EvolutionResult,
    opts: WriteOptions,
) -> Manifest {
    let records = result
        .published()
        .map(|g| {
            let a = &g.asset;
            let lineage = a.parents.as_ref();
            ManifestRecord {
                id: a.id.clone(),
                file: format!("gen_{}/{}.png", a.generation, a.id),
                generation: a.generation,
                alpha_tenths: lineage.and_then(|l| l.alpha.tenths()).unwrap_or(0),
                op_type: lineage.map(|l| l.op).unwrap_or(OpType::Original),
                drug_parent: lineage.map(|l| l.drug_parent.clone()),
                healthy_parent: lineage.map(|l| l.healthy_parent.clone()),
                real_confidence: g.scores.forgery.real_confidence,
                min_distance: g.scores.anonymity.min_distance,
                is_unknown: g.scores.anonymity.is_unknown,
                asymmetry: opts
                    .with_asymmetry
                    .then(|| asymmetry_report(&a.raster, &a.landmarks).ok())
                    .flatten(),
                attempt: g.attempt,
            }
        })
        .collect();
    Manifest {
        format_version: FORMAT_VERSION,
        config,
        originals: originals.to_vec(),
        gallery: result.gallery_ids.clone(),
        records,
        withheld: result
            .generations
            .iter()
            .flat_map(|g| &g.survivors)
            .filter(|g| !g.scores.anonymity.is_unknown)
            .map(|g| {
                let lineage = g.asset.parents.as_ref();
                WithheldRecord {
                    id: g.asset.id.clone(),
                    generation: g.asset.generation,
                    drug_parent: lineage.map(|l| l.drug_parent.clone()),
                    healthy_parent: lineage.map(|l| l.healthy_parent.clone()),
                    min_distance: g.scores.anonymity.min_distance,
                    attempt: g.attempt,
                }
            })
            .collect(),
        generations: result.generations.iter().map(|g| g.state).collect(),
        terminated_early: result.terminated_early,
        attempts: result.generations.iter().flat_map(|g| g.attempts.iter().cloned()).collect(),
    }
}

pub fn stats_csv(generations: &[GenerationState]) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for g in generations {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            g.generation_index,
            g.alpha_tenths,
            g.attempted,
            g.accepted,
            g.rejected_forgery,
            g.rejected_recognized,
            g.rejected_no_face
        ));
    }
    s
}

/// Write every published asset, its sidecar, `manifest.json` and `stats.csv` under `out`.
/// Returns the manifest path.
pub fn write_dataset(
    out: &Path,
    config: RunConfig,
    originals: &[OriginalEntry],
    result: &EvolutionResult,
    opts: WriteOptions,
) -> Result<PathBuf, DatasetError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    for g in &result.generations {
        let dir = out.join(format!("gen_{}", g.state.generation_index));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for s in g.published() {
            let png = dir.join(format!("{}.png", s.asset.id));
            write_png(&png, &s.asset.raster)?;
            let sc = Sidecar::from_landmarks(format!("{}.png", s.asset.id), &s.asset.landmarks);
            write_sidecar(&sidecar_path(&png), &sc)?;
        }
    }
    let manifest = build_manifest(config, originals, result, opts);
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, to_json(&manifest)).map_err(io_err(&path))?;
    let stats = out.join(STATS_FILE);
    fs::write(&stats, stats_csv(&manifest.generations)).map_err(io_err(&stats))?;
    Ok(path)
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::InvalidManifest {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if m.format_version != FORMAT_VERSION {
        return Err(DatasetError::InvalidManifest {
            path: path.to_path_buf(),
            msg: format!("unsupported format_version {}", m.format_version),
        });
    }
    Ok(m)
}

/// Load a manifest record's image and landmarks back as an asset.
pub fn load_record(manifest_path: &Path, record: &ManifestRecord) -> Result<FaceAsset, DatasetError> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut asset = load_asset(&base.join(&record.file), &LandmarkSource::Sidecar, None, Pool::Generated)?;
    asset.id = record.id.clone();
    asset.generation = record.generation;
    Ok(asset)
}
