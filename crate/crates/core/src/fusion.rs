//! Alpha-weighted face merge: warp both parents onto the interpolated landmark shape,
//! then cross-dissolve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    boundary_anchors, round_half_up, triangulate, warp_piecewise_affine_f64, GeometryError,
    ImageRaster, LandmarkSet,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("alpha tenths {0} outside 0..=10")]
    InvalidTenths(u8),
    #[error("raster sizes differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("asset `{0}` has invalid landmarks")]
    InvalidLandmarks(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Fusion coefficient: the fraction of the drug-side parent in the merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphSpec {
    /// On the 0.1 grid, stored as an integer number of tenths.
    Tenths(u8),
    Continuous(f64),
}

impl MorphSpec {
    pub fn from_tenths(tenths: u8) -> Result<Self, FusionError> {
        if tenths > 10 {
            return Err(FusionError::InvalidTenths(tenths));
        }
        Ok(MorphSpec::Tenths(tenths))
    }

    pub fn continuous(alpha: f64) -> Result<Self, FusionError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(FusionError::InvalidAlpha(alpha));
        }
        Ok(MorphSpec::Continuous(alpha))
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            MorphSpec::Tenths(t) => t as f64 / 10.0,
            MorphSpec::Continuous(a) => a,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, MorphSpec::Tenths(_))
    }

    pub fn tenths(&self) -> Option<u8> {
        match *self {
            MorphSpec::Tenths(t) => Some(t),
            MorphSpec::Continuous(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    DrugOriginal,
    HealthyGan,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpType {
    Crossover,
    Mutation,
    Original,
}

impl OpType {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpType::Crossover => "crossover",
            OpType::Mutation => "mutation",
            OpType::Original => "original",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lineage {
    /// Drug-side parent (weighted by alpha).
    pub drug_parent: String,
    /// Healthy-side parent (weighted by 1 - alpha).
    pub healthy_parent: String,
    pub alpha: MorphSpec,
    pub op: OpType,
}

/// A face image with its landmarks and provenance; the unit the generation loop evolves.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceAsset {
    pub id: String,
    pub raster: ImageRaster,
    pub landmarks: LandmarkSet,
    pub pool: Pool,
    pub generation: u32,
    pub parents: Option<Lineage>,
}

impl FaceAsset {
    pub fn original(id: impl Into<String>, raster: ImageRaster, landmarks: LandmarkSet, pool: Pool) -> Self {
        Self {
            id: id.into(),
            raster,
            landmarks,
            pool,
            generation: 0,
            parents: None,
        }
    }

    /// Bilinear resize with proportional landmark rescaling.
    pub fn resized(&self, width: u32, height: u32) -> FaceAsset {
        FaceAsset {
            raster: self.raster.resize_bilinear(width, height),
            landmarks: self.landmarks.rescaled(width, height),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeOptions {
    /// Resize the healthy parent to the drug parent's size when they differ.
    pub resize_healthy: bool,
}

impl Default for MergeOptions {
    fn default() -> Self {
        Self { resize_healthy: true }
    }
}

/// Merge `drug` and `healthy` at `spec.alpha()`.
///
/// The output carries the interpolated landmark set, lineage, and
/// `generation = max(parent generations) + 1`. Its id is `id`.
pub fn face_merge(
    drug: &FaceAsset,
    healthy: &FaceAsset,
    spec: MorphSpec,
    op: OpType,
    id: impl Into<String>,
    opts: MergeOptions,
) -> Result<FaceAsset, FusionError> {
    let alpha = spec.alpha();
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FusionError::InvalidAlpha(alpha));
    }
    for asset in [drug, healthy] {
        if !asset.landmarks.is_valid() {
            return Err(FusionError::InvalidLandmarks(asset.id.clone()));
        }
    }
    let (w, h) = drug.raster.dimensions();
    let resized;
    let healthy = if healthy.raster.dimensions() != (w, h) {
        if !opts.resize_healthy {
            return Err(FusionError::DimensionMismatch((w, h), healthy.raster.dimensions()));
        }
        resized = healthy.resized(w, h);
        &resized
    } else {
        healthy
    };

    let blended = drug.landmarks.interpolate(&healthy.landmarks, alpha);
    let dst_mesh = triangulate(&blended.points, w, h)?;
    let with_anchors = |l: &LandmarkSet| {
        let mut v = l.points.clone();
        v.extend(boundary_anchors(w, h));
        v
    };
    let drug_mesh = dst_mesh.with_vertices(with_anchors(&drug.landmarks))?;
    let healthy_mesh = dst_mesh.with_vertices(with_anchors(&healthy.landmarks))?;

    let warped_drug = warp_piecewise_affine_f64(&drug.raster, &drug_mesh, &dst_mesh)?;
    let warped_healthy = warp_piecewise_affine_f64(&healthy.raster, &healthy_mesh, &dst_mesh)?;
    let samples = warped_drug
        .samples
        .iter()
        .zip(&warped_healthy.samples)
        .map(|(&d, &hv)| round_half_up(alpha * d + (1.0 - alpha) * hv))
        .collect();

    Ok(FaceAsset {
        id: id.into(),
        raster: ImageRaster::new(w, h, samples)?,
        landmarks: blended,
        pool: Pool::Generated,
        generation: drug.generation.max(healthy.generation) + 1,
        parents: Some(Lineage {
            drug_parent: drug.id.clone(),
            healthy_parent: healthy.id.clone(),
            alpha: spec,
            op,
        }),
    })
}
