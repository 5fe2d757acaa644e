//! Landmarks, similarity alignment, Delaunay meshing and piecewise-affine warping.

mod delaunay;
mod landmarks;
mod raster;
mod transform;
mod warp;

pub use delaunay::{boundary_anchors, delaunay, triangulate, TriangleMesh};
pub use landmarks::{
    template_landmarks, template_placement, unit_template, LandmarkSet, Point, LANDMARK_COUNT,
    MIRROR_INDEX,
};
pub use raster::{round_half_up, GrayImage, ImageRaster};
pub use transform::{estimate_similarity, SimilarityTransform};
pub use warp::{warp_piecewise_affine, warp_piecewise_affine_f64, warp_similarity, WarpedImage};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("point sets differ in size ({left} vs {right})")]
    PointCountMismatch { left: usize, right: usize },
    #[error("meshes do not share triangle topology")]
    TopologyMismatch,
    #[error("raster {width}x{height} cannot hold {len} samples")]
    RasterSize { width: u32, height: u32, len: usize },
    #[error("point ({x}, {y}) lies outside the {width}x{height} frame")]
    OutOfFrame { x: f64, y: f64, width: u32, height: u32 },
}

/// "Face detected" predicate of the generation loop.
pub fn validate_landmarks(l: &LandmarkSet) -> bool {
    l.is_valid()
}
