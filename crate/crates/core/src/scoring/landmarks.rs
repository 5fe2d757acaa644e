use super::adapter::{float_array, malformed, run_adapter_on_raster};
use super::{ScorerBinding, ScoringError};
use crate::geometry::{template_landmarks, ImageRaster, LandmarkSet, Point, LANDMARK_COUNT};

/// 68-point landmarks for `img`. The stub returns the canonical template scaled to the
/// image and is only meaningful for test fixtures.
pub fn detect_landmarks(img: &ImageRaster, binding: &ScorerBinding) -> Result<LandmarkSet, ScoringError> {
    let (w, h) = img.dimensions();
    let Some(cmd) = binding.external_command()? else {
        return Ok(template_landmarks(w, h));
    };
    let out = run_adapter_on_raster(cmd, img, binding.timeout)?;
    let rows = out
        .get("points")
        .and_then(|v| v.as_array())
        .ok_or_else(|| malformed(cmd, "missing array `points`"))?;
    if rows.is_empty() {
        return Err(ScoringError::NoFaceFound { command: cmd.to_string() });
    }
    if rows.len() != LANDMARK_COUNT {
        return Err(malformed(cmd, format!("expected {LANDMARK_COUNT} points, got {}", rows.len())));
    }
    let mut points = Vec::with_capacity(LANDMARK_COUNT);
    for row in rows {
        let xy = float_array(cmd, Some(row), "points")?;
        if xy.len() != 2 {
            return Err(malformed(cmd, "each point must be [x, y]"));
        }
        points.push(Point::new(xy[0], xy[1]));
    }
    let set = LandmarkSet::new(points, w, h);
    if !set.is_valid() {
        return Err(malformed(cmd, "landmarks fall outside the image"));
    }
    Ok(set)
}
