use super::adapter::{malformed, run_adapter_on_raster};
use super::{check_unit_threshold, ForgeryScore, ScorerBinding, ScoringError};
use crate::geometry::{GrayImage, ImageRaster};

/// Logistic mapping of Laplacian variance to a "real" confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpnessCalibration {
    pub center: f64,
    pub scale: f64,
}

impl Default for SharpnessCalibration {
    fn default() -> Self {
        Self {
            center: 130.0,
            scale: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForgeryStub {
    Sharpness(SharpnessCalibration),
    /// Constant confidence, for forcing accept-all / reject-all runs.
    Fixed(f64),
}

impl Default for ForgeryStub {
    fn default() -> Self {
        ForgeryStub::Sharpness(SharpnessCalibration::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeryScorer {
    pub binding: ScorerBinding,
    pub stub: ForgeryStub,
}

impl ForgeryScorer {
    pub fn stub(stub: ForgeryStub) -> Self {
        Self {
            binding: ScorerBinding::stub(),
            stub,
        }
    }

    pub fn external(binding: ScorerBinding) -> Self {
        Self {
            binding,
            stub: ForgeryStub::default(),
        }
    }

    pub fn real_confidence(&self, img: &ImageRaster) -> Result<f64, ScoringError> {
        match self.binding.external_command()? {
            None => Ok(match self.stub {
                ForgeryStub::Fixed(p) => p.clamp(0.0, 1.0),
                ForgeryStub::Sharpness(cal) => {
                    let s = laplacian_variance(&img.to_gray());
                    1.0 / (1.0 + (-(s - cal.center) / cal.scale).exp())
                }
            }),
            Some(cmd) => {
                let out = run_adapter_on_raster(cmd, img, self.binding.timeout)?;
                let p = out
                    .get("real_confidence")
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| malformed(cmd, "missing numeric `real_confidence`"))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(malformed(cmd, format!("real_confidence {p} outside [0, 1]")));
                }
                Ok(p)
            }
        }
    }
}

pub fn score_forgery(img: &ImageRaster, scorer: &ForgeryScorer, threshold: f64) -> Result<ForgeryScore, ScoringError> {
    check_unit_threshold(threshold)?;
    Ok(ForgeryScore::new(scorer.real_confidence(img)?, threshold))
}

/// Variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance(g: &GrayImage) -> f64 {
    let (w, h) = (g.width as usize, g.height as usize);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = g.data[y * w + x];
            let lap = g.data[(y - 1) * w + x] + g.data[(y + 1) * w + x] + g.data[y * w + x - 1]
                + g.data[y * w + x + 1]
                - 4.0 * c;
            sum += lap;
            sum_sq += lap * lap;
        }
    }
    let n = ((w - 2) * (h - 2)) as f64;
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0)
}
