//! Facial asymmetry: SSIM between each left region and the mirrored right region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    estimate_similarity, template_landmarks, GeometryError, GrayImage, ImageRaster, LandmarkSet, Point,
};

/// Side of the square frame faces are aligned to before regions are cut.
pub const CANONICAL_SIZE: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymmetryError {
    #[error("region {0:?} has zero area after clipping")]
    DegenerateRoi(Region),
    #[error("image sizes differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("landmarks are invalid")]
    InvalidLandmarks,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    LeftEye,
    RightEye,
    LeftCheek,
    RightCheek,
    LeftMouth,
    RightMouth,
}

impl Region {
    pub const ALL: [Region; 6] = [
        Region::LeftEye,
        Region::RightEye,
        Region::LeftCheek,
        Region::RightCheek,
        Region::LeftMouth,
        Region::RightMouth,
    ];

    /// Landmark indices as (x of corner 1, y of corner 1, x of corner 2, y of corner 2).
    pub fn corner_indices(self) -> [usize; 4] {
        match self {
            Region::LeftEye => [17, 19, 29, 29],
            Region::RightEye => [29, 24, 26, 29],
            Region::LeftCheek => [4, 30, 48, 4],
            Region::RightCheek => [54, 30, 12, 54],
            Region::LeftMouth => [5, 51, 8, 8],
            Region::RightMouth => [51, 51, 11, 8],
        }
    }
}

/// Axis-aligned rectangle with `p1` the top-left and `p2` the bottom-right corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiRect {
    pub region: Region,
    pub p1: Point,
    pub p2: Point,
}

impl RoiRect {
    /// Normalise the corners and clip to `[0, width-1] x [0, height-1]`.
    pub fn new(region: Region, a: Point, b: Point, width: u32, height: u32) -> Result<Self, AsymmetryError> {
        let (xmax, ymax) = ((width.max(1) - 1) as f64, (height.max(1) - 1) as f64);
        let p1 = Point::new(a.x.min(b.x).clamp(0.0, xmax), a.y.min(b.y).clamp(0.0, ymax));
        let p2 = Point::new(a.x.max(b.x).clamp(0.0, xmax), a.y.max(b.y).clamp(0.0, ymax));
        if p2.x <= p1.x || p2.y <= p1.y {
            return Err(AsymmetryError::DegenerateRoi(region));
        }
        Ok(Self { region, p1, p2 })
    }

    pub fn width(&self) -> f64 {
        self.p2.x - self.p1.x
    }

    pub fn height(&self) -> f64 {
        self.p2.y - self.p1.y
    }

    /// Sampling grid size in pixels.
    pub fn pixel_dims(&self) -> (usize, usize) {
        (self.width().round() as usize + 1, self.height().round() as usize + 1)
    }
}

pub fn extract_rois(l: &LandmarkSet) -> Result<[RoiRect; 6], AsymmetryError> {
    if l.points.len() != crate::geometry::LANDMARK_COUNT {
        return Err(AsymmetryError::InvalidLandmarks);
    }
    let p = &l.points;
    let mut out = Vec::with_capacity(6);
    for region in Region::ALL {
        let [ax, ay, bx, by] = region.corner_indices();
        out.push(RoiRect::new(
            region,
            Point::new(p[ax].x, p[ay].y),
            Point::new(p[bx].x, p[by].y),
            l.width,
            l.height,
        )?);
    }
    Ok(out.try_into().expect("six regions"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub window: usize,
    pub sigma: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
            window: 11,
            sigma: 1.5,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    fn kernel(&self) -> Vec<f64> {
        let r = (self.window as f64 - 1.0) / 2.0;
        let k: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    }
}

fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, p: &SsimParams) -> f64 {
    let (c1, c2) = (p.c1(), p.c2());
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Single window over the whole image, uniform weights, population moments.
pub fn ssim_global(x: &[f64], y: &[f64], p: &SsimParams) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cxy += (a - mx) * (b - my);
    }
    ssim_from_moments(mx, my, vx / n, vy / n, cxy / n, p)
}

/// Valid-mode separable filtering of a row-major `w x h` buffer.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over every position of a Gaussian window that fits inside the image. Images
/// smaller than the window in either dimension use one global window.
pub fn ssim(x: &GrayImage, y: &GrayImage, p: &SsimParams) -> Result<f64, AsymmetryError> {
    if (x.width, x.height) != (y.width, y.height) {
        return Err(AsymmetryError::DimensionMismatch((x.width, x.height), (y.width, y.height)));
    }
    let (w, h) = (x.width as usize, x.height as usize);
    if w < p.window || h < p.window {
        return Ok(ssim_global(&x.data, &y.data, p));
    }
    let k = p.kernel();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x.data, w, h, &k);
    let my = filter_valid(&y.data, w, h, &k);
    let xx = filter_valid(&prod(&x.data, &x.data), w, h, &k);
    let yy = filter_valid(&prod(&y.data, &y.data), w, h, &k);
    let xy = filter_valid(&prod(&x.data, &y.data), w, h, &k);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            ssim_from_moments(a, b, xx[i] - a * a, yy[i] - b * b, xy[i] - a * b, p)
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// Per-region scores as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub eyes: f64,
    pub cheeks: f64,
    pub mouth: f64,
    pub mean: f64,
}

impl AsymmetryReport {
    pub fn from_scores(eyes: f64, cheeks: f64, mouth: f64) -> Self {
        Self {
            eyes,
            cheeks,
            mouth,
            mean: (eyes + cheeks + mouth) / 3.0,
        }
    }
}

fn sample_roi<F: Fn(Point) -> f64>(roi: &RoiRect, w: usize, h: usize, mirror: bool, sample: F) -> GrayImage {
    let step = |len: f64, n: usize| if n > 1 { len / (n - 1) as f64 } else { 0.0 };
    let (sx, sy) = (step(roi.width(), w), step(roi.height(), h));
    let mut data = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            let x = if mirror {
                roi.p2.x - i as f64 * sx
            } else {
                roi.p1.x + i as f64 * sx
            };
            data.push(sample(Point::new(x, roi.p1.y + j as f64 * sy)));
        }
    }
    GrayImage::new(w as u32, h as u32, data).expect("sized buffer")
}

/// Align the face to the canonical frame, cut the six regions there and compare each
/// left region with its mirrored right counterpart.
pub fn asymmetry_report(img: &ImageRaster, l: &LandmarkSet) -> Result<AsymmetryReport, AsymmetryError> {
    asymmetry_report_with(img, l, &SsimParams::default())
}

pub fn asymmetry_report_with(
    img: &ImageRaster,
    l: &LandmarkSet,
    params: &SsimParams,
) -> Result<AsymmetryReport, AsymmetryError> {
    if !l.is_valid() {
        return Err(AsymmetryError::InvalidLandmarks);
    }
    let canonical = template_landmarks(CANONICAL_SIZE, CANONICAL_SIZE);
    let to_image = estimate_similarity(&canonical.points, &l.points)?;
    let to_canonical = to_image.inverse();
    let aligned = LandmarkSet::new(
        l.points.iter().map(|&p| to_canonical.apply(p)).collect(),
        CANONICAL_SIZE,
        CANONICAL_SIZE,
    );
    let rois = extract_rois(&aligned)?;
    let luma = |p: Point| {
        let q = to_image.apply(p);
        let [r, g, b] = img.sample_bilinear(q.x, q.y);
        0.299 * r + 0.587 * g + 0.114 * b
    };

    let mut scores = [0.0; 3];
    for (k, pair) in rois.chunks(2).enumerate() {
        let (left, right) = (&pair[0], &pair[1]);
        let (lw, lh) = left.pixel_dims();
        let (rw, rh) = right.pixel_dims();
        let (w, h) = (lw.max(rw), lh.max(rh));
        let a = sample_roi(left, w, h, false, luma);
        let b = sample_roi(right, w, h, true, luma);
        scores[k] = ssim(&a, &b, params)?.max(0.0) * 100.0;
    }
    Ok(AsymmetryReport::from_scores(scores[0], scores[1], scores[2]))
}

/// `id,generation,alpha,eyes_pct,cheeks_pct,mouth_pct,mean_pct`
pub const CSV_HEADER: &str = "id,generation,alpha,eyes_pct,cheeks_pct,mouth_pct,mean_pct";

pub fn csv_row(id: &str, generation: u32, alpha_tenths: Option<u8>, r: &AsymmetryReport) -> String {
    let alpha = alpha_tenths.map(|t| format!("{:.1}", t as f64 / 10.0)).unwrap_or_default();
    format!(
        "{id},{generation},{alpha},{:.4},{:.4},{:.4},{:.4}",
        r.eyes, r.cheeks, r.mouth, r.mean
    )
}
