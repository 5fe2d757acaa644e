use super::adapter::{float_array, malformed, run_adapter_on_raster};
use super::{check_distance_threshold, AnonymityReport, ScorerBinding, ScoringError};
use crate::fusion::FaceAsset;
use crate::geometry::{estimate_similarity, unit_template, ImageRaster, LandmarkSet, Point};

/// Side of the stub embedding grid (16 x 16 = 256 dimensions).
pub const EMBEDDING_SIDE: usize = 16;
const CROP_SIDE: usize = EMBEDDING_SIDE * 4;
// face-frame window covered by the aligned crop
const CROP_X0: f64 = -1.025;
const CROP_Y0: f64 = -0.8;
const CROP_SPAN: f64 = 2.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Matcher {
    pub binding: ScorerBinding,
}

impl Matcher {
    pub fn stub() -> Self {
        Self {
            binding: ScorerBinding::stub(),
        }
    }
}

/// Identity embedding. Stub: grayscale of the landmark-aligned face crop, box-averaged
/// to 16 x 16, mean-centred and L2-normalised. External: the adapter's raw vector.
pub fn embed(img: &ImageRaster, landmarks: &LandmarkSet, matcher: &Matcher) -> Result<Vec<f64>, ScoringError> {
    if let Some(cmd) = matcher.binding.external_command()? {
        let out = run_adapter_on_raster(cmd, img, matcher.binding.timeout)?;
        let v = float_array(cmd, out.get("embedding"), "embedding")?;
        if v.is_empty() {
            return Err(malformed(cmd, "empty embedding"));
        }
        return Ok(v);
    }

    let k = (CROP_SIDE - 1) as f64 / CROP_SPAN;
    let template: Vec<Point> = unit_template()
        .into_iter()
        .map(|p| Point::new((p.x - CROP_X0) * k, (p.y - CROP_Y0) * k))
        .collect();
    let to_image = estimate_similarity(&template, &landmarks.points)?;

    let mut cells = vec![0.0; EMBEDDING_SIDE * EMBEDDING_SIDE];
    for cy in 0..CROP_SIDE {
        for cx in 0..CROP_SIDE {
            let p = to_image.apply(Point::new(cx as f64, cy as f64));
            let [r, g, b] = img.sample_bilinear(p.x, p.y);
            let luma = 0.299 * r + 0.587 * g + 0.114 * b;
            cells[(cy / 4) * EMBEDDING_SIDE + cx / 4] += luma / 16.0;
        }
    }
    let mean = cells.iter().sum::<f64>() / cells.len() as f64;
    cells.iter_mut().for_each(|v| *v -= mean);
    let norm = cells.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        cells.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(cells)
}

/// Reference embeddings of the people whose identities must not leak, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGallery {
    matcher: Matcher,
    entries: Vec<(String, Vec<f64>)>,
}

impl EmbeddingGallery {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn matcher(&self) -> &Matcher {
        &self.matcher
    }

    pub fn embedding(&self, id: &str) -> Option<&[f64]> {
        self.entries
            .binary_search_by(|(k, _)| k.as_str().cmp(id))
            .ok()
            .map(|i| self.entries[i].1.as_slice())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Nearest entry by L2 distance; ties go to the lexicographically smallest id.
    pub fn nearest(&self, probe: &[f64]) -> Result<(f64, &str), ScoringError> {
        let mut best: Option<(f64, &str)> = None;
        for (id, e) in &self.entries {
            if e.len() != probe.len() {
                return Err(ScoringError::InvalidBinding(format!(
                    "embedding arity {} does not match gallery arity {}",
                    probe.len(),
                    e.len()
                )));
            }
            let d = e.iter().zip(probe).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, id.as_str()));
            }
        }
        best.ok_or(ScoringError::EmptyGallery)
    }
}

pub fn build_gallery(assets: &[FaceAsset], matcher: &Matcher) -> Result<EmbeddingGallery, ScoringError> {
    if assets.is_empty() {
        return Err(ScoringError::EmptyGallery);
    }
    let mut entries = assets
        .iter()
        .map(|a| Ok((a.id.clone(), embed(&a.raster, &a.landmarks, matcher)?)))
        .collect::<Result<Vec<_>, ScoringError>>()?;
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries.dedup_by(|later, earlier| later.0 == earlier.0);
    Ok(EmbeddingGallery {
        matcher: matcher.clone(),
        entries,
    })
}

/// Classify a probe against the gallery: unknown iff its nearest distance exceeds
/// `threshold`.
pub fn check_anonymity(
    img: &ImageRaster,
    landmarks: &LandmarkSet,
    gallery: &EmbeddingGallery,
    threshold: f64,
) -> Result<AnonymityReport, ScoringError> {
    check_distance_threshold(threshold)?;
    let probe = embed(img, landmarks, &gallery.matcher)?;
    report_from_embedding(&probe, gallery, threshold)
}

pub(crate) fn report_from_embedding(
    probe: &[f64],
    gallery: &EmbeddingGallery,
    threshold: f64,
) -> Result<AnonymityReport, ScoringError> {
    let (d, id) = gallery.nearest(probe)?;
    let is_unknown = d > threshold;
    Ok(AnonymityReport {
        min_distance: d,
        matched_id: (!is_unknown).then(|| id.to_string()),
        is_unknown,
        threshold_used: threshold,
    })
}
