use serde::{Deserialize, Serialize};

/// Number of points in the iBUG/Dlib 68-point annotation.
pub const LANDMARK_COUNT: usize = 68;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(t * self.x + (1.0 - t) * other.x, t * self.y + (1.0 - t) * other.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// A 68-point facial landmark annotation in pixel coordinates (origin top-left).
///
/// Construction is unchecked so that malformed detector output can be represented;
/// [`LandmarkSet::is_valid`] is the gate the generation engine uses as "face detected".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<Point>,
    pub width: u32,
    pub height: u32,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>, width: u32, height: u32) -> Self {
        Self {
            points,
            width,
            height,
        }
    }

    /// True iff there are exactly 68 finite points inside `[0, width) x [0, height)`.
    pub fn is_valid(&self) -> bool {
        self.points.len() == LANDMARK_COUNT
            && self.points.iter().all(|p| {
                p.x.is_finite()
                    && p.y.is_finite()
                    && p.x >= 0.0
                    && p.y >= 0.0
                    && p.x < self.width as f64
                    && p.y < self.height as f64
            })
    }

    /// Rescale to a new frame size, `x' = x * w'/w`.
    pub fn rescaled(&self, width: u32, height: u32) -> LandmarkSet {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        LandmarkSet {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x * sx, p.y * sy))
                .collect(),
            width,
            height,
        }
    }

    /// Pointwise `t * self + (1 - t) * other`.
    pub fn interpolate(&self, other: &LandmarkSet, t: f64) -> LandmarkSet {
        LandmarkSet {
            points: self
                .points
                .iter()
                .zip(&other.points)
                .map(|(&a, &b)| a.lerp(b, t))
                .collect(),
            width: self.width,
            height: self.height,
        }
    }

    /// Landmarks of the horizontally flipped image: `x' = w - 1 - x`, with left/right
    /// indices exchanged so that index semantics are preserved.
    pub fn mirrored(&self) -> LandmarkSet {
        let w = self.width as f64;
        let points = (0..self.points.len())
            .map(|i| {
                let src = if self.points.len() == LANDMARK_COUNT {
                    MIRROR_INDEX[i]
                } else {
                    i
                };
                let p = self.points[src];
                Point::new(w - 1.0 - p.x, p.y)
            })
            .collect();
        LandmarkSet {
            points,
            width: self.width,
            height: self.height,
        }
    }
}

/// Left/right correspondence of the 68-point scheme.
pub const MIRROR_INDEX: [usize; LANDMARK_COUNT] = {
    let mut m = [0usize; LANDMARK_COUNT];
    let pairs: [(usize, usize); 34] = [
        (0, 16), (1, 15), (2, 14), (3, 13), (4, 12), (5, 11), (6, 10), (7, 9), (8, 8),
        (17, 26), (18, 25), (19, 24), (20, 23), (21, 22),
        (27, 27), (28, 28), (29, 29), (30, 30),
        (31, 35), (32, 34), (33, 33),
        (36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46),
        (48, 54), (49, 53), (50, 52), (51, 51), (55, 59), (56, 58), (57, 57),
    ];
    let mut i = 0;
    while i < pairs.len() {
        m[pairs[i].0] = pairs[i].1;
        m[pairs[i].1] = pairs[i].0;
        i += 1;
    }
    let inner: [(usize, usize); 5] = [(60, 64), (61, 63), (62, 62), (65, 67), (66, 66)];
    let mut j = 0;
    while j < inner.len() {
        m[inner[j].0] = inner[j].1;
        m[inner[j].1] = inner[j].0;
        j += 1;
    }
    m
};

/// Canonical 68-point face layout in a unit face frame: origin between the eyes at
/// nose-bridge height, x to the image right, y down, face half-width 1.
///
/// The layout is exactly mirror-symmetric about x = 0. Jaw points 4/12 sit level
/// with mouth corners 48/54.
pub fn unit_template() -> Vec<Point> {
    use std::f64::consts::PI;
    let mut p = Vec::with_capacity(LANDMARK_COUNT);
    // jaw 0..16 along the lower half of the face ellipse
    for k in 0..17 {
        let phi = PI - k as f64 * PI / 16.0;
        p.push(Point::new(phi.cos(), 1.3 * phi.sin()));
    }
    // brows 17..21 (image left), 22..26 mirrored
    let brow = [(-0.75, -0.38), (-0.6, -0.47), (-0.45, -0.5), (-0.3, -0.48), (-0.16, -0.43)];
    for &(x, y) in &brow {
        p.push(Point::new(x, y));
    }
    for &(x, y) in brow.iter().rev() {
        p.push(Point::new(-x, y));
    }
    // nose bridge 27..30
    for y in [-0.25, -0.05, 0.15, 0.35] {
        p.push(Point::new(0.0, y));
    }
    // nostrils 31..35
    for (x, y) in [(-0.2, 0.45), (-0.1, 0.48), (0.0, 0.5), (0.1, 0.48), (0.2, 0.45)] {
        p.push(Point::new(x, y));
    }
    // eyes: 36 outer, 37/38 upper, 39 inner, 40/41 lower
    let left_eye = [
        (-0.58, -0.2),
        (-0.48, -0.27),
        (-0.32, -0.27),
        (-0.22, -0.2),
        (-0.32, -0.14),
        (-0.48, -0.14),
    ];
    for &(x, y) in &left_eye {
        p.push(Point::new(x, y));
    }
    // right eye 42 inner, 43/44 upper, 45 outer, 46/47 lower
    for &i in &[3usize, 2, 1, 0, 5, 4] {
        let (x, y) = left_eye[i];
        p.push(Point::new(-x, y));
    }
    let corner_y = 1.3 * (PI / 4.0).sin();
    // outer lip 48..59
    let outer = [
        (-0.38, corner_y),
        (-0.25, 0.86),
        (-0.1, 0.83),
        (0.0, 0.845),
        (0.1, 0.83),
        (0.25, 0.86),
        (0.38, corner_y),
        (0.25, 1.0),
        (0.1, 1.04),
        (0.0, 1.05),
        (-0.1, 1.04),
        (-0.25, 1.0),
    ];
    for &(x, y) in &outer {
        p.push(Point::new(x, y));
    }
    // inner lip 60..67
    let inner = [
        (-0.3, corner_y),
        (-0.1, 0.9),
        (0.0, 0.905),
        (0.1, 0.9),
        (0.3, corner_y),
        (0.1, 0.95),
        (0.0, 0.955),
        (-0.1, 0.95),
    ];
    for &(x, y) in &inner {
        p.push(Point::new(x, y));
    }
    debug_assert_eq!(p.len(), LANDMARK_COUNT);
    p
}

/// Placement of the unit template inside a `width x height` frame.
pub fn template_placement(width: u32, height: u32) -> (Point, f64) {
    let center = Point::new((width as f64 - 1.0) / 2.0, 0.42 * (height as f64 - 1.0));
    let scale = 0.3 * width.min(height) as f64;
    (center, scale)
}

/// The canonical template scaled into a `width x height` frame, symmetric about
/// `(width - 1) / 2`.
pub fn template_landmarks(width: u32, height: u32) -> LandmarkSet {
    let (c, s) = template_placement(width, height);
    LandmarkSet::new(
        unit_template()
            .into_iter()
            .map(|p| Point::new(c.x + s * p.x, c.y + s * p.y))
            .collect(),
        width,
        height,
    )
}
