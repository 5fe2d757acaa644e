use super::{GeometryError, Point};

/// `p' = scale * R(rotation) * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: Point,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        scale: 1.0,
        rotation: 0.0,
        translation: Point::new(0.0, 0.0),
    };

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        Point::new(
            self.scale * (c * p.x - s * p.y) + self.translation.x,
            self.scale * (s * p.x + c * p.y) + self.translation.y,
        )
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv_scale = 1.0 / self.scale;
        let rotation = -self.rotation;
        let (s, c) = rotation.sin_cos();
        let t = self.translation;
        SimilarityTransform {
            scale: inv_scale,
            rotation,
            translation: Point::new(
                -inv_scale * (c * t.x - s * t.y),
                -inv_scale * (s * t.x + c * t.y),
            ),
        }
    }
}

/// Closed-form least-squares similarity (no reflection) mapping `src` onto `dst`.
///
/// With centred coordinates, the optimum of `sum |s R a_i + t - b_i|^2` has
/// `s R = [[a, -b], [b, a]] / sum |a_i|^2` where `a = sum a_i . b_i` and
/// `b = sum a_i x b_i`.
pub fn estimate_similarity(src: &[Point], dst: &[Point]) -> Result<SimilarityTransform, GeometryError> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(GeometryError::PointCountMismatch {
            left: src.len(),
            right: dst.len(),
        });
    }
    let n = src.len() as f64;
    let mean = |pts: &[Point]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
        Point::new(sx / n, sy / n)
    };
    let ms = mean(src);
    let md = mean(dst);
    let (mut dot, mut cross, mut var) = (0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (ax, ay) = (s.x - ms.x, s.y - ms.y);
        let (bx, by) = (d.x - md.x, d.y - md.y);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
        var += ax * ax + ay * ay;
    }
    if var <= f64::EPSILON * (ms.x.abs() + ms.y.abs() + 1.0) {
        return Err(GeometryError::DegenerateConfiguration(
            "source points are coincident".into(),
        ));
    }
    let scale = dot.hypot(cross) / var;
    let rotation = cross.atan2(dot);
    let partial = SimilarityTransform {
        scale,
        rotation,
        translation: Point::new(0.0, 0.0),
    };
    let moved = partial.apply(ms);
    Ok(SimilarityTransform {
        translation: Point::new(md.x - moved.x, md.y - moved.y),
        ..partial
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::template_landmarks;
    use proptest::prelude::*;

    fn pts() -> Vec<Point> {
        template_landmarks(200, 200).points
    }

    #[test]
    fn identical_sets_give_identity() {
        let p = pts();
        let t = estimate_similarity(&p, &p).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.abs() < 1e-12);
        assert!(t.translation.x.abs() < 1e-9 && t.translation.y.abs() < 1e-9);
    }

    #[test]
    fn quarter_turn_plus_shift() {
        let src = pts();
        // rotate 90 degrees about the origin, then shift by (10, 0)
        let dst: Vec<_> = src.iter().map(|p| Point::new(-p.y + 10.0, p.x)).collect();
        let t = estimate_similarity(&src, &dst).unwrap();
        assert!((t.rotation - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
        assert!((t.translation.x - 10.0).abs() < 1e-6);
        assert!(t.translation.y.abs() < 1e-6);
        assert!((t.scale - 1.0).abs() < 1e-9);
    }

    #[test]
    fn doubling() {
        let src = pts();
        let dst: Vec<_> = src.iter().map(|p| Point::new(2.0 * p.x, 2.0 * p.y)).collect();
        let t = estimate_similarity(&src, &dst).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-6);
    }

    #[test]
    fn coincident_source_is_degenerate() {
        let src = vec![Point::new(3.0, 3.0); 68];
        let dst = pts();
        assert!(matches!(
            estimate_similarity(&src, &dst),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn least_squares_beats_perturbed_solutions() {
        // noisy correspondence: the fitted residual is a local (hence global, convex) minimum
        let src = pts();
        let dst: Vec<_> = src
            .iter()
            .enumerate()
            .map(|(i, p)| Point::new(1.1 * p.y + 3.0 + (i % 5) as f64, -1.1 * p.x + (i % 3) as f64))
            .collect();
        let t = estimate_similarity(&src, &dst).unwrap();
        let resid = |t: &SimilarityTransform| -> f64 {
            src.iter()
                .zip(&dst)
                .map(|(s, d)| {
                    let q = t.apply(*s);
                    (q.x - d.x).powi(2) + (q.y - d.y).powi(2)
                })
                .sum()
        };
        let base = resid(&t);
        for ds in [-1e-3, 1e-3] {
            for dr in [-1e-3, 0.0, 1e-3] {
                for dt in [-0.1, 0.1] {
                    let mut u = t;
                    u.scale += ds;
                    u.rotation += dr;
                    u.translation.x += dt;
                    assert!(resid(&u) >= base);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn recovers_any_transform(
            scale in 0.2f64..5.0,
            rotation in -3.1f64..3.1,
            tx in -500.0f64..500.0,
            ty in -500.0f64..500.0,
        ) {
            let truth = SimilarityTransform { scale, rotation, translation: Point::new(tx, ty) };
            let src = pts();
            let dst: Vec<_> = src.iter().map(|p| truth.apply(*p)).collect();
            let t = estimate_similarity(&src, &dst).unwrap();
            prop_assert!((t.scale - scale).abs() < 1e-6);
            prop_assert!((t.rotation - rotation).abs() < 1e-6);
            prop_assert!((t.translation.x - tx).abs() < 1e-6);
            prop_assert!((t.translation.y - ty).abs() < 1e-6);
        }

        #[test]
        fn inverse_round_trips(
            scale in 0.2f64..5.0,
            rotation in -3.1f64..3.1,
            tx in -500.0f64..500.0,
            x in -1000.0f64..1000.0,
            y in -1000.0f64..1000.0,
        ) {
            let t = SimilarityTransform { scale, rotation, translation: Point::new(tx, -tx) };
            let back = t.inverse().apply(t.apply(Point::new(x, y)));
            prop_assert!((back.x - x).abs() < 1e-6 && (back.y - y).abs() < 1e-6);
        }
    }
}
