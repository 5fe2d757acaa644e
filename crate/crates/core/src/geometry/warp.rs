use super::{round_half_up, GeometryError, ImageRaster, Point, SimilarityTransform, TriangleMesh};

/// Floating-point RGB plane produced by warping, before final rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedImage {
    pub width: u32,
    pub height: u32,
    pub samples: Vec<f64>,
}

impl WarpedImage {
    pub fn to_raster(&self) -> ImageRaster {
        ImageRaster::new(
            self.width,
            self.height,
            self.samples.iter().map(|&v| round_half_up(v)).collect(),
        )
        .expect("warp preserves dimensions")
    }
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
fn barycentric(p: Point, a: Point, b: Point, c: Point) -> Option<[f64; 3]> {
    let det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
    if det == 0.0 {
        return None;
    }
    let l0 = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / det;
    let l1 = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / det;
    Some([l0, l1, 1.0 - l0 - l1])
}

const EDGE_TOLERANCE: f64 = -1e-9;

/// Piecewise-affine warp without rounding. Each destination pixel (at integer
/// coordinates) is mapped through its containing destination triangle back into the
/// source triangle and sampled bilinearly with edge clamping.
pub fn warp_piecewise_affine_f64(
    img: &ImageRaster,
    src_mesh: &TriangleMesh,
    dst_mesh: &TriangleMesh,
) -> Result<WarpedImage, GeometryError> {
    if src_mesh.triangles != dst_mesh.triangles || src_mesh.vertices.len() != dst_mesh.vertices.len() {
        return Err(GeometryError::TopologyMismatch);
    }
    let (w, h) = img.dimensions();
    let mut samples = vec![0.0; w as usize * h as usize * 3];
    let mut filled = vec![false; w as usize * h as usize];

    for tri in &dst_mesh.triangles {
        let [d0, d1, d2] = tri.map(|i| dst_mesh.vertices[i]);
        let [s0, s1, s2] = tri.map(|i| src_mesh.vertices[i]);
        let identical = [d0, d1, d2] == [s0, s1, s2];

        let min_x = d0.x.min(d1.x).min(d2.x).floor().max(0.0) as i64;
        let max_x = d0.x.max(d1.x).max(d2.x).ceil().min(w as f64 - 1.0) as i64;
        let min_y = d0.y.min(d1.y).min(d2.y).floor().max(0.0) as i64;
        let max_y = d0.y.max(d1.y).max(d2.y).ceil().min(h as f64 - 1.0) as i64;

        for y in min_y..=max_y {
            for x in min_x..=max_x {
                let idx = y as usize * w as usize + x as usize;
                if filled[idx] {
                    continue;
                }
                let p = Point::new(x as f64, y as f64);
                let Some(l) = barycentric(p, d0, d1, d2) else {
                    continue;
                };
                if l.iter().any(|&v| v < EDGE_TOLERANCE) {
                    continue;
                }
                let src = if identical {
                    p
                } else {
                    Point::new(
                        l[0] * s0.x + l[1] * s1.x + l[2] * s2.x,
                        l[0] * s0.y + l[1] * s1.y + l[2] * s2.y,
                    )
                };
                let v = img.sample_bilinear(src.x, src.y);
                samples[idx * 3..idx * 3 + 3].copy_from_slice(&v);
                filled[idx] = true;
            }
        }
    }

    // Pixels outside the mesh (only possible when the mesh does not tile the frame)
    // keep their source value.
    for (idx, done) in filled.iter().enumerate() {
        if !done {
            let (x, y) = ((idx % w as usize) as u32, (idx / w as usize) as u32);
            let v = img.pixel(x, y);
            for c in 0..3 {
                samples[idx * 3 + c] = v[c] as f64;
            }
        }
    }

    Ok(WarpedImage {
        width: w,
        height: h,
        samples,
    })
}

/// Piecewise-affine warp rounded back to 8 bits.
pub fn warp_piecewise_affine(
    img: &ImageRaster,
    src_mesh: &TriangleMesh,
    dst_mesh: &TriangleMesh,
) -> Result<ImageRaster, GeometryError> {
    Ok(warp_piecewise_affine_f64(img, src_mesh, dst_mesh)?.to_raster())
}

/// Resample `img` into a `width x height` frame where `to_source` maps output pixel
/// coordinates into source coordinates.
pub fn warp_similarity(img: &ImageRaster, to_source: &SimilarityTransform, width: u32, height: u32) -> ImageRaster {
    let mut samples = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        for x in 0..width {
            let p = to_source.apply(Point::new(x as f64, y as f64));
            samples.extend(img.sample_bilinear(p.x, p.y).iter().map(|&v| round_half_up(v)));
        }
    }
    ImageRaster::new(width, height, samples).expect("sized above")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{template_landmarks, triangulate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(w: u32, h: u32, seed: u64) -> ImageRaster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..w * h * 3).map(|_| rng.random::<u8>()).collect();
        ImageRaster::new(w, h, samples).unwrap()
    }

    #[test]
    fn identical_meshes_are_bit_identical() {
        let img = noise_image(64, 64, 1);
        let mesh = triangulate(&template_landmarks(64, 64).points, 64, 64).unwrap();
        let out = warp_piecewise_affine(&img, &mesh, &mesh).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn translation_moves_patch() {
        let mut img = ImageRaster::filled(100, 100, [20, 20, 20]);
        for y in 40..45 {
            for x in 30..35 {
                img.set_pixel(x, y, [250, 10, 10]);
            }
        }
        // interior control points; every vertex shifts right by 10 except frame anchors
        let src_pts = vec![
            Point::new(20.0, 20.0),
            Point::new(70.0, 20.0),
            Point::new(20.0, 70.0),
            Point::new(70.0, 70.0),
        ];
        let dst_pts: Vec<_> = src_pts.iter().map(|p| Point::new(p.x + 10.0, p.y)).collect();
        let dst_mesh = triangulate(&dst_pts, 100, 100).unwrap();
        let mut src_vertices = src_pts.clone();
        src_vertices.extend(crate::geometry::boundary_anchors(100, 100));
        let src_mesh = dst_mesh.with_vertices(src_vertices).unwrap();
        let out = warp_piecewise_affine(&img, &src_mesh, &dst_mesh).unwrap();
        for y in 40..45 {
            for x in 40..45 {
                assert_eq!(out.pixel(x, y), [250, 10, 10], "({x},{y})");
            }
        }
        assert_eq!(out.pixel(32, 42), [20, 20, 20]);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageRaster::filled(50, 40, [77, 88, 99]);
        let l = template_landmarks(50, 40);
        let dst = triangulate(&l.points, 50, 40).unwrap();
        let moved: Vec<_> = dst
            .vertices
            .iter()
            .enumerate()
            .map(|(i, p)| if i < 68 { Point::new(p.x * 0.9 + 2.0, p.y * 1.05) } else { *p })
            .collect();
        let src = dst.with_vertices(moved).unwrap();
        let out = warp_piecewise_affine(&img, &src, &dst).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn topology_mismatch_is_rejected() {
        let a = triangulate(&template_landmarks(50, 50).points, 50, 50).unwrap();
        let mut b = a.clone();
        b.triangles.pop();
        let img = ImageRaster::filled(50, 50, [0, 0, 0]);
        assert_eq!(
            warp_piecewise_affine(&img, &a, &b),
            Err(GeometryError::TopologyMismatch)
        );
    }

    #[test]
    fn locality_within_source_bounding_box() {
        // perturbing source pixels outside a triangle's source bbox (+1 px) must not
        // change destination pixels strictly inside the corresponding triangle
        let img = noise_image(64, 64, 2);
        let l = template_landmarks(64, 64);
        let dst = triangulate(&l.points, 64, 64).unwrap();
        let moved: Vec<_> = dst
            .vertices
            .iter()
            .enumerate()
            .map(|(i, p)| if i < 68 { Point::new(p.x + 1.7, p.y - 0.6) } else { *p })
            .collect();
        let src = dst.with_vertices(moved).unwrap();
        let base = warp_piecewise_affine(&img, &src, &dst).unwrap();
        let tri = dst.triangles[dst.triangles.len() / 2];
        let sv = tri.map(|i| src.vertices[i]);
        let bx0 = sv.iter().map(|p| p.x).fold(f64::MAX, f64::min).floor() - 1.0;
        let bx1 = sv.iter().map(|p| p.x).fold(f64::MIN, f64::max).ceil() + 1.0;
        let by0 = sv.iter().map(|p| p.y).fold(f64::MAX, f64::min).floor() - 1.0;
        let by1 = sv.iter().map(|p| p.y).fold(f64::MIN, f64::max).ceil() + 1.0;
        let mut perturbed = img.clone();
        for y in 0..64u32 {
            for x in 0..64u32 {
                let inside = (x as f64) >= bx0 && (x as f64) <= bx1 && (y as f64) >= by0 && (y as f64) <= by1;
                if !inside {
                    perturbed.set_pixel(x, y, [0, 255, 0]);
                }
            }
        }
        let out = warp_piecewise_affine(&perturbed, &src, &dst).unwrap();
        let dv = tri.map(|i| dst.vertices[i]);
        let mut checked = 0;
        for y in 0..64u32 {
            for x in 0..64u32 {
                let l = barycentric(Point::new(x as f64, y as f64), dv[0], dv[1], dv[2]).unwrap();
                if l.iter().all(|&v| v > 1e-6) {
                    assert_eq!(out.pixel(x, y), base.pixel(x, y));
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }
}
