use std::collections::{BTreeMap, HashMap, HashSet};

use robust::Coord;

use super::{GeometryError, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    /// Counter-clockwise (in the orient2d sense) vertex index triples.
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Same topology over a different vertex list.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<TriangleMesh, GeometryError> {
        if vertices.len() != self.vertices.len() {
            return Err(GeometryError::PointCountMismatch {
                left: self.vertices.len(),
                right: vertices.len(),
            });
        }
        Ok(TriangleMesh {
            vertices,
            triangles: self.triangles.clone(),
        })
    }

    pub fn triangle_area(&self, t: [usize; 3]) -> f64 {
        let [a, b, c] = t.map(|i| self.vertices[i]);
        0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs()
    }

    pub fn total_area(&self) -> f64 {
        self.triangles.iter().map(|&t| self.triangle_area(t)).sum()
    }
}

/// Corners and edge midpoints of the `[0, width] x [0, height]` rectangle.
pub fn boundary_anchors(width: u32, height: u32) -> [Point; 8] {
    let (w, h) = (width as f64, height as f64);
    [
        Point::new(0.0, 0.0),
        Point::new(w / 2.0, 0.0),
        Point::new(w, 0.0),
        Point::new(w, h / 2.0),
        Point::new(w, h),
        Point::new(w / 2.0, h),
        Point::new(0.0, h),
        Point::new(0.0, h / 2.0),
    ]
}

/// Delaunay mesh of `points` plus the eight frame anchors, so the triangles tile the
/// whole image rectangle. Anchor vertices follow the input points in the vertex list.
pub fn triangulate(points: &[Point], width: u32, height: u32) -> Result<TriangleMesh, GeometryError> {
    if !has_non_collinear_triple(points) {
        return Err(GeometryError::DegenerateConfiguration(
            "need at least three non-collinear points".into(),
        ));
    }
    for p in points {
        if !(p.x.is_finite() && p.y.is_finite())
            || p.x < 0.0
            || p.y < 0.0
            || p.x > width as f64
            || p.y > height as f64
        {
            return Err(GeometryError::OutOfFrame {
                x: p.x,
                y: p.y,
                width,
                height,
            });
        }
    }
    let mut vertices = points.to_vec();
    vertices.extend_from_slice(&boundary_anchors(width, height));
    let triangles = delaunay(&vertices)?;
    Ok(TriangleMesh {
        vertices,
        triangles,
    })
}

fn coord(p: Point) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

fn orient(pts: &[Point], a: usize, b: usize, c: usize) -> f64 {
    robust::orient2d(coord(pts[a]), coord(pts[b]), coord(pts[c]))
}

/// > 0 when `d` is strictly inside the circumcircle of counter-clockwise `(a, b, c)`.
fn incircle(pts: &[Point], a: usize, b: usize, c: usize, d: usize) -> f64 {
    robust::incircle(coord(pts[a]), coord(pts[b]), coord(pts[c]), coord(pts[d]))
}

fn has_non_collinear_triple(points: &[Point]) -> bool {
    if points.len() < 3 {
        return false;
    }
    let a = 0;
    let Some(b) = (1..points.len()).find(|&i| points[i] != points[a]) else {
        return false;
    };
    (0..points.len()).any(|c| orient(points, a, b, c) != 0.0)
}

/// Delaunay triangulation of a bare point set (convex hull coverage).
///
/// Exact predicates throughout. Where several points are cocircular on an empty circle,
/// the cell is fanned from its lowest-index vertex, so for four cocircular points the
/// chosen diagonal is the one touching the lowest index. Duplicate points keep only
/// their first occurrence; later copies are left unreferenced.
pub fn delaunay(points: &[Point]) -> Result<Vec<[usize; 3]>, GeometryError> {
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(GeometryError::DegenerateConfiguration(
            "non-finite coordinate".into(),
        ));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (p, q) = (points[i], points[j]);
        p.x.total_cmp(&q.x)
            .then(p.y.total_cmp(&q.y))
            .then(i.cmp(&j))
    });
    order.dedup_by(|later, earlier| points[*later] == points[*earlier]);

    let mut mesh = Mesh::default();
    sweep(points, &order, &mut mesh)?;
    mesh.legalize(points);
    Ok(mesh.canonical(points))
}

#[derive(Default)]
struct Mesh {
    triangles: Vec<[usize; 3]>,
    edges: HashMap<(usize, usize), usize>,
}

impl Mesh {
    fn push(&mut self, t: [usize; 3]) {
        let idx = self.triangles.len();
        self.triangles.push(t);
        self.index(idx);
    }

    fn index(&mut self, idx: usize) {
        let [a, b, c] = self.triangles[idx];
        self.edges.insert((a, b), idx);
        self.edges.insert((b, c), idx);
        self.edges.insert((c, a), idx);
    }

    fn unindex(&mut self, idx: usize) {
        let [a, b, c] = self.triangles[idx];
        self.edges.remove(&(a, b));
        self.edges.remove(&(b, c));
        self.edges.remove(&(c, a));
    }

    fn third(&self, idx: usize, a: usize, b: usize) -> usize {
        let t = self.triangles[idx];
        *t.iter().find(|&&v| v != a && v != b).expect("triangle has three vertices")
    }

    /// Lawson flips until every interior edge is locally Delaunay.
    fn legalize(&mut self, pts: &[Point]) {
        let mut stack: Vec<(usize, usize)> = self.edges.keys().copied().collect();
        stack.sort_unstable();
        while let Some((a, b)) = stack.pop() {
            let (Some(&t1), Some(&t2)) = (self.edges.get(&(a, b)), self.edges.get(&(b, a))) else {
                continue;
            };
            let c = self.third(t1, a, b);
            let d = self.third(t2, b, a);
            if incircle(pts, a, b, c, d) <= 0.0 {
                continue;
            }
            self.unindex(t1);
            self.unindex(t2);
            self.triangles[t1] = [a, d, c];
            self.triangles[t2] = [d, b, c];
            self.index(t1);
            self.index(t2);
            stack.extend([(a, d), (d, b), (b, c), (c, a)]);
        }
    }

    /// Merge triangles sharing a circumcircle into cells and fan each cell from its
    /// lowest-index vertex.
    fn canonical(&self, pts: &[Point]) -> Vec<[usize; 3]> {
        let n = self.triangles.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for (&(a, b), &t1) in &self.edges {
            if a > b {
                continue;
            }
            let Some(&t2) = self.edges.get(&(b, a)) else {
                continue;
            };
            let c = self.third(t1, a, b);
            let d = self.third(t2, b, a);
            if incircle(pts, a, b, c, d) == 0.0 {
                let (r1, r2) = (find(&mut parent, t1), find(&mut parent, t2));
                if r1 != r2 {
                    parent[r1.max(r2)] = r1.min(r2);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for t in 0..n {
            let r = find(&mut parent, t);
            groups.entry(r).or_default().push(t);
        }
        let mut out = Vec::with_capacity(n);
        for members in groups.values() {
            if members.len() == 1 {
                out.push(rotate_min_first(self.triangles[members[0]]));
                continue;
            }
            let directed: HashSet<(usize, usize)> = members
                .iter()
                .flat_map(|&t| {
                    let [a, b, c] = self.triangles[t];
                    [(a, b), (b, c), (c, a)]
                })
                .collect();
            let next: HashMap<usize, usize> = directed
                .iter()
                .filter(|(a, b)| !directed.contains(&(*b, *a)))
                .map(|&(a, b)| (a, b))
                .collect();
            let start = *next.keys().min().expect("cell has a boundary");
            let mut polygon = vec![start];
            let mut v = next[&start];
            while v != start {
                polygon.push(v);
                v = next[&v];
            }
            for w in polygon[1..].windows(2) {
                out.push([start, w[0], w[1]]);
            }
        }
        out.sort_unstable();
        out
    }
}

fn rotate_min_first(t: [usize; 3]) -> [usize; 3] {
    let m = (0..3).min_by_key(|&i| t[i]).unwrap();
    [t[m], t[(m + 1) % 3], t[(m + 2) % 3]]
}

/// Incremental lexicographic sweep: each new point lies outside the current hull and
/// is fanned to the hull edges it sees.
fn sweep(pts: &[Point], order: &[usize], mesh: &mut Mesh) -> Result<(), GeometryError> {
    let degenerate = || GeometryError::DegenerateConfiguration("all points are collinear".into());
    if order.len() < 3 {
        return Err(degenerate());
    }
    let k = (2..order.len())
        .find(|&k| orient(pts, order[0], order[1], order[k]) != 0.0)
        .ok_or_else(degenerate)?;
    let apex = order[k];
    let left = orient(pts, order[0], order[1], apex) > 0.0;
    for w in order[..k].windows(2) {
        if left {
            mesh.push([w[0], w[1], apex]);
        } else {
            mesh.push([w[1], w[0], apex]);
        }
    }
    let mut hull: Vec<usize> = if left {
        order[..k].iter().copied().chain([apex]).collect()
    } else {
        [order[0], apex]
            .into_iter()
            .chain(order[1..k].iter().rev().copied())
            .collect()
    };

    for &q in &order[k + 1..] {
        let n = hull.len();
        let visible: Vec<bool> = (0..n)
            .map(|i| orient(pts, hull[i], hull[(i + 1) % n], q) < 0.0)
            .collect();
        let start = (0..n)
            .find(|&i| visible[i] && !visible[(i + n - 1) % n])
            .ok_or_else(|| GeometryError::DegenerateConfiguration("point inside hull during sweep".into()))?;
        let mut last = start;
        while visible[(last + 1) % n] && (last + 1) % n != start {
            last = (last + 1) % n;
        }
        let mut i = start;
        loop {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            mesh.push([b, a, q]);
            if i == last {
                break;
            }
            i = (i + 1) % n;
        }
        // keep hull[start], drop the interior of the visible chain, insert q
        hull.rotate_left(start);
        let chain_len = (last + n - start) % n + 1;
        hull.drain(1..chain_len);
        hull.insert(1, q);
    }
    Ok(())
}
