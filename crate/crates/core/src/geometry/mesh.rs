use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
pub(crate) fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
pub(crate) fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
#[inline]
pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
#[inline]
pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
#[inline]
pub(crate) fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}
#[inline]
pub(crate) fn normalized(a: Point3) -> Point3 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        a
    }
}

/// Indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    watertight: bool,
}

impl TriangleMesh {
    /// Validates indices and records whether every undirected edge is shared
    /// by exactly two triangles.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if let Some(bad) = triangles.iter().flatten().find(|&&i| i >= vertices.len()) {
            return Err(Error::UnreadableFile {
                path: Default::default(),
                reason: format!("vertex index {bad} out of range ({} vertices)", vertices.len()),
            });
        }
        let watertight = edges_closed(&triangles);
        Ok(Self {
            vertices,
            triangles,
            watertight,
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn corners(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalised face normal (length = 2·area).
    pub fn face_cross(&self, t: usize) -> Point3 {
        let [a, b, c] = self.corners(t);
        cross(sub(b, a), sub(c, a))
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * norm(self.face_cross(t))
    }

    pub fn face_normal(&self, t: usize) -> Point3 {
        normalized(self.face_cross(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        bounds_of(&self.vertices)
    }

    /// Applies `transform` to every vertex.
    pub fn transformed(&self, transform: &NormalizationTransform) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| transform.apply(v)).collect(),
            triangles: self.triangles.clone(),
            watertight: self.watertight,
        }
    }

    /// Unsigned distance from `p` to the closest triangle (brute force).
    pub fn distance_to_surface(&self, p: Point3) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                point_triangle_distance_sq(p, a, b, c)
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

fn edges_closed(triangles: &[[usize; 3]]) -> bool {
    let mut count: HashMap<(usize, usize), u32> = HashMap::with_capacity(triangles.len() * 3);
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    count.values().all(|&n| n == 2)
}

pub(crate) fn bounds_of(points: &[Point3]) -> (Point3, Point3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Squared distance from `p` to triangle `abc` (Ericson, closest point on
/// triangle by Voronoi regions).
pub fn point_triangle_distance_sq(p: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return dot(ap, ap);
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return dot(bp, bp);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        let q = add(a, scale(ab, v));
        let d = sub(p, q);
        return dot(d, d);
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return dot(cp, cp);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        let q = add(a, scale(ac, w));
        let d = sub(p, q);
        return dot(d, d);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        let q = add(b, scale(sub(c, b), w));
        let d = sub(p, q);
        return dot(d, d);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let q = add(a, add(scale(ab, v), scale(ac, w)));
    let d = sub(p, q);
    dot(d, d)
}

/// Uniform scale followed by a translation: `x' = scale·x + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub scale: f64,
    pub translation: Point3,
}

impl Default for NormalizationTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            translation: [0.0; 3],
        }
    }

    /// Map that centres the box `[lo, hi]` at the origin and scales its
    /// longest side to 1.
    pub fn fit_box(lo: Point3, hi: Point3) -> Result<Self> {
        let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::ZeroExtent);
        }
        let scale = 1.0 / extent;
        let center = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5, (lo[2] + hi[2]) * 0.5];
        Ok(Self {
            scale,
            translation: [-center[0] * scale, -center[1] * scale, -center[2] * scale],
        })
    }

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        add(scale(p, self.scale), self.translation)
    }

    #[inline]
    pub fn invert(&self, p: Point3) -> Point3 {
        scale(sub(p, self.translation), 1.0 / self.scale)
    }

    pub fn inverse(&self) -> Self {
        let s = 1.0 / self.scale;
        Self {
            scale: s,
            translation: scale(self.translation, -s),
        }
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &Self) -> Self {
        Self {
            scale: self.scale * first.scale,
            translation: add(scale(first.translation, self.scale), self.translation),
        }
    }
}

/// Scales and centres `mesh` into `[-0.5, 0.5]³` with its longest axis
/// spanning the full range.
pub fn normalize_to_unit_box(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizationTransform)> {
    let (lo, hi) = mesh.bounds();
    let t = NormalizationTransform::fit_box(lo, hi)?;
    Ok((mesh.transformed(&t), t))
}
