use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::{add, scale, sub, Point3, TriangleMesh};

/// Points on a surface with their unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceSamples {
    pub points: Vec<Point3>,
    pub normals: Vec<Point3>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area-uniform samples; each normal is the face normal of the source
/// triangle.
pub fn sample_surface_points(mesh: &TriangleMesh, count: usize, seed: u64) -> SurfaceSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ntri = mesh.triangles().len();
    let mut cdf = Vec::with_capacity(ntri);
    let mut acc = 0.0;
    for t in 0..ntri {
        acc += mesh.area(t);
        cdf.push(acc);
    }
    let total = acc;
    if ntri == 0 || !(total > 0.0) {
        return SurfaceSamples {
            points: Vec::new(),
            normals: Vec::new(),
        };
    }
    let normals_by_face: Vec<Point3> = (0..ntri).map(|t| mesh.face_normal(t)).collect();

    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random::<f64>() * total;
        let t = cdf.partition_point(|&c| c <= u).min(ntri - 1);
        let [a, b, c] = mesh.corners(t);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        // (1 - r1)·a + r1(1 - r2)·b + r1 r2·c
        let p = add(a, add(scale(sub(b, a), r1 * (1.0 - r2)), scale(sub(c, a), r1 * r2)));
        points.push(p);
        normals.push(normals_by_face[t]);
    }
    SurfaceSamples { points, normals }
}
