use std::f64::consts::PI;

use rayon::prelude::*;

use super::mesh::{cross, dot, norm, sub, Point3, TriangleMesh};

/// Signed solid angle subtended by triangle `abc` at `p`, divided by 4π.
#[inline]
fn triangle_winding(p: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    let (a, b, c) = (sub(a, p), sub(b, p), sub(c, p));
    let (la, lb, lc) = (norm(a), norm(b), norm(c));
    let num = dot(a, cross(b, c));
    let den = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la;
    2.0 * num.atan2(den) / (4.0 * PI)
}

/// Generalized winding number of `mesh` at `p`.
pub fn winding_number(mesh: &TriangleMesh, p: Point3) -> f64 {
    let verts = mesh.vertices();
    mesh.triangles()
        .iter()
        .map(|&[i, j, k]| triangle_winding(p, verts[i], verts[j], verts[k]))
        .sum()
}

/// `true` where the generalized winding number exceeds one half.
///
/// Non-watertight meshes are accepted with a warning; the winding number
/// degrades gracefully around small cracks.
pub fn inside_test(mesh: &TriangleMesh, points: &[Point3]) -> Vec<bool> {
    if !mesh.is_watertight() {
        log::warn!("inside test on a mesh that is not watertight; labels near open edges may be unreliable");
    }
    points.par_iter().map(|&p| winding_number(mesh, p) > 0.5).collect()
}
