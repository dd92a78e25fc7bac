//! Analytic test solids with closed meshes and exact inside predicates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::extract::extract_isosurface;
use crate::geometry::primitives::{box_mesh, icosphere};
use crate::geometry::{
    sample_occupancy_labelled, OccupancySet, Point3, TriangleMesh, NEAR_SURFACE_POINTS, UNIFORM_POINTS,
};
use crate::network::{FittedModel, HyperParams, PrimitiveMatrix, Quadric, QUADRIC_COEFFS};

/// Grid resolution used to mesh the curved fixtures.
pub const FIXTURE_RESOLUTION: usize = 96;

pub const SPHERE_RADIUS: f64 = 0.4;
pub const CUBE_HALF: f64 = 0.35;
pub const HOLE_RADIUS: f64 = 0.15;
pub const PLATE_HALF: [f64; 3] = [0.4, 0.4, 0.12];
pub const RING_OUTER: f64 = 0.3;
pub const RING_INNER: f64 = 0.15;
pub const NOTCH_HALF: f64 = 0.05;

/// A solid given by a signed distance bound (negative inside) and its mesh.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub mesh: TriangleMesh,
    sdf: fn(Point3) -> f64,
}

fn box_sdf(p: Point3, half: [f64; 3]) -> f64 {
    let q = [p[0].abs() - half[0], p[1].abs() - half[1], p[2].abs() - half[2]];
    let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
    outside + q[0].max(q[1]).max(q[2]).min(0.0)
}

fn z_cylinder(p: Point3, r: f64) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt() - r
}

fn sphere_sdf(p: Point3) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - SPHERE_RADIUS
}

fn cube_sdf(p: Point3) -> f64 {
    box_sdf(p, [CUBE_HALF; 3])
}

fn drilled_cube_sdf(p: Point3) -> f64 {
    cube_sdf(p).max(-z_cylinder(p, HOLE_RADIUS))
}

fn nested_sdf(p: Point3) -> f64 {
    let ring = z_cylinder(p, RING_OUTER).max(-z_cylinder(p, RING_INNER));
    let notch = p[1].abs() - NOTCH_HALF;
    let ring_minus_notch = ring.max(-notch);
    box_sdf(p, PLATE_HALF).max(-ring_minus_notch)
}

impl Fixture {
    fn meshed(name: &'static str, sdf: fn(Point3) -> f64) -> Self {
        let iso = extract_isosurface(|pts| pts.iter().map(|&p| sdf(p)).collect(), FIXTURE_RESOLUTION, 0.0);
        Self {
            name,
            mesh: iso.to_mesh().expect("fixture mesh is valid"),
            sdf,
        }
    }

    /// Ball of radius 0.4 at the origin.
    pub fn sphere() -> Self {
        Self {
            name: "sphere",
            mesh: icosphere([0.0; 3], SPHERE_RADIUS, 4),
            sdf: sphere_sdf,
        }
    }

    /// Axis-aligned cube of half-extent 0.35.
    pub fn cube() -> Self {
        Self {
            name: "cube",
            mesh: box_mesh([-CUBE_HALF; 3], [CUBE_HALF; 3]),
            sdf: cube_sdf,
        }
    }

    /// The cube with a z-axis hole of radius 0.15 (genus 1).
    pub fn cube_minus_cylinder() -> Self {
        Self::meshed("cube_minus_cylinder", drilled_cube_sdf)
    }

    /// A plate minus (ring minus a notch slab): the ring-shaped slot is
    /// interrupted by two bridges where the notch crosses it.
    pub fn nested_difference() -> Self {
        Self::meshed("nested_difference", nested_sdf)
    }

    pub fn sdf(&self, p: Point3) -> f64 {
        (self.sdf)(p)
    }

    pub fn contains(&self, p: Point3) -> bool {
        self.sdf(p) < 0.0
    }

    /// Mesh-protocol occupancy set labelled by the closed-form predicate.
    pub fn occupancy(&self, seed: u64) -> OccupancySet {
        self.occupancy_with(NEAR_SURFACE_POINTS, UNIFORM_POINTS, seed)
    }

    pub fn occupancy_with(&self, near: usize, uniform: usize, seed: u64) -> OccupancySet {
        sample_occupancy_labelled(&self.mesh, near, uniform, seed, |pts| {
            pts.iter().map(|&p| self.contains(p)).collect()
        })
    }
}

/// `k·(|x − c|² − r²)`.
pub fn ball(center: Point3, r: f64, k: f64) -> Quadric {
    let c = center;
    [
        k,
        k,
        k,
        -2.0 * k * c[0],
        -2.0 * k * c[1],
        -2.0 * k * c[2],
        k * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2] - r * r),
    ]
}

/// Half-space `k·(s·x_axis − h) ≤ 0`.
pub fn half_space(axis: usize, sign: f64, h: f64, k: f64) -> Quadric {
    let mut q = [0.0; QUADRIC_COEFFS];
    q[3 + axis] = sign * k;
    q[6] = -h * k;
    q
}

/// Six half-spaces bounding `[-h, h]³`.
pub fn cube_planes(h: f64, k: f64) -> Vec<Quadric> {
    (0..3)
        .flat_map(|a| [half_space(a, 1.0, h, k), half_space(a, -1.0, h, k)])
        .collect()
}

/// Infinite cylinder of radius `r` along z through the origin.
pub fn z_cylinder_quadric(r: f64, k: f64) -> Quadric {
    [k, k, 0.0, 0.0, 0.0, 0.0, -k * r * r]
}

/// Binary stage-2 model whose branches are the given lists of intermediate
/// shapes. Rows with negative squared terms go to the inverse half; equal
/// rows within a branch share one slot.
pub fn binary_model(p: usize, c: usize, cover: &[Vec<Quadric>], residual: &[Vec<Quadric>]) -> FittedModel {
    let hyper = HyperParams {
        p,
        c,
        code_size: 4,
        hidden: 4,
        ..Default::default()
    };
    let mut mats = Vec::new();
    let mut sels = Vec::new();
    let mut gates = Vec::new();
    for shapes in [cover, residual] {
        assert!(shapes.len() <= c, "too many intermediate shapes");
        let mut prims = Tensor::zeros(p, QUADRIC_COEFFS);
        let mut rows: Vec<(usize, Quadric)> = Vec::new();
        let (mut convex, mut inverse) = (0, p / 2);
        let mut t = Tensor::zeros(p, c);
        let mut w = Tensor::zeros(c, 1);
        for (i, shape) in shapes.iter().enumerate() {
            w.set(i, 0, 1.0);
            for q in shape {
                let k = match rows.iter().find(|(_, r)| r == q) {
                    Some(&(k, _)) => k,
                    None => {
                        let k = if q[..3].iter().any(|&v| v < 0.0) {
                            inverse += 1;
                            assert!(inverse <= p, "out of inverse rows");
                            inverse - 1
                        } else {
                            convex += 1;
                            assert!(convex <= p / 2, "out of convex rows");
                            convex - 1
                        };
                        for (m, &v) in q.iter().enumerate() {
                            prims.set(k, m, v);
                        }
                        rows.push((k, *q));
                        k
                    }
                };
                t.set(k, i, 1.0f32);
            }
        }
        mats.push(PrimitiveMatrix(prims));
        sels.push(t);
        gates.push(w);
    }
    let [t_c, t_r]: [Tensor<f32>; 2] = sels.try_into().unwrap();
    let [w_c, w_r]: [Tensor<f32>; 2] = gates.try_into().unwrap();
    FittedModel::from_parts(hyper, &mats[0], &mats[1], [t_c, t_r], [w_c, w_r]).expect("valid binary model")
}

/// Random binary model: sign-consistent quadrics, sparse selections and
/// random gates with at least one active cover shape.
pub fn random_binary_model(seed: u64, p: usize, c: usize) -> FittedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyper = HyperParams {
        p,
        c,
        code_size: 4,
        hidden: 4,
        ..Default::default()
    };
    let mut mats = Vec::new();
    let mut sels = Vec::new();
    let mut gates = Vec::new();
    for _ in 0..2 {
        let prims = Tensor::from_fn(p, QUADRIC_COEFFS, |k, m| {
            let sign = if k < p / 2 { 1.0 } else { -1.0 };
            match m {
                0..=2 => sign * rng.random_range(0.0..4.0),
                3..=5 => rng.random_range(-1.0..1.0),
                _ => rng.random_range(-0.4..0.1),
            }
        });
        mats.push(PrimitiveMatrix(prims));
        sels.push(Tensor::from_fn(
            p,
            c,
            |_, _| if rng.random_bool(0.3) { 1.0f32 } else { 0.0 },
        ));
        gates.push(Tensor::from_fn(
            c,
            1,
            |_, _| if rng.random_bool(0.6) { 1.0f32 } else { 0.0 },
        ));
    }
    // keep the cover non-empty
    gates[0].set(0, 0, 1.0);
    sels[0].set(0, 0, 1.0);
    let [t_c, t_r]: [Tensor<f32>; 2] = sels.try_into().unwrap();
    let [w_c, w_r]: [Tensor<f32>; 2] = gates.try_into().unwrap();
    FittedModel::from_parts(hyper, &mats[0], &mats[1], [t_c, t_r], [w_c, w_r]).expect("valid binary model")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::inside_test;

    #[test]
    fn meshes_are_closed_with_expected_topology() {
        for (f, chi) in [(Fixture::cube_minus_cylinder(), 0), (Fixture::nested_difference(), -2)] {
            assert!(f.mesh.is_watertight(), "{}", f.name);
            let iso = crate::extract::IsoMesh {
                vertices: f.mesh.vertices().to_vec(),
                triangles: f.mesh.triangles().to_vec(),
                normals: Vec::new(),
            };
            assert_eq!(iso.euler_characteristic(), chi, "{}", f.name);
        }
    }

    #[test]
    fn predicate_agrees_with_winding_number() {
        let f = Fixture::cube_minus_cylinder();
        let occ = f.occupancy_with(300, 300, 1);
        let pts: Vec<Point3> = (0..occ.len()).map(|i| occ.point(i)).collect();
        let wn = inside_test(&f.mesh, &pts);
        let agree = wn.iter().zip(&occ.labels).filter(|(a, b)| a == b).count();
        assert!(agree as f64 >= 0.97 * occ.len() as f64, "{agree}/{}", occ.len());
    }
}
