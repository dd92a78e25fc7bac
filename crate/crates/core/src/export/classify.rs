use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::network::Quadric;

/// Default relative tolerance for treating a coefficient as zero.
pub const CLASSIFY_TOL: f64 = 1e-3;

/// A native solid matching one convex quadric leaf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasicPrimitive {
    Sphere {
        center: Point3,
        radius: f64,
    },
    Ellipsoid {
        center: Point3,
        radii: Point3,
    },
    /// Infinite along `axis`; `center` has a zero `axis` component and
    /// `radii` lists the two cross-section radii in axis order.
    Cylinder {
        axis: usize,
        center: Point3,
        radii: [f64; 2],
    },
    /// `normal · x ≤ offset`, unit normal.
    HalfSpace {
        normal: Point3,
        offset: f64,
    },
    /// `|x_axis − center| ≤ half_width`.
    Slab {
        axis: usize,
        center: f64,
        half_width: f64,
    },
    /// No point satisfies the quadric.
    Empty,
}

/// Symbolic classification of a convex quadric (`a, b, c ≥ 0`).
///
/// A coefficient counts as zero when below `tol · max|coef|`. Returns
/// `None` for shapes with no native counterpart (paraboloids, degenerate
/// rows).
pub fn classify_quadric(q: &Quadric, tol: f64) -> Option<BasicPrimitive> {
    let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let q = q.map(|v| v / scale);
    let zero = |v: f64| v.abs() < tol;
    let quad: Vec<usize> = (0..3).filter(|&k| !zero(q[k])).collect();
    if quad.iter().any(|&k| q[k] < 0.0) {
        return None;
    }
    // a linear term along an axis without a squared term makes a paraboloid
    // (or, with no squared terms at all, a plane)
    let free_linear: Vec<usize> = (0..3).filter(|&k| !quad.contains(&k) && !zero(q[3 + k])).collect();
    if quad.is_empty() {
        let n = [q[3], q[4], q[5]];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if free_linear.is_empty() || len == 0.0 {
            return None;
        }
        return Some(BasicPrimitive::HalfSpace {
            normal: n.map(|v| v / len),
            offset: -q[6] / len,
        });
    }
    if !free_linear.is_empty() {
        return None;
    }
    // Σ a_k (x_k − c_k)² ≤ rhs over the squared axes
    let mut center = [0.0; 3];
    let mut rhs = -q[6];
    for &k in &quad {
        center[k] = -q[3 + k] / (2.0 * q[k]);
        rhs += q[3 + k] * q[3 + k] / (4.0 * q[k]);
    }
    if rhs <= 0.0 {
        return Some(BasicPrimitive::Empty);
    }
    let radius = |k: usize| (rhs / q[k]).sqrt();
    Some(match quad.len() {
        3 => {
            let radii = [radius(0), radius(1), radius(2)];
            let (lo, hi) = radii
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
            if hi - lo <= tol * hi {
                BasicPrimitive::Sphere {
                    center,
                    radius: (radii[0] + radii[1] + radii[2]) / 3.0,
                }
            } else {
                BasicPrimitive::Ellipsoid { center, radii }
            }
        }
        2 => {
            let axis = (0..3).find(|k| !quad.contains(k)).expect("one free axis");
            BasicPrimitive::Cylinder {
                axis,
                center,
                radii: [radius(quad[0]), radius(quad[1])],
            }
        }
        _ => BasicPrimitive::Slab {
            axis: quad[0],
            center: center[quad[0]],
            half_width: radius(quad[0]),
        },
    })
}

impl BasicPrimitive {
    /// Exact membership of the classified solid.
    pub fn contains(&self, x: Point3) -> bool {
        match *self {
            Self::Sphere { center, radius } => {
                (0..3).map(|k| (x[k] - center[k]).powi(2)).sum::<f64>() <= radius * radius
            }
            Self::Ellipsoid { center, radii } => {
                (0..3).map(|k| ((x[k] - center[k]) / radii[k]).powi(2)).sum::<f64>() <= 1.0
            }
            Self::Cylinder { axis, center, radii } => {
                let others: Vec<usize> = (0..3).filter(|&k| k != axis).collect();
                others
                    .iter()
                    .zip(radii)
                    .map(|(&k, r)| ((x[k] - center[k]) / r).powi(2))
                    .sum::<f64>()
                    <= 1.0
            }
            Self::HalfSpace { normal, offset } => normal[0] * x[0] + normal[1] * x[1] + normal[2] * x[2] <= offset,
            Self::Slab {
                axis,
                center,
                half_width,
            } => (x[axis] - center).abs() <= half_width,
            Self::Empty => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::Ellipsoid { .. } => "ellipsoid",
            Self::Cylinder { .. } => "cylinder",
            Self::HalfSpace { .. } => "half-space",
            Self::Slab { .. } => "slab",
            Self::Empty => "empty",
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn unit_sphere_by_completing_the_square() {
        assert_eq!(
            classify_quadric(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, -0.25], CLASSIFY_TOL),
            Some(BasicPrimitive::Sphere {
                center: [0.0; 3],
                radius: 0.5
            })
        );
    }

    #[test]
    fn z_cylinder() {
        match classify_quadric(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, -0.09], CLASSIFY_TOL) {
            Some(BasicPrimitive::Cylinder { axis: 2, center, radii }) => {
                assert_eq!(center, [0.0; 3]);
                assert_relative_eq!(radii[0], 0.3, epsilon = 1e-12);
                assert_relative_eq!(radii[1], 0.3, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn plane() {
        assert_eq!(
            classify_quadric(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -0.2], CLASSIFY_TOL),
            Some(BasicPrimitive::HalfSpace {
                normal: [0.0, 0.0, 1.0],
                offset: 0.2
            })
        );
    }

    #[test]
    fn shifted_ellipsoid_and_slab() {
        // 4(x−0.1)² + (y+0.2)² + z² ≤ 0.04
        let q = [4.0, 1.0, 1.0, -0.8, 0.4, 0.0, 0.04 + 0.04 - 0.04];
        match classify_quadric(&q, CLASSIFY_TOL) {
            Some(BasicPrimitive::Ellipsoid { center, radii }) => {
                assert_relative_eq!(center[0], 0.1, epsilon = 1e-12);
                assert_relative_eq!(center[1], -0.2, epsilon = 1e-12);
                assert_relative_eq!(radii[0], 0.1, epsilon = 1e-12);
                assert_relative_eq!(radii[1], 0.2, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        // (y − 0.1)² ≤ 0.01
        assert_eq!(
            classify_quadric(&[0.0, 1.0, 0.0, 0.0, -0.2, 0.0, 0.0], CLASSIFY_TOL),
            Some(BasicPrimitive::Slab {
                axis: 1,
                center: 0.1,
                half_width: 0.1
            })
        );
    }

    #[test]
    fn paraboloid_and_degenerate_rows_are_unclassified() {
        assert_eq!(
            classify_quadric(&[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0], CLASSIFY_TOL),
            None
        );
        assert_eq!(classify_quadric(&[0.0; 7], CLASSIFY_TOL), None);
        assert_eq!(
            classify_quadric(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0], CLASSIFY_TOL),
            None
        );
        assert_eq!(
            classify_quadric(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0], CLASSIFY_TOL),
            Some(BasicPrimitive::Empty)
        );
    }

    #[test]
    fn tiny_terms_are_ignored() {
        let q = [528.72, 0.18, 0.1, -6.28, -0.13, 0.02, -66.87];
        assert!(matches!(
            classify_quadric(&q, CLASSIFY_TOL),
            Some(BasicPrimitive::Slab { axis: 0, .. })
        ));
    }

    fn quadric() -> impl Strategy<Value = Quadric> {
        (
            prop::array::uniform3(prop_oneof![Just(0.0), 0.1f64..5.0]),
            prop::array::uniform3(-1.0f64..1.0),
            -1.0f64..0.5,
        )
            .prop_map(|(a, l, g)| [a[0], a[1], a[2], l[0], l[1], l[2], g])
    }

    proptest! {
        #[test]
        fn power_of_two_scaling_is_exact(q in quadric(), e in -8i32..8) {
            let lambda = 2f64.powi(e);
            prop_assert_eq!(classify_quadric(&q, CLASSIFY_TOL), classify_quadric(&q.map(|v| v * lambda), CLASSIFY_TOL));
        }

        #[test]
        fn classified_solid_matches_the_quadric(q in quadric(), x in prop::array::uniform3(-0.5f64..0.5)) {
            if let Some(prim) = classify_quadric(&q, 1e-12) {
                let v = crate::network::quadric_value(&q, x);
                prop_assume!(v.abs() > 1e-9);
                prop_assert_eq!(prim.contains(x), v <= 0.0);
            }
        }
    }
}
