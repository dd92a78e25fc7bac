use super::model::{PrimitiveMatrix, QUADRIC_COEFFS};
use crate::autodiff::{Real, Tensor};
use crate::error::Result;

/// Quadric feature row `(x², y², z², x, y, z, 1)`.
#[inline]
pub fn feature_row<S: Real>(p: [S; 3]) -> [S; QUADRIC_COEFFS] {
    [p[0] * p[0], p[1] * p[1], p[2] * p[2], p[0], p[1], p[2], S::one()]
}

/// Stacks [`feature_row`] for every point into `Q`.
pub fn query_features<S: Real>(points: &[[S; 3]]) -> Tensor<S> {
    let mut data = Vec::with_capacity(points.len() * QUADRIC_COEFFS);
    for &p in points {
        data.extend_from_slice(&feature_row(p));
    }
    Tensor::new(points.len(), QUADRIC_COEFFS, data).expect("feature row length")
}

/// Value of one quadric at `p`; non-positive inside.
#[inline]
pub fn quadric_value(q: &[f64; QUADRIC_COEFFS], p: [f64; 3]) -> f64 {
    let f = feature_row(p);
    f.iter().zip(q).map(|(a, b)| a * b).sum()
}

/// Approximated signed distances `D = Q·Pᵀ`.
pub fn asd<S: Real>(q: &Tensor<S>, prims: &PrimitiveMatrix<S>) -> Result<Tensor<S>> {
    q.matmul_nt(&prims.0)
}

/// `Con = relu(D)·T`: zero inside every selected primitive, positive outside.
pub fn intersect<S: Real>(d: &Tensor<S>, t: &Tensor<S>) -> Result<Tensor<S>> {
    d.map(|x| x.max(S::zero())).matmul(t)
}

/// Masked min-union `a*(j) = minᵢ (Con(j,i) + (1 − Wᵢ)·θ)`.
pub fn union_min<S: Real>(con: &Tensor<S>, w: &[S], theta: S) -> Result<Tensor<S>> {
    let shifted = Tensor::from_fn(con.rows(), con.cols(), |r, i| con.get(r, i) + (S::one() - w[i]) * theta);
    Ok(shifted.min_rows()?.0)
}

/// Soft union `a⁺(j) = clip(Σᵢ Wᵢ·clip(1 − Con(j,i)))`.
pub fn union_soft<S: Real>(con: &Tensor<S>, w: &Tensor<S>) -> Result<Tensor<S>> {
    let clip = |x: S| x.max(S::zero()).min(S::one());
    Ok(con.map(|x| clip(S::one() - x)).matmul(w)?.map(clip))
}

/// `s*(j) = max(a*_C(j), α − a*_R(j))`.
pub fn difference_field<S: Real>(a_c: &Tensor<S>, a_r: &Tensor<S>, alpha: S) -> Result<Tensor<S>> {
    a_c.zip(a_r, "difference_field", |c, r| {
        let sub = alpha - r;
        if sub > c {
            sub
        } else {
            c
        }
    })
}

/// Number of entries with `s* < α/2`.
pub fn inside_count<S: Real>(s: &[S], alpha: S) -> usize {
    let half = alpha / S::of(2.0);
    s.iter().filter(|&&v| v < half).count()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn feature_rows() {
        let q = query_features(&[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [-0.3, 0.2, 0.1]]);
        assert_eq!(q.row(0), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(q.row(1), &[0.25, 0.0, 0.0, 0.5, 0.0, 0.0, 1.0]);
        let want = [0.09, 0.04, 0.01, -0.3, 0.2, 0.1, 1.0];
        for (a, b) in q.row(2).iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn asd_signs() {
        let prims = PrimitiveMatrix(m(
            2,
            7,
            &[
                1.0, 1.0, 1.0, 0.0, 0.0, 0.0, -0.25, -1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.25,
            ],
        ));
        let d = asd(&query_features(&[[0.0; 3], [0.5, 0.0, 0.0]]), &prims).unwrap();
        assert_eq!(d.row(0), &[-0.25, 0.25]);
        assert_eq!(d.get(1, 0), 0.0);
    }

    #[test]
    fn intersection_layer() {
        let d = m(1, 2, &[-0.1, 0.2]);
        assert_abs_diff_eq!(intersect(&d, &m(2, 1, &[1.0, 1.0])).unwrap().item(), 0.2);
        assert_eq!(intersect(&d, &m(2, 1, &[1.0, 0.0])).unwrap().item(), 0.0);
        assert_eq!(intersect(&d, &m(2, 1, &[0.0, 0.0])).unwrap().item(), 0.0);
    }

    #[test]
    fn unions() {
        let a = union_min(&m(1, 3, &[0.3, 0.0, 0.5]), &[1.0; 3], 100.0).unwrap();
        assert_eq!(a.item(), 0.0);
        let a = union_min(&m(1, 2, &[0.0, 0.4]), &[0.0, 1.0], 100.0).unwrap();
        assert_eq!(a.item(), 0.4);
        let a = union_min(&m(1, 2, &[0.7, 0.4]), &[0.0, 0.0], 100.0).unwrap();
        assert_eq!(a.item(), 100.4);

        assert_eq!(union_soft(&m(1, 1, &[0.0]), &m(1, 1, &[1.0])).unwrap().item(), 1.0);
        assert_eq!(union_soft(&m(1, 1, &[2.0]), &m(1, 1, &[1.0])).unwrap().item(), 0.0);
        let a = union_soft(&m(1, 2, &[0.5, 0.25]), &m(2, 1, &[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(a.item(), 0.625, epsilon = 1e-15);
    }

    #[test]
    fn difference_and_count() {
        let s = |c: f64, r: f64| difference_field(&m(1, 1, &[c]), &m(1, 1, &[r]), 0.2).unwrap().item();
        assert_eq!(s(0.0, 0.5), 0.0);
        assert_abs_diff_eq!(s(0.0, 0.0), 0.2);
        assert_eq!(s(0.3, 1.0), 0.3);
        assert_eq!(inside_count(&[0.0, 0.05, 0.2], 0.2), 2);
        assert_eq!(inside_count(&[0.2; 4], 0.2), 0);
    }
}
