use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row count above which the matrix kernels split work across threads.
const PAR_ROWS: usize = 1024;
/// Fixed block height for parallel reductions over rows. Partial sums are
/// combined in block order so results do not depend on the thread count.
const REDUCE_BLOCK: usize = 256;

/// Scalar type a [`Tensor`] can hold.
pub trait Real: Float + Debug + Default + Send + Sync + Sum + 'static {
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Dense row-major matrix. Scalars are `1x1`, vectors are `1xn` or `nx1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: [usize; 2],
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                lhs: [rows, cols],
                rhs: [data.len(), 1],
            });
        }
        Ok(Self {
            shape: [rows, cols],
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, S::zero())
    }

    pub fn filled(rows: usize, cols: usize, v: S) -> Self {
        Self {
            shape: [rows, cols],
            data: vec![v; rows * cols],
        }
    }

    pub fn scalar(v: S) -> Self {
        Self::filled(1, 1, v)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self {
            shape: [rows, cols],
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }
    #[inline]
    pub fn rows(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<S> {
        self.data
    }
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.shape[1] + c]
    }
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        let cols = self.shape[1];
        self.data[r * cols + c] = v;
    }
    pub fn row(&self, r: usize) -> &[S] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    /// Value of a `1x1` tensor.
    pub fn item(&self) -> S {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| T::of(v.f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape,
                rhs: other.shape,
            });
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: [rows, cols],
            });
        }
        Ok(Self {
            shape: [rows, cols],
            data: self.data.clone(),
        })
    }

    pub fn transpose(&self) -> Self {
        let [r, c] = self.shape;
        Self::from_fn(c, r, |i, j| self.data[j * c + i])
    }

    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.rows() {
            return Err(Error::ShapeMismatch {
                op: "slice_rows",
                lhs: self.shape,
                rhs: [start + count, self.cols()],
            });
        }
        let c = self.cols();
        Ok(Self {
            shape: [count, c],
            data: self.data[start * c..(start + count) * c].to_vec(),
        })
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let [n, k] = self.shape;
        let [k2, m] = rhs.shape;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape,
                rhs: rhs.shape,
            });
        }
        let mut out = vec![S::zero(); n * m];
        let row_kernel = |(i, orow): (usize, &mut [S])| {
            let arow = &self.data[i * k..(i + 1) * k];
            for (kk, &a) in arow.iter().enumerate() {
                if a == S::zero() {
                    continue;
                }
                let brow = &rhs.data[kk * m..(kk + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        };
        if n >= PAR_ROWS && m > 0 {
            out.par_chunks_mut(m).enumerate().for_each(row_kernel);
        } else if m > 0 {
            out.chunks_mut(m).enumerate().for_each(row_kernel);
        }
        Ok(Self {
            shape: [n, m],
            data: out,
        })
    }

    /// `self · rhsᵀ`.
    pub fn matmul_nt(&self, rhs: &Self) -> Result<Self> {
        let [n, k] = self.shape;
        let [m, k2] = rhs.shape;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape,
                rhs: rhs.shape,
            });
        }
        let mut out = vec![S::zero(); n * m];
        let row_kernel = |(i, orow): (usize, &mut [S])| {
            let arow = &self.data[i * k..(i + 1) * k];
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = &rhs.data[j * k..(j + 1) * k];
                let mut acc = S::zero();
                for (&a, &b) in arow.iter().zip(brow) {
                    acc = acc + a * b;
                }
                *o = acc;
            }
        };
        if n >= PAR_ROWS && m > 0 {
            out.par_chunks_mut(m).enumerate().for_each(row_kernel);
        } else if m > 0 {
            out.chunks_mut(m).enumerate().for_each(row_kernel);
        }
        Ok(Self {
            shape: [n, m],
            data: out,
        })
    }

    /// `selfᵀ · rhs`.
    pub fn matmul_tn(&self, rhs: &Self) -> Result<Self> {
        let [n, k] = self.shape;
        let [n2, m] = rhs.shape;
        if n != n2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_tn",
                lhs: self.shape,
                rhs: rhs.shape,
            });
        }
        let block = |lo: usize, hi: usize| {
            let mut acc = vec![S::zero(); k * m];
            for j in lo..hi {
                let arow = &self.data[j * k..(j + 1) * k];
                let brow = &rhs.data[j * m..(j + 1) * m];
                for (kk, &a) in arow.iter().enumerate() {
                    if a == S::zero() {
                        continue;
                    }
                    let orow = &mut acc[kk * m..(kk + 1) * m];
                    for (o, &b) in orow.iter_mut().zip(brow) {
                        *o = *o + a * b;
                    }
                }
            }
            acc
        };
        let data = if n >= PAR_ROWS {
            let nblocks = n.div_ceil(REDUCE_BLOCK);
            let partials: Vec<Vec<S>> = (0..nblocks)
                .into_par_iter()
                .map(|b| block(b * REDUCE_BLOCK, ((b + 1) * REDUCE_BLOCK).min(n)))
                .collect();
            let mut out = vec![S::zero(); k * m];
            for p in partials {
                for (o, v) in out.iter_mut().zip(p) {
                    *o = *o + v;
                }
            }
            out
        } else {
            block(0, n)
        };
        Ok(Self { shape: [k, m], data })
    }

    /// Per-row minimum and the first column attaining it.
    pub fn min_rows(&self) -> Result<(Self, Vec<usize>)> {
        let [n, c] = self.shape;
        if c == 0 {
            return Err(Error::EmptyDimension("min_rows"));
        }
        let mut vals = Vec::with_capacity(n);
        let mut arg = Vec::with_capacity(n);
        for r in 0..n {
            let row = &self.data[r * c..(r + 1) * c];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v < row[best] {
                    best = i;
                }
            }
            vals.push(row[best]);
            arg.push(best);
        }
        Ok((
            Self {
                shape: [n, 1],
                data: vals,
            },
            arg,
        ))
    }
}
