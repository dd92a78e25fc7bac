use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug)]
enum Op<S> {
    Param,
    Constant,
    MatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    SliceRows { src: usize, start: usize },
    Relu(usize),
    Clip01(usize),
    MinRows { src: usize, argmin: Vec<usize> },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, S),
    AddScalar(usize),
    Square(usize),
    Maximum(usize, usize),
    MaxScalar(usize, S),
    Abs(usize),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Records a forward computation so that [`Tape::backward`] can replay it
/// in reverse. Nodes are appended in evaluation order, so the node list is
/// already topologically sorted.
#[derive(Debug)]
pub struct Tape<S> {
    id: u64,
    nodes: Vec<Node<S>>,
    consumed: bool,
    nan_trap: bool,
}

/// Gradients returned by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    tape: u64,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Real> Gradients<S> {
    /// Gradient for `v`; `None` when `v` does not influence the loss or is
    /// not trainable.
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.index).and_then(|g| g.take())
    }
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
            nan_trap: cfg!(debug_assertions),
        }
    }

    /// Check every forward result for NaN/Inf.
    pub fn with_nan_trap(mut self, on: bool) -> Self {
        self.nan_trap = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Param, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        assert_eq!(v.tape, self.id, "variable from a different tape");
        &self.nodes[v.index].value
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { value, op, needs_grad });
        Var { tape: self.id, index }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVariable);
        }
        Ok(v.index)
    }

    fn record(&mut self, name: &'static str, value: Tensor<S>, op: Op<S>, inputs: &[usize]) -> Result<Var> {
        if self.nan_trap && !value.all_finite() {
            let inputs_finite = inputs.iter().all(|&i| self.nodes[i].value.all_finite());
            if inputs_finite {
                return Err(Error::NonFinite(name));
            }
        }
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        Ok(self.push(value, op, needs_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        self.record("matmul", v, Op::MatMul(ia, ib), &[ia, ib])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.transpose();
        self.record("transpose", v, Op::Transpose(ia), &[ia])
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.reshape(rows, cols)?;
        self.record("reshape", v, Op::Reshape(ia), &[ia])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.slice_rows(start, count)?;
        self.record("slice_rows", v, Op::SliceRows { src: ia, start }, &[ia])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.map(|x| x.max(S::zero()));
        self.record("relu", v, Op::Relu(ia), &[ia])
    }

    pub fn clip01(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.map(|x| x.max(S::zero()).min(S::one()));
        self.record("clip01", v, Op::Clip01(ia), &[ia])
    }

    pub fn min_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let (v, argmin) = self.nodes[ia].value.min_rows()?;
        self.record("min_rows", v, Op::MinRows { src: ia, argmin }, &[ia])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.zip(&self.nodes[ib].value, "add", |x, y| x + y)?;
        self.record("add", v, Op::Add(ia, ib), &[ia, ib])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.zip(&self.nodes[ib].value, "sub", |x, y| x - y)?;
        self.record("sub", v, Op::Sub(ia, ib), &[ia, ib])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia].value.zip(&self.nodes[ib].value, "mul", |x, y| x * y)?;
        self.record("mul", v, Op::Mul(ia, ib), &[ia, ib])
    }

    pub fn scale(&mut self, a: Var, s: S) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.map(|x| x * s);
        self.record("scale", v, Op::Scale(ia, s), &[ia])
    }

    pub fn add_scalar(&mut self, a: Var, s: S) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.map(|x| x + s);
        self.record("add_scalar", v, Op::AddScalar(ia), &[ia])
    }

    /// `s·a + b`, recorded as a scale followed by a shift.
    pub fn affine(&mut self, a: Var, s: S, b: S) -> Result<Var> {
        let scaled = self.scale(a, s)?;
        self.add_scalar(scaled, b)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.map(|x| x * x);
        self.record("square", v, Op::Square(ia), &[ia])
    }

    /// Elementwise maximum; ties send the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[ia]
            .value
            .zip(&self.nodes[ib].value, "maximum", |x, y| if y > x { y } else { x })?;
        self.record("maximum", v, Op::Maximum(ia, ib), &[ia, ib])
    }

    pub fn max_scalar(&mut self, a: Var, s: S) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.map(|x| if s > x { s } else { x });
        self.record("max_scalar", v, Op::MaxScalar(ia, s), &[ia])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = self.nodes[ia].value.map(|x| x.abs());
        self.record("abs", v, Op::Abs(ia), &[ia])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let v = Tensor::scalar(self.nodes[ia].value.sum());
        self.record("sum", v, Op::Sum(ia), &[ia])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let t = &self.nodes[ia].value;
        let n = t.len().max(1);
        let v = Tensor::scalar(t.sum() / S::of(n as f64));
        self.record("mean", v, Op::Mean(ia), &[ia])
    }

    /// Hash of every branch decision taken by the non-smooth kernels: relu
    /// and abs signs, clip regions, argmins and maximum winners. Two
    /// evaluations with equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(i) | Op::Abs(i) => {
                    for &x in self.nodes[*i].value.data() {
                        (x > S::zero()).hash(&mut h);
                    }
                }
                Op::Clip01(i) => {
                    for &x in self.nodes[*i].value.data() {
                        let region: u8 = if x <= S::zero() {
                            0
                        } else if x >= S::one() {
                            2
                        } else {
                            1
                        };
                        region.hash(&mut h);
                    }
                }
                Op::MinRows { argmin, .. } => argmin.hash(&mut h),
                Op::Maximum(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    for (&x, &y) in va.data().iter().zip(vb.data()) {
                        (y > x).hash(&mut h);
                    }
                }
                Op::MaxScalar(a, s) => {
                    for &x in self.nodes[*a].value.data() {
                        (*s > x).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse pass from a scalar `loss`. A tape supports exactly one
    /// backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<S>> {
        if self.consumed {
            return Err(Error::BackwardTwice);
        }
        let il = self.check(loss)?;
        let shape = self.nodes[il].value.shape();
        if shape != [1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[il] = Some(Tensor::scalar(S::one()));

        for idx in (0..=il).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let nodes = &self.nodes;
            let send = |target: usize, contrib: Tensor<S>, grads: &mut Vec<Option<Tensor<S>>>| {
                if !nodes[target].needs_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a = *a + *c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Param => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Constant => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    if nodes[*a].needs_grad {
                        send(*a, g.matmul_nt(vb)?, &mut grads);
                    }
                    if nodes[*b].needs_grad {
                        send(*b, va.matmul_tn(&g)?, &mut grads);
                    }
                }
                Op::Transpose(a) => send(*a, g.transpose(), &mut grads),
                Op::Reshape(a) => {
                    let [r, c] = nodes[*a].value.shape();
                    send(*a, g.reshape(r, c)?, &mut grads);
                }
                Op::SliceRows { src, start } => {
                    let [r, c] = nodes[*src].value.shape();
                    let mut full = Tensor::zeros(r, c);
                    full.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    send(*src, full, &mut grads);
                }
                Op::Relu(a) => {
                    let x = &nodes[*a].value;
                    send(
                        *a,
                        g.zip(x, "relu'", |gi, xi| if xi > S::zero() { gi } else { S::zero() })?,
                        &mut grads,
                    );
                }
                Op::Clip01(a) => {
                    let x = &nodes[*a].value;
                    let d = g.zip(x, "clip01'", |gi, xi| {
                        if xi > S::zero() && xi < S::one() {
                            gi
                        } else {
                            S::zero()
                        }
                    })?;
                    send(*a, d, &mut grads);
                }
                Op::MinRows { src, argmin } => {
                    let [r, c] = nodes[*src].value.shape();
                    let mut d = Tensor::zeros(r, c);
                    for (row, &col) in argmin.iter().enumerate() {
                        d.set(row, col, g.get(row, 0));
                    }
                    send(*src, d, &mut grads);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g.map(|x| -x), &mut grads);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    if nodes[*a].needs_grad {
                        send(*a, g.zip(vb, "mul'", |gi, y| gi * y)?, &mut grads);
                    }
                    if nodes[*b].needs_grad {
                        send(*b, g.zip(va, "mul'", |gi, x| gi * x)?, &mut grads);
                    }
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    send(*a, g.map(|x| x * s), &mut grads);
                }
                Op::AddScalar(a) => send(*a, g, &mut grads),
                Op::Square(a) => {
                    let x = &nodes[*a].value;
                    send(*a, g.zip(x, "square'", |gi, xi| gi * (xi + xi))?, &mut grads);
                }
                Op::Maximum(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    let mut da = g.clone();
                    let mut db = g;
                    for ((pa, pb), (&x, &y)) in da
                        .data_mut()
                        .iter_mut()
                        .zip(db.data_mut().iter_mut())
                        .zip(va.data().iter().zip(vb.data()))
                    {
                        if y > x {
                            *pa = S::zero();
                        } else {
                            *pb = S::zero();
                        }
                    }
                    send(*a, da, &mut grads);
                    send(*b, db, &mut grads);
                }
                Op::MaxScalar(a, s) => {
                    let s = *s;
                    let x = &nodes[*a].value;
                    send(
                        *a,
                        g.zip(x, "max_scalar'", |gi, xi| if s > xi { S::zero() } else { gi })?,
                        &mut grads,
                    );
                }
                Op::Abs(a) => {
                    let x = &nodes[*a].value;
                    let d = g.zip(x, "abs'", |gi, xi| {
                        if xi > S::zero() {
                            gi
                        } else if xi < S::zero() {
                            -gi
                        } else {
                            S::zero()
                        }
                    })?;
                    send(*a, d, &mut grads);
                }
                Op::Sum(a) => {
                    let [r, c] = nodes[*a].value.shape();
                    send(*a, Tensor::filled(r, c, g.item()), &mut grads);
                }
                Op::Mean(a) => {
                    let [r, c] = nodes[*a].value.shape();
                    let n = S::of((r * c).max(1) as f64);
                    send(*a, Tensor::filled(r, c, g.item() / n), &mut grads);
                }
            }
        }

        Ok(Gradients { tape: self.id, grads })
    }
}
