//! Recording of the network forward pass on an autodiff tape.

use super::hyper::HyperParams;
use super::model::{ParamSet, LEAKY_SLOPE, QUADRIC_COEFFS};
use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::Result;

/// Tape handles for every parameter block. Whether a block is a trainable
/// leaf or a constant is decided when it is registered.
#[derive(Clone, Copy, Debug)]
pub struct NetVars {
    pub z: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub t_c: Var,
    pub t_r: Var,
    pub w_c: Var,
    pub w_r: Var,
}

impl NetVars {
    /// Registers all blocks; `trainable[k]` selects param vs constant for
    /// block `k` in checkpoint order.
    pub fn register<S: Real>(tape: &mut Tape<S>, params: &ParamSet<S>, trainable: [bool; 9]) -> Self {
        let mut vars = params.blocks().into_iter().zip(trainable).map(|(b, on)| {
            if on {
                tape.param(b.clone())
            } else {
                tape.constant(b.clone())
            }
        });
        let mut next = || vars.next().expect("nine blocks");
        Self {
            z: next(),
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
            t_c: next(),
            t_r: next(),
            w_c: next(),
            w_r: next(),
        }
    }

    pub fn blocks(&self) -> [Var; 9] {
        [
            self.z, self.w1, self.b1, self.w2, self.b2, self.t_c, self.t_r, self.w_c, self.w_r,
        ]
    }
}

/// How intermediate shapes of one branch are unioned.
#[derive(Clone, Debug)]
pub enum UnionSpec<S> {
    /// `clip(Σ W·clip(1 − Con))` with the branch's `W` vector.
    Soft,
    /// Plain row minimum.
    Min,
    /// Row minimum after adding `(1 − Wᵢ)·θ`, one offset per column.
    Masked { offsets: [Vec<S>; 2] },
}

/// `p×7` primitive matrices of both branches.
pub fn record_primitives<S: Real>(tape: &mut Tape<S>, v: &NetVars, hyper: &HyperParams) -> Result<(Var, Var)> {
    let p = hyper.p;
    let pre = tape.matmul(v.z, v.w1)?;
    let pre = tape.add(pre, v.b1)?;
    // leaky(x) = (1 − slope)·relu(x) + slope·x
    let pos = tape.relu(pre)?;
    let pos = tape.scale(pos, S::of(1.0 - LEAKY_SLOPE))?;
    let lin = tape.scale(pre, S::of(LEAKY_SLOPE))?;
    let h = tape.add(pos, lin)?;
    let raw = tape.matmul(h, v.w2)?;
    let raw = tape.add(raw, v.b2)?;
    let raw = tape.reshape(raw, 2 * p, QUADRIC_COEFFS)?;

    let rows = 2 * p;
    let keep = tape.constant(Tensor::from_fn(rows, QUADRIC_COEFFS, |_, c| {
        if c >= 3 {
            S::one()
        } else {
            S::zero()
        }
    }));
    let sign = tape.constant(Tensor::from_fn(rows, QUADRIC_COEFFS, |r, c| {
        if c >= 3 {
            S::zero()
        } else if r % p < p / 2 {
            S::one()
        } else {
            -S::one()
        }
    }));
    let linear = tape.mul(raw, keep)?;
    let magnitude = tape.abs(raw)?;
    let squared = tape.mul(magnitude, sign)?;
    let all = tape.add(linear, squared)?;

    let pc = tape.slice_rows(all, 0, p)?;
    let pr = if hyper.shared_primitives {
        pc
    } else {
        tape.slice_rows(all, p, p)?
    };
    Ok((pc, pr))
}

/// One branch: `D = Q·Pᵀ`, `Con = relu(D)·T`, then the union.
pub fn record_branch<S: Real>(
    tape: &mut Tape<S>,
    q: Var,
    prims: Var,
    t: Var,
    w: Var,
    union: &UnionSpec<S>,
    branch: usize,
    theta: S,
) -> Result<Var> {
    let pt = tape.transpose(prims)?;
    let d = tape.matmul(q, pt)?;
    let d = tape.relu(d)?;
    let con = tape.matmul(d, t)?;
    match union {
        UnionSpec::Soft => {
            let inv = tape.affine(con, -S::one(), S::one())?;
            let inv = tape.clip01(inv)?;
            let sum = tape.matmul(inv, w)?;
            tape.clip01(sum)
        }
        UnionSpec::Min => tape.min_rows(con),
        UnionSpec::Masked { offsets } => {
            let [n, c] = tape.value(con).shape();
            let off = &offsets[branch];
            let bias = tape.constant(Tensor::from_fn(n, c, |_, i| (S::one() - off[i]) * theta));
            let shifted = tape.add(con, bias)?;
            tape.min_rows(shifted)
        }
    }
}

/// Union outputs `(a_C, a_R)` for query features `q`.
pub fn record_unions<S: Real>(
    tape: &mut Tape<S>,
    v: &NetVars,
    hyper: &HyperParams,
    q: Var,
    union: &UnionSpec<S>,
) -> Result<(Var, Var)> {
    let (pc, pr) = record_primitives(tape, v, hyper)?;
    let theta = S::of(hyper.theta);
    let a_c = record_branch(tape, q, pc, v.t_c, v.w_c, union, 0, theta)?;
    let a_r = record_branch(tape, q, pr, v.t_r, v.w_r, union, 1, theta)?;
    Ok((a_c, a_r))
}

/// `s* = max(a_C, α − a_R)`.
pub fn record_difference<S: Real>(tape: &mut Tape<S>, a_c: Var, a_r: Var, alpha: S) -> Result<Var> {
    let sub = tape.affine(a_r, -S::one(), alpha)?;
    tape.maximum(a_c, sub)
}

/// `s⁺ = a⁺_C·(1 − a⁺_R)`.
pub fn record_soft_difference<S: Real>(tape: &mut Tape<S>, a_c: Var, a_r: Var) -> Result<Var> {
    let keep = tape.affine(a_r, -S::one(), S::one())?;
    tape.mul(a_c, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::model::predict_primitives;

    #[test]
    fn taped_primitives_match_direct_prediction() {
        let h = HyperParams {
            p: 6,
            c: 3,
            code_size: 8,
            hidden: 16,
            ..Default::default()
        };
        let params = ParamSet::<f64>::init(&h);
        let mut tape = Tape::new();
        let v = NetVars::register(&mut tape, &params, [true; 9]);
        let (pc, pr) = record_primitives(&mut tape, &v, &h).unwrap();
        let (dc, dr) = predict_primitives(&params, h.p).unwrap();
        for (a, b) in [(pc, dc), (pr, dr)] {
            for (x, y) in tape.value(a).data().iter().zip(b.0.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
