use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::quadric_value;
use super::hyper::{DeltaMode, Phase};
use super::model::{Branch, FittedModel, PrimitiveMatrix, QUADRIC_COEFFS};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const CHUNK: usize = 4096;

/// Double-precision field of one branch with the primitive predictor
/// already evaluated.
#[derive(Clone, Debug)]
pub struct BranchField {
    prims: Vec<[f64; QUADRIC_COEFFS]>,
    selection: Tensor<f64>,
    weights: Vec<f64>,
    used: Vec<usize>,
}

impl BranchField {
    /// `weights` are the union gates applied as `(1 − Wᵢ)·θ`.
    pub fn new(prims: &PrimitiveMatrix, selection: Tensor<f64>, weights: Vec<f64>) -> Self {
        let rows: Vec<[f64; QUADRIC_COEFFS]> = (0..prims.len()).map(|k| prims.row(k)).collect();
        let used = (0..selection.rows())
            .filter(|&k| (0..selection.cols()).any(|i| selection.get(k, i) != 0.0 && weights[i] != 0.0))
            .collect();
        Self {
            prims: rows,
            selection,
            weights,
            used,
        }
    }

    pub fn union_value(&self, x: [f64; 3], theta: f64) -> f64 {
        let c = self.selection.cols();
        let mut con = vec![0.0; c];
        for &k in &self.used {
            let d = quadric_value(&self.prims[k], x).max(0.0);
            if d == 0.0 {
                continue;
            }
            for (i, v) in con.iter_mut().enumerate() {
                *v += d * self.selection.get(k, i);
            }
        }
        con.iter()
            .zip(&self.weights)
            .map(|(&v, &w)| v + (1.0 - w) * theta)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates `s*` anywhere in space.
///
/// Float-phase models use the plain min-union. Binary models use the masked
/// union with effective gates `Wᵢ·[column i selects something]`, so an
/// intermediate shape with an empty selection never covers space.
#[derive(Clone, Debug)]
pub struct FieldEvaluator {
    pub branches: [BranchField; 2],
    pub alpha: f64,
    pub theta: f64,
}

impl FieldEvaluator {
    pub fn new(model: &FittedModel) -> Result<Self> {
        let (pc, pr) = model.primitives()?;
        let mk = |prims: &PrimitiveMatrix, b: Branch| {
            let t = model.params.selection(b).cast::<f64>();
            let w = if model.phase.is_binary() {
                effective_weights(&t, &model.params.union_weights(b).cast::<f64>())
            } else {
                vec![1.0; t.cols()]
            };
            BranchField::new(prims, t, w)
        };
        Ok(Self {
            branches: [mk(&pc, Branch::Cover), mk(&pr, Branch::Residual)],
            alpha: model.hyper.alpha,
            theta: model.hyper.theta,
        })
    }

    /// `(a*_C, a*_R)` at `x`.
    pub fn unions(&self, x: [f64; 3]) -> (f64, f64) {
        (
            self.branches[0].union_value(x, self.theta),
            self.branches[1].union_value(x, self.theta),
        )
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        let (c, r) = self.unions(x);
        c.max(self.alpha - r)
    }

    pub fn values(&self, points: &[[f64; 3]]) -> Vec<f64> {
        let mut out = vec![0.0; points.len()];
        out.par_chunks_mut(CHUNK)
            .zip(points.par_chunks(CHUNK))
            .for_each(|(o, p)| o.iter_mut().zip(p).for_each(|(o, &x)| *o = self.value(x)));
        out
    }

    /// Quantised inside predicate `s* < α/2`.
    pub fn inside(&self, points: &[[f64; 3]]) -> Vec<bool> {
        let half = self.alpha / 2.0;
        self.values(points).into_iter().map(|s| s < half).collect()
    }
}

/// `Wᵢ` zeroed for columns of `t` with no selected primitive.
pub fn effective_weights(t: &Tensor<f64>, w: &Tensor<f64>) -> Vec<f64> {
    (0..t.cols())
        .map(|i| {
            let nonempty = (0..t.rows()).any(|k| t.get(k, i) != 0.0);
            if nonempty {
                w.get(i, 0)
            } else {
                0.0
            }
        })
        .collect()
}

/// A pruning candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Removal {
    /// Intermediate shape `index` (gate `Wᵢ ← 0`).
    Intermediate { branch: Branch, index: usize },
    /// Primitive row `index` (`T(k,:) ← 0`).
    Primitive { branch: Branch, index: usize },
}

impl Removal {
    pub fn branch(self) -> Branch {
        match self {
            Removal::Intermediate { branch, .. } | Removal::Primitive { branch, .. } => branch,
        }
    }
}

fn bi(b: Branch) -> usize {
    match b {
        Branch::Cover => 0,
        Branch::Residual => 1,
    }
}

/// Cached state for repeated importance queries on a fixed point set.
///
/// Holds `relu(D)` per branch; only selection and gates change between
/// queries, so each query recomputes intersections of the affected columns.
#[derive(Clone, Debug)]
pub struct Importance {
    n: usize,
    p: usize,
    alpha: f64,
    theta: f64,
    mode: DeltaMode,
    relu_d: [Vec<f64>; 2],
    selection: [Tensor<f64>; 2],
    gates: [Vec<f64>; 2],
    con: [Vec<f64>; 2],
    unions: [Vec<f64>; 2],
    bits: Vec<bool>,
}

impl Importance {
    pub fn new(model: &FittedModel, points: &[[f64; 3]]) -> Result<Self> {
        model.require_binary()?;
        let (pc, pr) = model.primitives()?;
        let n = points.len();
        let p = model.hyper.p;
        let relu_d = |m: &PrimitiveMatrix| -> Vec<f64> {
            let rows: Vec<[f64; QUADRIC_COEFFS]> = (0..p).map(|k| m.row(k)).collect();
            let mut out = vec![0.0; n * p];
            out.par_chunks_mut(p).zip(points.par_iter()).for_each(|(o, &x)| {
                o.iter_mut()
                    .zip(&rows)
                    .for_each(|(o, q)| *o = quadric_value(q, x).max(0.0))
            });
            out
        };
        let mut me = Self {
            n,
            p,
            alpha: model.hyper.alpha,
            theta: model.hyper.theta,
            mode: model.hyper.delta_mode,
            relu_d: [relu_d(&pc), relu_d(&pr)],
            selection: [model.params.t_c.cast::<f64>(), model.params.t_r.cast::<f64>()],
            gates: [
                model.params.w_c.data().iter().map(|&v| v as f64).collect(),
                model.params.w_r.data().iter().map(|&v| v as f64).collect(),
            ],
            con: [Vec::new(), Vec::new()],
            unions: [Vec::new(), Vec::new()],
            bits: Vec::new(),
        };
        for b in 0..2 {
            me.con[b] = me.intersections(b, &me.selection[b]);
            me.unions[b] = me.union_of(b, &me.con[b], &me.selection[b], &me.gates[b]);
        }
        me.bits = me.quantise(&me.unions[0], &me.unions[1]);
        Ok(me)
    }

    pub fn with_mode(mut self, mode: DeltaMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn inside_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn inside_bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn selection(&self, b: Branch) -> &Tensor<f64> {
        &self.selection[bi(b)]
    }

    pub fn gates(&self, b: Branch) -> &[f64] {
        &self.gates[bi(b)]
    }

    fn column(&self, b: usize, t: &Tensor<f64>, i: usize) -> Vec<f64> {
        let rows: Vec<(usize, f64)> = (0..self.p)
            .filter(|&k| t.get(k, i) != 0.0)
            .map(|k| (k, t.get(k, i)))
            .collect();
        let d = &self.relu_d[b];
        (0..self.n)
            .map(|j| {
                let row = &d[j * self.p..(j + 1) * self.p];
                rows.iter().map(|&(k, w)| row[k] * w).sum()
            })
            .collect()
    }

    /// Column-major `n×c` intersections.
    fn intersections(&self, b: usize, t: &Tensor<f64>) -> Vec<f64> {
        (0..t.cols()).flat_map(|i| self.column(b, t, i)).collect()
    }

    fn union_of(&self, _b: usize, con: &[f64], t: &Tensor<f64>, gates: &[f64]) -> Vec<f64> {
        let c = t.cols();
        let w = effective_weights(t, &Tensor::new(c, 1, gates.to_vec()).expect("gate vector"));
        (0..self.n)
            .map(|j| {
                (0..c)
                    .map(|i| con[i * self.n + j] + (1.0 - w[i]) * self.theta)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    fn quantise(&self, a_c: &[f64], a_r: &[f64]) -> Vec<bool> {
        let half = self.alpha / 2.0;
        a_c.iter()
            .zip(a_r)
            .map(|(&c, &r)| c.max(self.alpha - r) < half)
            .collect()
    }

    /// Whether `removal` still changes the model.
    pub fn is_active(&self, removal: Removal) -> bool {
        match removal {
            Removal::Intermediate { branch, index } => self.gates[bi(branch)].get(index).is_some_and(|&w| w != 0.0),
            Removal::Primitive { branch, index } => {
                let t = &self.selection[bi(branch)];
                index < t.rows() && (0..t.cols()).any(|i| t.get(index, i) != 0.0)
            }
        }
    }

    /// Branch state after `removal`: `(selection, gates, intersections)`.
    fn apply(&self, removal: Removal) -> Result<(usize, Tensor<f64>, Vec<f64>, Vec<f64>)> {
        if !self.is_active(removal) {
            return Err(Error::InactiveTarget(format!("{removal:?}")));
        }
        let b = bi(removal.branch());
        let mut t = self.selection[b].clone();
        let mut gates = self.gates[b].clone();
        let mut con = self.con[b].clone();
        match removal {
            Removal::Intermediate { index, .. } => gates[index] = 0.0,
            Removal::Primitive { index, .. } => {
                let touched: Vec<usize> = (0..t.cols()).filter(|&i| t.get(index, i) != 0.0).collect();
                for &i in &touched {
                    t.set(index, i, 0.0);
                }
                for i in touched {
                    let col = self.column(b, &t, i);
                    con[i * self.n..(i + 1) * self.n].copy_from_slice(&col);
                }
            }
        }
        Ok((b, t, gates, con))
    }

    /// ΔS of `removal` against the current state.
    pub fn delta(&self, removal: Removal) -> Result<usize> {
        let (b, t, gates, con) = self.apply(removal)?;
        let a = self.union_of(b, &con, &t, &gates);
        let bits = if b == 0 {
            self.quantise(&a, &self.unions[1])
        } else {
            self.quantise(&self.unions[0], &a)
        };
        Ok(match self.mode {
            DeltaMode::Flips => bits.iter().zip(&self.bits).filter(|(x, y)| x != y).count(),
            DeltaMode::CountChange => {
                let after = bits.iter().filter(|&&x| x).count();
                after.abs_diff(self.inside_count())
            }
        })
    }

    /// Makes `removal` part of the current state.
    pub fn commit(&mut self, removal: Removal) -> Result<()> {
        let (b, t, gates, con) = self.apply(removal)?;
        self.unions[b] = self.union_of(b, &con, &t, &gates);
        self.selection[b] = t;
        self.gates[b] = gates;
        self.con[b] = con;
        self.bits = self.quantise(&self.unions[0], &self.unions[1]);
        Ok(())
    }
}

/// ΔS for a single `removal` on `points`; the model is left untouched.
pub fn importance_delta(model: &FittedModel, points: &[[f64; 3]], removal: Removal) -> Result<usize> {
    Importance::new(model, points)?.delta(removal)
}

impl FittedModel {
    /// Applies `removal` to the binary selection or gates.
    pub fn apply_removal(&mut self, removal: Removal) -> Result<()> {
        if self.phase != Phase::Stage2 {
            return Err(Error::NotBinary);
        }
        match removal {
            Removal::Intermediate { branch, index } => {
                self.params.union_weights_mut(branch).set(index, 0, 0.0);
            }
            Removal::Primitive { branch, index } => {
                let t = self.params.selection_mut(branch);
                for i in 0..t.cols() {
                    t.set(index, i, 0.0);
                }
            }
        }
        Ok(())
    }
}
