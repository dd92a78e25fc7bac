use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::hyper::{HyperParams, Phase};
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::geometry::NormalizationTransform;

/// Coefficients per quadric row: `(a, b, c, d, e, f, g)`.
pub const QUADRIC_COEFFS: usize = 7;

/// One quadric row `(a, b, c, d, e, f, g)`.
pub type Quadric = [f64; QUADRIC_COEFFS];
/// Negative slope of the hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

const LATENT_STD: f64 = 0.02;
const SELECTION_STD: f64 = 0.02;

/// Range of plane offsets used to seed the primitive predictor bias.
const INIT_OFFSET: (f64, f64) = (0.05, 0.35);
/// Spread of the seeded squared-term coefficients.
const INIT_QUAD_STD: f64 = 0.1;
/// Std of the output-layer weights.
const OUTPUT_WEIGHT_STD: f64 = 0.02;

/// Number of parameter blocks, in checkpoint order.
pub const BLOCKS: usize = 9;
pub const BLOCK_NAMES: [&str; BLOCKS] = ["z", "w1", "b1", "w2", "b2", "t_c", "t_r", "w_c", "w_r"];

/// All trainable state of one network: latent code, the two-layer primitive
/// predictor, selection matrices and union weights of both branches.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<S> {
    pub z: Tensor<S>,
    pub w1: Tensor<S>,
    pub b1: Tensor<S>,
    pub w2: Tensor<S>,
    pub b2: Tensor<S>,
    pub t_c: Tensor<S>,
    pub t_r: Tensor<S>,
    pub w_c: Tensor<S>,
    pub w_r: Tensor<S>,
}

impl<S: Real> ParamSet<S> {
    /// Shapes for `hyper`, in block order.
    pub fn shapes(hyper: &HyperParams) -> [[usize; 2]; BLOCKS] {
        let out = 2 * hyper.p * QUADRIC_COEFFS;
        [
            [1, hyper.code_size],
            [hyper.code_size, hyper.hidden],
            [1, hyper.hidden],
            [hyper.hidden, out],
            [1, out],
            [hyper.p, hyper.c],
            [hyper.p, hyper.c],
            [hyper.c, 1],
            [hyper.c, 1],
        ]
    }

    pub fn zeros(hyper: &HyperParams) -> Self {
        let s = Self::shapes(hyper);
        let z = |k: usize| Tensor::zeros(s[k][0], s[k][1]);
        Self {
            z: z(0),
            w1: z(1),
            b1: z(2),
            w2: z(3),
            b2: z(4),
            t_c: z(5),
            t_r: z(6),
            w_c: z(7),
            w_r: z(8),
        }
    }

    /// Random initial state, fully determined by `hyper.seed`.
    pub fn init(hyper: &HyperParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut out = Self::zeros(hyper);
        let gauss = |rng: &mut ChaCha8Rng, std: f64| -> S { S::of(Normal::new(0.0, std).unwrap().sample(rng)) };

        out.z
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = gauss(&mut rng, LATENT_STD));
        let he = (2.0 / hyper.code_size as f64).sqrt();
        out.w1.data_mut().iter_mut().for_each(|v| *v = gauss(&mut rng, he));
        out.w2
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = gauss(&mut rng, OUTPUT_WEIGHT_STD));

        // Seed every primitive as a near-planar quadric: random unit normal,
        // offset so the origin side is inside, small squared terms.
        for row in 0..2 * hyper.p {
            let nrm = loop {
                let v: [f64; 3] = [
                    Normal::new(0.0, 1.0).unwrap().sample(&mut rng),
                    Normal::new(0.0, 1.0).unwrap().sample(&mut rng),
                    Normal::new(0.0, 1.0).unwrap().sample(&mut rng),
                ];
                let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if l > 1e-6 {
                    break [v[0] / l, v[1] / l, v[2] / l];
                }
            };
            let offset = rng.random_range(INIT_OFFSET.0..INIT_OFFSET.1);
            let base = row * QUADRIC_COEFFS;
            let b2 = out.b2.data_mut();
            for k in 0..3 {
                b2[base + k] = gauss(&mut rng, INIT_QUAD_STD);
                b2[base + 3 + k] = S::of(nrm[k]);
            }
            b2[base + 6] = S::of(-offset);
        }

        out.t_c
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = gauss(&mut rng, SELECTION_STD));
        out.t_r
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = gauss(&mut rng, SELECTION_STD));
        // W starts at 1/(2c) so the soft union is below its clip at the start.
        let w0 = 0.5 / hyper.c as f64;
        out.w_c.data_mut().iter_mut().for_each(|v| *v = S::of(w0));
        out.w_r.data_mut().iter_mut().for_each(|v| *v = S::of(w0));
        out
    }

    pub fn blocks(&self) -> [&Tensor<S>; BLOCKS] {
        [
            &self.z, &self.w1, &self.b1, &self.w2, &self.b2, &self.t_c, &self.t_r, &self.w_c, &self.w_r,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Tensor<S>; BLOCKS] {
        [
            &mut self.z,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.t_c,
            &mut self.t_r,
            &mut self.w_c,
            &mut self.w_r,
        ]
    }

    pub fn from_blocks(blocks: Vec<Tensor<S>>) -> Self {
        let mut it = blocks.into_iter();
        let mut next = || it.next().expect("nine parameter blocks");
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

    pub fn cast<T: Real>(&self) -> ParamSet<T> {
        ParamSet::from_blocks(self.blocks().iter().map(|b| b.cast()).collect())
    }

    pub fn selection(&self, branch: Branch) -> &Tensor<S> {
        match branch {
            Branch::Cover => &self.t_c,
            Branch::Residual => &self.t_r,
        }
    }

    pub fn selection_mut(&mut self, branch: Branch) -> &mut Tensor<S> {
        match branch {
            Branch::Cover => &mut self.t_c,
            Branch::Residual => &mut self.t_r,
        }
    }

    pub fn union_weights(&self, branch: Branch) -> &Tensor<S> {
        match branch {
            Branch::Cover => &self.w_c,
            Branch::Residual => &self.w_r,
        }
    }

    pub fn union_weights_mut(&mut self, branch: Branch) -> &mut Tensor<S> {
        match branch {
            Branch::Cover => &mut self.w_c,
            Branch::Residual => &mut self.w_r,
        }
    }
}

/// One of the two CSG branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Cover,
    Residual,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Cover, Branch::Residual];
}

/// `p×7` quadric rows after sign constraints: rows `0..p/2` convex
/// (`a, b, c ≥ 0`), rows `p/2..p` inverse (`a, b, c ≤ 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveMatrix<S = f64>(pub Tensor<S>);

impl<S: Real> PrimitiveMatrix<S> {
    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn row(&self, k: usize) -> [S; QUADRIC_COEFFS] {
        let mut out = [S::zero(); QUADRIC_COEFFS];
        out.copy_from_slice(self.0.row(k));
        out
    }

    pub fn is_inverse(&self, k: usize) -> bool {
        k >= self.len() / 2
    }
}

/// Sign rule for quadric rows: convex rows get `|a|, |b|, |c|`, inverse
/// rows `-|a|, -|b|, -|c|`; the linear and constant terms pass through.
/// `rows_per_matrix` is `p`; `raw` may stack several matrices.
pub fn apply_sign_constraints<S: Real>(raw: &Tensor<S>, rows_per_matrix: usize) -> Tensor<S> {
    let half = rows_per_matrix / 2;
    Tensor::from_fn(raw.rows(), raw.cols(), |r, c| {
        let v = raw.get(r, c);
        if c >= 3 {
            v
        } else if r % rows_per_matrix < half {
            v.abs()
        } else {
            -v.abs()
        }
    })
}

/// Runs the primitive predictor without recording: leaky-relu hidden
/// layer, linear output, sign constraints, split into cover and residual.
pub fn predict_primitives<S: Real>(params: &ParamSet<S>, p: usize) -> Result<(PrimitiveMatrix<S>, PrimitiveMatrix<S>)> {
    let pre = params.z.matmul(&params.w1)?.zip(&params.b1, "bias", |a, b| a + b)?;
    let slope = S::of(LEAKY_SLOPE);
    let h = pre.map(|x| if x > S::zero() { x } else { x * slope });
    let raw = h.matmul(&params.w2)?.zip(&params.b2, "bias", |a, b| a + b)?;
    let stacked = apply_sign_constraints(&raw.reshape(2 * p, QUADRIC_COEFFS)?, p);
    Ok((
        PrimitiveMatrix(stacked.slice_rows(0, p)?),
        PrimitiveMatrix(stacked.slice_rows(p, p)?),
    ))
}

/// A fitted (or in-progress) per-shape model.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub hyper: HyperParams,
    pub phase: Phase,
    pub params: ParamSet<f32>,
    pub transform: NormalizationTransform,
}

impl FittedModel {
    pub fn new(hyper: HyperParams, transform: NormalizationTransform) -> Result<Self> {
        hyper.validate()?;
        let params = ParamSet::init(&hyper);
        Ok(Self {
            hyper,
            phase: Phase::Stage0,
            params,
            transform,
        })
    }

    /// Stage-2 model with the given primitives baked into the output bias
    /// (the output weights are zero). Rows must already obey the sign rule.
    pub fn from_parts(
        hyper: HyperParams,
        cover: &PrimitiveMatrix,
        residual: &PrimitiveMatrix,
        selection: [Tensor<f32>; 2],
        gates: [Tensor<f32>; 2],
    ) -> Result<Self> {
        hyper.validate()?;
        let mut params = ParamSet::<f32>::init(&hyper);
        params.w2 = Tensor::zeros(params.w2.rows(), params.w2.cols());
        let p = hyper.p;
        for (m, off) in [(cover, 0), (residual, p)] {
            if m.len() != p {
                return Err(Error::ShapeMismatch {
                    op: "from_parts",
                    lhs: [p, QUADRIC_COEFFS],
                    rhs: m.0.shape(),
                });
            }
            for (j, &v) in m.0.data().iter().enumerate() {
                params.b2.data_mut()[off * QUADRIC_COEFFS + j] = v as f32;
            }
        }
        let [t_c, t_r] = selection;
        let [w_c, w_r] = gates;
        for (have, want) in [
            (&t_c, &params.t_c),
            (&t_r, &params.t_r),
            (&w_c, &params.w_c),
            (&w_r, &params.w_r),
        ] {
            have.same_shape(want, "from_parts")?;
        }
        params.t_c = t_c;
        params.t_r = t_r;
        params.w_c = w_c;
        params.w_r = w_r;
        let model = Self {
            hyper,
            phase: Phase::Stage2,
            params,
            transform: NormalizationTransform::identity(),
        };
        model.require_binary()?;
        Ok(model)
    }

    /// Primitive matrices evaluated in double precision. In the shared
    /// ablation both branches read the cover matrix.
    pub fn primitives(&self) -> Result<(PrimitiveMatrix, PrimitiveMatrix)> {
        let (pc, pr) = predict_primitives(&self.params.cast::<f64>(), self.hyper.p)?;
        if self.hyper.shared_primitives {
            Ok((pc.clone(), pc))
        } else {
            Ok((pc, pr))
        }
    }

    pub fn require_binary(&self) -> Result<()> {
        if !self.phase.is_binary() {
            return Err(Error::NotBinary);
        }
        let binary = |t: &Tensor<f32>| t.data().iter().all(|&v| v == 0.0 || v == 1.0);
        let p = &self.params;
        if [&p.t_c, &p.t_r, &p.w_c, &p.w_r].into_iter().all(binary) {
            Ok(())
        } else {
            Err(Error::NotBinary)
        }
    }

    /// Columns of the binary selection matrix that select nothing.
    pub fn empty_columns(&self, branch: Branch) -> Vec<usize> {
        let t = self.params.selection(branch);
        (0..t.cols())
            .filter(|&i| (0..t.rows()).all(|k| t.get(k, i) == 0.0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> HyperParams {
        HyperParams {
            p: 8,
            c: 2,
            code_size: 16,
            hidden: 32,
            ..Default::default()
        }
    }

    #[test]
    fn zero_network_gives_zero_primitives() {
        let h = small();
        let params = ParamSet::<f64>::zeros(&h);
        let (pc, pr) = predict_primitives(&params, h.p).unwrap();
        assert!(pc.0.data().iter().chain(pr.0.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn sign_rule_per_half() {
        let raw = Tensor::new(
            2,
            7,
            vec![-1.0, 2.0, -3.0, 4.0, 5.0, 6.0, 7.0, -1.0, 2.0, -3.0, 4.0, 5.0, 6.0, 7.0],
        )
        .unwrap();
        let out = apply_sign_constraints(&raw, 2);
        assert_eq!(out.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(out.row(1), &[-1.0, -2.0, -3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn init_is_seeded_and_well_formed() {
        let h = small();
        let a = ParamSet::<f32>::init(&h);
        assert_eq!(a, ParamSet::<f32>::init(&h));
        assert_ne!(a, ParamSet::<f32>::init(&HyperParams { seed: 1, ..h.clone() }));
        for (b, s) in a.blocks().iter().zip(ParamSet::<f32>::shapes(&h)) {
            assert_eq!(b.shape(), s);
        }
        assert!(a.w_c.data().iter().all(|&w| (w as f64 - 0.5 / h.c as f64).abs() < 1e-7));
        let (pc, pr) = predict_primitives(&a, h.p).unwrap();
        for m in [&pc, &pr] {
            for k in 0..h.p {
                let row = m.row(k);
                if m.is_inverse(k) {
                    assert!(row[..3].iter().all(|&v| v <= 0.0));
                } else {
                    assert!(row[..3].iter().all(|&v| v >= 0.0));
                }
            }
        }
    }
}
