use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::Result;

/// Stage-0 reconstruction: MSE between `a⁺_C·(1 − a⁺_R)` and the labels.
pub fn loss_rec_plus(a_c: &[f64], a_r: &[f64], labels: &[bool]) -> f64 {
    let n = labels.len().max(1) as f64;
    a_c.iter()
        .zip(a_r)
        .zip(labels)
        .map(|((&c, &r), &g)| {
            let e = c * (1.0 - r) - if g { 1.0 } else { 0.0 };
            e * e
        })
        .sum::<f64>()
        / n
}

/// Hinge reconstruction on `s*`: mean `s*²` over inside points plus mean
/// `relu(α − s*)²` over outside points. An absent class contributes 0.
pub fn loss_rec_star(s: &[f64], labels: &[bool], alpha: f64) -> f64 {
    let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &g) in s.iter().zip(labels) {
        if g {
            sin += v * v;
            nin += 1;
        } else {
            let m = (alpha - v).max(0.0);
            sout += m * m;
            nout += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    mean(sin, nin) + mean(sout, nout)
}

/// `Σ relu(−t) + relu(t − 1)` over both selection matrices.
pub fn loss_t<S: Real>(t_c: &Tensor<S>, t_r: &Tensor<S>) -> f64 {
    t_c.data()
        .iter()
        .chain(t_r.data())
        .map(|&t| {
            let t = t.f64();
            (-t).max(0.0) + (t - 1.0).max(0.0)
        })
        .sum()
}

/// `Σ |w − 1|` over both gate vectors.
pub fn loss_w<S: Real>(w_c: &Tensor<S>, w_r: &Tensor<S>) -> f64 {
    w_c.data()
        .iter()
        .chain(w_r.data())
        .map(|&w| (w.f64() - 1.0).abs())
        .sum()
}

/// `t > η ? 1 : 0`.
pub fn binarize_t<S: Real>(t: &Tensor<S>, eta: f64) -> Tensor<S> {
    t.map(|v| if v.f64() > eta { S::one() } else { S::zero() })
}

/// Column of labels as `0/1`.
pub(crate) fn label_column<S: Real>(labels: &[bool]) -> Tensor<S> {
    Tensor::from_fn(labels.len(), 1, |j, _| if labels[j] { S::one() } else { S::zero() })
}

pub(crate) fn record_rec_plus<S: Real>(tape: &mut Tape<S>, s_plus: Var, labels: &[bool]) -> Result<Var> {
    let g = tape.constant(label_column(labels));
    let e = tape.sub(s_plus, g)?;
    let e = tape.square(e)?;
    tape.mean(e)
}

pub(crate) fn record_rec_star<S: Real>(tape: &mut Tape<S>, s: Var, labels: &[bool], alpha: S) -> Result<Var> {
    let nin = labels.iter().filter(|&&g| g).count();
    let nout = labels.len() - nin;
    let weight = |on: bool, n: usize| -> Tensor<S> {
        let w = if n == 0 { S::zero() } else { S::one() / S::of(n as f64) };
        Tensor::from_fn(labels.len(), 1, |j, _| if labels[j] == on { w } else { S::zero() })
    };
    let win = tape.constant(weight(true, nin));
    let wout = tape.constant(weight(false, nout));
    let sq = tape.square(s)?;
    let inside = tape.mul(sq, win)?;
    let inside = tape.sum(inside)?;
    let margin = tape.affine(s, -S::one(), alpha)?;
    let margin = tape.relu(margin)?;
    let margin = tape.square(margin)?;
    let outside = tape.mul(margin, wout)?;
    let outside = tape.sum(outside)?;
    tape.add(inside, outside)
}

pub(crate) fn record_loss_t<S: Real>(tape: &mut Tape<S>, t: Var) -> Result<Var> {
    let below = tape.scale(t, -S::one())?;
    let below = tape.relu(below)?;
    let above = tape.add_scalar(t, -S::one())?;
    let above = tape.relu(above)?;
    let both = tape.add(below, above)?;
    tape.sum(both)
}

pub(crate) fn record_loss_w<S: Real>(tape: &mut Tape<S>, w: Var) -> Result<Var> {
    let d = tape.add_scalar(w, -S::one())?;
    let d = tape.abs(d)?;
    tape.sum(d)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn rec_plus_cases() {
        assert_eq!(loss_rec_plus(&[1.0], &[0.0], &[true]), 0.0);
        assert_eq!(loss_rec_plus(&[1.0], &[1.0], &[false]), 0.0);
        assert_eq!(loss_rec_plus(&[1.0], &[1.0], &[true]), 1.0);
    }

    #[test]
    fn rec_star_cases() {
        assert_eq!(loss_rec_star(&[0.0], &[true], 0.2), 0.0);
        assert_abs_diff_eq!(loss_rec_star(&[0.0], &[false], 0.2), 0.04, epsilon = 1e-15);
        assert_eq!(loss_rec_star(&[0.3], &[false], 0.2), 0.0);
        assert_eq!(loss_rec_star(&[0.0, 0.25], &[true, false], 0.2), 0.0);
    }

    #[test]
    fn regularisers() {
        let t = |v: &[f64]| Tensor::new(v.len(), 1, v.to_vec()).unwrap();
        assert_eq!(loss_t(&t(&[0.0, 0.5, 1.0]), &t(&[0.3])), 0.0);
        assert_abs_diff_eq!(loss_t(&t(&[1.5]), &t(&[0.5])), 0.5);
        assert_abs_diff_eq!(loss_t(&t(&[-0.2]), &t(&[0.5])), 0.2);
        assert_eq!(loss_w(&t(&[1.0, 1.0]), &t(&[1.0])), 0.0);
        assert_abs_diff_eq!(loss_w(&t(&[0.8, 1.2]), &t(&[])), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn gate_regulariser_pulls_toward_one() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(Tensor::new(2, 1, vec![0.8, 0.8]).unwrap());
        let l = record_loss_w(&mut tape, w).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[-1.0, -1.0]);
    }

    #[test]
    fn feasible_values_get_no_regulariser_gradient() {
        let mut tape = Tape::<f64>::new();
        let t = tape.param(Tensor::new(3, 1, vec![0.0, 0.4, 1.0]).unwrap());
        let w = tape.param(Tensor::new(1, 1, vec![1.0]).unwrap());
        let lt = record_loss_t(&mut tape, t).unwrap();
        let lw = record_loss_w(&mut tape, w).unwrap();
        let l = tape.add(lt, lw).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(g.get(t).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.get(w).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn binarisation_threshold_is_strict() {
        let t = Tensor::new(1, 4, vec![0.011, 0.01, -0.3, 2.0]).unwrap();
        assert_eq!(binarize_t(&t, 0.01).data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn taped_losses_match_direct() {
        let s = [0.0, 0.05, 0.3, 0.1];
        let labels = [true, false, false, true];
        let mut tape = Tape::<f64>::new();
        let v = tape.constant(Tensor::new(4, 1, s.to_vec()).unwrap());
        let l = record_rec_star(&mut tape, v, &labels, 0.2).unwrap();
        assert_abs_diff_eq!(tape.value(l).item(), loss_rec_star(&s, &labels, 0.2), epsilon = 1e-15);
        let l = record_rec_plus(&mut tape, v, &labels).unwrap();
        assert_abs_diff_eq!(
            tape.value(l).item(),
            loss_rec_plus(&s, &[0.0; 4], &labels),
            epsilon = 1e-15
        );
    }
}
