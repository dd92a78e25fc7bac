use crate::autodiff::Tensor;

/// Adam without weight decay; one moment pair per parameter block.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Starts a new step; call once before the per-block updates.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates block `k` in place from its gradient.
    pub fn update(&mut self, k: usize, param: &mut Tensor<f32>, grad: &Tensor<f32>) {
        let (b1, b2) = (self.beta1, self.beta2);
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (m, v) = (&mut self.m[k], &mut self.v[k]);
        for (((p, &g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            let g = g as f64;
            let mn = b1 * *m as f64 + (1.0 - b1) * g;
            let vn = b2 * *v as f64 + (1.0 - b2) * g * g;
            *m = mn as f32;
            *v = vn as f32;
            let step = self.lr * (mn / c1) / ((vn / c2).sqrt() + self.eps);
            *p = (*p as f64 - step) as f32;
        }
    }
}
