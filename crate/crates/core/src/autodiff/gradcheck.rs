use serde::Serialize;

use super::tensor::Tensor;
use crate::error::Result;

/// Settings for [`finite_difference_check`].
#[derive(Clone, Debug)]
pub struct FdOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Pass threshold on the maximum relative deviation.
    pub tol: f64,
    /// Entries whose branch signature changes under a perturbation of this
    /// size are treated as lying near a kink and skipped.
    pub kink_probe: Option<f64>,
    /// Denominator floor for the relative deviation, so entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub rel_floor: f64,
    /// Check at most this many entries per block (evenly strided).
    pub max_entries_per_block: Option<usize>,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            tol: 1e-4,
            kink_probe: Some(1e-3),
            rel_floor: 1e-6,
            max_entries_per_block: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockReport {
    pub block: usize,
    pub checked: usize,
    pub skipped_near_kink: usize,
    pub max_abs: f64,
    pub max_rel: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tol: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_abs).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.blocks.iter().map(|b| b.checked).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel() < self.tol
    }
}

/// Compares `analytic` gradients against central differences of `f`.
///
/// `f` evaluates the scalar objective at the given parameter blocks and
/// returns it together with a branch signature (see
/// [`Tape::branch_signature`](super::Tape::branch_signature)); smooth
/// functions may return a constant signature.
pub fn finite_difference_check<F>(
    f: F,
    params: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    opts: &FdOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<(f64, u64)>,
{
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per block");
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let (_, base_sig) = f(&work)?;
    let mut blocks = Vec::with_capacity(params.len());

    for (b, grad) in analytic.iter().enumerate() {
        assert_eq!(grad.shape(), params[b].shape(), "gradient shape for block {b}");
        let len = params[b].len();
        let stride = match opts.max_entries_per_block {
            Some(m) if m > 0 && len > m => len.div_ceil(m),
            _ => 1,
        };
        let mut report = BlockReport {
            block: b,
            checked: 0,
            skipped_near_kink: 0,
            max_abs: 0.0,
            max_rel: 0.0,
        };
        for i in (0..len).step_by(stride) {
            let x0 = params[b].data()[i];
            let mut eval_at = |x: f64| -> Result<(f64, u64)> {
                work[b].data_mut()[i] = x;
                let r = f(&work);
                work[b].data_mut()[i] = x0;
                r
            };
            if let Some(h) = opts.kink_probe {
                let (_, s_hi) = eval_at(x0 + h)?;
                let (_, s_lo) = eval_at(x0 - h)?;
                if s_hi != base_sig || s_lo != base_sig {
                    report.skipped_near_kink += 1;
                    continue;
                }
            }
            let (f_hi, _) = eval_at(x0 + opts.eps)?;
            let (f_lo, _) = eval_at(x0 - opts.eps)?;
            let fd = (f_hi - f_lo) / (2.0 * opts.eps);
            let an = grad.data()[i];
            let abs = (fd - an).abs();
            let rel = abs / fd.abs().max(an.abs()).max(opts.rel_floor);
            report.checked += 1;
            report.max_abs = report.max_abs.max(abs);
            report.max_rel = report.max_rel.max(rel);
        }
        blocks.push(report);
    }
    Ok(GradCheckReport { tol: opts.tol, blocks })
}
