use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{Branch, FittedModel, Importance, Removal};

/// One tested pruning candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutRecord {
    pub sweep: usize,
    pub iteration: usize,
    pub target: Removal,
    pub delta: usize,
    pub removed: bool,
}

/// Inside counts around one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sweep: usize,
    pub iteration: usize,
    pub inside_before: usize,
    pub inside_after: usize,
    pub removals: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DropoutLog {
    pub sigma: f64,
    pub records: Vec<DropoutRecord>,
    pub sweeps: Vec<SweepSummary>,
}

impl DropoutLog {
    pub fn removed(&self) -> impl Iterator<Item = &DropoutRecord> {
        self.records.iter().filter(|r| r.removed)
    }

    /// Checks the pruning contract: every committed removal had `ΔS < σ`
    /// and each sweep moved the inside count by at most `removals·σ`.
    pub fn contract_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in self.removed() {
            if r.delta as f64 >= self.sigma {
                out.push(format!("{:?} removed with ΔS {} ≥ σ {}", r.target, r.delta, self.sigma));
            }
        }
        for s in &self.sweeps {
            let moved = s.inside_after.abs_diff(s.inside_before) as f64;
            if moved > s.removals as f64 * self.sigma {
                out.push(format!(
                    "sweep {} moved the inside count by {moved} with {} removals",
                    s.sweep, s.removals
                ));
            }
        }
        out
    }

    /// Text lines, one per tested candidate.
    pub fn to_lines(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                let (kind, branch, index) = match r.target {
                    Removal::Intermediate { branch, index } => ("intermediate", branch, index),
                    Removal::Primitive { branch, index } => ("primitive", branch, index),
                };
                format!(
                    "sweep={} iter={} branch={:?} kind={kind} index={index} delta={} {}",
                    r.sweep,
                    r.iteration,
                    branch,
                    r.delta,
                    if r.removed { "removed" } else { "kept" }
                )
            })
            .collect()
    }
}

/// Candidate order: intermediate shapes (cover then residual, ascending),
/// then primitives in the same branch order.
fn candidates(model: &FittedModel) -> Vec<Removal> {
    let mut out = Vec::new();
    for branch in Branch::BOTH {
        for index in 0..model.hyper.c {
            out.push(Removal::Intermediate { branch, index });
        }
    }
    for branch in Branch::BOTH {
        for index in 0..model.hyper.p {
            out.push(Removal::Primitive { branch, index });
        }
    }
    out
}

/// Greedy sequential pruning: each active candidate's ΔS is measured
/// against the current (already pruned) model and committed iff `ΔS < σ`.
pub fn dropout_sweep(
    model: &mut FittedModel,
    points: &[[f64; 3]],
    sweep: usize,
    iteration: usize,
    log: &mut DropoutLog,
) -> Result<()> {
    log.sigma = model.hyper.sigma;
    let mut imp = Importance::new(model, points)?;
    let before = imp.inside_count();
    let mut removals = 0;
    for target in candidates(model) {
        if !imp.is_active(target) {
            continue;
        }
        let delta = imp.delta(target)?;
        let removed = (delta as f64) < model.hyper.sigma;
        if removed {
            imp.commit(target)?;
            model.apply_removal(target)?;
            removals += 1;
        }
        log.records.push(DropoutRecord {
            sweep,
            iteration,
            target,
            delta,
            removed,
        });
    }
    log.sweeps.push(SweepSummary {
        sweep,
        iteration,
        inside_before: before,
        inside_after: imp.inside_count(),
        removals,
    });
    log::info!(
        "dropout sweep {sweep} at iteration {iteration}: {removals} removals, inside {before} -> {}",
        imp.inside_count()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::network::{HyperParams, PrimitiveMatrix};

    fn ball(c: f64, r: f64) -> [f64; 7] {
        [10.0, 10.0, 10.0, -20.0 * c, 0.0, 0.0, 10.0 * (c * c - r * r)]
    }

    fn model(sigma: f64, duplicate_columns: bool) -> FittedModel {
        let hyper = HyperParams {
            p: 4,
            c: 3,
            code_size: 4,
            hidden: 4,
            sigma,
            ..Default::default()
        };
        let mut cover = Tensor::zeros(4, 7);
        for (k, row) in [ball(-0.2, 0.15), ball(0.2, 0.15)].iter().enumerate() {
            for (m, &v) in row.iter().enumerate() {
                cover.set(k, m, v);
            }
        }
        let mut t = Tensor::zeros(4, 3);
        t.set(0, 0, 1.0);
        t.set(1, 1, 1.0);
        if duplicate_columns {
            t.set(0, 2, 1.0);
        } else {
            t.set(1, 2, 1.0);
            t.set(0, 2, 1.0);
        }
        FittedModel::from_parts(
            hyper,
            &PrimitiveMatrix(cover),
            &PrimitiveMatrix(Tensor::zeros(4, 7)),
            [t, Tensor::zeros(4, 3)],
            [Tensor::filled(3, 1, 1.0), Tensor::filled(3, 1, 1.0)],
        )
        .unwrap()
    }

    fn points() -> Vec<[f64; 3]> {
        (0..2000).map(|i| [i as f64 / 2000.0 - 0.5, 0.0, 0.0]).collect()
    }

    #[test]
    fn duplicate_intermediate_loses_exactly_one_copy() {
        let mut m = model(3.0, true);
        let mut log = DropoutLog::default();
        dropout_sweep(&mut m, &points(), 0, 10, &mut log).unwrap();
        let removed_shapes: Vec<_> = log
            .removed()
            .filter(|r| {
                matches!(
                    r.target,
                    Removal::Intermediate {
                        branch: Branch::Cover,
                        ..
                    }
                )
            })
            .collect();
        assert_eq!(removed_shapes.len(), 1);
        assert_eq!(
            removed_shapes[0].target,
            Removal::Intermediate {
                branch: Branch::Cover,
                index: 0
            }
        );
        assert!(log.contract_violations().is_empty());
        assert_eq!(m.params.w_c.data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_sigma_removes_nothing() {
        let mut m = model(0.0, true);
        let before = m.clone();
        let mut log = DropoutLog::default();
        dropout_sweep(&mut m, &points(), 0, 10, &mut log).unwrap();
        assert_eq!(log.removed().count(), 0);
        assert_eq!(m, before);
    }

    #[test]
    fn unit_sigma_removes_only_zero_impact_targets() {
        let mut m = model(1.0, false);
        let mut log = DropoutLog::default();
        dropout_sweep(&mut m, &points(), 0, 10, &mut log).unwrap();
        assert!(log.removed().all(|r| r.delta == 0));
        // the two-ball column makes nothing inside (balls are disjoint)
        assert!(log.removed().any(|r| r.target
            == Removal::Intermediate {
                branch: Branch::Cover,
                index: 2
            }));
    }
}
