//! Three-stage per-shape optimisation.
//!
//! | stage | T      | W      | union | loss                   |
//! |-------|--------|--------|-------|------------------------|
//! | 0     | float  | float  | a⁺    | L⁺_rec + L_T + L_W     |
//! | 1     | float  | unused | a*    | L*_rec + L_T           |
//! | 2     | binary | binary | a*    | L*_rec, with dropout   |
//!
//! Stage 2 freezes T and W; only the latent code and the MLP keep
//! training. Adam moments are reset at every stage boundary and the final
//! dropout sweep runs after the last optimiser step.

mod adam;
mod dropout;
mod losses;

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use dropout::{dropout_sweep, DropoutLog, DropoutRecord, SweepSummary};
pub use losses::{binarize_t, loss_rec_plus, loss_rec_star, loss_t, loss_w};

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{NormalizationTransform, OccupancySet};
use crate::network::graph::{record_difference, record_soft_difference, record_unions, NetVars, UnionSpec};
use crate::network::{
    effective_weights, query_features, FieldEvaluator, FittedModel, HyperParams, ParamSet, Phase, BLOCKS,
};

/// Settings of one training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub phase: Phase,
    pub iterations: usize,
    pub loss_t: bool,
    pub loss_w: bool,
    pub dropout: bool,
    /// Trainable flag per parameter block, in checkpoint order.
    pub trainable: [bool; BLOCKS],
}

impl StageConfig {
    pub fn for_phase(phase: Phase, hyper: &HyperParams) -> Self {
        let net = [true, true, true, true, true];
        let (t, w) = match phase {
            Phase::Stage0 => (true, true),
            Phase::Stage1 => (true, false),
            Phase::Stage2 => (false, false),
        };
        let mut trainable = [false; BLOCKS];
        trainable[..5].copy_from_slice(&net);
        trainable[5] = t;
        trainable[6] = t;
        trainable[7] = w;
        trainable[8] = w;
        Self {
            phase,
            iterations: hyper.iterations,
            loss_t: phase != Phase::Stage2,
            loss_w: phase == Phase::Stage0,
            dropout: phase == Phase::Stage2 && hyper.dropout,
            trainable,
        }
    }
}

/// Loss terms of the last evaluated batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub rec: f64,
    pub reg_t: f64,
    pub reg_w: f64,
}

/// End-of-stage summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: u8,
    pub iterations: usize,
    pub final_loss: LossTerms,
    /// Mean total loss over the last 100 iterations.
    pub tail_mean: f64,
    /// Inside count (`s* < α/2`) on the full occupancy set at stage end.
    pub inside_count: usize,
    /// Stage 2 only: inside count right after binarisation.
    pub inside_after_binarize: Option<usize>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub stages: Vec<StageSummary>,
    /// Plain-text log lines.
    #[serde(skip)]
    pub lines: Vec<String>,
}

impl LossReport {
    pub fn total_seconds(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }

    pub fn stage(&self, phase: Phase) -> Option<&StageSummary> {
        self.stages.iter().find(|s| s.stage == phase.index())
    }
}

/// Knobs that do not change the optimisation itself.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    /// Log every `log_every` iterations (0 disables periodic lines).
    pub log_every: usize,
    /// Where to write the offending batch if a loss turns non-finite.
    pub dump_dir: Option<PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            log_every: 500,
            dump_dir: None,
        }
    }
}

/// Mutable state of one fit.
pub struct TrainState {
    pub model: FittedModel,
    pub optimizer: Adam,
    pub iteration: usize,
    pub last: LossTerms,
    pub dropout: DropoutLog,
    pub report: LossReport,
    rng: ChaCha8Rng,
    points: Vec<[f64; 3]>,
}

impl TrainState {
    pub fn new(model: FittedModel, occ: &OccupancySet) -> Result<Self> {
        occ.validate_for_fitting()?;
        let sizes: Vec<usize> = model.params.blocks().iter().map(|b| b.len()).collect();
        let seed = model.hyper.seed ^ 0x5eed_d2c5_0000_0001;
        Ok(Self {
            optimizer: Adam::new(model.hyper.learning_rate, &sizes),
            rng: ChaCha8Rng::seed_from_u64(seed),
            points: (0..occ.len()).map(|i| occ.point(i)).collect(),
            model,
            iteration: 0,
            last: LossTerms::default(),
            dropout: DropoutLog {
                sigma: 0.0,
                ..Default::default()
            },
            report: LossReport::default(),
        })
    }

    fn inside_count(&self) -> Result<usize> {
        let eval = FieldEvaluator::new(&self.model)?;
        Ok(eval.inside(&self.points).into_iter().filter(|&b| b).count())
    }
}

/// The stage loss for features `q` and `labels`. Stage 2 reads the frozen
/// gates from `params` to build the masked union.
pub fn stage_loss<S: Real>(
    tape: &mut Tape<S>,
    vars: &NetVars,
    params: &ParamSet<S>,
    hyper: &HyperParams,
    cfg: &StageConfig,
    q: Var,
    labels: &[bool],
) -> Result<(Var, [Option<Var>; 3])> {
    let union = match cfg.phase {
        Phase::Stage0 => UnionSpec::Soft,
        Phase::Stage1 => UnionSpec::Min,
        Phase::Stage2 => {
            let eff = |t: &Tensor<S>, w: &Tensor<S>| -> Vec<S> {
                effective_weights(&t.cast(), &w.cast()).into_iter().map(S::of).collect()
            };
            UnionSpec::Masked {
                offsets: [eff(&params.t_c, &params.w_c), eff(&params.t_r, &params.w_r)],
            }
        }
    };
    let (a_c, a_r) = record_unions(tape, vars, hyper, q, &union)?;
    let rec = if cfg.phase == Phase::Stage0 {
        let s = record_soft_difference(tape, a_c, a_r)?;
        losses::record_rec_plus(tape, s, labels)?
    } else {
        let s = record_difference(tape, a_c, a_r, S::of(hyper.alpha))?;
        losses::record_rec_star(tape, s, labels, S::of(hyper.alpha))?
    };
    let mut total = rec;
    let mut reg_t = None;
    let mut reg_w = None;
    if cfg.loss_t {
        let lc = losses::record_loss_t(tape, vars.t_c)?;
        let lr = losses::record_loss_t(tape, vars.t_r)?;
        let l = tape.add(lc, lr)?;
        total = tape.add(total, l)?;
        reg_t = Some(l);
    }
    if cfg.loss_w {
        let lc = losses::record_loss_w(tape, vars.w_c)?;
        let lr = losses::record_loss_w(tape, vars.w_r)?;
        let l = tape.add(lc, lr)?;
        total = tape.add(total, l)?;
        reg_w = Some(l);
    }
    Ok((total, [Some(rec), reg_t, reg_w]))
}

/// Enters the binary phase: `T ← (T > η)`, `W ← 1`.
pub fn enter_binary_phase(model: &mut FittedModel) {
    let eta = model.hyper.eta;
    let p = &mut model.params;
    p.t_c = binarize_t(&p.t_c, eta);
    p.t_r = binarize_t(&p.t_r, eta);
    p.w_c = Tensor::filled(p.w_c.rows(), 1, 1.0);
    p.w_r = Tensor::filled(p.w_r.rows(), 1, 1.0);
    model.phase = Phase::Stage2;
}

fn sample_batch(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    if batch >= n {
        return (0..n).collect();
    }
    let mut idx = rand::seq::index::sample(rng, n, batch).into_vec();
    idx.sort_unstable();
    idx
}

fn dump_batch(dir: &std::path::Path, occ: &OccupancySet, idx: &[usize]) {
    let batch = OccupancySet {
        points: idx.iter().map(|&i| occ.points[i]).collect(),
        labels: idx.iter().map(|&i| occ.labels[i]).collect(),
        origins: idx.iter().map(|&i| occ.origins[i]).collect(),
    };
    let path = dir.join("nan_batch.d2cs");
    match fs::create_dir_all(dir)
        .map_err(Error::from)
        .and_then(|_| batch.write(&path))
    {
        Ok(()) => log::error!("offending batch written to {}", path.display()),
        Err(e) => log::error!("could not write offending batch: {e}"),
    }
}

/// Runs one stage to its iteration budget.
pub fn run_stage(state: &mut TrainState, cfg: &StageConfig, occ: &OccupancySet, opts: &TrainOptions) -> Result<()> {
    let start = Instant::now();
    let hyper = state.model.hyper.clone();
    let mut inside_after_binarize = None;
    if cfg.phase == Phase::Stage2 && state.model.phase != Phase::Stage2 {
        enter_binary_phase(&mut state.model);
        inside_after_binarize = Some(state.inside_count()?);
    }
    state.model.phase = cfg.phase;
    let sizes: Vec<usize> = state.model.params.blocks().iter().map(|b| b.len()).collect();
    state.optimizer = Adam::new(hyper.learning_rate, &sizes);
    let stage = cfg.phase.index();
    let mut tail = std::collections::VecDeque::with_capacity(100);
    let mut sweep = state.dropout.sweeps.len();

    for it in 1..=cfg.iterations {
        let idx = sample_batch(&mut state.rng, occ.len(), hyper.batch_size);
        let pts: Vec<[f32; 3]> = idx.iter().map(|&i| occ.points[i]).collect();
        let labels: Vec<bool> = idx.iter().map(|&i| occ.labels[i]).collect();

        let mut tape = Tape::<f32>::new();
        let vars = NetVars::register(&mut tape, &state.model.params, cfg.trainable);
        let q = tape.constant(query_features(&pts));
        let forward = stage_loss(&mut tape, &vars, &state.model.params, &hyper, cfg, q, &labels);
        let (total, terms) = match forward {
            Ok(v) => v,
            Err(Error::NonFinite(op)) => {
                log::error!("non-finite value in {op} at stage {stage}, iteration {it}");
                if let Some(dir) = &opts.dump_dir {
                    dump_batch(dir, occ, &idx);
                }
                return Err(Error::NanLoss { stage, iteration: it });
            }
            Err(e) => return Err(e),
        };
        let value = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item() as f64);
        let last = LossTerms {
            total: value(Some(total)),
            rec: value(terms[0]),
            reg_t: value(terms[1]),
            reg_w: value(terms[2]),
        };
        if !last.total.is_finite() {
            log::error!("non-finite loss at stage {stage}, iteration {it}: {last:?}");
            if let Some(dir) = &opts.dump_dir {
                dump_batch(dir, occ, &idx);
            }
            return Err(Error::NanLoss { stage, iteration: it });
        }
        let mut grads = tape.backward(total)?;
        state.optimizer.begin_step();
        let blocks = vars.blocks();
        for (k, param) in state.model.params.blocks_mut().into_iter().enumerate() {
            if !cfg.trainable[k] {
                continue;
            }
            if let Some(g) = grads.take(blocks[k]) {
                state.optimizer.update(k, param, &g);
            }
        }
        state.iteration += 1;
        state.last = last;
        if tail.len() == 100 {
            tail.pop_front();
        }
        tail.push_back(last.total);

        if opts.log_every > 0 && (it % opts.log_every == 0 || it == 1) {
            state.report.lines.push(format!(
                "stage={stage} iter={it} loss={:.6e} rec={:.6e} lt={:.6e} lw={:.6e}",
                last.total, last.rec, last.reg_t, last.reg_w
            ));
        }
        if cfg.dropout && (it % hyper.dropout_interval == 0 || it == cfg.iterations) {
            let before = state.dropout.records.len();
            dropout_sweep(&mut state.model, &state.points, sweep, it, &mut state.dropout)?;
            sweep += 1;
            state
                .report
                .lines
                .extend(state.dropout.to_lines().into_iter().skip(before));
        }
    }

    let summary = StageSummary {
        stage,
        iterations: cfg.iterations,
        final_loss: state.last,
        tail_mean: if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        },
        inside_count: state.inside_count()?,
        inside_after_binarize,
        seconds: start.elapsed().as_secs_f64(),
    };
    state.report.lines.push(format!(
        "stage={stage} done iterations={} loss={:.6e} tail_mean={:.6e} inside={}{} seconds={:.2}",
        summary.iterations,
        summary.final_loss.total,
        summary.tail_mean,
        summary.inside_count,
        summary
            .inside_after_binarize
            .map(|c| format!(" inside_after_binarize={c}"))
            .unwrap_or_default(),
        summary.seconds
    ));
    state.report.stages.push(summary);
    Ok(())
}

/// Full three-stage fit.
pub fn fit_shape(occ: &OccupancySet, hyper: HyperParams) -> Result<(FittedModel, DropoutLog, LossReport)> {
    fit_shape_with(occ, hyper, NormalizationTransform::identity(), &TrainOptions::default())
}

pub fn fit_shape_with(
    occ: &OccupancySet,
    hyper: HyperParams,
    transform: NormalizationTransform,
    opts: &TrainOptions,
) -> Result<(FittedModel, DropoutLog, LossReport)> {
    hyper.validate()?;
    let model = FittedModel::new(hyper.clone(), transform)?;
    let mut state = TrainState::new(model, occ)?;
    state.dropout.sigma = hyper.sigma;
    for phase in [Phase::Stage0, Phase::Stage1, Phase::Stage2] {
        let cfg = StageConfig::for_phase(phase, &hyper);
        run_stage(&mut state, &cfg, occ, opts)?;
        log::info!("{}", state.report.lines.last().map(String::as_str).unwrap_or_default());
    }
    Ok((state.model, state.dropout, state.report))
}
