use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the importance metric counts the effect of a removal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Number of query points whose quantised inside bit flips.
    #[default]
    Flips,
    /// Absolute change of the total inside count.
    CountChange,
}

/// Everything that shapes one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    /// Primitives per branch (half convex, half inverse).
    pub p: usize,
    /// Intermediate shapes per branch.
    pub c: usize,
    pub code_size: usize,
    pub hidden: usize,
    pub alpha: f64,
    pub eta: f64,
    pub sigma: f64,
    pub theta: f64,
    pub iterations: usize,
    pub dropout_interval: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Stage-2 pruning on/off.
    pub dropout: bool,
    /// Ablation: both branches read the cover primitive matrix.
    pub shared_primitives: bool,
    pub delta_mode: DeltaMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            p: 512,
            c: 32,
            code_size: 256,
            hidden: 512,
            alpha: 0.2,
            eta: 0.01,
            sigma: 3.0,
            theta: 100.0,
            iterations: 12_000,
            dropout_interval: 4_000,
            learning_rate: 1e-4,
            batch_size: 4_096,
            seed: 0,
            dropout: true,
            shared_primitives: false,
            delta_mode: DeltaMode::Flips,
        }
    }
}

impl HyperParams {
    /// Sets the per-stage iteration budget and keeps three dropout sweeps
    /// per stage 2, as in the 12,000 / 4,000 default (the last sweep always
    /// runs on the final iteration).
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self.dropout_interval = iterations.div_ceil(3).max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperParams(m));
        if self.p == 0 || self.p % 2 != 0 {
            return bad(format!("p must be positive and even, got {}", self.p));
        }
        if self.c == 0 || self.code_size == 0 || self.hidden == 0 {
            return bad("c, code_size and hidden must be positive".into());
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.theta > self.alpha) {
            return bad(format!("theta ({}) must exceed alpha ({})", self.theta, self.alpha));
        }
        if !(self.sigma >= 0.0) || !self.eta.is_finite() {
            return bad("sigma must be non-negative and eta finite".into());
        }
        if self.iterations == 0 || self.dropout_interval == 0 || self.batch_size == 0 {
            return bad("iterations, dropout_interval and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        Ok(())
    }
}

/// Training phase of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Stage0,
    Stage1,
    Stage2,
}

impl Phase {
    pub fn index(self) -> u8 {
        match self {
            Phase::Stage0 => 0,
            Phase::Stage1 => 1,
            Phase::Stage2 => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Phase::Stage0),
            1 => Some(Phase::Stage1),
            2 => Some(Phase::Stage2),
            _ => None,
        }
    }

    pub fn is_binary(self) -> bool {
        self == Phase::Stage2
    }
}
