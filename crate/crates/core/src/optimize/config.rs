use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::FistaConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    ExactLineSearch,
    Diminishing { eps: f64 },
    Fixed { gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// Solve the convex θ-subproblem exactly.
    Direct,
    /// Proximal step on the quadratic model around the previous θ.
    QuadraticApprox,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub num_batches: usize,
    pub epochs: usize,
    pub iters_per_batch: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BscaConfig {
    /// Proximal weight of the β surrogate.
    pub c: f64,
    pub step: StepRule,
    pub max_iters: usize,
    /// Stop once the relative total-loss change stays below this for
    /// `patience` iterations; 0 disables.
    pub tol: f64,
    pub patience: usize,
    pub theta_mode: ThetaMode,
    /// Scale θ-columns to unit norm inside the θ-update.
    pub normalize: bool,
    pub fista: FistaConfig,
    pub batch: Option<BatchConfig>,
    /// Keep a β snapshot every this many iterations (0 = final only).
    pub snapshot_every: usize,
}

impl Default for BscaConfig {
    fn default() -> Self {
        BscaConfig {
            c: 1.0,
            step: StepRule::ExactLineSearch,
            max_iters: 300,
            tol: 1e-8,
            patience: 10,
            theta_mode: ThetaMode::Direct,
            normalize: false,
            fista: FistaConfig::default(),
            batch: None,
            snapshot_every: 0,
        }
    }
}

impl BscaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        match self.step {
            StepRule::Diminishing { eps } if !(eps > 0.0 && eps < 1.0) => {
                return Err(Error::Config(format!("ε must lie in (0, 1), got {eps}")));
            }
            StepRule::Fixed { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                return Err(Error::Config(format!("γ must lie in (0, 1], got {gamma}")));
            }
            _ => {}
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        if let Some(b) = &self.batch {
            if b.num_batches == 0 {
                return Err(Error::Config("num_batches must be at least 1".into()));
            }
        }
        Ok(())
    }
}
