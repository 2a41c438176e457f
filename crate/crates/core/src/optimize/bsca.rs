//! The alternating β/θ loop.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::config::{BatchConfig, BscaConfig, StepRule};
use super::linesearch::{diminishing_step, exact_line_search};
use super::subproblem::{theta_subproblem, BetaSolver};
use super::trace::{BatchMark, IterRecord, OptTrace, Snapshot};
use crate::error::{Error, Result};
use crate::model::{
    gradient_beta_from, linearization_from, residual_from_values, segment_coefficients, DesignBundle,
    FieldDerivative, LossBreakdown, PhysicsSpec, Problem,
};

/// Current iterate of both blocks plus the step-size memory.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub beta: DVector<f64>,
    pub theta: Vec<f64>,
    /// Last step size of the diminishing rule.
    pub gamma: f64,
    pub stage: usize,
}

impl State {
    pub fn zeros(n_beta: usize, n_theta: usize) -> Self {
        State {
            beta: DVector::zeros(n_beta),
            theta: vec![0.0; n_theta],
            gamma: 1.0,
            stage: 0,
        }
    }

    /// `β ~ N(0, scale²)`, `θ ~ U(−1, 1)` from a seeded generator.
    pub fn random(n_beta: usize, n_theta: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = DVector::from_fn(n_beta, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        let u = Uniform::new(-1.0, 1.0).expect("valid range");
        let theta = (0..n_theta).map(|_| u.sample(&mut rng)).collect();
        State {
            beta,
            theta,
            gamma: 1.0,
            stage: 0,
        }
    }
}

type Values = BTreeMap<FieldDerivative, DVector<f64>>;

/// BSCA iterations over one assembled bundle.
pub struct Optimizer<'a> {
    pub spec: &'a PhysicsSpec,
    pub bundle: DesignBundle,
    solver: BetaSolver,
    cfg: BscaConfig,
    mu: f64,
}

impl<'a> Optimizer<'a> {
    pub fn new(spec: &'a PhysicsSpec, bundle: DesignBundle, mu: f64, cfg: &BscaConfig) -> Result<Self> {
        cfg.validate()?;
        if matches!(cfg.step, StepRule::ExactLineSearch) && spec.max_factors() > 2 {
            return Err(Error::Config(
                "exact line search needs every term to have at most two factors; use the diminishing rule".into(),
            ));
        }
        let solver = BetaSolver::new(&bundle, cfg.c)?;
        Ok(Optimizer {
            spec,
            bundle,
            solver,
            cfg: cfg.clone(),
            mu,
        })
    }

    pub fn for_problem(problem: &'a Problem, cfg: &BscaConfig) -> Result<Self> {
        Self::new(&problem.spec, problem.assemble()?, problem.weights.mu, cfg)
    }

    /// Column norms of the θ-linearization when normalization is on.
    fn norms(&self, m: &nalgebra::DMatrix<f64>) -> Result<Option<Vec<f64>>> {
        if !self.cfg.normalize {
            return Ok(None);
        }
        let mut s = Vec::with_capacity(m.ncols());
        for j in 0..m.ncols() {
            let v = m.column(j).norm();
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::DegenerateColumn(self.spec.theta_names[j].clone()));
            }
            s.push(v);
        }
        Ok(Some(s))
    }

    fn l1(&self, theta: &[f64], norms: Option<&[f64]>) -> f64 {
        match norms {
            None => self.mu * theta.iter().map(|t| t.abs()).sum::<f64>(),
            Some(s) => {
                let nc = self.bundle.n_c as f64;
                self.mu / nc * theta.iter().zip(s).map(|(t, s)| (t * s).abs()).sum::<f64>()
            }
        }
    }

    fn breakdown(&self, beta: &DVector<f64>, vals: &Values, theta: &[f64], l1: f64) -> LossBreakdown {
        let r = residual_from_values(&self.bundle, vals, theta, self.spec);
        let mut lb = LossBreakdown {
            phy: r.norm_squared() / (2.0 * self.bundle.n_c as f64),
            l1,
            ..Default::default()
        };
        for b in &self.bundle.blocks {
            let raw = b.raw_loss(&self.bundle.layout.block(beta, b.field));
            match b.kind {
                crate::model::BlockKind::Data => lb.data += raw,
                crate::model::BlockKind::Ic => lb.ic += raw,
                crate::model::BlockKind::Bc => lb.bc += raw,
            }
            lb.g += b.weight * raw;
        }
        lb.total = lb.g + lb.phy + lb.l1;
        lb
    }

    /// Losses at an arbitrary state, with the same penalty convention.
    pub fn losses(&self, beta: &DVector<f64>, theta: &[f64]) -> Result<LossBreakdown> {
        let vals = self.bundle.colloc_values(beta);
        let (m, _) = linearization_from(&self.bundle, &vals, self.spec);
        let norms = if self.cfg.normalize { self.norms(&m).ok().flatten() } else { None };
        let l1 = self.l1(theta, norms.as_deref());
        Ok(self.breakdown(beta, &vals, theta, l1))
    }

    /// One β step followed by one θ update; returns the new losses and γ.
    pub fn iterate(&self, state: &mut State) -> Result<(LossBreakdown, f64)> {
        let vals = self.bundle.colloc_values(&state.beta);
        let r = residual_from_values(&self.bundle, &vals, &state.theta, self.spec);
        let grad = gradient_beta_from(&self.bundle, &vals, &r, &state.theta, self.spec);
        let tilde = self.solver.solve(&state.beta, &grad);
        let delta = &tilde - &state.beta;
        let gamma = match self.cfg.step {
            StepRule::ExactLineSearch => {
                let (g0, _) = crate::model::data_losses(&self.bundle, &state.beta)?;
                let (g1, _) = crate::model::data_losses(&self.bundle, &tilde)?;
                let (a1, a2, a3) = segment_coefficients(&self.bundle, &state.beta, &delta, &state.theta, self.spec)?
                    .expect("checked at construction");
                exact_line_search(g1 - g0, &a1, &a2, &a3, self.bundle.n_c)
            }
            StepRule::Diminishing { eps } => {
                state.gamma = diminishing_step(state.gamma, eps);
                state.gamma
            }
            StepRule::Fixed { gamma } => gamma,
        };
        state.beta.axpy(gamma, &delta, 1.0);
        let diverged = LossBreakdown {
            total: f64::NAN,
            ..Default::default()
        };
        if !state.beta.iter().all(|b| b.is_finite()) {
            return Ok((diverged, gamma));
        }

        let vals = self.bundle.colloc_values(&state.beta);
        let (m, r0) = linearization_from(&self.bundle, &vals, self.spec);
        let overflow = self.cfg.normalize && m.column_iter().any(|c| !c.norm().is_finite());
        if overflow || !(m.iter().all(|v| v.is_finite()) && r0.iter().all(|v| v.is_finite())) {
            return Ok((diverged, gamma));
        }
        let norms = self.norms(&m)?;
        state.theta = theta_subproblem(
            &m,
            &r0,
            &state.theta,
            self.mu,
            norms.as_deref(),
            self.cfg.c,
            self.cfg.theta_mode,
            &self.cfg.fista,
        )?;
        let l1 = self.l1(&state.theta, norms.as_deref());
        let lb = self.breakdown(&state.beta, &vals, &state.theta, l1);
        Ok((lb, gamma))
    }

    /// Run up to `iters` iterations, appending to `trace`.
    pub fn run(&self, state: &mut State, iters: usize, trace: &mut OptTrace) -> Result<usize> {
        let mut calm = 0;
        let mut prev: Option<f64> = trace.last().filter(|r| r.stage == state.stage).map(|r| r.total);
        let mut done = 0;
        for _ in 0..iters {
            let last_beta = state.beta.clone();
            let last_theta = state.theta.clone();
            let iter = trace.next_iter();
            let (lb, gamma) = match self.iterate(state) {
                Ok(v) => v,
                Err(e) => {
                    state.beta = last_beta;
                    state.theta = last_theta;
                    return Err(e);
                }
            };
            let finite = lb.total.is_finite() && state.theta.iter().all(|t| t.is_finite());
            if !finite {
                let err = Error::Divergence {
                    iter,
                    last_beta: last_beta.as_slice().to_vec(),
                    last_theta: last_theta.clone(),
                };
                state.beta = last_beta;
                state.theta = last_theta;
                return Err(err);
            }
            trace.records.push(IterRecord::new(iter, state.stage, &lb, gamma, &state.theta));
            if self.cfg.snapshot_every > 0 && iter % self.cfg.snapshot_every == 0 {
                trace.snapshots.push(Snapshot {
                    iter,
                    stage: state.stage,
                    beta: state.beta.as_slice().to_vec(),
                    theta: state.theta.clone(),
                });
            }
            done += 1;
            if let Some(p) = prev {
                let rel = (p - lb.total).abs() / p.abs().max(f64::MIN_POSITIVE);
                calm = if rel < self.cfg.tol { calm + 1 } else { 0 };
            }
            prev = Some(lb.total);
            if self.cfg.tol > 0.0 && calm >= self.cfg.patience {
                break;
            }
        }
        Ok(done)
    }
}

/// Plain or mini-batch BSCA on `problem`, continuing from `state`.
pub fn bsca_run(problem: &Problem, cfg: &BscaConfig, state: &mut State, trace: &mut OptTrace) -> Result<()> {
    cfg.validate()?;
    if let Some(b) = &cfg.batch {
        return minibatch_bsca(problem, cfg, b, state, trace);
    }
    let opt = Optimizer::for_problem(problem, cfg)?;
    trace.peak_design_bytes = trace.peak_design_bytes.max(opt.bundle.footprint_bytes());
    if trace.theta_names.is_empty() {
        trace.theta_names = problem.spec.theta_names.clone();
    }
    opt.run(state, cfg.max_iters, trace)?;
    push_final_snapshot(state, trace);
    Ok(())
}

fn push_final_snapshot(state: &State, trace: &mut OptTrace) {
    if let Some(last) = trace.last() {
        if trace.snapshots.last().map(|s| s.iter) != Some(last.iter) {
            let iter = last.iter;
            trace.snapshots.push(Snapshot {
                iter,
                stage: state.stage,
                beta: state.beta.as_slice().to_vec(),
                theta: state.theta.clone(),
            });
        }
    }
}

/// Near-equal contiguous partition of `idx` into `k` parts.
pub fn partition(idx: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = idx.len();
    (0..k)
        .map(|b| idx[b * n / k..(b + 1) * n / k].to_vec())
        .collect()
}

/// Epochs of shuffled batches, each re-assembled and iterated.
pub fn minibatch_bsca(
    problem: &Problem,
    cfg: &BscaConfig,
    batch: &BatchConfig,
    state: &mut State,
    trace: &mut OptTrace,
) -> Result<()> {
    if batch.num_batches == 0 {
        return Err(Error::Config("num_batches must be at least 1".into()));
    }
    if trace.theta_names.is_empty() {
        trace.theta_names = problem.spec.theta_names.clone();
    }
    let nd = problem.data.len();
    let nc = problem.colloc.len();
    if nd < batch.num_batches || nc < batch.num_batches {
        return Err(Error::Config(format!(
            "{} batches need at least that many data and collocation points ({nd}, {nc})",
            batch.num_batches
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(batch.seed);
    let full;
    let single = if batch.num_batches == 1 {
        full = Optimizer::for_problem(problem, cfg)?;
        Some(&full)
    } else {
        None
    };
    for epoch in 0..batch.epochs {
        let mut dperm: Vec<usize> = (0..nd).collect();
        let mut cperm: Vec<usize> = (0..nc).collect();
        if single.is_none() {
            dperm.shuffle(&mut rng);
            cperm.shuffle(&mut rng);
        }
        let dparts = partition(&dperm, batch.num_batches);
        let cparts = partition(&cperm, batch.num_batches);
        for b in 0..batch.num_batches {
            let owned;
            let opt = match single {
                Some(o) => o,
                None => {
                    let sub = problem.restrict(&dparts[b], &cparts[b])?;
                    owned = Optimizer::new(&problem.spec, sub.assemble()?, problem.weights.mu, cfg)?;
                    &owned
                }
            };
            let bytes = opt.bundle.footprint_bytes();
            trace.peak_design_bytes = trace.peak_design_bytes.max(bytes);
            trace.batches.push(BatchMark {
                epoch,
                batch: b,
                start_iter: trace.next_iter(),
                n_data: dparts[b].len(),
                n_colloc: cparts[b].len(),
                design_bytes: bytes,
            });
            opt.run(state, batch.iters_per_batch, trace)?;
        }
    }
    push_final_snapshot(state, trace);
    Ok(())
}
