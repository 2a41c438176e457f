//! Equation discovery: sequential-threshold LASSO rounds of BSCA on a
//! candidate library, then an unpenalized parameter-estimation pass.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::knots::{adaptive_loop, KnotConfig};
use crate::model::{LibrarySpec, Problem};
use crate::optimize::{bsca_run, BscaConfig, OptTrace, State, StepRule};
use crate::sparse::{st_lasso, DiscoveryState, StLassoConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub mu: f64,
    pub tau: f64,
    pub rounds_max: usize,
    /// BSCA settings of each penalized round; `normalize` is forced on.
    pub round: BscaConfig,
    /// BSCA settings of the final `μ = 0` pass. Exact line search falls back
    /// to the round's step rule when the support has higher-order products.
    pub refit: BscaConfig,
    pub refit_knots: KnotConfig,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            mu: 5.0,
            tau: 0.2,
            rounds_max: 100,
            round: BscaConfig {
                max_iters: 100,
                step: StepRule::Diminishing { eps: 0.6 },
                normalize: true,
                ..Default::default()
            },
            refit: BscaConfig::default(),
            refit_knots: KnotConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub candidates: Vec<String>,
    pub support: Vec<String>,
    pub state: DiscoveryState,
    pub equation: String,
}

/// Runs discovery from `state`; on return `state` holds the refit and the
/// problem on the final mesh is returned alongside the report.
pub fn discover(
    problem: &Problem,
    lib: &LibrarySpec,
    cfg: &DiscoveryConfig,
    state: &mut State,
    trace: &mut OptTrace,
) -> Result<(DiscoveryReport, Problem)> {
    let names = lib.names();
    if trace.theta_names.is_empty() {
        trace.theta_names = names.clone();
    }
    // full-length θ carried between rounds, indexed by candidate
    let mut full = vec![0.0; lib.len()];
    for (k, v) in state.theta.iter().enumerate().take(lib.len()) {
        full[k] = *v;
    }
    let mut round_cfg = cfg.round.clone();
    round_cfg.normalize = true;
    let st = StLassoConfig {
        tau: cfg.tau,
        rounds_max: cfg.rounds_max,
    };
    struct Shared<'t> {
        full: Vec<f64>,
        beta: nalgebra::DVector<f64>,
        stage: usize,
        trace: &'t mut OptTrace,
        problem: Problem,
    }
    let shared = std::cell::RefCell::new(Shared {
        full,
        beta: state.beta.clone(),
        stage: state.stage,
        trace,
        problem: problem.clone(),
    });
    let run = |active: &[usize], penalized: bool| -> Result<(Vec<f64>, f64)> {
        let mut sh = shared.borrow_mut();
        let mut p = problem.with_spec(lib.to_spec(active)?);
        let mut s = State {
            beta: sh.beta.clone(),
            theta: active.iter().map(|&i| sh.full[i]).collect(),
            gamma: 1.0,
            stage: sh.stage,
        };
        let mut t = OptTrace::default();
        if penalized {
            p.weights.mu = cfg.mu;
            bsca_run(&p, &round_cfg, &mut s, &mut t)?;
        } else {
            p.weights.mu = 0.0;
            let mut c = cfg.refit.clone();
            if matches!(c.step, StepRule::ExactLineSearch) && p.spec.max_factors() > 2 {
                c.step = cfg.round.step.clone();
            }
            sh.problem = adaptive_loop(&p, &c, &cfg.refit_knots, &mut s, &mut t)?;
        }
        append(sh.trace, t, active, lib.len());
        for (&i, v) in active.iter().zip(&s.theta) {
            sh.full[i] = *v;
        }
        sh.beta = s.beta;
        sh.stage = s.stage + usize::from(penalized);
        let loss = sh.trace.last().map_or(f64::NAN, |r| r.total);
        Ok((s.theta, loss))
    };
    let result = st_lasso(&names, &st, |_, active| run(active, true), |active| run(active, false))?;
    let sh = shared.into_inner();
    state.beta = sh.beta;
    state.stage = sh.stage;
    state.gamma = 1.0;
    state.theta = vec![0.0; lib.len()];
    for (&i, v) in result.active.iter().zip(&result.theta) {
        state.theta[i] = *v;
    }
    let final_problem = sh.problem;
    let report = DiscoveryReport {
        candidates: names.clone(),
        support: result.active.iter().map(|&i| names[i].clone()).collect(),
        equation: lib.render(&result.active, &result.theta),
        state: result,
    };
    Ok((report, final_problem))
}

/// Appends a sub-run trace, renumbering iterations and widening θ to the full library.
fn append(trace: &mut OptTrace, sub: OptTrace, active: &[usize], n: usize) {
    let offset = trace.next_iter() - 1;
    let widen = |th: &[f64]| {
        let mut w = vec![0.0; n];
        for (&i, v) in active.iter().zip(th) {
            w[i] = *v;
        }
        w
    };
    for mut r in sub.records {
        r.iter += offset;
        r.theta = widen(&r.theta);
        trace.records.push(r);
    }
    for mut k in sub.knot_events {
        k.at_iter += offset;
        trace.knot_events.push(k);
    }
    for mut b in sub.batches {
        b.start_iter += offset;
        trace.batches.push(b);
    }
    for mut s in sub.snapshots {
        s.iter += offset;
        s.theta = widen(&s.theta);
        trace.snapshots.push(s);
    }
    trace.peak_design_bytes = trace.peak_design_bytes.max(sub.peak_design_bytes);
}
