use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::curvature::{knot_movement_step, MovementConfig, SplineField};
use super::refine::{cumulative_interval_errors, refine_knots, ErrorField};
use crate::bspline::{Design, KnotVector, PointSet, TensorBasis};
use crate::error::{Error, Result};
use crate::model::{loss_breakdown, physics_residual, BlockKind, DesignBundle, LossBreakdown, Problem};
use crate::optimize::{bsca_run, data_fit, BscaConfig, KnotEvent, OptTrace, State};

/// Knot refinement and movement schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnotConfig {
    pub rounds: usize,
    /// Knots inserted per round and axis.
    pub n_new: Vec<usize>,
    pub move_knots: bool,
    pub movement: MovementConfig,
    /// Rank intervals by physics errors too, not only data errors.
    pub use_physics_errors: bool,
    /// Stop once the total loss is at or below this.
    pub threshold: Option<f64>,
    /// Ridge of the data fits (pure-data rounds and the `DataFit` warm start).
    pub ridge: f64,
    pub warm_start: WarmStart,
}

/// Coefficients on a new mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// Least-squares transfer of the current spline; exact for pure refinement.
    Transfer,
    /// Refit to the data.
    DataFit,
}

impl Default for KnotConfig {
    fn default() -> Self {
        KnotConfig {
            rounds: 0,
            n_new: vec![],
            move_knots: true,
            movement: MovementConfig::default(),
            use_physics_errors: true,
            threshold: None,
            ridge: 1e-10,
            warm_start: WarmStart::Transfer,
        }
    }
}

/// Data and condition losses without the physics part.
fn fit_losses(bundle: &DesignBundle, beta: &DVector<f64>) -> LossBreakdown {
    let mut lb = LossBreakdown::default();
    for b in &bundle.blocks {
        let raw = b.raw_loss(&bundle.layout.block(beta, b.field));
        match b.kind {
            BlockKind::Data => lb.data += raw,
            BlockKind::Ic => lb.ic += raw,
            BlockKind::Bc => lb.bc += raw,
        }
        lb.g += b.weight * raw;
    }
    lb.total = lb.g;
    lb
}

/// Squared data errors of the observations of `field`, one value per data point.
fn data_errors(problem: &Problem, beta: &DVector<f64>, field: usize) -> Result<ErrorField> {
    let layout = problem.layout();
    let bf = layout.block(beta, field);
    let mut e = vec![0.0; problem.data.len()];
    for obs in problem.observations.iter().filter(|o| o.field == field) {
        let k = problem.data.field_index(&obs.data_field)?;
        let pred = Design::build(&problem.bases[field], &problem.data.points, &obs.orders)?.apply(&bf);
        for (i, (p, y)) in pred.iter().zip(&problem.data.values[k]).enumerate() {
            e[i] += (obs.sign * p - y).powi(2);
        }
    }
    ErrorField::new(problem.data.points.clone(), e)
}

fn physics_errors(problem: &Problem, bundle: &DesignBundle, beta: &DVector<f64>, theta: &[f64]) -> Result<ErrorField> {
    let (r, _) = physics_residual(bundle, beta, theta, &problem.spec)?;
    ErrorField::new(problem.colloc.points.clone(), r.iter().map(|v| v * v).collect())
}

/// One refinement-plus-movement pass over every field's mesh.
fn remesh(
    problem: &Problem,
    bundle: &DesignBundle,
    beta: &DVector<f64>,
    theta: &[f64],
    kcfg: &KnotConfig,
    physics: bool,
) -> Result<(Vec<TensorBasis>, Vec<(usize, usize, Vec<f64>, Vec<f64>, bool)>)> {
    let layout = problem.layout();
    let ep = if physics { Some(physics_errors(problem, bundle, beta, theta)?) } else { None };
    let mut bases = Vec::with_capacity(problem.bases.len());
    let mut events = Vec::new();
    for (f, basis) in problem.bases.iter().enumerate() {
        let nd = basis.ndim();
        if !kcfg.n_new.is_empty() && kcfg.n_new.len() != nd {
            return Err(Error::Config(format!("n_new needs one entry per axis ({nd})")));
        }
        let ed = data_errors(problem, beta, f)?;
        let mut dims = Vec::with_capacity(nd);
        let mut inserted = Vec::with_capacity(nd);
        let mut exhausted = Vec::with_capacity(nd);
        for (a, kv) in basis.dims.iter().enumerate() {
            let n_new = kcfg.n_new.get(a).copied().unwrap_or(0);
            let cd = cumulative_interval_errors(&ed, kv, a)?;
            let cp = match &ep {
                Some(e) => cumulative_interval_errors(e, kv, a)?,
                None => vec![],
            };
            let r = refine_knots(&cd, &cp, kv, n_new)?;
            dims.push(r.knots);
            inserted.push(r.inserted);
            exhausted.push(r.exhausted);
        }
        let moved = if kcfg.move_knots {
            let field = SplineField {
                basis,
                beta: layout.block(beta, f),
            };
            let axes: Vec<usize> = (0..nd).collect();
            let (m, d) = knot_movement_step(&field, &dims, &axes, &kcfg.movement)?;
            dims = m;
            d
        } else {
            dims.iter().map(|kv| vec![0.0; kv.interior().len()]).collect()
        };
        for a in 0..nd {
            events.push((f, a, inserted[a].clone(), moved[a].clone(), exhausted[a]));
        }
        bases.push(TensorBasis::new(dims));
    }
    Ok((bases, events))
}

fn push_events(
    trace: &mut OptTrace,
    round: usize,
    at_iter: usize,
    raw: Vec<(usize, usize, Vec<f64>, Vec<f64>, bool)>,
    before: &LossBreakdown,
    after: &LossBreakdown,
) {
    for (field, axis, inserted, moved, exhausted) in raw {
        trace.knot_events.push(KnotEvent {
            round,
            field,
            axis,
            at_iter,
            inserted,
            moved,
            exhausted,
            losses_before: *before,
            losses_after: *after,
        });
    }
}

/// Knot optimization driven by data errors alone: repeated pure data fits
/// followed by refinement and movement. Returns the problem on the final mesh.
pub fn data_knot_rounds(problem: &Problem, kcfg: &KnotConfig, trace: &mut OptTrace) -> Result<Problem> {
    let mut p = problem.clone();
    for round in 1..=kcfg.rounds {
        let bundle = p.assemble()?;
        let beta = data_fit(&bundle, kcfg.ridge)?;
        let before = fit_losses(&bundle, &beta);
        let theta = vec![0.0; p.spec.theta_dim()];
        let (bases, raw) = remesh(&p, &bundle, &beta, &theta, kcfg, false)?;
        p = p.with_bases(bases);
        let nb = p.assemble()?;
        let after = fit_losses(&nb, &data_fit(&nb, kcfg.ridge)?);
        push_events(trace, round, 0, raw, &before, &after);
    }
    Ok(p)
}

/// Alternates BSCA stages with knot optimization. `cfg.max_iters` is split
/// evenly across the `rounds + 1` stages. Returns the problem on the final mesh.
pub fn adaptive_loop(
    problem: &Problem,
    cfg: &BscaConfig,
    kcfg: &KnotConfig,
    state: &mut State,
    trace: &mut OptTrace,
) -> Result<Problem> {
    if kcfg.rounds == 0 {
        bsca_run(problem, cfg, state, trace)?;
        return Ok(problem.clone());
    }
    let stages = kcfg.rounds + 1;
    let mut p = problem.clone();
    for stage in 0..stages {
        let mut c = cfg.clone();
        c.max_iters = cfg.max_iters / stages + usize::from(stage < cfg.max_iters % stages);
        bsca_run(&p, &c, state, trace)?;
        let last = trace.last().map(|r| r.total);
        let reached = matches!((kcfg.threshold, last), (Some(th), Some(t)) if t <= th);
        if stage + 1 == stages || reached {
            break;
        }
        let bundle = p.assemble()?;
        let before = loss_breakdown(&bundle, &state.beta, &state.theta, &p.spec, p.weights.mu)?;
        let (bases, raw) = remesh(&p, &bundle, &state.beta, &state.theta, kcfg, kcfg.use_physics_errors)?;
        let next = p.with_bases(bases);
        let old = std::mem::replace(&mut p, next);
        let nb = p.assemble()?;
        state.beta = match kcfg.warm_start {
            WarmStart::Transfer => transfer_beta(&old.bases, &p.bases, &state.beta)?,
            WarmStart::DataFit => data_fit(&nb, kcfg.ridge)?,
        };
        state.gamma = 1.0;
        state.stage += 1;
        let after = loss_breakdown(&nb, &state.beta, &state.theta, &p.spec, p.weights.mu)?;
        push_events(trace, stage + 1, trace.next_iter(), raw, &before, &after);
    }
    Ok(p)
}

/// Least-squares map from coefficients on `old` to coefficients on `new`,
/// matching the curves at `degree + 2` points per interval of the merged breakpoints.
pub fn transfer_matrix(old: &KnotVector, new: &KnotVector) -> Result<DMatrix<f64>> {
    if old.degree() != new.degree() || old.domain_lo() != new.domain_lo() || old.domain_hi() != new.domain_hi() {
        return Err(Error::InvalidKnots("transfer needs the same degree and domain".into()));
    }
    let mut bp = old.breakpoints();
    bp.extend(new.breakpoints());
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    let per = old.degree() + 2;
    let xs: Vec<f64> = bp
        .windows(2)
        .flat_map(|w| (0..per).map(move |j| w[0] + (w[1] - w[0]) * (j as f64 + 0.5) / per as f64))
        .collect();
    let pts = PointSet::Grid(vec![xs]);
    let eval = |kv: &KnotVector| -> Result<DMatrix<f64>> {
        match Design::build(&TensorBasis::new(vec![kv.clone()]), &pts, &[0])? {
            Design::Kron { mut factors } => Ok(factors.remove(0)),
            Design::Rows(_) => unreachable!("grid points give a Kronecker design"),
        }
    };
    let b_new = eval(new)?;
    let b_old = eval(old)?;
    b_new
        .svd(true, true)
        .solve(&b_old, 1e-14)
        .map_err(|e| Error::Shape(e.to_string()))
}

/// Per-field tensor transfer of `beta` between meshes with equal degrees.
pub fn transfer_beta(old: &[TensorBasis], new: &[TensorBasis], beta: &DVector<f64>) -> Result<DVector<f64>> {
    let layout = crate::model::BetaLayout::new(old);
    let mut out = Vec::with_capacity(new.iter().map(TensorBasis::num_basis).sum());
    for (f, (o, n)) in old.iter().zip(new).enumerate() {
        let factors = o
            .dims
            .iter()
            .zip(&n.dims)
            .map(|(a, b)| transfer_matrix(a, b))
            .collect::<Result<Vec<_>>>()?;
        out.extend_from_slice(Design::Kron { factors }.apply(&layout.block(beta, f)).as_slice());
    }
    Ok(DVector::from_vec(out))
}
