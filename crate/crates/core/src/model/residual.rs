//! Residuals, losses and exact gradients.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bundle::{BlockKind, DesignBundle};
use super::physics::{Factor, FieldDerivative, PhysicsSpec};
use crate::error::{Error, Result};

type Values = BTreeMap<FieldDerivative, DVector<f64>>;

fn check(bundle: &DesignBundle, beta: &DVector<f64>, theta: &[f64], spec: &PhysicsSpec) -> Result<()> {
    if beta.len() != bundle.n_beta() {
        return Err(Error::Shape(format!("β has length {}, expected {}", beta.len(), bundle.n_beta())));
    }
    if theta.len() != spec.theta_dim() {
        return Err(Error::Shape(format!("θ has length {}, expected {}", theta.len(), spec.theta_dim())));
    }
    Ok(())
}

pub(crate) fn factor_value(f: &Factor, vals: &Values, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (c, fd) in &f.parts {
        out.axpy(*c, &vals[fd], 1.0);
    }
    out
}

fn product(factors: &[DVector<f64>], skip: Option<usize>, n: usize) -> DVector<f64> {
    let mut p = DVector::from_element(n, 1.0);
    for (k, v) in factors.iter().enumerate() {
        if Some(k) != skip {
            p.component_mul_assign(v);
        }
    }
    p
}

/// Residual from precomputed collocation values.
pub(crate) fn residual_from_values(bundle: &DesignBundle, vals: &Values, theta: &[f64], spec: &PhysicsSpec) -> DVector<f64> {
    let n = bundle.n_c;
    let mut r = -bundle.forcing.clone();
    for t in &spec.terms {
        let c = t.coefficient.value(theta);
        if c == 0.0 {
            continue;
        }
        let fs: Vec<DVector<f64>> = t.factors.iter().map(|f| factor_value(f, vals, n)).collect();
        r.axpy(c, &product(&fs, None, n), 1.0);
    }
    r
}

/// Physics residual at collocation points and `h = ‖r‖²/(2N_c)`.
pub fn physics_residual(
    bundle: &DesignBundle,
    beta: &DVector<f64>,
    theta: &[f64],
    spec: &PhysicsSpec,
) -> Result<(DVector<f64>, f64)> {
    check(bundle, beta, theta, spec)?;
    let vals = bundle.colloc_values(beta);
    let r = residual_from_values(bundle, &vals, theta, spec);
    let h = r.norm_squared() / (2.0 * bundle.n_c as f64);
    Ok((r, h))
}

/// `∇_β h` by the product rule over each term's factors.
pub fn physics_gradient_beta(
    bundle: &DesignBundle,
    beta: &DVector<f64>,
    theta: &[f64],
    spec: &PhysicsSpec,
) -> Result<DVector<f64>> {
    check(bundle, beta, theta, spec)?;
    let vals = bundle.colloc_values(beta);
    let r = residual_from_values(bundle, &vals, theta, spec);
    Ok(gradient_beta_from(bundle, &vals, &r, theta, spec))
}

pub(crate) fn gradient_beta_from(
    bundle: &DesignBundle,
    vals: &Values,
    r: &DVector<f64>,
    theta: &[f64],
    spec: &PhysicsSpec,
) -> DVector<f64> {
    let n = bundle.n_c;
    // accumulate one weight vector per distinct derivative, then apply Dᵀ once each
    let mut w: BTreeMap<&FieldDerivative, DVector<f64>> = BTreeMap::new();
    for t in &spec.terms {
        let c = t.coefficient.value(theta);
        if c == 0.0 || t.factors.is_empty() {
            continue;
        }
        let fs: Vec<DVector<f64>> = t.factors.iter().map(|f| factor_value(f, vals, n)).collect();
        for (k, f) in t.factors.iter().enumerate() {
            let mut others = product(&fs, Some(k), n);
            others.component_mul_assign(r);
            for (a, fd) in &f.parts {
                w.entry(fd)
                    .or_insert_with(|| DVector::zeros(n))
                    .axpy(c * a, &others, 1.0);
            }
        }
    }
    let mut g = DVector::zeros(bundle.n_beta());
    let inv = 1.0 / n as f64;
    for (fd, wv) in w {
        let off = bundle.layout.offsets[fd.field];
        let s = bundle.layout.sizes[fd.field];
        let mut view = g.rows_mut(off, s);
        view.axpy(inv, &bundle.colloc[fd].apply_t(&wv), 1.0);
    }
    g
}

/// Affine form `r = r0 + M θ` at fixed `β`.
pub fn theta_linearization(
    bundle: &DesignBundle,
    beta: &DVector<f64>,
    spec: &PhysicsSpec,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check(bundle, beta, &vec![0.0; spec.theta_dim()], spec)?;
    let vals = bundle.colloc_values(beta);
    Ok(linearization_from(bundle, &vals, spec))
}

pub(crate) fn linearization_from(bundle: &DesignBundle, vals: &Values, spec: &PhysicsSpec) -> (DMatrix<f64>, DVector<f64>) {
    let n = bundle.n_c;
    let mut m = DMatrix::zeros(n, spec.theta_dim());
    let mut r0 = -bundle.forcing.clone();
    for t in &spec.terms {
        let fs: Vec<DVector<f64>> = t.factors.iter().map(|f| factor_value(f, vals, n)).collect();
        let p = product(&fs, None, n);
        match t.coefficient {
            super::physics::Coefficient::Theta { index, scale } => {
                let mut col = m.column_mut(index);
                col.axpy(scale, &p, 1.0);
            }
            super::physics::Coefficient::Constant(c) => r0.axpy(c, &p, 1.0),
        }
    }
    (m, r0)
}

/// `∇_θ h = Mᵀ r / N_c`.
pub fn physics_gradient_theta(
    bundle: &DesignBundle,
    beta: &DVector<f64>,
    theta: &[f64],
    spec: &PhysicsSpec,
) -> Result<DVector<f64>> {
    check(bundle, beta, theta, spec)?;
    let vals = bundle.colloc_values(beta);
    let (m, r0) = linearization_from(bundle, &vals, spec);
    let r = r0 + &m * DVector::from_column_slice(theta);
    Ok(m.transpose() * r / bundle.n_c as f64)
}

/// Weighted data/condition loss `g` and its gradient.
pub fn data_losses(bundle: &DesignBundle, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    if beta.len() != bundle.n_beta() {
        return Err(Error::Shape(format!("β has length {}, expected {}", beta.len(), bundle.n_beta())));
    }
    let mut g = 0.0;
    let mut grad = DVector::zeros(bundle.n_beta());
    for b in &bundle.blocks {
        if b.weight == 0.0 {
            continue;
        }
        let off = bundle.layout.offsets[b.field];
        let s = bundle.layout.sizes[b.field];
        let bf = bundle.layout.block(beta, b.field);
        let scale = b.weight / b.n as f64;
        for (d, y) in &b.parts {
            let res = d.apply(&bf) - y;
            g += 0.5 * scale * res.norm_squared();
            let mut view = grad.rows_mut(off, s);
            view.axpy(scale, &d.apply_t(&res), 1.0);
        }
    }
    Ok((g, grad))
}

/// Per-category losses of one state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Unweighted `1/(2n)‖·‖²` sums per category.
    pub data: f64,
    pub ic: f64,
    pub bc: f64,
    pub phy: f64,
    /// `μ‖θ‖₁`.
    pub l1: f64,
    /// Weighted data part `g`.
    pub g: f64,
    /// `g + h + μ‖θ‖₁`.
    pub total: f64,
}

pub fn loss_breakdown(
    bundle: &DesignBundle,
    beta: &DVector<f64>,
    theta: &[f64],
    spec: &PhysicsSpec,
    mu: f64,
) -> Result<LossBreakdown> {
    let (_, h) = physics_residual(bundle, beta, theta, spec)?;
    let mut lb = LossBreakdown {
        phy: h,
        ..Default::default()
    };
    for b in &bundle.blocks {
        let raw = b.raw_loss(&bundle.layout.block(beta, b.field));
        match b.kind {
            BlockKind::Data => lb.data += raw,
            BlockKind::Ic => lb.ic += raw,
            BlockKind::Bc => lb.bc += raw,
        }
        lb.g += b.weight * raw;
    }
    lb.l1 = mu * theta.iter().map(|t| t.abs()).sum::<f64>();
    lb.total = lb.g + lb.phy + lb.l1;
    Ok(lb)
}

/// Residual along `β + γΔ` as `γ²A1 + γA2 + A3`; `None` when a term has more
/// than two factors (the path is then not quadratic in `γ`).
pub fn segment_coefficients(
    bundle: &DesignBundle,
    beta: &DVector<f64>,
    delta: &DVector<f64>,
    theta: &[f64],
    spec: &PhysicsSpec,
) -> Result<Option<(DVector<f64>, DVector<f64>, DVector<f64>)>> {
    check(bundle, beta, theta, spec)?;
    if spec.max_factors() > 2 {
        return Ok(None);
    }
    let n = bundle.n_c;
    let a = bundle.colloc_values(beta);
    let d = bundle.colloc_values(delta);
    let mut a1 = DVector::zeros(n);
    let mut a2 = DVector::zeros(n);
    let a3 = residual_from_values(bundle, &a, theta, spec);
    for t in &spec.terms {
        let c = t.coefficient.value(theta);
        if c == 0.0 {
            continue;
        }
        match t.factors.as_slice() {
            [] => {}
            [f] => a2.axpy(c, &factor_value(f, &d, n), 1.0),
            [p, q] => {
                let (ap, aq) = (factor_value(p, &a, n), factor_value(q, &a, n));
                let (dp, dq) = (factor_value(p, &d, n), factor_value(q, &d, n));
                a1.axpy(c, &dp.component_mul(&dq), 1.0);
                a2.axpy(c, &(ap.component_mul(&dq) + dp.component_mul(&aq)), 1.0);
            }
            _ => unreachable!(),
        }
    }
    Ok(Some((a1, a2, a3)))
}
