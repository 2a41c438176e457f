//! Block subproblems: proximal ridge step for β, convex solve for θ.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::config::ThetaMode;
use crate::error::{Error, Result};
use crate::model::DesignBundle;
use crate::sparse::{fista, soft_threshold, FistaConfig, LassoProblem};

/// Factor of `Σ w/n DᵀD + cI` and the data right-hand side, reused while the
/// bases and weights stay fixed.
#[derive(Clone, Debug)]
pub struct BetaSolver {
    chol: Cholesky<f64, Dyn>,
    rhs: DVector<f64>,
    c: f64,
}

impl BetaSolver {
    pub fn new(bundle: &DesignBundle, c: f64) -> Result<Self> {
        let mut k = bundle.data_gram();
        for i in 0..k.nrows() {
            k[(i, i)] += c;
        }
        let chol = Cholesky::new(k).ok_or_else(|| Error::Conditioning {
            block: offending_block(bundle, c),
        })?;
        Ok(BetaSolver {
            chol,
            rhs: bundle.data_rhs(),
            c,
        })
    }

    /// `β̃ = K⁻¹(Σ w/n Dᵀy + cβ_prev − ∇h)`.
    pub fn solve(&self, beta_prev: &DVector<f64>, grad_h: &DVector<f64>) -> DVector<f64> {
        let b = &self.rhs + beta_prev * self.c - grad_h;
        self.chol.solve(&b)
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

fn offending_block(bundle: &DesignBundle, c: f64) -> String {
    for b in &bundle.blocks {
        let s = bundle.layout.sizes[b.field];
        let mut k = DMatrix::<f64>::identity(s, s) * c;
        for (d, _) in &b.parts {
            k += d.gram() * (b.weight / b.n as f64);
        }
        if Cholesky::new(k).is_none() {
            return b.name.clone();
        }
    }
    "data+conditions".into()
}

/// One-shot β subproblem (factorizes every call).
pub fn beta_subproblem(
    bundle: &DesignBundle,
    beta_prev: &DVector<f64>,
    grad_h: &DVector<f64>,
    c: f64,
) -> Result<DVector<f64>> {
    Ok(BetaSolver::new(bundle, c)?.solve(beta_prev, grad_h))
}

/// Ridge-regularized pure data fit `(Σ w/n DᵀD + ridge·I)⁻¹ Σ w/n Dᵀy`.
pub fn data_fit(bundle: &DesignBundle, ridge: f64) -> Result<DVector<f64>> {
    let zero = DVector::zeros(bundle.n_beta());
    Ok(BetaSolver::new(bundle, ridge)?.solve(&zero, &zero))
}

/// θ-subproblem of `‖r0 + Mθ‖²/(2N_c) + penalty`.
///
/// Without `norms` the penalty is `μ‖θ‖₁`. With `norms = s`, columns are
/// scaled to `M_k / s_k` and the penalty is `(μ/N_c)‖s∘θ‖₁`.
#[allow(clippy::too_many_arguments)]
pub fn theta_subproblem(
    m: &DMatrix<f64>,
    r0: &DVector<f64>,
    theta_prev: &[f64],
    mu: f64,
    norms: Option<&[f64]>,
    c: f64,
    mode: ThetaMode,
    fista_cfg: &FistaConfig,
) -> Result<Vec<f64>> {
    let k = m.ncols();
    if theta_prev.len() != k || r0.len() != m.nrows() {
        return Err(Error::Shape("θ-subproblem dimensions disagree".into()));
    }
    if k == 0 {
        return Ok(vec![]);
    }
    let nc = m.nrows() as f64;
    let s: Vec<f64> = norms.map_or(vec![1.0; k], <[f64]>::to_vec);
    let mu_eff = if norms.is_some() { mu / nc } else { mu };
    // work in scaled coordinates θ̂ = s∘θ
    let mut q = m.tr_mul(m) / nc;
    let mut p = -(m.tr_mul(r0)) / nc;
    for i in 0..k {
        p[i] /= s[i];
        for j in 0..k {
            q[(i, j)] /= s[i] * s[j];
        }
    }
    if !(q.iter().all(|v| v.is_finite()) && p.iter().all(|v| v.is_finite())) {
        return Ok(vec![f64::NAN; k]);
    }
    let prev = DVector::from_fn(k, |i, _| theta_prev[i] * s[i]);
    let hat = match mode {
        ThetaMode::Direct if mu_eff == 0.0 => least_squares(&q, &p),
        ThetaMode::Direct => {
            let prob = LassoProblem {
                q,
                p,
                c0: r0.norm_squared() / (2.0 * nc),
                mu: mu_eff,
            };
            fista(&prob, &prev, fista_cfg).theta
        }
        ThetaMode::QuadraticApprox => {
            let grad = &q * &prev - &p;
            soft_threshold(&(&prev - grad / c), mu_eff / c)
        }
    };
    Ok((0..k).map(|i| hat[i] / s[i]).collect())
}

/// Minimizer of `½θᵀQθ − pᵀθ`, minimum-norm on rank deficiency.
fn least_squares(q: &DMatrix<f64>, p: &DVector<f64>) -> DVector<f64> {
    let k = p.len();
    // Jacobi scaling before the decomposition
    let d: Vec<f64> = (0..k)
        .map(|i| if q[(i, i)] > 0.0 { 1.0 / q[(i, i)].sqrt() } else { 0.0 })
        .collect();
    let qs = DMatrix::from_fn(k, k, |i, j| q[(i, j)] * d[i] * d[j]);
    let ps = DVector::from_fn(k, |i, _| p[i] * d[i]);
    let sol = match Cholesky::new(qs.clone()) {
        Some(ch) if ch.l().diagonal().min() > 1e-7 => ch.solve(&ps),
        _ => qs
            .svd(true, true)
            .solve(&ps, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(k)),
    };
    DVector::from_fn(k, |i, _| sol[i] * d[i])
}
