use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Entrywise `sign(v)·max(|v| − t, 0)`.
pub fn soft_threshold(v: &DVector<f64>, t: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// `min (1/2n)‖Aθ − b‖² + μ‖θ‖₁` with `n = rows(A)`, held in Gram form.
#[derive(Clone, Debug)]
pub struct LassoProblem {
    /// `AᵀA / n`
    pub q: DMatrix<f64>,
    /// `Aᵀb / n`
    pub p: DVector<f64>,
    /// `‖b‖² / (2n)`
    pub c0: f64,
    pub mu: f64,
}

impl LassoProblem {
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>, mu: f64) -> Self {
        Self::with_scale(a, b, mu, a.nrows().max(1))
    }

    /// Same objective with an explicit `n` in the `1/(2n)` factor.
    pub fn with_scale(a: &DMatrix<f64>, b: &DVector<f64>, mu: f64, n: usize) -> Self {
        assert_eq!(a.nrows(), b.len(), "rows(A) must equal len(b)");
        let n = n as f64;
        LassoProblem {
            q: a.tr_mul(a) / n,
            p: a.tr_mul(b) / n,
            c0: b.norm_squared() / (2.0 * n),
            mu,
        }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn smooth(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.q * theta)) - self.p.dot(theta) + self.c0
    }

    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        self.smooth(theta) + self.mu * theta.lp_norm(1)
    }

    /// Gradient of the smooth part, `Aᵀ(Aθ − b)/n`.
    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.q * theta - &self.p
    }

    /// Largest eigenvalue of `AᵀA/n` by power iteration.
    pub fn lipschitz(&self) -> f64 {
        let k = self.dim();
        if k == 0 {
            return 0.0;
        }
        let mut v = DVector::from_fn(k, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
        v /= v.norm();
        let mut lam = 0.0;
        for _ in 0..10_000 {
            let w = &self.q * &v;
            let nw = w.norm();
            if nw == 0.0 {
                return 0.0;
            }
            let next = v.dot(&w);
            v = w / nw;
            if (next - lam).abs() <= 1e-6 * next.abs() {
                // the Rayleigh quotient approaches from below; pad by the tolerance
                return next.max(nw) * (1.0 + 1e-6);
            }
            lam = next;
        }
        lam * (1.0 + 1e-6)
    }

    /// Largest violation of the optimality conditions at `θ`.
    pub fn kkt_violation(&self, theta: &DVector<f64>) -> f64 {
        let g = self.gradient(theta);
        theta
            .iter()
            .zip(g.iter())
            .map(|(&t, &gi)| {
                if t == 0.0 {
                    (gi.abs() - self.mu).max(0.0)
                } else {
                    (gi + self.mu * t.signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FistaConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub monotone: bool,
}

impl Default for FistaConfig {
    fn default() -> Self {
        FistaConfig {
            max_iters: 5000,
            tol: 1e-10,
            monotone: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FistaResult {
    pub theta: DVector<f64>,
    pub iters: usize,
    pub objective: f64,
}

/// Accelerated proximal gradient with optional monotone restarts.
pub fn fista(problem: &LassoProblem, theta0: &DVector<f64>, cfg: &FistaConfig) -> FistaResult {
    let l = problem.lipschitz();
    if l == 0.0 {
        // A = 0: only the penalty remains
        let theta = DVector::zeros(problem.dim());
        let objective = problem.objective(&theta);
        return FistaResult { theta, iters: 0, objective };
    }
    let step = 1.0 / l;
    let thr = problem.mu * step;
    let mut x = theta0.clone();
    let mut fx = problem.objective(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut iters = 0;
    while iters < cfg.max_iters {
        iters += 1;
        let z = soft_threshold(&(&y - problem.gradient(&y) * step), thr);
        let fz = problem.objective(&z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if cfg.monotone && fz > fx {
            // reject and restart momentum from the last accepted point
            y = x.clone();
            t = 1.0;
            continue;
        }
        let change = (fx - fz).abs();
        let done = change <= cfg.tol * fz.abs().max(f64::MIN_POSITIVE) && (&z - &x).amax() <= 1e-12 * (1.0 + z.amax());
        y = &z + (&z - &x) * ((t - 1.0) / t_next);
        x = z;
        fx = fz;
        t = t_next;
        if done {
            break;
        }
    }
    if let Some(p) = polish(problem, &x) {
        let fp = problem.objective(&p);
        if fp <= fx {
            x = p;
            fx = fp;
        }
    }
    FistaResult {
        theta: x,
        iters,
        objective: fx,
    }
}

/// Solve the optimality system on the support and signs of `x`; accepted only
/// if it certifies optimality.
fn polish(problem: &LassoProblem, x: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    let mut out = DVector::zeros(x.len());
    if !support.is_empty() {
        let k = support.len();
        let qs = DMatrix::from_fn(k, k, |a, b| problem.q[(support[a], support[b])]);
        let rhs = DVector::from_fn(k, |a, _| problem.p[support[a]] - problem.mu * x[support[a]].signum());
        let sol = qs.cholesky()?.solve(&rhs);
        for (a, &i) in support.iter().enumerate() {
            if sol[a].signum() != x[i].signum() {
                return None;
            }
            out[i] = sol[a];
        }
    }
    let before = problem.kkt_violation(x);
    let after = problem.kkt_violation(&out);
    (after <= before && after.is_finite()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_threshold_examples() {
        let st = |v: &[f64], t| soft_threshold(&DVector::from_column_slice(v), t).as_slice().to_vec();
        assert_eq!(st(&[3.0], 1.0), vec![2.0]);
        assert_eq!(st(&[-0.5], 1.0), vec![0.0]);
        assert_eq!(st(&[0.0, -4.0, 2.0], 2.0), vec![0.0, -2.0, 0.0]);
    }

    #[test]
    fn identity_design() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![3.0, 0.5]);
        let prob = LassoProblem::with_scale(&a, &b, 1.0, 1);
        let r = fista(&prob, &DVector::zeros(2), &FistaConfig::default());
        assert!((r.theta[0] - 2.0).abs() < 1e-10);
        assert_eq!(r.theta[1], 0.0);
    }

    #[test]
    fn unregularized_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(6, 6, |i, j| if i == j { 3.0 } else { rng.random_range(-0.5..0.5) });
        let b = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let prob = LassoProblem::new(&a, &b, 0.0);
        let r = fista(&prob, &DVector::zeros(6), &FistaConfig::default());
        let direct = a.lu().solve(&b).unwrap();
        assert!((r.theta - direct).amax() < 1e-8);
    }

    #[test]
    fn zero_design_is_not_an_error() {
        let a = DMatrix::zeros(4, 3);
        let b = DVector::from_element(4, 1.0);
        let r = fista(&LassoProblem::new(&a, &b, 0.0), &DVector::zeros(3), &FistaConfig::default());
        assert_eq!(r.theta, DVector::zeros(3));
    }

    fn prox_obj(x: &DVector<f64>, v: &DVector<f64>, t: f64) -> f64 {
        0.5 * (x - v).norm_squared() + t * x.lp_norm(1)
    }

    proptest! {
        #[test]
        fn soft_threshold_is_the_prox(v in prop::collection::vec(-5.0f64..5.0, 1..6), t in 0.0f64..3.0, seed in 0u64..1000) {
            let v = DVector::from_vec(v);
            let x = soft_threshold(&v, t);
            let base = prox_obj(&x, &v, t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                let p = x.map(|xi| xi + rng.random_range(-0.5..0.5));
                prop_assert!(base <= prox_obj(&p, &v, t) + 1e-12);
            }
        }
    }
}
