//! Step sizes: exact minimization of the quartic surrogate, diminishing rule.

use nalgebra::DVector;

/// `s(γ) = Σ c[i] γ^i`, a quartic in the step size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentPolynomial {
    pub coeffs: [f64; 5],
}

impl SegmentPolynomial {
    /// `s(γ) = γ A0 + ‖γ²A1 + γA2 + A3‖² / (2 N_c)`.
    pub fn new(a0: f64, a1: &DVector<f64>, a2: &DVector<f64>, a3: &DVector<f64>, n_c: usize) -> Self {
        let inv = 1.0 / (2.0 * n_c as f64);
        SegmentPolynomial {
            coeffs: [
                a3.dot(a3) * inv,
                a0 + 2.0 * a2.dot(a3) * inv,
                (a2.dot(a2) + 2.0 * a1.dot(a3)) * inv,
                2.0 * a1.dot(a2) * inv,
                a1.dot(a1) * inv,
            ],
        }
    }

    pub fn eval(&self, g: f64) -> f64 {
        let c = &self.coeffs;
        (((c[4] * g + c[3]) * g + c[2]) * g + c[1]) * g + c[0]
    }

    pub fn derivative(&self, g: f64) -> f64 {
        let c = &self.coeffs;
        ((4.0 * c[4] * g + 3.0 * c[3]) * g + 2.0 * c[2]) * g + c[1]
    }

    fn second(&self, g: f64) -> f64 {
        let c = &self.coeffs;
        (12.0 * c[4] * g + 6.0 * c[3]) * g + 2.0 * c[2]
    }

    /// Minimizer over `[0, 1]`; ties go to the smaller step.
    pub fn argmin_unit(&self) -> f64 {
        let c = &self.coeffs;
        if c[4] == 0.0 && c[3] == 0.0 && c[2] == 0.0 && c[1] == 0.0 {
            return 0.0;
        }
        let mut cands = vec![0.0, 1.0];
        let nz: Vec<f64> = c[1..].iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
        let span = nz.iter().cloned().fold(0.0, f64::max) / nz.iter().cloned().fold(f64::INFINITY, f64::min);
        if span > 1e12 {
            cands.extend(self.bisection_roots());
        } else {
            let roots = cubic_roots(4.0 * c[4], 3.0 * c[3], 2.0 * c[2], c[1]);
            cands.extend(roots.into_iter().map(|r| self.newton_polish(r)).filter(|r| (0.0..=1.0).contains(r)));
        }
        let mut best = 0.0;
        let mut best_s = self.eval(0.0);
        for &g in &cands[1..] {
            let s = self.eval(g);
            if s < best_s || (s == best_s && g < best) {
                best = g;
                best_s = s;
            }
        }
        best
    }

    fn newton_polish(&self, mut r: f64) -> f64 {
        for _ in 0..3 {
            let d2 = self.second(r);
            if d2 == 0.0 {
                break;
            }
            let step = self.derivative(r) / d2;
            if !step.is_finite() {
                break;
            }
            r -= step;
        }
        r
    }

    /// Roots of `s′` in `[0, 1]` by bisection on monotone pieces.
    fn bisection_roots(&self) -> Vec<f64> {
        let c = &self.coeffs;
        let mut cuts = vec![0.0];
        let mut inner: Vec<f64> = quadratic_roots(12.0 * c[4], 6.0 * c[3], 2.0 * c[2])
            .into_iter()
            .filter(|r| *r > 0.0 && *r < 1.0)
            .collect();
        inner.sort_by(f64::total_cmp);
        cuts.extend(inner);
        cuts.push(1.0);
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            let (flo, fhi) = (self.derivative(lo), self.derivative(hi));
            if flo == 0.0 {
                out.push(lo);
                continue;
            }
            if flo.signum() == fhi.signum() {
                continue;
            }
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if self.derivative(mid).signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// Real roots of `a x³ + b x² + c x + d` (Cardano / trigonometric form).
pub fn cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a.abs() <= 1e-14 * scale {
        return quadratic_roots(b, c, d);
    }
    let (b, c, d) = (b / a, c / a, d / a);
    // x = y − b/3, y³ + p y + q = 0
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        vec![u + v + shift]
    } else if p == 0.0 {
        vec![shift]
    } else {
        let r = (-p / 3.0).sqrt();
        let arg = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0);
        let phi = arg.acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift)
            .collect()
    }
}

/// Closed-form step minimizing `γ A0 + ‖γ²A1 + γA2 + A3‖²/(2N_c)` on `[0, 1]`.
pub fn exact_line_search(a0: f64, a1: &DVector<f64>, a2: &DVector<f64>, a3: &DVector<f64>, n_c: usize) -> f64 {
    if a0 == 0.0 && a1.amax() == 0.0 && a2.amax() == 0.0 {
        return 0.0;
    }
    SegmentPolynomial::new(a0, a1, a2, a3, n_c).argmin_unit()
}

/// `γ_k = γ_{k−1}(1 − ε γ_{k−1})`.
pub fn diminishing_step(gamma_prev: f64, eps: f64) -> f64 {
    gamma_prev * (1.0 - eps * gamma_prev)
}
