//! Closed-form separable fields with exact derivatives, and the forcing that
//! makes them satisfy a given model exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bspline::PointSet;
use crate::error::{Error, Result};
use crate::model::{CollocationSet, Conditions, Dataset, Factor, PhysicsSpec};

/// One-dimensional building block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fn1 {
    /// `amp · sin(freq·s + phase)`
    Sin { amp: f64, freq: f64, phase: f64 },
    /// `amp · exp(rate·s)`
    Exp { amp: f64, rate: f64 },
    /// `Σ c_k s^k`
    Poly { coeffs: Vec<f64> },
    /// `amp · exp(−((s − center)/width)²)`
    Gaussian { amp: f64, center: f64, width: f64 },
}

fn hermite(n: usize, z: f64) -> f64 {
    // physicists' Hermite, H_{k+1} = 2z H_k − 2k H_{k−1}
    let (mut a, mut b) = (1.0, 2.0 * z);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = 2.0 * z * b - 2.0 * k as f64 * a;
        a = b;
        b = c;
    }
    b
}

impl Fn1 {
    pub fn sin(freq: f64) -> Self {
        Fn1::Sin { amp: 1.0, freq, phase: 0.0 }
    }

    pub fn cos(freq: f64) -> Self {
        Fn1::Sin {
            amp: 1.0,
            freq,
            phase: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn constant(c: f64) -> Self {
        Fn1::Poly { coeffs: vec![c] }
    }

    /// `k`-th derivative at `s`.
    pub fn eval(&self, s: f64, k: usize) -> f64 {
        match self {
            Fn1::Sin { amp, freq, phase } => {
                let arg = freq * s + phase + k as f64 * std::f64::consts::FRAC_PI_2;
                amp * freq.powi(k as i32) * arg.sin()
            }
            Fn1::Exp { amp, rate } => amp * rate.powi(k as i32) * (rate * s).exp(),
            Fn1::Poly { coeffs } => {
                let mut acc = 0.0;
                for (p, &c) in coeffs.iter().enumerate().skip(k) {
                    let fall: f64 = ((p - k + 1)..=p).map(|q| q as f64).product();
                    acc += c * fall * s.powi((p - k) as i32);
                }
                acc
            }
            Fn1::Gaussian { amp, center, width } => {
                let z = (s - center) / width;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                amp * sign * hermite(k, z) * (-z * z).exp() / width.powi(k as i32)
            }
        }
    }
}

/// `Σ coef · Π_d g_d(x_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separable {
    pub terms: Vec<(f64, Vec<Fn1>)>,
}

impl Separable {
    pub fn new(terms: Vec<(f64, Vec<Fn1>)>) -> Self {
        Separable { terms }
    }

    /// Mixed partial derivative with per-dimension `orders`.
    pub fn eval(&self, x: &[f64], orders: &[usize]) -> f64 {
        self.terms
            .iter()
            .map(|(c, fs)| c * fs.iter().enumerate().map(|(d, f)| f.eval(x[d], orders[d])).product::<f64>())
            .sum()
    }

    /// `sin(a·x − b·t)` on (x, t).
    pub fn traveling_sine(a: f64, b: f64) -> Self {
        Separable::new(vec![
            (1.0, vec![Fn1::sin(a), Fn1::cos(b)]),
            (-1.0, vec![Fn1::cos(a), Fn1::sin(b)]),
        ])
    }
}

fn factor_at(f: &Factor, fields: &[Separable], x: &[f64]) -> f64 {
    f.parts.iter().map(|(c, fd)| c * fields[fd.field].eval(x, &fd.orders)).sum()
}

/// Forcing `f` with `Σ c_t(θ) Π factors = f` for the given fields.
pub fn forcing(spec: &PhysicsSpec, theta: &[f64], fields: &[Separable], x: &[f64]) -> f64 {
    spec.terms
        .iter()
        .map(|t| t.coefficient.value(theta) * t.factors.iter().map(|f| factor_at(f, fields, x)).product::<f64>())
        .sum()
}

/// Manufactured regression problem: grid data of every field and collocation
/// points with exact forcing.
#[derive(Clone, Debug)]
pub struct Manufactured {
    pub data: Dataset,
    pub colloc: CollocationSet,
}

pub fn manufactured(
    spec: &PhysicsSpec,
    theta: &[f64],
    fields: &[Separable],
    domain: &[(f64, f64)],
    data_shape: &[usize],
    colloc_shape: &[usize],
) -> Result<Manufactured> {
    let nd = spec.dims.len();
    if fields.len() != spec.fields.len() || theta.len() != spec.theta_dim() {
        return Err(Error::Shape("manufactured fields or θ do not match the spec".into()));
    }
    if domain.len() != nd || data_shape.len() != nd || colloc_shape.len() != nd {
        return Err(Error::Shape("domain and grid shapes need one entry per dimension".into()));
    }
    let axes = |shape: &[usize]| -> Vec<Vec<f64>> {
        shape
            .iter()
            .zip(domain)
            .map(|(&n, &(lo, hi))| {
                if n == 1 {
                    vec![lo]
                } else {
                    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
                }
            })
            .collect()
    };
    let points = PointSet::Grid(axes(data_shape));
    let zero = vec![0; nd];
    let values = fields
        .iter()
        .map(|f| (0..points.len()).map(|i| f.eval(&points.point(i), &zero)).collect())
        .collect();
    let mut data = Dataset::new(
        spec.dims.clone(),
        domain.to_vec(),
        points,
        spec.fields.clone(),
        values,
        Conditions::GridFaces,
    )?;
    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), "manufactured".into());
    meta.insert("theta".into(), serde_json::json!(theta));
    meta.insert("fields".into(), serde_json::to_value(fields)?);
    data.meta = meta;
    let colloc = CollocationSet::with_forcing(PointSet::Grid(axes(colloc_shape)), |x| forcing(spec, theta, fields, x));
    Ok(Manufactured { data, colloc })
}

/// Reduced three-dimensional `(x, y, t)` advection–diffusion problem on the
/// unit cube: a drifting, spreading bump with exact forcing.
pub fn advection_diffusion_fixture(data_shape: [usize; 3], colloc_shape: [usize; 3]) -> Result<(Manufactured, Vec<f64>)> {
    let spec = crate::model::advection_diffusion_2d();
    let theta = vec![0.8, -0.5, -0.05, -0.05];
    let u = Separable::new(vec![
        (
            1.0,
            vec![
                Fn1::Gaussian { amp: 1.0, center: 0.35, width: 0.18 },
                Fn1::Gaussian { amp: 1.0, center: 0.6, width: 0.25 },
                Fn1::Exp { amp: 1.0, rate: -0.5 },
            ],
        ),
        (0.3, vec![Fn1::sin(std::f64::consts::PI), Fn1::cos(std::f64::consts::PI), Fn1::Poly { coeffs: vec![1.0, 0.5] }]),
    ]);
    let m = manufactured(
        &spec,
        &theta,
        &[u],
        &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)],
        &data_shape,
        &colloc_shape,
    )?;
    Ok((m, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd(f: &Fn1, s: f64, k: usize) -> f64 {
        let h = 1e-4;
        (f.eval(s + h, k - 1) - f.eval(s - h, k - 1)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fs = [
            Fn1::Sin { amp: 1.3, freq: 2.0, phase: 0.4 },
            Fn1::Exp { amp: 0.7, rate: -1.5 },
            Fn1::Poly { coeffs: vec![1.0, -2.0, 0.5, 0.25] },
            Fn1::Gaussian { amp: 2.0, center: 0.3, width: 0.4 },
        ];
        for f in &fs {
            for k in 1..5 {
                for &s in &[-0.7, 0.1, 0.9] {
                    assert_relative_eq!(f.eval(s, k), fd(f, s, k), epsilon = 1e-5, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn traveling_sine_is_sin_of_difference() {
        let u = Separable::traveling_sine(1.0, 1.0);
        for &(x, t) in &[(0.3, 0.1), (2.0, 1.5), (-1.0, 0.7)] {
            assert_relative_eq!(u.eval(&[x, t], &[0, 0]), (x - t).sin(), epsilon = 1e-14);
            assert_relative_eq!(u.eval(&[x, t], &[1, 1]), (x - t).sin(), epsilon = 1e-14);
        }
    }

    #[test]
    fn forcing_vanishes_for_exact_solutions() {
        // sin(x − t) solves u_t + u_x = 0
        let spec = crate::model::advection_diffusion_2d();
        let u = Separable::new(vec![
            (1.0, vec![Fn1::sin(1.0), Fn1::constant(1.0), Fn1::cos(1.0)]),
            (-1.0, vec![Fn1::cos(1.0), Fn1::constant(1.0), Fn1::sin(1.0)]),
        ]);
        for &x in &[[0.1, 0.2, 0.3], [0.9, 0.4, 0.5]] {
            assert!(forcing(&spec, &[1.0, 0.0, 0.0, 0.0], &[u.clone()], &x).abs() < 1e-14);
            assert!(forcing(&spec, &[1.0, 0.0, 1.0, 0.0], &[u.clone()], &x).abs() > 1e-3);
        }
    }

    #[test]
    fn fixture_shapes() {
        let (m, theta) = advection_diffusion_fixture([20, 12, 8], [10, 8, 6]).unwrap();
        assert_eq!(m.data.len(), 20 * 12 * 8);
        assert_eq!(m.colloc.len(), 480);
        assert_eq!(theta.len(), 4);
        assert!(m.colloc.forcing.iter().any(|f| f.abs() > 1e-3));
    }
}
