//! Periodic pseudo-spectral ETDRK4 integrator for `u_t = L u − a·(u²/2)_x`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::bspline::PointSet;
use crate::error::{Error, Result};
use crate::model::{Conditions, Dataset};

/// Constant-coefficient operator `L(k) = Σ c_p (ik)^p` plus the advective term.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicPde {
    /// `(p, c_p)`: coefficient of `∂^p u / ∂x^p` on the right-hand side.
    pub linear: Vec<(u32, f64)>,
    /// Coefficient `a` of `−a u u_x`.
    pub advection: f64,
}

impl PeriodicPde {
    /// `u_t = −θ1 u u_x − θ2 u_xx − θ3 u_xxxx`.
    pub fn kuramoto_sivashinsky(theta: [f64; 3]) -> Self {
        PeriodicPde {
            linear: vec![(2, -theta[1]), (4, -theta[2])],
            advection: theta[0],
        }
    }

    /// `u_t = −u u_x + ν u_xx`.
    pub fn burgers(nu: f64) -> Self {
        PeriodicPde {
            linear: vec![(2, nu)],
            advection: 1.0,
        }
    }

    fn symbol(&self, k: f64) -> f64 {
        // (ik)^p is real for even p; odd linear terms are not supported here
        self.linear
            .iter()
            .map(|&(p, c)| {
                let s = if (p / 2) % 2 == 0 { 1.0 } else { -1.0 };
                c * s * k.powi(p as i32)
            })
            .sum()
    }
}

/// Spatial grid and output schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    pub nx: usize,
    /// Period of the domain; grid points are `x_i = i·period/nx`.
    pub period: f64,
    /// Output times.
    pub times: Vec<f64>,
    /// Largest admissible internal step.
    pub max_dt: f64,
}

struct Etd {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    g: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

fn wavenumber(j: usize, n: usize, period: f64) -> f64 {
    let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
    2.0 * PI * m / period
}

impl Etd {
    fn new(pde: &PeriodicPde, n: usize, period: f64, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let m = 32;
        let roots: Vec<Complex64> = (1..=m)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / m as f64))
            .collect();
        let mut e = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        let mut f2 = vec![0.0; n];
        let mut f3 = vec![0.0; n];
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        let cutoff = n / 3;
        for j in 0..n {
            let k = wavenumber(j, n, period);
            let l = pde.symbol(k);
            e[j] = (h * l).exp();
            e2[j] = (h * l / 2.0).exp();
            let (mut sq, mut s1, mut s2, mut s3) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
            for r in &roots {
                let lr = Complex64::new(h * l, 0.0) + r;
                let el = lr.exp();
                sq += ((lr / 2.0).exp() - 1.0) / lr;
                s1 += (-4.0 - lr + el * (4.0 - 3.0 * lr + lr * lr)) / lr.powi(3);
                s2 += (2.0 + lr + el * (-2.0 + lr)) / lr.powi(3);
                s3 += (-4.0 - 3.0 * lr - lr * lr + el * (4.0 - lr)) / lr.powi(3);
            }
            let mf = m as f64;
            q[j] = h * (sq / mf).re;
            f1[j] = h * (s1 / mf).re;
            f2[j] = h * (s2 / mf).re;
            f3[j] = h * (s3 / mf).re;
            // 2/3-rule dealiasing and no Nyquist contribution to the odd derivative
            let m_idx = if j <= n / 2 { j } else { n - j };
            if m_idx <= cutoff && !(n % 2 == 0 && j == n / 2) {
                g[j] = Complex64::new(0.0, -0.5 * pde.advection * k);
            }
        }
        Etd { e, e2, q, f1, f2, f3, g, fwd, inv, n }
    }

    fn nonlinear(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut u = v.to_vec();
        self.inv.process(&mut u);
        let inv_n = 1.0 / self.n as f64;
        let mut w: Vec<Complex64> = u.iter().map(|z| Complex64::new((z.re * inv_n).powi(2), 0.0)).collect();
        self.fwd.process(&mut w);
        w.iter().zip(&self.g).map(|(a, b)| a * b).collect()
    }

    fn step(&self, v: &mut [Complex64]) {
        let n = self.n;
        let nv = self.nonlinear(v);
        let a: Vec<Complex64> = (0..n).map(|j| v[j] * self.e2[j] + nv[j] * self.q[j]).collect();
        let na = self.nonlinear(&a);
        let b: Vec<Complex64> = (0..n).map(|j| v[j] * self.e2[j] + na[j] * self.q[j]).collect();
        let nb = self.nonlinear(&b);
        let c: Vec<Complex64> = (0..n)
            .map(|j| a[j] * self.e2[j] + (nb[j] * 2.0 - nv[j]) * self.q[j])
            .collect();
        let nc = self.nonlinear(&c);
        for j in 0..n {
            v[j] = v[j] * self.e[j] + nv[j] * self.f1[j] + (na[j] + nb[j]) * (2.0 * self.f2[j]) + nc[j] * self.f3[j];
        }
    }
}

/// Integrate from `u0` (sampled on the periodic grid); returns one row per output time.
pub fn integrate(pde: &PeriodicPde, grid: &SpectralGrid, u0: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = grid.nx;
    if u0.len() != n {
        return Err(Error::Shape(format!("initial condition has {} values for {n} points", u0.len())));
    }
    let mut cache: BTreeMap<u64, Etd> = BTreeMap::new();
    let mut v: Vec<Complex64> = u0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    fwd.process(&mut v);
    let mut out = Vec::with_capacity(grid.times.len());
    let mut t = 0.0;
    for &target in &grid.times {
        let span = target - t;
        if span < -1e-12 {
            return Err(Error::Config("output times must be non-decreasing and start at or after 0".into()));
        }
        if span > 1e-14 {
            let steps = (span / grid.max_dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            let etd = cache.entry(h.to_bits()).or_insert_with(|| Etd::new(pde, n, grid.period, h));
            for s in 0..steps {
                etd.step(&mut v);
                if s % 16 == 0 && v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Integration { time: t + (s + 1) as f64 * h });
                }
            }
            t = target;
        }
        let mut u = v.clone();
        inv.process(&mut u);
        let row: Vec<f64> = u.iter().map(|z| z.re / n as f64).collect();
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration { time: t });
        }
        out.push(row);
    }
    Ok(out)
}

/// Zero-mean random field with Fourier modes `1..=max_mode`, scaled so that
/// `max |u0| = amplitude`.
pub fn band_limited_ic(nx: usize, period: f64, max_mode: usize, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<(f64, f64)> = (0..max_mode)
        .map(|_| (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    let u: Vec<f64> = (0..nx)
        .map(|i| {
            let x = i as f64 * period / nx as f64;
            coef.iter()
                .enumerate()
                .map(|(m, &(a, b))| {
                    let w = 2.0 * PI * (m + 1) as f64 / period;
                    a * (w * x).cos() + b * (w * x).sin()
                })
                .sum()
        })
        .collect();
    let peak = u.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    u.into_iter().map(|v| v * amplitude / peak).collect()
}

/// Spectral `x`-derivative of order `p` of a periodic sample.
pub fn spectral_derivative(u: &[f64], period: f64, p: u32) -> Vec<f64> {
    let n = u.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut v: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut v);
    for (j, z) in v.iter_mut().enumerate() {
        let k = if p % 2 == 1 && n % 2 == 0 && j == n / 2 { 0.0 } else { wavenumber(j, n, period) };
        *z *= Complex64::new(0.0, k).powu(p);
    }
    inv.process(&mut v);
    v.iter().map(|z| z.re / n as f64).collect()
}

/// Grid dataset from a spectral run: `x_i = i·dx` for `i < nx`, `t_j = j·Lt/(nt−1)`.
fn to_dataset(rows: &[Vec<f64>], xs: Vec<f64>, ts: Vec<f64>, lx: f64, lt: f64, meta: BTreeMap<String, serde_json::Value>) -> Result<Dataset> {
    let (nx, nt) = (xs.len(), ts.len());
    let mut vals = vec![0.0; nx * nt];
    for (j, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            vals[i * nt + j] = v;
        }
    }
    let mut ds = Dataset::new(
        vec!["x".into(), "t".into()],
        vec![(0.0, lx), (0.0, lt)],
        PointSet::Grid(vec![xs, ts]),
        vec!["u".into()],
        vec![vals],
        Conditions::GridFaces,
    )?;
    ds.meta = meta;
    Ok(ds)
}

/// Settings shared by the periodic generators.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicRun {
    pub nx: usize,
    pub nt: usize,
    pub lx: f64,
    pub lt: f64,
    pub seed: u64,
    pub max_mode: usize,
    pub amplitude: f64,
    /// The step is at most `Lt/(substeps·nt)`.
    pub substeps: f64,
    /// The solver grid has `oversample·nx` points; output keeps every
    /// `oversample`-th one.
    pub oversample: usize,
}

impl PeriodicRun {
    pub fn new(nx: usize, nt: usize, lx: f64, lt: f64, seed: u64) -> Self {
        PeriodicRun {
            nx,
            nt,
            lx,
            lt,
            seed,
            max_mode: 4,
            amplitude: 1.0,
            substeps: 50.0,
            oversample: 2,
        }
    }

    pub fn period(&self) -> f64 {
        self.lx * self.nx as f64 / (self.nx - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nt).map(|j| j as f64 * self.lt / (self.nt - 1) as f64).collect()
    }

    /// Output-grid rows at arbitrary `times`, starting from the seeded initial condition.
    pub fn solve(&self, pde: &PeriodicPde, times: Vec<f64>) -> Result<Vec<Vec<f64>>> {
        let os = self.oversample.max(1);
        let sg = SpectralGrid {
            nx: self.nx * os,
            period: self.period(),
            times,
            max_dt: self.lt / (self.substeps * self.nt as f64),
        };
        let u0 = band_limited_ic(sg.nx, sg.period, self.max_mode, self.amplitude, self.seed);
        let rows = integrate(pde, &sg, &u0)?;
        Ok(rows.into_iter().map(|r| r.into_iter().step_by(os).collect()).collect())
    }

    fn meta(&self, name: &str, extra: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
        let mut m = BTreeMap::new();
        m.insert("generator".into(), name.into());
        m.insert("nx".into(), self.nx.into());
        m.insert("nt".into(), self.nt.into());
        m.insert("lx".into(), self.lx.into());
        m.insert("lt".into(), self.lt.into());
        m.insert("seed".into(), self.seed.into());
        m.insert("period".into(), self.period().into());
        m.insert("max_mode".into(), self.max_mode.into());
        m.insert("amplitude".into(), self.amplitude.into());
        m.insert("max_dt".into(), (self.lt / (self.substeps * self.nt as f64)).into());
        m.insert("oversample".into(), self.oversample.into());
        m.insert("integrator".into(), "etdrk4".into());
        for (k, v) in extra {
            m.insert(k.to_string(), v.clone());
        }
        m
    }

    pub fn run(&self, pde: &PeriodicPde, name: &str, extra: &[(&str, serde_json::Value)]) -> Result<Dataset> {
        if self.nx < 16 || self.nt < 2 {
            return Err(Error::Config("need at least 16 spatial points and 2 time points".into()));
        }
        let dx = self.lx / (self.nx - 1) as f64;
        let xs: Vec<f64> = (0..self.nx).map(|i| i as f64 * dx).collect();
        let ts = self.times();
        let rows = self.solve(pde, ts.clone())?;
        to_dataset(&rows, xs, ts, self.lx, self.lt, self.meta(name, extra))
    }
}

/// Kuramoto–Sivashinsky data with `θ = (1, 1, 1)`.
pub fn simulate_ks(nx: usize, nt: usize, lx: f64, lt: f64, seed: u64) -> Result<Dataset> {
    if nt < 16 {
        return Err(Error::Config("need at least 16 time points".into()));
    }
    PeriodicRun::new(nx, nt, lx, lt, seed).run(
        &PeriodicPde::kuramoto_sivashinsky([1.0, 1.0, 1.0]),
        "ks",
        &[("theta", serde_json::json!([1.0, 1.0, 1.0]))],
    )
}

/// Viscous Burgers data `u_t = −u u_x + ν u_xx`.
pub fn simulate_burgers(run: &PeriodicRun, nu: f64) -> Result<Dataset> {
    run.run(&PeriodicPde::burgers(nu), "burgers", &[("nu", nu.into())])
}
