//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p physfit-cli --test acceptance`; a substring argument
//! selects criteria by key, e.g. `-- c8a`.

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use physfit::bspline::{KnotVector, PointSet, TensorBasis};
use physfit::knots::{data_knot_rounds, KnotConfig};
use physfit::model::{
    advection_diffusion_2d, burgers_library, data_losses, kuramoto_sivashinsky, ns_vorticity_stream,
    physics_gradient_beta, physics_gradient_theta, physics_residual, CollocationSet, Conditions, Dataset,
    LossWeights, Observation, PhysicsSpec, Problem,
};
use physfit::optimize::{
    data_fit, exact_line_search, minibatch_bsca, BatchConfig, BscaConfig, OptTrace, Optimizer, SegmentPolynomial,
    State, StepRule,
};
use physfit::problems::{advection_diffusion_fixture, fitting_problem, multiscale_1d};
use physfit::sparse::{fista, soft_threshold, FistaConfig, LassoProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, t: Instant) -> (bool, String) {
    let e = t.elapsed();
    (e <= limit, format!("{:.2}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

fn scattered(rng: &mut ChaCha8Rng, n: usize, dom: &[(f64, f64)]) -> PointSet {
    PointSet::Scattered(
        (0..n)
            .map(|_| dom.iter().map(|&(a, b)| rng.random_range(a..b)).collect())
            .collect(),
    )
}

fn random_problem(spec: PhysicsSpec, dims: Vec<KnotVector>, nd: usize, nc: usize, weights: LossWeights, seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom: Vec<(f64, f64)> = dims.iter().map(|k| (k.domain_lo(), k.domain_hi())).collect();
    let pts = scattered(&mut rng, nd, &dom);
    let y: Vec<f64> = (0..nd).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data = Dataset::new(
        spec.dims.clone(),
        dom.clone(),
        pts,
        vec!["y".into()],
        vec![y],
        Conditions::Tagged { ic: vec![0, 1], bc: vec![2, 3, 4] },
    )
    .unwrap();
    let cp = scattered(&mut rng, nc, &dom);
    let forcing = (0..nc).map(|_| rng.random_range(-0.5..0.5)).collect();
    let ndim = dims.len();
    let nf = spec.fields.len();
    Problem {
        spec,
        bases: vec![TensorBasis::new(dims); nf],
        data,
        observations: vec![Observation::direct("y", 0, ndim)],
        weights,
        colloc: CollocationSet { points: cp, forcing },
    }
}

fn ks_dims() -> Vec<KnotVector> {
    vec![
        KnotVector::new(0.0, 2.0, vec![1.0], 5).unwrap(),
        KnotVector::new(0.0, 1.0, vec![], 2).unwrap(),
    ]
}

fn c1_gradient_step() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let p = random_problem(kuramoto_sivashinsky(), ks_dims(), 40, 30, LossWeights::single(0.0, 0.0, 0.0, 0.0), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let c = rng.random_range(0.5..5.0);
        let cfg = BscaConfig {
            c,
            step: StepRule::Fixed { gamma: 1.0 },
            ..Default::default()
        };
        let opt = Optimizer::for_problem(&p, &cfg).unwrap();
        let mut st = State::random(opt.bundle.n_beta(), 3, 0.5, seed);
        st.theta = (0..3).map(|_| rng.random_range(0.2..1.5)).collect();
        let grad = physics_gradient_beta(&opt.bundle, &st.beta, &st.theta, &p.spec).unwrap();
        let expect = &st.beta - &grad / c;
        opt.iterate(&mut st).unwrap();
        worst = worst.max((&st.beta - &expect).norm() / expect.norm());
    }
    let (fast, time) = within(Duration::from_secs(1), t);
    outcome(worst <= 1e-12 && fast, format!("max relative error {worst:.2e} over 20 instances, {time}"))
}

fn c2_line_search() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = 1_000_000usize;
    let (mut worst_gap, mut worst_excess) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..200 {
        let m = rng.random_range(2..12);
        let n_c = rng.random_range(5..60);
        let v = |rng: &mut ChaCha8Rng, s: f64| DVector::from_fn(m, |_, _| s * rng.random_range(-1.0..1.0));
        let s1 = rng.random_range(0.0..3.0);
        let a1 = v(&mut rng, s1);
        let a2 = v(&mut rng, 2.0);
        let a3 = v(&mut rng, 2.0);
        let a0 = rng.random_range(-2.0..2.0);
        let g = exact_line_search(a0, &a1, &a2, &a3, n_c);
        let s = SegmentPolynomial::new(a0, &a1, &a2, &a3, n_c);
        let (mut best_g, mut best_s) = (0.0, f64::INFINITY);
        for i in 0..=grid {
            let x = i as f64 / grid as f64;
            let sx = s.eval(x);
            if sx < best_s {
                best_s = sx;
                best_g = x;
            }
        }
        worst_gap = worst_gap.max((g - best_g).abs());
        worst_excess = worst_excess.max(s.eval(g) - best_s);
    }
    let (fast, time) = within(Duration::from_secs(10), t);
    outcome(
        worst_gap <= 1e-5 && worst_excess <= 1e-10 && fast,
        format!("max |Δγ| {worst_gap:.2e}, max s(γ) excess {worst_excess:.2e} over 200 quartics, {time}"),
    )
}

fn fd(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

fn gradient_errors(p: &Problem, seed: u64) -> (f64, f64) {
    let bundle = p.assemble().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = DVector::from_fn(bundle.n_beta(), |_, _| 0.5 * rng.random_range(-1.0..1.0));
    let theta: Vec<f64> = (0..p.spec.theta_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = |b: &DVector<f64>| physics_residual(&bundle, b, &theta, &p.spec).unwrap().1;
    let g = physics_gradient_beta(&bundle, &beta, &theta, &p.spec).unwrap();
    let eb = (fd(h, &beta, 1e-5) - &g).norm() / g.norm();
    let th = DVector::from_row_slice(&theta);
    let ht = |t: &DVector<f64>| physics_residual(&bundle, &beta, t.as_slice(), &p.spec).unwrap().1;
    let gt = physics_gradient_theta(&bundle, &beta, &theta, &p.spec).unwrap();
    let et = (fd(ht, &th, 1e-5) - &gt).norm() / gt.norm();
    (eb, et)
}

fn c3_gradients() -> Outcome {
    let t = Instant::now();
    let w = LossWeights::single(3.0, 5.0, 5.0, 0.0);
    let ks_d = vec![
        KnotVector::new(0.0, 2.0, vec![], 5).unwrap(),
        KnotVector::new(0.0, 1.0, vec![], 1).unwrap(),
    ];
    // fourth-order x and y derivatives need degree 4 on both axes: 5·5·2 = 50 coefficients
    let ns_d = vec![
        KnotVector::new(0.0, 1.0, vec![], 4).unwrap(),
        KnotVector::new(0.0, 1.0, vec![], 4).unwrap(),
        KnotVector::new(0.0, 1.0, vec![], 1).unwrap(),
    ];
    let lib = burgers_library();
    let all: Vec<usize> = (0..lib.len()).collect();
    let lib_d = vec![
        KnotVector::new(-1.0, 1.0, vec![0.0], 3).unwrap(),
        KnotVector::new(0.0, 1.0, vec![], 2).unwrap(),
    ];
    let cases = [
        ("K-S", random_problem(kuramoto_sivashinsky(), ks_d, 15, 20, w.clone(), 1)),
        ("N-S vorticity", random_problem(ns_vorticity_stream(), ns_d, 15, 50, w.clone(), 2)),
        ("library", random_problem(lib.to_spec(&all).unwrap(), lib_d, 15, 50, w, 3)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in &cases {
        let mut worst = (0.0f64, 0.0f64);
        for seed in 0..5 {
            let (a, b) = gradient_errors(p, seed);
            worst = (worst.0.max(a), worst.1.max(b));
        }
        pass &= worst.0 <= 1e-6 && worst.1 <= 1e-6;
        parts.push(format!("{name} N={} β {:.1e} θ {:.1e}", p.layout().total(), worst.0, worst.1));
    }
    let (fast, time) = within(Duration::from_secs(30), t);
    outcome(pass && fast, format!("{}, {time}", parts.join("; ")))
}

fn c4_fista() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_kkt, mut worst_obj) = (0.0f64, 0.0f64);
    let cfg = FistaConfig {
        max_iters: 20_000,
        tol: 1e-13,
        monotone: true,
    };
    for _ in 0..100 {
        let n = rng.random_range(8..40);
        let k = rng.random_range(2..12);
        let a = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mu = rng.random_range(0.0..0.3);
        let prob = LassoProblem::new(&a, &b, mu);
        let r = fista(&prob, &DVector::zeros(k), &cfg);
        worst_kkt = worst_kkt.max(prob.kkt_violation(&r.theta));
        let l = prob.q.symmetric_eigenvalues().max();
        let mut x = DVector::zeros(k);
        for _ in 0..200_000 {
            x = soft_threshold(&(&x - prob.gradient(&x) / l), prob.mu / l);
        }
        worst_obj = worst_obj.max((prob.objective(&r.theta) - prob.objective(&x)).abs());
    }
    let (fast, time) = within(Duration::from_secs(30), t);
    outcome(
        worst_kkt <= 1e-6 && worst_obj <= 1e-8 && fast,
        format!("max subgradient slack {worst_kkt:.1e}, max objective gap {worst_obj:.1e} over 100 instances, {time}"),
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_physfit"))
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Runs the CLI; `Err` carries exit code and stderr.
fn cli(args: &[&str], config: &Path, overrides: &[String], out: &Path) -> Result<(), String> {
    let mut cmd = bin();
    cmd.args(args).arg("-c").arg(config).arg("-o").arg(out);
    for o in overrides {
        cmd.arg("--set").arg(o);
    }
    let r = cmd.output().map_err(|e| e.to_string())?;
    if r.status.success() {
        Ok(())
    } else {
        let err = String::from_utf8_lossy(&r.stderr);
        Err(format!("exit {:?}: {}", r.status.code(), err.lines().last().unwrap_or("")))
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn iter_records(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join("trace.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["kind"] == "iter")
        .collect()
}

struct KsRun {
    dir: PathBuf,
    theta: Vec<f64>,
    total: f64,
}

/// Full-size K-S estimates, shared between criteria.
fn ks_estimate(tag: &str, overrides: &[String]) -> Result<&'static KsRun, String> {
    static RUNS: OnceLock<Mutex<HashMap<String, &'static KsRun>>> = OnceLock::new();
    let runs = RUNS.get_or_init(Default::default);
    if let Some(r) = runs.lock().unwrap().get(tag) {
        return Ok(r);
    }
    let dir = scratch(&format!("ks-{tag}"));
    cli(&["estimate"], &configs().join("ks_estimate.toml"), overrides, &dir)?;
    let s = json(&dir.join("summary.json"));
    let run = KsRun {
        theta: serde_json::from_value(s["final_theta"].clone()).unwrap(),
        total: s["final_losses"]["total"].as_f64().unwrap(),
        dir,
    };
    let leaked: &'static KsRun = Box::leak(Box::new(run));
    runs.lock().unwrap().insert(tag.into(), leaked);
    Ok(leaked)
}

fn noisy() -> Vec<String> {
    vec!["problem.generator.noise=0.2".into()]
}

fn fmt_theta(t: &[f64]) -> String {
    let v: Vec<String> = t.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", v.join(", "))
}

fn c5_ks_estimation() -> Outcome {
    let check = |run: &KsRun, tol: f64| run.theta.len() == 3 && run.theta.iter().all(|t| (t - 1.0).abs() <= tol);
    let clean = match ks_estimate("seed0", &[]) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("noise-free run failed: {e}")),
    };
    let noise = match ks_estimate("noise20", &noisy()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("noisy run failed: {e}")),
    };
    let (a, b) = (check(clean, 0.05), check(noise, 0.15));
    outcome(
        a && b,
        format!(
            "noise-free θ̂ {} ({}), 20% noise θ̂ {} ({})",
            fmt_theta(&clean.theta),
            if a { "within 5%" } else { "outside 5%" },
            fmt_theta(&noise.theta),
            if b { "within 15%" } else { "outside 15%" },
        ),
    )
}

fn c6_init_robustness() -> Outcome {
    let mut totals = Vec::new();
    for seed in 0..5u64 {
        let tag = format!("seed{seed}");
        match ks_estimate(&tag, &[format!("init.seed={seed}")]) {
            Ok(r) => totals.push(r.total),
            Err(e) => return outcome(false, format!("seed {seed} failed: {e}")),
        }
    }
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let spread = (totals.iter().cloned().fold(f64::MIN, f64::max) - totals.iter().cloned().fold(f64::MAX, f64::min)) / mean;
    let t: Vec<String> = totals.iter().map(|x| format!("{x:.4}")).collect();
    outcome(spread <= 0.01, format!("final totals [{}], relative spread {:.2}%", t.join(", "), 100.0 * spread))
}

fn c7a_multiscale() -> Outcome {
    let data = multiscale_1d(1001).unwrap();
    let deg = 3;
    let kv = KnotVector::uniform(0.0, 1.0, 20, deg).unwrap();
    let p0 = fitting_problem(data.clone(), TensorBasis::new(vec![kv])).unwrap();
    let kcfg = KnotConfig {
        rounds: 2,
        n_new: vec![8],
        ..Default::default()
    };
    let mut trace = OptTrace::default();
    let adapted = data_knot_rounds(&p0, &kcfg, &mut trace).unwrap();
    let mse = |p: &Problem| {
        let b = p.assemble().unwrap();
        data_losses(&b, &data_fit(&b, kcfg.ridge).unwrap()).unwrap().0
    };
    let nbp = adapted.bases[0].dims[0].breakpoints().len();
    let uniform = fitting_problem(data, TensorBasis::new(vec![KnotVector::uniform(0.0, 1.0, nbp, deg).unwrap()])).unwrap();
    let (a, u) = (mse(&adapted), mse(&uniform));
    let red = 1.0 - a / u;
    outcome(red >= 0.5, format!("{nbp} breakpoints: adaptive MSE {a:.3e} vs uniform {u:.3e}, reduction {:.1}%", 100.0 * red))
}

fn c7b_ks_losses() -> Outcome {
    let run = match ks_estimate("seed0", &[]) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let recs = iter_records(&run.dir);
    let Some(before) = recs.iter().filter(|r| r["stage"] == 0).last() else {
        return outcome(false, "no stage-0 records");
    };
    let after = recs.last().unwrap();
    let mut pass = recs.iter().any(|r| r["stage"].as_u64() > Some(0));
    let mut parts = Vec::new();
    for key in ["l_data", "l_ic", "l_bc", "l_phy"] {
        let (b, a) = (before[key].as_f64().unwrap(), after[key].as_f64().unwrap());
        pass &= a < b;
        parts.push(format!("{key} {b:.3e} -> {a:.3e}"));
    }
    outcome(pass, parts.join(", "))
}

fn c7c_fixture_3d() -> Outcome {
    let d = scratch("advdiff-rounds");
    let cfg = d.join("run.toml");
    fs::write(
        &cfg,
        r#"
seed = 0
[problem]
spec = "advdiff"
[problem.generator]
name = "advdiff"
data_shape = [20, 12, 8]
colloc_shape = [20, 12, 8]
[basis]
degrees = [3, 3, 3]
breakpoints = [6, 5, 4]
[weights]
data = [100.0]
ic = [100.0]
bc = [100.0]
[init]
kind = "fit"
[bsca]
max_iters = 160
[knots]
rounds = 3
n_new = [1, 1, 1]
"#,
    )
    .unwrap();
    let out = d.join("out");
    if let Err(e) = cli(&["estimate"], &cfg, &[], &out) {
        return outcome(false, e);
    }
    let recs = iter_records(&out);
    let b = recs.iter().filter(|r| r["stage"] == 0).last().unwrap()["l_data"].as_f64().unwrap();
    let a = recs.last().unwrap()["l_data"].as_f64().unwrap();
    let red = 1.0 - a / b;
    outcome(red >= 0.2, format!("data MSE {b:.3e} -> {a:.3e} over 3 rounds, reduction {:.1}%", 100.0 * red))
}

fn discovery(config: &str, overrides: &[String], tag: &str) -> Result<(Vec<String>, Vec<f64>), String> {
    let dir = scratch(tag);
    cli(&["discover"], &configs().join(config), overrides, &dir)?;
    let r = json(&dir.join("report.json"));
    Ok((
        serde_json::from_value(r["support"].clone()).unwrap(),
        serde_json::from_value(r["state"]["theta"].clone()).unwrap(),
    ))
}

fn c8a_burgers() -> Outcome {
    match discovery("burgers_discover.toml", &[], "burgers") {
        Ok((support, theta)) => {
            let exact = support == ["u_xx", "u*u_x"];
            let close = exact && (theta[0] - 0.1).abs() <= 0.01 && (theta[1] + 1.0).abs() <= 0.1;
            outcome(close, format!("support {support:?}, coefficients {}", fmt_theta(&theta)))
        }
        Err(e) => outcome(false, e),
    }
}

fn c8b_ks_discovery() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, ov, tag) in [("noise-free", vec![], "ks-discover"), ("20% noise", noisy(), "ks-discover-noise")] {
        match discovery("ks_discover.toml", &ov, tag) {
            Ok((support, theta)) => {
                let mut s = support.clone();
                s.sort();
                pass &= s == ["u*u_x", "u_xx", "u_xxxx"];
                parts.push(format!("{label}: support {support:?} {}", fmt_theta(&theta)));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn c9_nestedness() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..50 {
        let ndim = 1 + trial % 2;
        let dom: Vec<(f64, f64)> = (0..ndim).map(|_| (0.0, rng.random_range(1.0..3.0))).collect();
        let axes: Vec<Vec<f64>> = dom
            .iter()
            .map(|&(a, b)| (0..40).map(|i| if i == 39 { b } else { a + (b - a) * i as f64 / 39.0 }).collect())
            .collect();
        let pts = PointSet::Grid(axes);
        let n = pts.len();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let names: Vec<String> = ["x", "t"][..ndim].iter().map(|s| s.to_string()).collect();
        let data = Dataset::new(names, dom.clone(), pts, vec!["u".into()], vec![y], Conditions::None).unwrap();
        let kvs: Vec<KnotVector> = dom
            .iter()
            .map(|&(a, b)| KnotVector::uniform(a, b, rng.random_range(3..8), rng.random_range(1..4)).unwrap())
            .collect();
        let refined: Vec<KnotVector> = kvs
            .iter()
            .map(|kv| {
                let bp = kv.breakpoints();
                let i = rng.random_range(0..bp.len() - 1);
                let mut interior = kv.interior().to_vec();
                interior.push(0.5 * (bp[i] + bp[i + 1]));
                interior.sort_by(f64::total_cmp);
                kv.with_interior(interior).unwrap()
            })
            .collect();
        let loss = |kv: Vec<KnotVector>| {
            let p = fitting_problem(data.clone(), TensorBasis::new(kv)).unwrap();
            let b = p.assemble().unwrap();
            data_losses(&b, &data_fit(&b, 0.0).unwrap()).unwrap().0
        };
        worst = worst.max(loss(refined) - loss(kvs));
    }
    let (fast, time) = within(Duration::from_secs(30), t);
    outcome(worst <= 1e-10 && fast, format!("largest loss increase {worst:.2e} over 50 refinements, {time}"))
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let mut bytes = fs::read(&p).unwrap();
            if p.file_name().unwrap() == "summary.json" {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                v["wall_time"] = Value::Null;
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
        }
    }
    out.sort();
    out
}

fn c10_determinism() -> Outcome {
    let d = scratch("determinism");
    let small = d.join("small.toml");
    fs::write(
        &small,
        r#"
seed = 0
[problem]
spec = "burgers"
[problem.generator]
name = "burgers"
nx = 32
nt = 21
lx = 6.086835766330224
lt = 1.0
nu = 0.1
seed = 3
[basis]
degrees = [4, 4]
breakpoints = [12, 6]
[init]
kind = "random"
[bsca]
max_iters = 20
snapshot_every = 5
[knots]
rounds = 1
n_new = [1, 1]
data_rounds = 1
data_n_new = [1, 1]
"#,
    )
    .unwrap();
    let burgers = configs().join("burgers_discover.toml");
    let batched = configs().join("advdiff_minibatch.toml");
    let jobs: Vec<(&str, Box<dyn Fn(&Path) -> Result<(), String>>)> = vec![
        (
            "synth",
            Box::new(|o: &Path| {
                let r = bin()
                    .args(["synth", "--problem", "ks", "--seed", "5", "--noise", "0.2", "-o"])
                    .arg(o)
                    .output()
                    .map_err(|e| e.to_string())?;
                r.status.success().then_some(()).ok_or_else(|| "synth failed".to_string())
            }),
        ),
        ("fit", Box::new(|o: &Path| cli(&["fit"], &small, &[], o))),
        ("estimate", Box::new(|o: &Path| cli(&["estimate"], &small, &[], o))),
        ("estimate-batched", Box::new(|o: &Path| cli(&["estimate"], &batched, &[], o))),
        ("discover", Box::new(|o: &Path| cli(&["discover"], &burgers, &[], o))),
        (
            "report",
            Box::new(|o: &Path| {
                cli(&["estimate"], &small, &[], o)?;
                let r = bin().arg("report").arg(o).output().map_err(|e| e.to_string())?;
                r.status.success().then_some(()).ok_or_else(|| "report failed".to_string())
            }),
        ),
    ];
    let mut bad = Vec::new();
    for (name, job) in &jobs {
        let o = d.join(name);
        let mut seen = Vec::new();
        for _ in 0..2 {
            let _ = fs::remove_dir_all(&o);
            if let Err(e) = job(&o) {
                return outcome(false, format!("{name}: {e}"));
            }
            seen.push(tree(&o));
        }
        if seen[0] != seen[1] {
            bad.push(*name);
        }
    }
    let names: Vec<&str> = jobs.iter().map(|j| j.0).collect();
    if bad.is_empty() {
        outcome(true, format!("byte-identical reruns: {}", names.join(", ")))
    } else {
        outcome(false, format!("outputs differ for {}", bad.join(", ")))
    }
}

fn minibatch_memory() -> Outcome {
    let (m, _) = advection_diffusion_fixture([20, 12, 8], [20, 12, 8]).unwrap();
    let dims: Vec<KnotVector> = m
        .data
        .domain
        .iter()
        .zip([6, 5, 4])
        .map(|(&(a, b), nb)| KnotVector::uniform(a, b, nb, 3).unwrap())
        .collect();
    let p = Problem {
        spec: advection_diffusion_2d(),
        bases: vec![TensorBasis::new(dims)],
        observations: vec![Observation::direct("u", 0, 3)],
        weights: LossWeights::single(100.0, 100.0, 100.0, 0.0),
        data: m.data,
        colloc: m.colloc,
    };
    let all_d: Vec<usize> = (0..p.data.len()).collect();
    let all_c: Vec<usize> = (0..p.colloc.len()).collect();
    let full = p.restrict(&all_d, &all_c).unwrap().assemble().unwrap().footprint_bytes();
    let batch = BatchConfig {
        num_batches: 6,
        epochs: 2,
        iters_per_batch: 10,
        seed: 0,
    };
    let cfg = BscaConfig::default();
    let mut st = State::zeros(p.layout().total(), 4);
    let mut trace = OptTrace::default();
    if let Err(e) = minibatch_bsca(&p, &cfg, &batch, &mut st, &mut trace) {
        return outcome(false, e.to_string());
    }
    let ratio = full as f64 / trace.peak_design_bytes as f64;
    outcome(
        ratio >= 4.0,
        format!("unbatched {full} B vs batch peak {} B, ratio {ratio:.1}", trace.peak_design_bytes),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("c1", "zero-weight β update is a gradient step", c1_gradient_step),
        ("c2", "exact line search vs grid oracle", c2_line_search),
        ("c3", "physics gradients vs finite differences", c3_gradients),
        ("c4", "FISTA optimality certificate", c4_fista),
        ("c9", "midpoint refinement nestedness", c9_nestedness),
        ("c7a", "multi-scale 1-D knot benefit", c7a_multiscale),
        ("c7c", "3-D fixture knot benefit", c7c_fixture_3d),
        ("memory", "mini-batch design memory", minibatch_memory),
        ("c8a", "Burgers discovery", c8a_burgers),
        ("c10", "CLI determinism", c10_determinism),
        ("c5", "K-S parameter estimation", c5_ks_estimation),
        ("c6", "K-S initialization robustness", c6_init_robustness),
        ("c7b", "K-S losses across knot rounds", c7b_ks_losses),
        ("c8b", "K-S discovery", c8b_ks_discovery),
    ];
    let mut failed = Vec::new();
    let mut ran = 0;
    for (key, title, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|s| key.contains(s.as_str()) || title.contains(s.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("{status} [{key}] {title}: {} ({:.1}s)", o.detail, t.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(key);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
