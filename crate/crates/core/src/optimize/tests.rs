use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bspline::{KnotVector, PointSet, TensorBasis};
use crate::model::*;
use crate::sparse::{FistaConfig, LassoProblem};

fn scattered(rng: &mut ChaCha8Rng, n: usize, dom: &[(f64, f64)]) -> PointSet {
    PointSet::Scattered(
        (0..n)
            .map(|_| dom.iter().map(|&(a, b)| rng.random_range(a..b)).collect())
            .collect(),
    )
}

fn ks_problem(seed: u64, weights: LossWeights) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = vec![
        KnotVector::new(0.0, 2.0, vec![1.0], 5).unwrap(),
        KnotVector::new(0.0, 1.0, vec![], 2).unwrap(),
    ];
    let dom = [(0.0, 2.0), (0.0, 1.0)];
    let pts = scattered(&mut rng, 60, &dom);
    let y = pts.to_points().iter().map(|p| (2.0 * p[0] - p[1]).sin()).collect();
    let data = Dataset::new(
        vec!["x".into(), "t".into()],
        dom.to_vec(),
        pts,
        vec!["u".into()],
        vec![y],
        Conditions::Tagged { ic: (0..5).collect(), bc: (5..10).collect() },
    )
    .unwrap();
    let cp = scattered(&mut rng, 40, &dom);
    Problem {
        spec: kuramoto_sivashinsky(),
        bases: vec![TensorBasis::new(dims)],
        data,
        observations: vec![Observation::direct("u", 0, 2)],
        weights,
        colloc: CollocationSet::new(cp),
    }
}

#[test]
fn zero_weights_give_gradient_step() {
    for seed in 0..5 {
        let p = ks_problem(seed, LossWeights::single(0.0, 0.0, 0.0, 0.0));
        let cfg = BscaConfig { c: 2.5, step: StepRule::Fixed { gamma: 1.0 }, ..Default::default() };
        let opt = Optimizer::for_problem(&p, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut st = State::random(opt.bundle.n_beta(), 3, 0.3, seed);
        st.theta = vec![rng.random_range(0.5..1.5), 1.0, 0.7];
        let grad = physics_gradient_beta(&opt.bundle, &st.beta, &st.theta, &p.spec).unwrap();
        let expect = &st.beta - &grad / 2.5;
        opt.iterate(&mut st).unwrap();
        assert!((&st.beta - &expect).norm() <= 1e-12 * expect.norm());
    }
}

#[test]
fn beta_subproblem_matches_dense_solve() {
    // 8 points, 5 basis functions
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kv = KnotVector::new(0.0, 1.0, vec![0.5], 3).unwrap();
    let pts = scattered(&mut rng, 8, &[(0.0, 1.0)]);
    let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spec = PhysicsSpec::new(vec!["x".into()], vec!["u".into()], vec![], vec![]).unwrap();
    let data = Dataset::new(vec!["x".into()], vec![(0.0, 1.0)], pts.clone(), vec!["u".into()], vec![y.clone()], Conditions::None).unwrap();
    let p = Problem {
        spec,
        bases: vec![TensorBasis::new(vec![kv])],
        data,
        observations: vec![Observation::direct("u", 0, 1)],
        weights: LossWeights::single(2.0, 0.0, 0.0, 0.0),
        colloc: CollocationSet::new(pts.clone()),
    };
    let b = p.assemble().unwrap();
    let bd = crate::bspline::Design::build(&p.bases[0], &pts, &[0]).unwrap().to_dense();
    assert_eq!(bd.shape(), (8, 5));
    let yv = DVector::from_vec(y);
    let prev = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
    let grad = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
    let c = 0.3;
    let k = bd.transpose() * &bd * (2.0 / 8.0) + DMatrix::identity(5, 5) * c;
    let rhs = bd.transpose() * &yv * (2.0 / 8.0) + &prev * c - &grad;
    let expect = k.lu().solve(&rhs).unwrap();
    let got = beta_subproblem(&b, &prev, &grad, c).unwrap();
    assert!((&got - &expect).amax() <= 1e-10);

    // c → 0 with λ/N_d = 1 is the least-squares fit
    let mut p1 = p.clone();
    p1.weights = LossWeights::single(8.0, 0.0, 0.0, 0.0);
    let b1 = p1.assemble().unwrap();
    let z = DVector::zeros(5);
    let got = beta_subproblem(&b1, &z, &z, 1e-8).unwrap();
    let ls = (bd.transpose() * &bd).lu().solve(&(bd.transpose() * &yv)).unwrap();
    assert!((&got - &ls).amax() <= 1e-6 * (1.0 + ls.amax()), "{}", (&got - &ls).amax());
}

#[test]
fn conditioning_failure_is_reported() {
    let p = ks_problem(3, LossWeights::single(1.0, 0.0, 0.0, 0.0));
    let b = p.assemble().unwrap();
    let r = BetaSolver::new(&b, -10.0);
    assert!(matches!(r, Err(crate::Error::Conditioning { .. })));
}

#[test]
fn theta_least_squares_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q();
    let b = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
    let th = theta_subproblem(&(-&q), &b, &[0.0; 4], 0.0, None, 1.0, ThetaMode::Direct, &FistaConfig::default()).unwrap();
    let expect = q.transpose() * &b;
    for i in 0..4 {
        assert!((th[i] - expect[i]).abs() < 1e-12);
    }
    let big = (q.transpose() * &b).amax() / 12.0;
    let th = theta_subproblem(&(-&q), &b, &[0.3; 4], big, None, 1.0, ThetaMode::Direct, &FistaConfig::default()).unwrap();
    assert!(th.iter().all(|&t| t == 0.0), "{th:?}");
}

fn prox_grad_oracle(prob: &LassoProblem, iters: usize) -> DVector<f64> {
    let l = prob.q.symmetric_eigenvalues().max();
    let mut x = DVector::zeros(prob.dim());
    for _ in 0..iters {
        x = crate::sparse::soft_threshold(&(&x - prob.gradient(&x) / l), prob.mu / l);
    }
    x
}

#[test]
fn theta_lasso_matches_long_run_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = DMatrix::from_fn(20, 6, |_, _| rng.random_range(-1.0..1.0));
    let r0 = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
    let mu = 0.05;
    let th = theta_subproblem(&m, &r0, &[0.0; 6], mu, None, 1.0, ThetaMode::Direct, &FistaConfig::default()).unwrap();
    let prob = LassoProblem::new(&m, &(-&r0), mu);
    let oracle = prox_grad_oracle(&prob, 100_000);
    let f = prob.objective(&DVector::from_vec(th));
    assert!((f - prob.objective(&oracle)).abs() <= 1e-8);
}

#[test]
fn normalized_theta_update_uses_weighted_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m = DMatrix::from_fn(30, 4, |_, j| rng.random_range(-1.0..1.0) * (1.0 + 10.0 * j as f64));
    let r0 = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
    let norms: Vec<f64> = (0..4).map(|j| m.column(j).norm()).collect();
    let mu = 0.5;
    let th = theta_subproblem(&m, &r0, &[0.0; 4], mu, Some(&norms), 1.0, ThetaMode::Direct, &FistaConfig::default()).unwrap();
    // the same optimum written in physical coordinates
    let obj = |t: &[f64]| {
        let tv = DVector::from_column_slice(t);
        (&r0 + &m * tv).norm_squared() / 60.0 + mu / 30.0 * t.iter().zip(&norms).map(|(a, s)| (a * s).abs()).sum::<f64>()
    };
    let base = obj(&th);
    for k in 0..4 {
        for d in [-1e-4, 1e-4] {
            let mut t = th.clone();
            t[k] += d;
            assert!(obj(&t) >= base - 1e-14);
        }
    }
}

#[test]
fn pure_data_fit_first_iterate_is_ridge() {
    let p0 = ks_problem(11, LossWeights::single(3.0, 5.0, 5.0, 0.0));
    let spec = PhysicsSpec::new(vec!["x".into(), "t".into()], vec!["u".into()], vec![], vec![]).unwrap();
    let p = p0.with_spec(spec);
    let cfg = BscaConfig { c: 0.01, max_iters: 2, ..Default::default() };
    let b = p.assemble().unwrap();
    let ridge = data_fit(&b, 0.01).unwrap();
    let mut st = State::zeros(b.n_beta(), 0);
    let mut tr = OptTrace::default();
    let opt = Optimizer::for_problem(&p, &cfg).unwrap();
    opt.run(&mut st, 1, &mut tr).unwrap();
    assert_eq!(tr.records[0].gamma, 1.0);
    assert!((&st.beta - &ridge).amax() <= 1e-10 * ridge.amax());
}

#[test]
fn line_search_never_increases_true_loss() {
    for seed in 0..4 {
        let p = ks_problem(20 + seed, LossWeights::single(3.0, 5.0, 5.0, 0.0));
        let cfg = BscaConfig { c: 0.5, ..Default::default() };
        let opt = Optimizer::for_problem(&p, &cfg).unwrap();
        let mut st = State::random(opt.bundle.n_beta(), 3, 0.2, seed);
        for _ in 0..15 {
            let before = opt.losses(&st.beta, &st.theta).unwrap();
            let theta = st.theta.clone();
            let mut probe = st.clone();
            opt.iterate(&mut probe).unwrap();
            // same θ: isolate the β step
            let after = opt.losses(&probe.beta, &theta).unwrap();
            assert!(after.total <= before.total + 1e-12, "{} > {}", after.total, before.total);
            st = probe;
        }
    }
}

#[test]
fn trace_recomputes_from_snapshots() {
    let p = ks_problem(30, LossWeights::single(3.0, 5.0, 5.0, 0.0));
    let cfg = BscaConfig { c: 0.5, max_iters: 12, snapshot_every: 1, ..Default::default() };
    let b = p.assemble().unwrap();
    let mut st = State::zeros(b.n_beta(), 3);
    let mut tr = OptTrace::default();
    bsca_run(&p, &cfg, &mut st, &mut tr).unwrap();
    assert_eq!(tr.snapshots.len(), tr.records.len());
    assert!(tr.records.windows(2).all(|w| w[1].iter > w[0].iter));
    for (rec, snap) in tr.records.iter().zip(&tr.snapshots) {
        let lb = loss_breakdown(&b, &DVector::from_vec(snap.beta.clone()), &snap.theta, &p.spec, 0.0).unwrap();
        for (a, e) in [(rec.l_data, lb.data), (rec.l_ic, lb.ic), (rec.l_bc, lb.bc), (rec.l_phy, lb.phy), (rec.total, lb.total)] {
            assert!((a - e).abs() <= 1e-10 * e.abs().max(1e-300) + 1e-300, "{a} vs {e}");
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let p = ks_problem(31, LossWeights::single(3.0, 5.0, 5.0, 0.1));
    let cfg = BscaConfig { c: 0.5, max_iters: 8, step: StepRule::Diminishing { eps: 0.6 }, ..Default::default() };
    let run = || {
        let mut st = State::random(p.layout().total(), 3, 0.1, 5);
        let mut tr = OptTrace::default();
        bsca_run(&p, &cfg, &mut st, &mut tr).unwrap();
        tr
    };
    assert_eq!(run(), run());
}

#[test]
fn single_batch_equals_plain_run() {
    let p = ks_problem(32, LossWeights::single(3.0, 5.0, 5.0, 0.0));
    let base = BscaConfig { c: 0.5, max_iters: 10, tol: 0.0, ..Default::default() };
    let mut s1 = State::zeros(p.layout().total(), 3);
    let mut t1 = OptTrace::default();
    bsca_run(&p, &base, &mut s1, &mut t1).unwrap();
    let cfg = BscaConfig {
        batch: Some(BatchConfig { num_batches: 1, epochs: 1, iters_per_batch: 10, seed: 1 }),
        ..base
    };
    let mut s2 = State::zeros(p.layout().total(), 3);
    let mut t2 = OptTrace::default();
    bsca_run(&p, &cfg, &mut s2, &mut t2).unwrap();
    assert_eq!(t1.records, t2.records);
    assert_eq!(s1, s2);
}

#[test]
fn batches_are_seeded_and_validated() {
    let p = ks_problem(33, LossWeights::single(3.0, 5.0, 5.0, 0.0));
    let cfg = BscaConfig {
        c: 0.5,
        batch: Some(BatchConfig { num_batches: 3, epochs: 2, iters_per_batch: 2, seed: 4 }),
        ..Default::default()
    };
    let run = || {
        let mut st = State::zeros(p.layout().total(), 3);
        let mut tr = OptTrace::default();
        bsca_run(&p, &cfg, &mut st, &mut tr).unwrap();
        tr
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.batches.len(), 6);
    assert_eq!(a.records.len(), 12);
    assert_eq!(a.batches.iter().map(|m| m.n_data).sum::<usize>(), 120);
    let bad = BscaConfig {
        batch: Some(BatchConfig { num_batches: 500, epochs: 1, iters_per_batch: 1, seed: 0 }),
        ..cfg.clone()
    };
    let mut st = State::zeros(p.layout().total(), 3);
    assert!(matches!(bsca_run(&p, &bad, &mut st, &mut OptTrace::default()), Err(crate::Error::Config(_))));
}

#[test]
fn divergence_is_reported_with_last_state() {
    let p = ks_problem(34, LossWeights::single(3.0, 5.0, 5.0, 0.0));
    let cfg = BscaConfig {
        c: 1e-6,
        step: StepRule::Fixed { gamma: 1.0 },
        theta_mode: ThetaMode::QuadraticApprox,
        max_iters: 2000,
        tol: 0.0,
        ..Default::default()
    };
    let mut st = State::random(p.layout().total(), 3, 0.5, 1);
    let mut tr = OptTrace::default();
    match bsca_run(&p, &cfg, &mut st, &mut tr) {
        Err(crate::Error::Divergence { iter, last_beta, last_theta }) => {
            assert_eq!(iter, tr.records.len() + 1);
            assert!(last_beta.iter().all(|v| v.is_finite()));
            assert!(last_theta.iter().all(|v| v.is_finite()));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn exact_line_search_rejects_high_degree_specs() {
    let lib = burgers_library();
    let p0 = ks_problem(35, LossWeights::single(1.0, 0.0, 0.0, 0.0));
    let p = p0.with_spec(lib.to_spec(&(0..12).collect::<Vec<_>>()).unwrap());
    assert!(matches!(Optimizer::for_problem(&p, &BscaConfig::default()), Err(crate::Error::Config(_))));
}

#[test]
fn jsonl_roundtrip() {
    let p = ks_problem(36, LossWeights::single(3.0, 5.0, 5.0, 0.0));
    let cfg = BscaConfig { c: 0.5, max_iters: 3, ..Default::default() };
    let mut st = State::zeros(p.layout().total(), 3);
    let mut tr = OptTrace::new(p.spec.theta_names.clone());
    bsca_run(&p, &cfg, &mut st, &mut tr).unwrap();
    let mut buf = Vec::new();
    tr.write_jsonl(&mut buf).unwrap();
    let back = OptTrace::read_jsonl(std::str::from_utf8(&buf).unwrap(), tr.theta_names.clone()).unwrap();
    assert_eq!(back.records, tr.records);
    assert_eq!(tr.loss_csv().lines().count(), 4);
}
