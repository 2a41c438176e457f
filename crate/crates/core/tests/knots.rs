use nalgebra::DVector;
use physfit::bspline::{eval_basis, KnotVector, PointSet, TensorBasis};
use physfit::knots::{transfer_beta, transfer_matrix};
use physfit::problems::{multiscale_1d, multiscale_value};
use proptest::prelude::*;

fn eval(kv: &KnotVector, c: &DVector<f64>, xs: &[f64]) -> DVector<f64> {
    eval_basis(kv, xs, 0).unwrap().mul_vec(c)
}

fn probe(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.37) / n as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn refinement_transfer_is_exact(deg in 1usize..5, nb in 3usize..9, seed in 0u64..1000, extra in 1usize..4) {
        let old = KnotVector::uniform(0.0, 2.0, nb, deg).unwrap();
        let mut interior = old.interior().to_vec();
        // nested: add points inside existing intervals
        let bp = old.breakpoints();
        for k in 0..extra {
            let i = (seed as usize + 3 * k) % (bp.len() - 1);
            interior.push(bp[i] + (bp[i + 1] - bp[i]) * (0.25 + 0.2 * k as f64));
        }
        interior.sort_by(f64::total_cmp);
        interior.dedup();
        let new = old.with_interior(interior).unwrap();
        let coef = DVector::from_fn(old.num_basis(), |i, _| ((i as f64 + 1.0) * (seed as f64 + 0.5)).sin());
        let t = transfer_matrix(&old, &new).unwrap();
        let moved = &t * &coef;
        let xs = probe(97, 0.0, 2.0);
        let gap = (eval(&old, &coef, &xs) - eval(&new, &moved, &xs)).amax();
        prop_assert!(gap <= 1e-10, "gap {gap}");
    }
}

#[test]
fn moved_knots_give_a_close_fit() {
    let old = KnotVector::uniform(0.0, 1.0, 12, 3).unwrap();
    let shifted: Vec<f64> = old.interior().iter().map(|x| x + 0.01).collect();
    let new = old.with_interior(shifted).unwrap();
    let xs = probe(400, 0.0, 1.0);
    // coefficients of a smooth function
    let dense = eval_basis(&old, &xs, 0).unwrap().to_dense();
    let target = DVector::from_iterator(xs.len(), xs.iter().map(|x| (3.0 * x).sin()));
    let coef = dense.clone().svd(true, true).solve(&target, 1e-14).unwrap();
    let moved = transfer_matrix(&old, &new).unwrap() * &coef;
    let gap = (eval(&old, &coef, &xs) - eval(&new, &moved, &xs)).amax();
    assert!(gap < 1e-4, "gap {gap}");
}

#[test]
fn transfer_rejects_degree_change() {
    let a = KnotVector::uniform(0.0, 1.0, 5, 3).unwrap();
    let b = KnotVector::uniform(0.0, 1.0, 5, 2).unwrap();
    assert!(transfer_matrix(&a, &b).is_err());
}

#[test]
fn tensor_transfer_preserves_the_surface() {
    let ox = KnotVector::uniform(0.0, 1.0, 5, 3).unwrap();
    let ot = KnotVector::uniform(0.0, 2.0, 4, 2).unwrap();
    let nx = ox.with_interior(vec![0.1, 0.25, 0.5, 0.75]).unwrap();
    let nt = ot.with_interior(vec![2.0 / 3.0, 1.0, 4.0 / 3.0]).unwrap();
    let old = TensorBasis::new(vec![ox, ot]);
    let new = TensorBasis::new(vec![nx, nt]);
    let beta = DVector::from_fn(old.num_basis(), |i, _| (0.7 * i as f64).cos());
    let moved = transfer_beta(std::slice::from_ref(&old), std::slice::from_ref(&new), &beta).unwrap();
    let pts = PointSet::Grid(vec![probe(13, 0.0, 1.0), probe(11, 0.0, 2.0)]);
    let a = physfit::bspline::Design::build(&old, &pts, &[0, 0]).unwrap().apply(&beta);
    let b = physfit::bspline::Design::build(&new, &pts, &[0, 0]).unwrap().apply(&moved);
    assert!((a - b).amax() <= 1e-10);
}

#[test]
fn multiscale_fixture_has_a_localized_burst() {
    let ds = multiscale_1d(1001).unwrap();
    assert_eq!(ds.values[0].len(), 1001);
    assert_eq!(ds.dims, vec!["x".to_string()]);
    assert!((multiscale_value(0.25) - 1.0).abs() < 1e-6);
    // burst amplitude near the centre, negligible far away
    let near = (600..640).map(|i| (multiscale_value(i as f64 / 1000.0) - (2.0 * std::f64::consts::PI * i as f64 / 1000.0).sin()).abs()).fold(0.0, f64::max);
    assert!(near > 0.4);
    let far = (multiscale_value(0.2) - (2.0 * std::f64::consts::PI * 0.2).sin()).abs();
    assert!(far < 1e-12);
}
