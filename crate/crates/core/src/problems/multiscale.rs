//! One-dimensional fitting fixture with two length scales.

use std::collections::BTreeMap;

use crate::bspline::{PointSet, TensorBasis};
use crate::error::Result;
use crate::model::{CollocationSet, Conditions, Dataset, LossWeights, Observation, PhysicsSpec, Problem};

/// `sin(2πx) + 0.5·exp(−((x − 0.62)/0.04)²)·sin(50πx)` sampled at `n` points of `[0, 1]`.
pub fn multiscale_1d(n: usize) -> Result<Dataset> {
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let u = xs.iter().map(|&x| multiscale_value(x)).collect();
    let mut ds = Dataset::new(
        vec!["x".into()],
        vec![(0.0, 1.0)],
        PointSet::Grid(vec![xs]),
        vec!["u".into()],
        vec![u],
        Conditions::None,
    )?;
    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), "multiscale".into());
    meta.insert("n".into(), n.into());
    ds.meta = meta;
    Ok(ds)
}

pub fn multiscale_value(x: f64) -> f64 {
    use std::f64::consts::PI;
    let z = (x - 0.62) / 0.04;
    (2.0 * PI * x).sin() + 0.5 * (-z * z).exp() * (50.0 * PI * x).sin()
}

/// Pure data-fitting problem (no physics terms) for a single observed field.
pub fn fitting_problem(data: Dataset, basis: TensorBasis) -> Result<Problem> {
    let spec = PhysicsSpec::new(data.dims.clone(), vec![data.fields[0].clone()], vec![], vec![])?;
    let nd = data.dims.len();
    Ok(Problem {
        spec,
        bases: vec![basis],
        colloc: CollocationSet::new(data.points.clone()),
        observations: vec![Observation::direct(&data.fields[0], 0, nd)],
        weights: LossWeights::single(1.0, 0.0, 0.0, 0.0),
        data,
    })
}
