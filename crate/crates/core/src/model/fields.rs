use nalgebra::DVector;

use crate::bspline::{Design, PointSet, TensorBasis};
use crate::error::{Error, Result};

/// Spline field and requested derivatives at arbitrary in-domain points.
pub fn evaluate_fields(
    basis: &TensorBasis,
    beta: &DVector<f64>,
    orders: &[Vec<usize>],
    points: &PointSet,
) -> Result<Vec<DVector<f64>>> {
    if beta.len() != basis.num_basis() {
        return Err(Error::Shape(format!(
            "β has length {}, basis has {} functions",
            beta.len(),
            basis.num_basis()
        )));
    }
    orders
        .iter()
        .map(|o| Ok(Design::build(basis, points, o)?.apply(beta)))
        .collect()
}
