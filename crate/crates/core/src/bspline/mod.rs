//! B-spline bases on clamped knot vectors and their tensor products.

mod basis;
mod knots;
mod tensor;

pub use basis::{eval_basis, BasisMatrix, BasisStorage, SPARSE_DENSITY_THRESHOLD};
pub use knots::{KnotRecord, KnotVector, GAP_MIN_FRACTION};
pub use tensor::{tensor_basis, Design, PointSet, TensorBasis};

pub(crate) use tensor::unravel;
