//! Physics-constrained regression with tensor-product B-splines.
//!
//! A spline surrogate `û = Bβ` is fit to noisy data while a parameterized
//! differential operator `F(û; θ)` is driven to zero at collocation points.
//! The two coefficient blocks are updated alternately: `β` by a closed-form
//! proximal ridge step followed by a line search, and `θ` by an exact convex
//! solve (least squares or LASSO).

pub mod bspline;
pub mod discovery;
pub mod error;
pub mod io;
pub mod knots;
pub mod model;
pub mod optimize;
pub mod problems;
pub mod sparse;

pub use error::{Error, Result};
