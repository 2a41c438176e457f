//! Adaptive knot refinement and movement.

mod adaptive;
mod curvature;
mod refine;

pub use adaptive::{adaptive_loop, data_knot_rounds, transfer_beta, transfer_matrix, KnotConfig, WarmStart};
pub use curvature::{
    curvature, curvature_gradient, curvature_objective, knot_movement_step, CellCurvature, FieldEval,
    MovementConfig, SplineField,
};
pub use refine::{cumulative_interval_errors, refine_knots, ErrorField, Refinement};
