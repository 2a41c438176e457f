//! Physics-informed regression model: data, residual operators, losses.

mod bundle;
mod dataset;
mod fields;
mod library;
mod physics;
mod residual;

pub use bundle::{
    assemble_design, BetaLayout, BlockKind, DesignBundle, LossWeights, Observation, Problem, QuadBlock,
};
pub use dataset::{CollocationSet, ConditionPart, Conditions, Dataset, GridSidecar};
pub use fields::evaluate_fields;
pub use library::{
    build_library, builtin_library, burgers_library, ks_library, ns_library, Candidate, CandidateLibrary,
    LibraryFile, LibrarySpec,
};
pub use physics::{
    advection_diffusion_2d, builtin_spec, burgers, kuramoto_sivashinsky, ns_vorticity_stream, Coefficient, Factor,
    FieldDerivative, PhysicsSpec, SpecFile, Term, TermFile,
};
pub use residual::{
    data_losses, loss_breakdown, physics_gradient_beta, physics_gradient_theta, physics_residual,
    segment_coefficients, theta_linearization, LossBreakdown,
};
pub(crate) use residual::{gradient_beta_from, linearization_from, residual_from_values};
