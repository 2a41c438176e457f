//! Proximal tools for the ℓ1-regularized parameter block.

mod fista;
mod stlasso;

pub use fista::{fista, soft_threshold, FistaConfig, FistaResult, LassoProblem};
pub use stlasso::{st_lasso, DiscoveryRound, DiscoveryState, StLassoConfig};
