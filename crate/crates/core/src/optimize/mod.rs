//! Block successive convex approximation.

mod bsca;
mod config;
mod linesearch;
mod subproblem;
mod trace;
#[cfg(test)]
mod tests;

pub use bsca::{bsca_run, minibatch_bsca, partition, Optimizer, State};
pub use config::{BatchConfig, BscaConfig, StepRule, ThetaMode};
pub use linesearch::{cubic_roots, diminishing_step, exact_line_search, SegmentPolynomial};
pub use subproblem::{beta_subproblem, data_fit, theta_subproblem, BetaSolver};
pub use trace::{BatchMark, IterRecord, KnotEvent, OptTrace, Snapshot, Summary};
