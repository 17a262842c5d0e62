//! Nonsmooth, nonconvex, constrained optimization toolkit built around the
//! distributed-delay input shaper design problem.
//!
//! The crate provides two solvers for problems with nonsmooth constraints
//! (a steering-based BFGS-SQP method and a gradient-sampling SQP method),
//! a dense active-set QP engine for their direction-finding subproblems,
//! a quasi-polynomial root finder for the shaper's zeros spectral abscissa,
//! and benchmarking instruments (relative minimization profiles and
//! global-local profiles) over recorded run histories.

pub mod bfgs_sqp;
pub mod instance;
pub mod problem;
pub mod profiles;
pub mod qp;
pub mod solver;
pub mod spectrum;
pub mod sqp_gs;
pub mod svg;

mod bfgs;
mod line_search;

pub use problem::{
    FeasibilityTolerances, IterateRecord, Problem, RunHistory, TerminationReason,
};
