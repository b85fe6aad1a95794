//! Bi-level distributionally robust optimization over Wasserstein ambiguity sets.
//!
//! The crate is organized around the pipeline the solver runs:
//!
//! - [`problem`]: supply-chain network instances, decisions, uncertainty
//!   samples, ambiguity sets, and exact cost evaluators.
//! - [`simplex`]: the self-contained dense LP subsolver plus the
//!   box-constrained proximal step every other module builds on.
//! - [`wasserstein`]: the dual reformulation of worst-case expectations over
//!   a Wasserstein ball for piecewise-affine losses, an exact discrete
//!   transport oracle, and Wasserstein distances between discrete
//!   distributions.
//! - [`kkt`]: the follower's KKT system, the single-level MPEC assembly, and
//!   two complementarity strategies (exact enumeration, penalty relaxation).
//! - [`solver`]: the outer loop alternating cutting-plane primal updates with
//!   proximal dual updates, with residual-based termination and a full
//!   iteration trajectory.
//! - [`baselines`]: deterministic, sample-average, and robust-box
//!   comparison methods over the identical instances.
//! - [`scenario`]: deterministic seeded generation of benchmark instances and
//!   demand samples, including the 24-node network scaled from the Sioux
//!   Falls benchmark.

pub mod baselines;
pub mod kkt;
pub mod problem;
pub mod scenario;
pub mod simplex;
pub mod solver;
pub mod wasserstein;

pub use problem::{
    AmbiguitySet, EmpiricalDistribution, FollowerDecision, GroundNorm, LeaderDecision,
    NetworkInstance, SupportBox, UncertaintySample,
};
pub use simplex::{solve_box_qp_prox, solve_lp, LinearProgram, LpSolution, LpStatus, RowSense};
pub use solver::{SolverConfig, SolverReport, Strategy};
