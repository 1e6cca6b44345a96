//! A self-contained MILP layer for small dense problems.
//!
//! Models are built with [`ModelBuilder`], relaxed and solved with a
//! bounded-variable primal simplex ([`solve_lp`]), and solved to integrality
//! over binary variables with best-first branch-and-bound ([`solve`]).
//! Solver implementations are reachable by name through [`BackendRegistry`].

mod branch;
mod config;
pub mod dump;
mod error;
mod model;
mod registry;
mod simplex;

pub use branch::{solve, MilpSolution, MilpStatus, SolveStats};
pub use config::SolverConfig;
pub use error::MilpError;
pub use model::{Constraint, MilpModel, ModelBuilder, Relation, VarId, VarKind, Variable};
pub use registry::{BackendRegistry, BranchAndBound, MilpBackend, DEFAULT_BACKEND};
pub use simplex::{solve_lp, solve_with_bounds, LpSolution, LpStatus};
